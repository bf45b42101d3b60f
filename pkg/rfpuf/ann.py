"""Feed-forward classifier mapping PUF responses to device identities.

tanh hidden layers, softmax output, mean cross-entropy, plain mini-batch SGD
with a per-epoch learning-rate decay. Everything is numpy and seeded so a
training run is bit-reproducible.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from rfpuf.errors import TrainingDivergedError
from rfpuf.features import FeatureVector
from rfpuf.utils.logging import get_logger

logger = get_logger(__name__)

MODEL_FORMAT = "rfpuf-mlp"
MODEL_VERSION = 1
GRADIENT_CHECK_STEP = 1e-5
GRADIENT_CHECK_FLOOR = 1e-6


class TrainConfig(BaseModel):
    """Topology and optimizer settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    hidden_sizes: List[int] = Field(default_factory=lambda: [50], min_length=1)
    epochs: int = Field(default=200, ge=0)
    batch_size: int = Field(default=32, ge=1)
    learning_rate: float = Field(default=0.05, gt=0)
    lr_decay: float = Field(default=0.98, gt=0, le=1)
    seed: int = Field(default=0, ge=0)
    shuffle: bool = True

    @field_validator("hidden_sizes")
    @classmethod
    def _positive_widths(cls, value: List[int]) -> List[int]:
        if any(width < 1 for width in value):
            raise ValueError(f"hidden layer widths must be >= 1, got {value}")
        return value


@dataclass
class MlpModel:
    """Layer parameters; ``weights[l]`` has shape (fan_in, fan_out)."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    init_seed: int = 0

    def __post_init__(self) -> None:
        if not self.weights or len(self.weights) != len(self.biases):
            raise ValueError("model needs one bias vector per weight matrix")
        for index, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {index}: weights {w.shape} and bias {b.shape} disagree")
            if index and self.weights[index - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {index}: input width does not chain")

    @property
    def n_in(self) -> int:
        return int(self.weights[0].shape[0])

    @property
    def n_classes(self) -> int:
        return int(self.weights[-1].shape[1])

    @property
    def hidden_sizes(self) -> List[int]:
        return [int(w.shape[1]) for w in self.weights[:-1]]

    def copy(self) -> "MlpModel":
        return MlpModel(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            init_seed=self.init_seed,
        )

    def parameters(self) -> List[np.ndarray]:
        """Parameter arrays in a fixed order (w0, b0, w1, b1, ...)."""
        out: List[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())


@dataclass(frozen=True, eq=False)
class LabeledSet:
    """Normalized feature rows and their integer class labels."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise ValueError(f"features {x.shape} and labels {y.shape} disagree")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return int(self.y.size)


@dataclass
class TrainReport:
    """Per-epoch training loss and validation accuracy."""

    losses: List[float] = field(default_factory=list)
    val_accuracy: List[float] = field(default_factory=list)
    wall_seconds: float = 0.0

    @property
    def epochs(self) -> int:
        return len(self.losses)


def init_mlp(n_in: int, hidden_sizes: Sequence[int], n_classes: int, seed: int) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    dims = [n_in, *hidden_sizes, n_classes]
    if any(d < 1 for d in dims):
        raise ValueError(f"all layer dimensions must be >= 1, got {dims}")
    rng = np.random.default_rng(seed)
    weights: List[np.ndarray] = []
    biases: List[np.ndarray] = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights=weights, biases=biases, init_seed=seed)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=-1, keepdims=True)


def _activations(model: MlpModel, x: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
    """Hidden activations (input first) and output logits for a batch."""
    layers = [x]
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        layers.append(np.tanh(layers[-1] @ w + b))
    logits = layers[-1] @ model.weights[-1] + model.biases[-1]
    return layers, logits


def _as_batch(model: MlpModel, features: Union[FeatureVector, np.ndarray]) -> Tuple[np.ndarray, bool]:
    values = features.values if isinstance(features, FeatureVector) else np.asarray(features, dtype=np.float64)
    single = values.ndim == 1
    batch = values[None, :] if single else values
    if batch.ndim != 2 or batch.shape[1] != model.n_in:
        raise ValueError(f"expected {model.n_in} features, got shape {values.shape}")
    return batch, single


def forward(model: MlpModel, features: Union[FeatureVector, np.ndarray]) -> np.ndarray:
    """Class probabilities for one vector (1-D result) or a batch (2-D result)."""
    batch, single = _as_batch(model, features)
    _, logits = _activations(model, batch)
    probs = softmax(logits)
    return probs[0] if single else probs


def decide(probabilities: np.ndarray) -> Union[int, np.ndarray]:
    """Argmax; ties go to the lowest class index."""
    probabilities = np.asarray(probabilities)
    if probabilities.ndim == 1:
        return int(np.argmax(probabilities))
    return np.argmax(probabilities, axis=1)


def predict(model: MlpModel, features: Union[FeatureVector, np.ndarray]) -> Union[int, np.ndarray]:
    return decide(forward(model, features))


def cross_entropy(model: MlpModel, x: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy over a batch, via a stable log-softmax."""
    _, logits = _activations(model, x)
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    log_probs = shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    return float(-np.mean(log_probs[np.arange(y.size), y]))


def gradients(model: MlpModel, x: np.ndarray, y: np.ndarray) -> List[np.ndarray]:
    """Backpropagated gradients of the mean cross-entropy, ordered like ``parameters()``."""
    layers, logits = _activations(model, x)
    delta = softmax(logits)
    delta[np.arange(y.size), y] -= 1.0
    delta /= y.size

    grads: List[np.ndarray] = []
    for index in range(len(model.weights) - 1, -1, -1):
        grads.append(delta.sum(axis=0))
        grads.append(layers[index].T @ delta)
        if index:
            delta = (delta @ model.weights[index].T) * (1.0 - layers[index] ** 2)
    grads.reverse()
    return grads


def accuracy(model: MlpModel, data: LabeledSet) -> float:
    if not len(data):
        return 0.0
    return float(np.mean(predict(model, data.x) == data.y))


def train(
    model: MlpModel,
    dataset: LabeledSet,
    cfg: TrainConfig,
    validation: Optional[LabeledSet] = None,
) -> Tuple[MlpModel, TrainReport]:
    """Mini-batch SGD on a copy of ``model``.

    Validation accuracy is measured on ``validation`` when given, otherwise on
    the training set. Raises ``TrainingDivergedError`` when a parameter or the
    loss stops being finite.
    """
    if not len(dataset):
        raise ValueError("training set is empty")
    if dataset.x.shape[1] != model.n_in:
        raise ValueError(f"expected {model.n_in} features, got {dataset.x.shape[1]}")
    if dataset.y.min() < 0 or dataset.y.max() >= model.n_classes:
        raise ValueError(f"labels must lie in [0, {model.n_classes})")

    trained = model.copy()
    report = TrainReport()
    rng = np.random.default_rng(cfg.seed)
    monitor = validation if validation is not None else dataset
    started = time.perf_counter()

    n = len(dataset)
    for epoch in range(cfg.epochs):
        rate = cfg.learning_rate * cfg.lr_decay**epoch
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            grads = gradients(trained, dataset.x[batch], dataset.y[batch])
            for param, grad in zip(trained.parameters(), grads):
                param -= rate * grad

        if not trained.is_finite():
            logger.error("training_diverged", epoch=epoch, learning_rate=rate, reason="non_finite_parameters")
            raise TrainingDivergedError(
                f"parameters became non-finite at epoch {epoch}; learning rate {cfg.learning_rate} is too high"
            )
        loss = cross_entropy(trained, dataset.x, dataset.y)
        if not math.isfinite(loss):
            logger.error("training_diverged", epoch=epoch, learning_rate=rate)
            raise TrainingDivergedError(
                f"loss became {loss} at epoch {epoch}; learning rate {cfg.learning_rate} is too high"
            )
        report.losses.append(loss)
        report.val_accuracy.append(accuracy(trained, monitor))

    report.wall_seconds = time.perf_counter() - started
    logger.info(
        "training_complete",
        epochs=cfg.epochs,
        final_loss=report.losses[-1] if report.losses else None,
        val_accuracy=report.val_accuracy[-1] if report.val_accuracy else None,
    )
    return trained, report


def gradient_check(model: MlpModel, sample: Tuple[np.ndarray, int]) -> float:
    """Max relative error between backprop and central finite differences."""
    x, label = sample
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    y = np.array([label], dtype=np.int64)
    probe = model.copy()
    analytic = gradients(probe, x, y)

    worst = 0.0
    for param, grad in zip(probe.parameters(), analytic):
        flat = param.reshape(-1)
        flat_grad = grad.reshape(-1)
        for index in range(flat.size):
            original = flat[index]
            flat[index] = original + GRADIENT_CHECK_STEP
            plus = cross_entropy(probe, x, y)
            flat[index] = original - GRADIENT_CHECK_STEP
            minus = cross_entropy(probe, x, y)
            flat[index] = original
            numeric = (plus - minus) / (2.0 * GRADIENT_CHECK_STEP)
            denom = max(abs(numeric), abs(flat_grad[index]), GRADIENT_CHECK_FLOOR)
            worst = max(worst, abs(numeric - flat_grad[index]) / denom)
    return worst


def model_to_dict(model: MlpModel) -> dict:
    """JSON-ready document; floats as ``float.hex`` strings for an exact round trip."""
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "init_seed": model.init_seed,
        "layers": [
            {
                "shape": list(w.shape),
                "weights": [float(v).hex() for v in w.reshape(-1)],
                "bias": [float(v).hex() for v in b],
            }
            for w, b in zip(model.weights, model.biases)
        ],
    }


def model_from_dict(document: dict) -> MlpModel:
    if document.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a model document: format={document.get('format')!r}")
    if document.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {document.get('version')}")
    weights = []
    biases = []
    for layer in document["layers"]:
        shape = tuple(layer["shape"])
        weights.append(np.array([float.fromhex(v) for v in layer["weights"]]).reshape(shape))
        biases.append(np.array([float.fromhex(v) for v in layer["bias"]]))
    return MlpModel(weights=weights, biases=biases, init_seed=int(document["init_seed"]))


def save_model(model: MlpModel, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_model(path: Path) -> MlpModel:
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path} is not valid JSON: {exc}") from exc
    return model_from_dict(document)


__all__ = [
    "LabeledSet",
    "MlpModel",
    "TrainConfig",
    "TrainReport",
    "decide",
    "forward",
    "gradient_check",
    "init_mlp",
    "load_model",
    "predict",
    "save_model",
    "train",
]
