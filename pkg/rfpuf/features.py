"""PUF response vectors extracted from receiver output.

A response is nine reals in a fixed order: the carrier offset in ppm, the
amplitude and phase error of each of the three 16-QAM rings, and the two
channel-side measurements (AGC gain, noise variance).

By default ring amplitude and phase come from one coherent sum per ring,
``sum(y * conj(d))`` over the ring's symbols: its magnitude over
``n * radius**2`` is the amplitude, its angle the phase error. Averaging
``|y|`` instead would add a noise-power bias that moves with SNR.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Literal, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from rfpuf.errors import FrameRejectedError
from rfpuf.rxchain import RxOutput, slice_symbols
from rfpuf.txmodel import CONSTELLATION_SCALE, hz_to_ppm
from rfpuf.utils.logging import get_logger

logger = get_logger(__name__)

FEATURE_NAMES: Tuple[str, ...] = (
    "cfo_ppm",
    "ring1_amp",
    "ring2_amp",
    "ring3_amp",
    "ring1_phase_err_rad",
    "ring2_phase_err_rad",
    "ring3_phase_err_rad",
    "agc_gain_db",
    "noise_var_estimate",
)
# transmitter-side subset; the last two describe the channel
DEVICE_FEATURES: Tuple[str, ...] = FEATURE_NAMES[:7]
N_FEATURES = len(FEATURE_NAMES)

RingEstimator = Literal["coherent", "magnitude"]

RING_RADII = np.sqrt(np.array([2.0, 10.0, 18.0])) * CONSTELLATION_SCALE
MIN_SYMBOLS = 16 * len(RING_RADII)
SCALE_FLOOR = 1e-12

META_COLUMNS: Tuple[str, ...] = (
    "device_id",
    "frame_index",
    "ebn0_db",
    "attenuation_db",
    "doppler_hz",
    "prbs_seed",
)
DATASET_COLUMNS: Tuple[str, ...] = FEATURE_NAMES + META_COLUMNS
NORMALIZATION_COLUMNS: Tuple[str, ...] = ("feature", "mean", "scale", "degenerate")


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """One PUF response with its parallel feature labels."""

    values: np.ndarray
    feature_names: Tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (len(self.feature_names),):
            raise ValueError(
                f"expected {len(self.feature_names)} values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("feature values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def __len__(self) -> int:
        return int(self.values.size)

    def as_dict(self) -> dict:
        return dict(zip(self.feature_names, self.values.tolist()))


@dataclass(frozen=True, eq=False)
class NormalizationParams:
    """Per-feature z-score statistics fitted on a training set.

    Attributes:
        mean: Per-feature mean.
        scale: Per-feature population standard deviation, floored at 1e-12.
        degenerate: True where the raw deviation fell below the floor.
        feature_names: Labels the statistics belong to.
    """

    mean: np.ndarray
    scale: np.ndarray
    degenerate: np.ndarray
    feature_names: Tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        scale = np.asarray(self.scale, dtype=np.float64)
        degenerate = np.asarray(self.degenerate, dtype=bool)
        if not (mean.shape == scale.shape == degenerate.shape == (len(self.feature_names),)):
            raise ValueError("normalization arrays must match the feature count")
        if np.any(scale <= 0):
            raise ValueError("normalization scales must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "degenerate", degenerate)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "feature": list(self.feature_names),
                "mean": self.mean,
                "scale": self.scale,
                "degenerate": self.degenerate.astype(int),
            }
        )

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "NormalizationParams":
        return cls(
            mean=frame["mean"].to_numpy(dtype=np.float64),
            scale=frame["scale"].to_numpy(dtype=np.float64),
            degenerate=frame["degenerate"].to_numpy(dtype=bool),
            feature_names=tuple(frame["feature"].astype(str)),
        )


def ring_index(decisions: np.ndarray) -> np.ndarray:
    """Ring 0, 1 or 2 of each ideal point: the count of its outer (|level| = 3) rails."""
    outer_i = np.abs(np.real(decisions)) > 2.0 * CONSTELLATION_SCALE
    outer_q = np.abs(np.imag(decisions)) > 2.0 * CONSTELLATION_SCALE
    return outer_i.astype(np.intp) + outer_q.astype(np.intp)


def extract_features(
    rx: RxOutput, carrier_freq_hz: float, ring_estimator: RingEstimator = "coherent"
) -> FeatureVector:
    """Build the nine-element response for one received frame.

    ``magnitude`` takes each ring's mean |y| over its radius and the circular
    mean of its per-symbol phase errors instead of the coherent sum.

    Raises:
        FrameRejectedError: Too few symbols, or a ring received no symbols.
    """
    if carrier_freq_hz <= 0:
        raise ValueError(f"carrier_freq_hz must be positive, got {carrier_freq_hz}")
    if ring_estimator not in ("coherent", "magnitude"):
        raise ValueError(f"unknown ring estimator {ring_estimator!r}")
    symbols = np.asarray(rx.symbols, dtype=np.complex128)
    if symbols.size < MIN_SYMBOLS:
        raise FrameRejectedError(
            f"{symbols.size} symbols is fewer than the {MIN_SYMBOLS} needed"
        )

    decisions = slice_symbols(symbols)
    rings = ring_index(decisions)
    products = symbols * np.conj(decisions)

    amps: List[float] = []
    phases: List[float] = []
    for ring, radius in enumerate(RING_RADII):
        members = rings == ring
        if not np.any(members):
            raise FrameRejectedError(f"ring {ring + 1} received no symbols")
        if ring_estimator == "magnitude":
            amps.append(float(np.mean(np.abs(symbols[members])) / radius))
            phases.append(float(np.angle(np.sum(np.exp(1j * np.angle(products[members]))))))
            continue
        # projection onto the decisions: zero-mean noise averages out of both
        acc = np.sum(products[members])
        amps.append(float(np.abs(acc) / (np.count_nonzero(members) * radius**2)))
        phases.append(float(np.angle(acc)))

    values = [hz_to_ppm(rx.cfo_estimate_hz, carrier_freq_hz)]
    values.extend(amps)
    values.extend(phases)
    values.extend([rx.agc_gain_db, rx.noise_var_estimate])
    return FeatureVector(values=np.array(values))


VectorsLike = Union[np.ndarray, Sequence[FeatureVector]]


def as_matrix(vectors: VectorsLike) -> np.ndarray:
    """Stack feature vectors (or pass a 2-D array through) as an (n, d) float array."""
    if isinstance(vectors, np.ndarray):
        matrix = np.asarray(vectors, dtype=np.float64)
    else:
        matrix = np.array([v.values for v in vectors], dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got shape {matrix.shape}")
    return matrix


def fit_normalization(
    vectors: VectorsLike, feature_names: Sequence[str] = FEATURE_NAMES
) -> NormalizationParams:
    """Per-feature mean and population standard deviation of a training set."""
    matrix = as_matrix(vectors)
    if matrix.shape[0] < 2:
        raise ValueError(f"need at least 2 vectors to fit normalization, got {matrix.shape[0]}")
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)
    degenerate = std < SCALE_FLOOR
    if np.any(degenerate):
        logger.warning(
            "degenerate_features",
            features=[name for name, flag in zip(feature_names, degenerate) if flag],
        )
    return NormalizationParams(
        mean=mean,
        scale=np.where(degenerate, SCALE_FLOOR, std),
        degenerate=degenerate,
        feature_names=tuple(feature_names),
    )


def _check_width(width: int, params: NormalizationParams) -> None:
    if width != len(params.feature_names):
        raise ValueError(
            f"length mismatch: {width} values, {len(params.feature_names)} statistics"
        )


def apply_normalization(v: FeatureVector, p: NormalizationParams) -> FeatureVector:
    """``(value - mean) / scale`` per feature."""
    _check_width(len(v), p)
    return FeatureVector(values=(v.values - p.mean) / p.scale, feature_names=v.feature_names)


def invert_normalization(v: FeatureVector, p: NormalizationParams) -> FeatureVector:
    """Undo ``apply_normalization``."""
    _check_width(len(v), p)
    return FeatureVector(values=v.values * p.scale + p.mean, feature_names=v.feature_names)


def normalize_matrix(matrix: np.ndarray, p: NormalizationParams) -> np.ndarray:
    matrix = as_matrix(matrix)
    _check_width(matrix.shape[1], p)
    return (matrix - p.mean) / p.scale


@dataclass
class FeatureDataset:
    """Raw feature rows plus the frame metadata each row came from."""

    features: np.ndarray
    device_ids: np.ndarray
    frame_index: np.ndarray
    ebn0_db: np.ndarray
    attenuation_db: np.ndarray
    doppler_hz: np.ndarray
    prbs_seed: np.ndarray
    feature_names: Tuple[str, ...] = field(default=FEATURE_NAMES)

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64).reshape(-1, len(self.feature_names))
        self.device_ids = np.asarray(self.device_ids, dtype=np.int64)
        self.frame_index = np.asarray(self.frame_index, dtype=np.int64)
        self.ebn0_db = np.asarray(self.ebn0_db, dtype=np.float64)
        self.attenuation_db = np.asarray(self.attenuation_db, dtype=np.float64)
        self.doppler_hz = np.asarray(self.doppler_hz, dtype=np.float64)
        self.prbs_seed = np.asarray(self.prbs_seed, dtype=np.int64)
        n = self.features.shape[0]
        for name in ("device_ids", "frame_index", "ebn0_db", "attenuation_db", "doppler_hz", "prbs_seed"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have one entry per row ({n})")

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_classes(self) -> int:
        return int(self.device_ids.max()) + 1 if len(self) else 0

    def by_device(self) -> dict:
        """Feature rows grouped by device id, in ascending id order."""
        return {
            int(device): self.features[self.device_ids == device]
            for device in np.unique(self.device_ids)
        }

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.features, columns=list(self.feature_names))
        frame["device_id"] = self.device_ids
        frame["frame_index"] = self.frame_index
        frame["ebn0_db"] = self.ebn0_db
        frame["attenuation_db"] = self.attenuation_db
        frame["doppler_hz"] = self.doppler_hz
        frame["prbs_seed"] = self.prbs_seed
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "FeatureDataset":
        return cls(
            features=frame.loc[:, list(FEATURE_NAMES)].to_numpy(dtype=np.float64),
            device_ids=frame["device_id"].to_numpy(),
            frame_index=frame["frame_index"].to_numpy(),
            ebn0_db=frame["ebn0_db"].to_numpy(),
            attenuation_db=frame["attenuation_db"].to_numpy(),
            doppler_hz=frame["doppler_hz"].to_numpy(),
            prbs_seed=frame["prbs_seed"].to_numpy(),
        )

    @classmethod
    def from_rows(cls, rows: Iterable[dict]) -> "FeatureDataset":
        """Build from dicts carrying ``values`` plus the metadata keys."""
        rows = list(rows)
        return cls(
            features=np.array([row["values"] for row in rows], dtype=np.float64).reshape(-1, N_FEATURES),
            device_ids=[row["device_id"] for row in rows],
            frame_index=[row["frame_index"] for row in rows],
            ebn0_db=[row["ebn0_db"] for row in rows],
            attenuation_db=[row["attenuation_db"] for row in rows],
            doppler_hz=[row["doppler_hz"] for row in rows],
            prbs_seed=[row["prbs_seed"] for row in rows],
        )


__all__ = [
    "DATASET_COLUMNS",
    "DEVICE_FEATURES",
    "FEATURE_NAMES",
    "FeatureDataset",
    "FeatureVector",
    "NORMALIZATION_COLUMNS",
    "NormalizationParams",
    "apply_normalization",
    "extract_features",
    "fit_normalization",
    "invert_normalization",
    "normalize_matrix",
]
