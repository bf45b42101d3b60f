"""PUF quality metrics.

Identification error from a classifier, plus the response-distance view:
reliability (worst intra-device distance), uniqueness (closest pair of
devices), identifiability (the first below the second) and challenge-response
space size.

Distances are in "ppm" of a per-feature population scale: a deviation of one
scale unit on every feature is 10^6 ppm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from itertools import combinations
from typing import Dict, Mapping, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from rfpuf.features import FeatureVector

GEOMEAN_GUARD_PPM = 1e-3
PPM = 1e6
BITS_PER_FEATURE = 16
INTRA_MODES: Tuple[str, ...] = ("all_pairs", "single")

CONFUSION_PREFIX = "pred_"
DEVICE_COLUMNS: Tuple[str, ...] = ("device_id", "n_evaluations", "d_intra_ppm", "cfo_intra_ppm")
PAIR_COLUMNS: Tuple[str, ...] = ("device_a", "device_b", "d_inter_ppm", "cfo_inter_ppm")


class Classifier(Protocol):
    """Anything that maps a batch of normalized vectors to class labels."""

    def __call__(self, x: np.ndarray) -> np.ndarray: ...


@dataclass
class EvalReport:
    """Confusion matrix (rows = true class, columns = predicted) and derived rates."""

    confusion_matrix: np.ndarray
    p_false: float
    per_class_accuracy: np.ndarray

    @property
    def n_classes(self) -> int:
        return int(self.confusion_matrix.shape[0])

    @property
    def total(self) -> int:
        return int(self.confusion_matrix.sum())

    def confusion_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            self.confusion_matrix,
            columns=[f"{CONFUSION_PREFIX}{k}" for k in range(self.n_classes)],
        )
        frame.insert(0, "true_class", np.arange(self.n_classes))
        return frame


@dataclass
class PufDistanceReport:
    """Worst-case distances and the per-device / per-pair tables behind them.

    ``cfo_*`` values are the plain carrier-relative ppm differences of the
    cfo feature, reported next to the scale-relative distances.
    """

    d_intra_worst_ppm: float
    d_inter_worst_ppm: float
    identifiable: bool
    per_device: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=DEVICE_COLUMNS))
    per_pair: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=PAIR_COLUMNS))
    cfo_intra_worst_ppm: float = 0.0
    cfo_inter_worst_ppm: float = 0.0
    inter_mode: str = "centroid"

    def __post_init__(self) -> None:
        if self.d_intra_worst_ppm < 0 or self.d_inter_worst_ppm < 0:
            raise ValueError("distances must be non-negative")


def evaluate(
    model: Classifier,
    x: np.ndarray,
    y: np.ndarray,
    n_classes: Optional[int] = None,
) -> EvalReport:
    """Classify every row of ``x`` and tabulate against the true labels ``y``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ValueError("evaluation set is empty")
    predicted = np.asarray(model(x), dtype=np.int64)
    return report_from_predictions(y, predicted, n_classes)


def report_from_predictions(
    y_true: np.ndarray, y_pred: np.ndarray, n_classes: Optional[int] = None
) -> EvalReport:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.size == 0:
        raise ValueError("evaluation set is empty")
    if y_true.shape != y_pred.shape:
        raise ValueError("predictions and labels differ in length")
    classes = n_classes if n_classes is not None else int(max(y_true.max(), y_pred.max())) + 1
    matrix = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(matrix, (y_true, y_pred), 1)

    row_totals = matrix.sum(axis=1)
    diagonal = np.diag(matrix)
    per_class = np.divide(
        diagonal, row_totals, out=np.zeros(classes, dtype=np.float64), where=row_totals > 0
    )
    p_false = 1.0 - float(diagonal.sum()) / float(matrix.sum())
    return EvalReport(confusion_matrix=matrix, p_false=p_false, per_class_accuracy=per_class)


def population_scales(vectors: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Per-feature standard deviation over an evaluation set, floored."""
    vectors = np.asarray(vectors, dtype=np.float64)
    return np.maximum(vectors.std(axis=0), floor)


def _values(v: Union[FeatureVector, np.ndarray]) -> np.ndarray:
    return v.values if isinstance(v, FeatureVector) else np.asarray(v, dtype=np.float64)


def feature_distance_ppm(
    y1: Union[FeatureVector, np.ndarray],
    y2: Union[FeatureVector, np.ndarray],
    scales: np.ndarray,
) -> float:
    """Geometric mean of per-feature scaled deviations, in ppm.

    ``GEOMEAN_GUARD_PPM`` is added to every deviation before the mean and
    subtracted after, so one exactly matching feature does not zero the result.
    """
    a = _values(y1)
    b = _values(y2)
    scales = np.asarray(scales, dtype=np.float64)
    if a.shape != b.shape or a.shape != scales.shape:
        raise ValueError(f"length mismatch: {a.shape}, {b.shape}, scales {scales.shape}")
    if np.any(scales <= 0):
        raise ValueError("scales must be positive")
    deviation = np.abs(a - b) / scales * PPM
    guarded = deviation + GEOMEAN_GUARD_PPM
    distance = float(np.exp(np.mean(np.log(guarded)))) - GEOMEAN_GUARD_PPM
    return max(distance, 0.0)


def intra_distances(
    per_device: Mapping[int, np.ndarray],
    scales: np.ndarray,
    mode: str = "all_pairs",
) -> Dict[int, float]:
    """Worst intra-device distance for each device.

    ``all_pairs`` takes the maximum over every pair of the device's
    evaluations; ``single`` compares only the first two.
    """
    if mode not in INTRA_MODES:
        raise ValueError(f"unknown intra mode {mode!r}")
    result: Dict[int, float] = {}
    for device, rows in per_device.items():
        rows = np.asarray(rows, dtype=np.float64)
        if rows.shape[0] < 2:
            raise ValueError(f"device {device} has {rows.shape[0]} evaluation(s); need >= 2")
        pairs = combinations(range(rows.shape[0]), 2) if mode == "all_pairs" else [(0, 1)]
        result[int(device)] = max(feature_distance_ppm(rows[i], rows[j], scales) for i, j in pairs)
    return result


def intra_puf(per_device: Mapping[int, np.ndarray], scales: np.ndarray, mode: str = "all_pairs") -> float:
    """Max over devices of the worst pairwise distance between a device's evaluations."""
    distances = intra_distances(per_device, scales, mode)
    if not distances:
        raise ValueError("no devices to evaluate")
    return max(distances.values())


def device_representatives(per_device: Mapping[int, np.ndarray], mode: str = "centroid") -> Dict[int, np.ndarray]:
    """One response per device: the centroid, or in ``single`` mode the first evaluation."""
    if mode not in ("centroid", "single"):
        raise ValueError(f"unknown inter mode {mode!r}")
    out: Dict[int, np.ndarray] = {}
    for device, rows in per_device.items():
        rows = np.asarray(rows, dtype=np.float64)
        out[int(device)] = rows.mean(axis=0) if mode == "centroid" else rows[0]
    return out


def inter_distances(centroids: Mapping[int, np.ndarray], scales: np.ndarray) -> Dict[Tuple[int, int], float]:
    """Distance for every unordered device pair, keyed ``(low_id, high_id)``."""
    devices = sorted(centroids)
    return {
        (a, b): feature_distance_ppm(centroids[a], centroids[b], scales)
        for a, b in combinations(devices, 2)
    }


def inter_puf(centroids: Mapping[int, np.ndarray], scales: np.ndarray) -> float:
    """Min over device pairs of the distance between their representative responses."""
    if len(centroids) < 2:
        raise ValueError(f"need at least 2 devices, got {len(centroids)}")
    return min(inter_distances(centroids, scales).values())


def identifiability(report: PufDistanceReport) -> Tuple[bool, float]:
    """``(d_intra < d_inter, d_inter - d_intra)``."""
    return (
        report.d_intra_worst_ppm < report.d_inter_worst_ppm,
        report.d_inter_worst_ppm - report.d_intra_worst_ppm,
    )


def distance_report(
    per_device: Mapping[int, np.ndarray],
    scales: np.ndarray,
    inter_mode: str = "centroid",
    feature_index: Optional[Sequence[int]] = None,
    cfo_column: Optional[int] = 0,
) -> PufDistanceReport:
    """Full reliability/uniqueness report over grouped evaluation responses.

    ``feature_index`` restricts the distance to a subset of features;
    ``cfo_column`` (in the unrestricted vectors) feeds the carrier-relative
    ppm columns.
    """
    scales = np.asarray(scales, dtype=np.float64)
    selected = list(feature_index) if feature_index is not None else list(range(scales.size))
    grouped = {int(d): np.asarray(rows, dtype=np.float64) for d, rows in per_device.items()}
    restricted = {d: rows[:, selected] for d, rows in grouped.items()}
    sub_scales = scales[selected]

    intra = intra_distances(restricted, sub_scales)
    representatives = device_representatives(restricted, inter_mode)
    if len(representatives) < 2:
        raise ValueError(f"need at least 2 devices, got {len(representatives)}")
    inter = inter_distances(representatives, sub_scales)

    cfo_intra: Dict[int, float] = {}
    cfo_inter: Dict[Tuple[int, int], float] = {}
    if cfo_column is not None:
        for device, rows in grouped.items():
            cfo = rows[:, cfo_column]
            cfo_intra[device] = float(cfo.max() - cfo.min())
        cfo_reps = device_representatives({d: rows[:, [cfo_column]] for d, rows in grouped.items()}, inter_mode)
        for a, b in inter:
            cfo_inter[(a, b)] = float(abs(cfo_reps[a][0] - cfo_reps[b][0]))

    per_device_frame = pd.DataFrame(
        {
            "device_id": list(intra),
            "n_evaluations": [int(grouped[d].shape[0]) for d in intra],
            "d_intra_ppm": list(intra.values()),
            "cfo_intra_ppm": [cfo_intra.get(d, 0.0) for d in intra],
        },
        columns=DEVICE_COLUMNS,
    )
    per_pair_frame = pd.DataFrame(
        {
            "device_a": [a for a, _ in inter],
            "device_b": [b for _, b in inter],
            "d_inter_ppm": list(inter.values()),
            "cfo_inter_ppm": [cfo_inter.get(pair, 0.0) for pair in inter],
        },
        columns=PAIR_COLUMNS,
    )

    d_intra = max(intra.values())
    d_inter = min(inter.values())
    return PufDistanceReport(
        d_intra_worst_ppm=d_intra,
        d_inter_worst_ppm=d_inter,
        identifiable=d_intra < d_inter,
        per_device=per_device_frame,
        per_pair=per_pair_frame,
        cfo_intra_worst_ppm=max(cfo_intra.values()) if cfo_intra else 0.0,
        cfo_inter_worst_ppm=min(cfo_inter.values()) if cfo_inter else 0.0,
        inter_mode=inter_mode,
    )


def crp_count(n_features: int, bits_per_feature: int = BITS_PER_FEATURE) -> Tuple[int, str]:
    """Exact CRP space size ``2**(bits * n)`` and the guess probability as ``"d.dde-XX"``."""
    if n_features < 1:
        raise ValueError(f"n_features must be >= 1, got {n_features}")
    if bits_per_feature < 1:
        raise ValueError(f"bits_per_feature must be >= 1, got {bits_per_feature}")
    count = 1 << (bits_per_feature * n_features)
    with localcontext() as ctx:
        ctx.prec = 50
        probability = format(Decimal(1) / Decimal(count), ".2e")
    return count, probability


__all__ = [
    "Classifier",
    "EvalReport",
    "PufDistanceReport",
    "crp_count",
    "distance_report",
    "evaluate",
    "feature_distance_ppm",
    "identifiability",
    "inter_puf",
    "intra_puf",
    "population_scales",
]
