"""Experiment orchestration.

Dataset generation follows the preamble-less training recipe: every device
transmits many different PRBS streams through freshly drawn channels for
training, then is evaluated on further streams and channels that training
never saw. ``run_experiment`` chains generate -> train -> evaluate -> metrics
-> write; ``run_sweep`` repeats it over one configuration axis.

Every random draw comes from ``derive_seed(master_seed, namespace, device,
frame, attempt)``, so serial and pooled generation produce identical rows.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from functools import lru_cache
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterator, List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from rfpuf.ann import (
    LabeledSet,
    MlpModel,
    TrainReport,
    init_mlp,
    load_model,
    predict,
    save_model,
    train,
)
from rfpuf.channel import apply_channel, sample_channel
from rfpuf.config import ExperimentConfig
from rfpuf.errors import FrameRejectedError, PipelineError
from rfpuf.features import (
    DATASET_COLUMNS,
    DEVICE_FEATURES,
    FEATURE_NAMES,
    N_FEATURES,
    NORMALIZATION_COLUMNS,
    FeatureDataset,
    NormalizationParams,
    extract_features,
    fit_normalization,
    normalize_matrix,
)
from rfpuf.pufmetrics import (
    DEVICE_COLUMNS,
    PAIR_COLUMNS,
    EvalReport,
    PufDistanceReport,
    crp_count,
    distance_report,
    identifiability,
    population_scales,
    report_from_predictions,
)
from rfpuf.rxchain import receive
from rfpuf.store import RunLedger, RunRecord, SweepPointRecord
from rfpuf.txmodel import TxProfile, prbs_state, sample_population, transmit
from rfpuf.utils.csv_io import SCHEMA_VERSION, read_table, write_table
from rfpuf.utils.logging import get_logger, run_context
from rfpuf.utils.seeding import SeedNamespace, derive_seed

logger = get_logger(__name__)

MAX_FRAME_ATTEMPTS = 3
MAX_CHALLENGE_REDRAWS = 64

POPULATION_COLUMNS: Tuple[str, ...] = (
    "device_id",
    "cfo_hz",
    "gain_i",
    "gain_q",
    "phase_imbalance_rad",
    "dc_i",
    "dc_q",
    "pa_sat",
    "pa_smoothness",
)
MANIFEST_COLUMNS: Tuple[str, ...] = (
    "split",
    "device_id",
    "frame_index",
    "attempt",
    "prbs_seed",
    "channel_seed",
    "noise_seed",
    "ebn0_db",
    "attenuation_db",
    "doppler_hz",
    "ebn0_clamped",
)
TRAIN_REPORT_COLUMNS: Tuple[str, ...] = ("epoch", "loss", "val_accuracy")
PREDICTION_COLUMNS: Tuple[str, ...] = ("device_id", "frame_index", "predicted", "correct")
EVAL_REPORT_COLUMNS: Tuple[str, ...] = ("class_id", "n_evaluations", "n_correct", "accuracy")
SWEEP_COLUMNS: Tuple[str, ...] = (
    "variable",
    "value",
    "p_false",
    "d_intra_worst",
    "d_inter_worst",
    "train_seconds",
    "error",
)

SPLIT_NAMESPACES = {
    "train": (SeedNamespace.TRAIN_PRBS, SeedNamespace.TRAIN_CHANNEL, SeedNamespace.TRAIN_NOISE),
    "eval": (SeedNamespace.EVAL_PRBS, SeedNamespace.EVAL_CHANNEL, SeedNamespace.EVAL_NOISE),
}

FILES = {
    "population": "population.csv",
    "manifest": "manifest.csv",
    "train": "train_features.csv",
    "eval": "eval_features.csv",
    "normalization": "normalization.csv",
    "model": "model.json",
    "train_report": "train_report.csv",
    "predictions": "predictions.csv",
    "confusion": "confusion_matrix.csv",
    "eval_report": "eval_report.csv",
    "puf_devices": "puf_devices.csv",
    "puf_pairs": "puf_pairs.csv",
    "summary": "summary.json",
    "summary_text": "summary.txt",
    "timing": "timing.json",
    "sweep": "sweep.csv",
}


@dataclass
class GeneratedData:
    """Everything ``generate_dataset`` produces."""

    train: FeatureDataset
    eval: FeatureDataset
    population: List[TxProfile]
    manifest: pd.DataFrame
    normalization: NormalizationParams

    @property
    def n_classes(self) -> int:
        return len(self.population) if self.population else max(self.train.n_classes, self.eval.n_classes)

    @property
    def clamped_frames(self) -> int:
        if self.manifest.empty:
            return 0
        return int(self.manifest["ebn0_clamped"].astype(bool).sum())


@dataclass
class RunResult:
    """Outputs of one ``run_experiment`` call."""

    config: ExperimentConfig
    data: GeneratedData
    model: MlpModel
    train_report: TrainReport
    eval_report: EvalReport
    distances: Optional[PufDistanceReport]
    summary: Dict[str, Any]
    output_dir: Optional[Path]
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def p_false(self) -> float:
        return self.eval_report.p_false


SweepVariable = Literal["n_tx", "hidden_width", "ebn0_sigma_db", "frames_per_device_train", "rrc_ablation"]


class SweepSpec(BaseModel):
    """One configuration axis and the values to visit on it."""

    model_config = ConfigDict(extra="forbid")

    variable: SweepVariable
    values: List[Union[bool, int, float]] = Field(min_length=1)
    base: ExperimentConfig = Field(default_factory=ExperimentConfig)

    def config_for(self, value: Any) -> ExperimentConfig:
        if self.variable == "n_tx":
            return self.base.with_overrides(population__n_tx=int(value))
        if self.variable == "hidden_width":
            return self.base.with_overrides(training__hidden_sizes=[int(value)])
        if self.variable == "ebn0_sigma_db":
            return self.base.with_overrides(channel__ebn0_sigma_db=float(value))
        if self.variable == "frames_per_device_train":
            return self.base.with_overrides(training__frames_per_device_train=int(value))
        return self.base.with_overrides(rrc_ablation=bool(value))


@contextmanager
def _stage(name: str, timings: Optional[Dict[str, float]] = None) -> Iterator[None]:
    """Bind the stage to log context and wrap failures in ``PipelineError``."""
    started = time.perf_counter()
    try:
        with run_context(stage=name):
            yield
    except PipelineError:
        raise
    except Exception as exc:
        logger.error("stage_failed", stage=name, error=str(exc))
        raise PipelineError(name, str(exc)) from exc
    finally:
        if timings is not None:
            timings[name] = time.perf_counter() - started


# --- dataset generation ---------------------------------------------------


def sample_run_population(cfg: ExperimentConfig) -> List[TxProfile]:
    seed = derive_seed(cfg.master_seed, SeedNamespace.POPULATION)
    return sample_population(cfg.population.n_tx, cfg.population.variation(), seed)


@lru_cache(maxsize=256)
def training_prbs_states(master_seed: int, device: int, n_frames: int) -> FrozenSet[int]:
    """Every PRBS register a device's training frames can start from, retries included."""
    return frozenset(
        prbs_state(derive_seed(master_seed, SeedNamespace.TRAIN_PRBS, device, frame, attempt))
        for frame in range(n_frames)
        for attempt in range(MAX_FRAME_ATTEMPTS)
    )


def challenge_seed(cfg: ExperimentConfig, split: str, device: int, frame_index: int, attempt: int) -> int:
    """PRBS seed for one frame attempt.

    Evaluation seeds whose register a training frame of the same device could
    use are redrawn, so no evaluation stream repeats a training stream.
    """
    if cfg.challenge_mode == "preamble":
        return derive_seed(cfg.master_seed, SeedNamespace.PREAMBLE, attempt=attempt)
    prbs_ns = SPLIT_NAMESPACES[split][0]
    if split != "eval":
        return derive_seed(cfg.master_seed, prbs_ns, device, frame_index, attempt)

    used = training_prbs_states(cfg.master_seed, device, cfg.training.frames_per_device_train)
    for redraw in range(MAX_CHALLENGE_REDRAWS):
        seed = derive_seed(cfg.master_seed, prbs_ns, device, frame_index, attempt + redraw * MAX_FRAME_ATTEMPTS)
        if prbs_state(seed) not in used:
            if redraw:
                logger.debug("challenge_redrawn", device_id=device, frame_index=frame_index, redraws=redraw)
            return seed
    raise ValueError(
        f"no evaluation challenge for device {device} avoids its {len(used)} training registers"
    )


def simulate_frame(
    cfg: ExperimentConfig, profile: TxProfile, split: str, frame_index: int
) -> Dict[str, Any]:
    """tx -> channel -> rx -> features for one frame, retrying rejected frames.

    Returns a row dict with the feature ``values`` and the frame's metadata.
    """
    _, channel_ns, noise_ns = SPLIT_NAMESPACES[split]
    device = profile.device_id
    last_error: Optional[FrameRejectedError] = None
    for attempt in range(MAX_FRAME_ATTEMPTS):
        prbs_seed = challenge_seed(cfg, split, device, frame_index, attempt)
        channel_seed = derive_seed(cfg.master_seed, channel_ns, device, frame_index, attempt)
        noise_seed = derive_seed(cfg.master_seed, noise_ns, device, frame_index, attempt)

        burst = transmit(
            profile,
            cfg.frame.n_symbols,
            prbs_seed,
            cfg.frame.rrc,
            symbol_rate_hz=cfg.frame.symbol_rate_hz,
        )
        state = sample_channel(cfg.channel, channel_seed)
        received = apply_channel(burst.frame, state, noise_seed)
        try:
            rx = receive(
                received,
                cfg.frame.rrc,
                fft_size=cfg.receiver.fft_size,
                rrc_ablation=cfg.rrc_ablation,
                fine_cfo=cfg.receiver.fine_cfo,
            )
            vector = extract_features(rx, cfg.population.carrier_freq_hz, cfg.receiver.ring_estimator)
        except FrameRejectedError as exc:
            logger.info(
                "frame_rejected",
                device_id=device,
                split=split,
                frame_index=frame_index,
                attempt=attempt,
                reason=str(exc),
            )
            last_error = exc
            continue
        return {
            "values": vector.values,
            "split": split,
            "device_id": device,
            "frame_index": frame_index,
            "attempt": attempt,
            "prbs_seed": prbs_seed,
            "channel_seed": channel_seed,
            "noise_seed": noise_seed,
            "ebn0_db": state.ebn0_db,
            "attenuation_db": state.attenuation_db,
            "doppler_hz": state.doppler_hz,
            "ebn0_clamped": int(state.ebn0_clamped),
        }
    raise FrameRejectedError(
        f"device {device} {split} frame {frame_index} rejected after "
        f"{MAX_FRAME_ATTEMPTS} attempts: {last_error}"
    )


def _simulate_job(job: Tuple[ExperimentConfig, TxProfile, str, int]) -> Dict[str, Any]:
    return simulate_frame(*job)


def _frame_jobs(
    cfg: ExperimentConfig, population: List[TxProfile]
) -> List[Tuple[ExperimentConfig, TxProfile, str, int]]:
    jobs = []
    for split, count in (
        ("train", cfg.training.frames_per_device_train),
        ("eval", cfg.evaluation.frames_per_device_eval),
    ):
        for profile in population:
            jobs.extend((cfg, profile, split, index) for index in range(count))
    return jobs


def generate_dataset(
    cfg: ExperimentConfig, population: Optional[List[TxProfile]] = None
) -> GeneratedData:
    """Simulate every training and evaluation frame and fit normalization on training rows.

    ``population`` lets sweeps reuse devices; it is sampled from the master
    seed when omitted.
    """
    if population is None:
        population = sample_run_population(cfg)
    if len(population) != cfg.population.n_tx:
        raise ValueError(f"population has {len(population)} devices, config says {cfg.population.n_tx}")

    jobs = _frame_jobs(cfg, population)
    logger.info("dataset_generation_started", frames=len(jobs), workers=cfg.workers, n_tx=len(population))
    if cfg.workers > 1:
        chunk = max(1, len(jobs) // (cfg.workers * 4))
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_simulate_job, jobs, chunksize=chunk))
    else:
        rows = [_simulate_job(job) for job in jobs]

    train_rows = [row for row in rows if row["split"] == "train"]
    eval_rows = [row for row in rows if row["split"] == "eval"]
    train_set = FeatureDataset.from_rows(train_rows)
    eval_set = FeatureDataset.from_rows(eval_rows)
    manifest = pd.DataFrame([{name: row[name] for name in MANIFEST_COLUMNS} for row in rows], columns=MANIFEST_COLUMNS)
    normalization = fit_normalization(train_set.features)

    logger.info(
        "dataset_generated",
        train_rows=len(train_set),
        eval_rows=len(eval_set),
        clamped_frames=int(manifest["ebn0_clamped"].sum()),
        retried_frames=int((manifest["attempt"] > 0).sum()),
    )
    return GeneratedData(
        train=train_set,
        eval=eval_set,
        population=list(population),
        manifest=manifest,
        normalization=normalization,
    )


# --- stages ----------------------------------------------------------------


def labeled(dataset: FeatureDataset, normalization: NormalizationParams) -> LabeledSet:
    return LabeledSet(x=normalize_matrix(dataset.features, normalization), y=dataset.device_ids)


def train_stage(cfg: ExperimentConfig, data: GeneratedData) -> Tuple[MlpModel, TrainReport]:
    model = init_mlp(
        N_FEATURES,
        cfg.training.hidden_sizes,
        data.n_classes,
        seed=derive_seed(cfg.master_seed, SeedNamespace.MODEL_INIT),
    )
    optimizer = cfg.training.optimizer(seed=derive_seed(cfg.master_seed, SeedNamespace.SHUFFLE))
    validation = labeled(data.eval, data.normalization) if len(data.eval) else None
    return train(model, labeled(data.train, data.normalization), optimizer, validation=validation)


def feature_subset(cfg: ExperimentConfig) -> Optional[List[int]]:
    """Columns the distance report compares; None means all nine."""
    if cfg.evaluation.distance_features == "device":
        return [FEATURE_NAMES.index(name) for name in DEVICE_FEATURES]
    if cfg.evaluation.distance_features == "cfo":
        return [FEATURE_NAMES.index("cfo_ppm")]
    return None


def metrics_stage(cfg: ExperimentConfig, eval_set: FeatureDataset) -> Optional[PufDistanceReport]:
    """Distance report over the evaluation responses, or None with a single eval frame."""
    if cfg.evaluation.frames_per_device_eval < 2:
        logger.warning("distance_report_skipped", reason="needs >= 2 evaluation frames per device")
        return None
    return distance_report(
        eval_set.by_device(),
        population_scales(eval_set.features),
        inter_mode=cfg.evaluation.inter_mode,
        feature_index=feature_subset(cfg),
        cfo_column=FEATURE_NAMES.index("cfo_ppm"),
    )


def predictions_frame(eval_set: FeatureDataset, predicted: np.ndarray) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "device_id": eval_set.device_ids,
            "frame_index": eval_set.frame_index,
            "predicted": np.asarray(predicted, dtype=np.int64),
            "correct": (np.asarray(predicted) == eval_set.device_ids).astype(int),
        },
        columns=PREDICTION_COLUMNS,
    )


def eval_report_frame(report: EvalReport) -> pd.DataFrame:
    matrix = report.confusion_matrix
    return pd.DataFrame(
        {
            "class_id": np.arange(report.n_classes),
            "n_evaluations": matrix.sum(axis=1),
            "n_correct": np.diag(matrix),
            "accuracy": report.per_class_accuracy,
        },
        columns=EVAL_REPORT_COLUMNS,
    )


def population_frame(population: List[TxProfile]) -> pd.DataFrame:
    return pd.DataFrame([asdict(profile) for profile in population], columns=POPULATION_COLUMNS)


# --- persistence -------------------------------------------------------------


def write_dataset(data: GeneratedData, out: Path) -> None:
    write_table(population_frame(data.population), out / FILES["population"], POPULATION_COLUMNS)
    write_table(data.manifest, out / FILES["manifest"], MANIFEST_COLUMNS)
    write_table(data.train.to_frame(), out / FILES["train"], DATASET_COLUMNS)
    write_table(data.eval.to_frame(), out / FILES["eval"], DATASET_COLUMNS)
    write_table(data.normalization.to_frame(), out / FILES["normalization"], NORMALIZATION_COLUMNS)


def load_dataset(out: Path) -> GeneratedData:
    """Read back the files ``write_dataset`` produced."""
    population = [
        TxProfile(**{k: (int(v) if k == "device_id" else float(v)) for k, v in row.items()})
        for row in read_table(out / FILES["population"], POPULATION_COLUMNS).to_dict("records")
    ]
    return GeneratedData(
        train=FeatureDataset.from_frame(read_table(out / FILES["train"], DATASET_COLUMNS)),
        eval=FeatureDataset.from_frame(read_table(out / FILES["eval"], DATASET_COLUMNS)),
        population=population,
        manifest=read_table(out / FILES["manifest"], MANIFEST_COLUMNS),
        normalization=NormalizationParams.from_frame(
            read_table(out / FILES["normalization"], NORMALIZATION_COLUMNS)
        ),
    )


def write_training(model: MlpModel, report: TrainReport, out: Path) -> None:
    save_model(model, out / FILES["model"])
    frame = pd.DataFrame(
        {
            "epoch": np.arange(report.epochs),
            "loss": report.losses,
            "val_accuracy": report.val_accuracy,
        },
        columns=TRAIN_REPORT_COLUMNS,
    )
    write_table(frame, out / FILES["train_report"], TRAIN_REPORT_COLUMNS)


def write_evaluation(
    eval_set: FeatureDataset,
    predicted: np.ndarray,
    report: EvalReport,
    distances: Optional[PufDistanceReport],
    out: Path,
) -> None:
    write_table(predictions_frame(eval_set, predicted), out / FILES["predictions"], PREDICTION_COLUMNS)
    confusion = report.confusion_frame()
    write_table(confusion, out / FILES["confusion"], list(confusion.columns))
    write_table(eval_report_frame(report), out / FILES["eval_report"], EVAL_REPORT_COLUMNS)
    if distances is not None:
        write_table(distances.per_device, out / FILES["puf_devices"], DEVICE_COLUMNS)
        write_table(distances.per_pair, out / FILES["puf_pairs"], PAIR_COLUMNS)


def build_summary(
    cfg: ExperimentConfig,
    data: GeneratedData,
    train_report: TrainReport,
    report: EvalReport,
    distances: Optional[PufDistanceReport],
) -> Dict[str, Any]:
    """Deterministic run summary; ``summary_hash`` covers every other key."""
    n_features = len(feature_subset(cfg) or FEATURE_NAMES)
    count, guess = crp_count(n_features)
    summary: Dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "run_id": cfg.config_hash()[:12],
        "config_hash": cfg.config_hash(),
        "master_seed": cfg.master_seed,
        "seeds": {
            "population": derive_seed(cfg.master_seed, SeedNamespace.POPULATION),
            "model_init": derive_seed(cfg.master_seed, SeedNamespace.MODEL_INIT),
            "shuffle": derive_seed(cfg.master_seed, SeedNamespace.SHUFFLE),
            "preamble": derive_seed(cfg.master_seed, SeedNamespace.PREAMBLE),
        },
        "config": cfg.deterministic_dump(),
        "n_tx": data.n_classes,
        "n_train_frames": len(data.train),
        "n_eval_frames": len(data.eval),
        "ebn0_clamped_frames": data.clamped_frames,
        "degenerate_features": [
            name for name, flag in zip(data.normalization.feature_names, data.normalization.degenerate) if flag
        ],
        "final_train_loss": train_report.losses[-1] if train_report.losses else None,
        "p_false": report.p_false,
        "crp_count": str(count),
        "crp_guess_probability": guess,
    }
    if distances is not None:
        identifiable, margin = identifiability(distances)
        summary.update(
            {
                "inter_mode": distances.inter_mode,
                "d_intra_worst_ppm": distances.d_intra_worst_ppm,
                "d_inter_worst_ppm": distances.d_inter_worst_ppm,
                "identifiable": identifiable,
                "identifiability_margin_ppm": margin,
                "cfo_intra_worst_ppm": distances.cfo_intra_worst_ppm,
                "cfo_inter_worst_ppm": distances.cfo_inter_worst_ppm,
            }
        )
    payload = json.dumps(summary, sort_keys=True)
    summary["summary_hash"] = hashlib.sha256(payload.encode("utf-8")).hexdigest()
    return summary


def summary_text(summary: Dict[str, Any]) -> str:
    lines = [
        f"run {summary['run_id']}  (master_seed {summary['master_seed']})",
        f"devices          {summary['n_tx']}",
        f"frames           {summary['n_train_frames']} train / {summary['n_eval_frames']} eval",
        f"p_false          {summary['p_false']:.6f}",
    ]
    if "d_intra_worst_ppm" in summary:
        lines.extend(
            [
                f"D_intra worst    {summary['d_intra_worst_ppm']:.4f} ppm",
                f"D_inter worst    {summary['d_inter_worst_ppm']:.4f} ppm",
                f"identifiable     {summary['identifiable']} "
                f"(margin {summary['identifiability_margin_ppm']:.4f} ppm)",
                f"CFO intra/inter  {summary['cfo_intra_worst_ppm']:.4f} / "
                f"{summary['cfo_inter_worst_ppm']:.4f} ppm of carrier",
            ]
        )
    crp_bits = int(summary["crp_count"]).bit_length() - 1
    lines.append(f"CRPs             2^{crp_bits} (guess probability {summary['crp_guess_probability']})")
    lines.append(f"summary hash     {summary['summary_hash']}")
    return "\n".join(lines) + "\n"


def write_summary(summary: Dict[str, Any], timings: Dict[str, float], out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / FILES["summary"]).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / FILES["summary_text"]).write_text(summary_text(summary), encoding="utf-8")
    (out / FILES["timing"]).write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- drivers -------------------------------------------------------------------


def evaluate_stage(
    cfg: ExperimentConfig, data: GeneratedData, model: MlpModel
) -> Tuple[np.ndarray, EvalReport]:
    x_eval = normalize_matrix(data.eval.features, data.normalization)
    predicted = np.asarray(predict(model, x_eval))
    return predicted, report_from_predictions(data.eval.device_ids, predicted, n_classes=data.n_classes)


def run_experiment(
    cfg: ExperimentConfig,
    data: Optional[GeneratedData] = None,
    ledger: Optional[RunLedger] = None,
    write: bool = True,
    population: Optional[List[TxProfile]] = None,
) -> RunResult:
    """generate -> train -> evaluate -> metrics -> write.

    Failures surface as ``PipelineError`` carrying the stage name.
    """
    with run_context(run_id=cfg.config_hash()[:12]):
        return _run_stages(cfg, data, ledger, write, population)


def _run_stages(
    cfg: ExperimentConfig,
    data: Optional[GeneratedData],
    ledger: Optional[RunLedger],
    write: bool,
    population: Optional[List[TxProfile]],
) -> RunResult:
    timings: Dict[str, float] = {}
    out = cfg.output_dir if write else None

    if data is None:
        with _stage("generate", timings):
            data = generate_dataset(cfg, population=population)
    with _stage("train", timings):
        model, train_report = train_stage(cfg, data)
    with _stage("evaluate", timings):
        predicted, report = evaluate_stage(cfg, data, model)
    with _stage("metrics", timings):
        distances = metrics_stage(cfg, data.eval)
        summary = build_summary(cfg, data, train_report, report, distances)

    if out is not None:
        with _stage("write", timings):
            write_dataset(data, out)
            write_training(model, train_report, out)
            write_evaluation(data.eval, predicted, report, distances, out)
            write_summary(summary, timings, out)

    logger.info(
        "run_complete",
        p_false=report.p_false,
        d_intra_worst_ppm=summary.get("d_intra_worst_ppm"),
        d_inter_worst_ppm=summary.get("d_inter_worst_ppm"),
        train_seconds=train_report.wall_seconds,
    )
    if ledger is not None:
        ledger.record_run(run_record(cfg, summary, train_report, out))
    return RunResult(
        config=cfg,
        data=data,
        model=model,
        train_report=train_report,
        eval_report=report,
        distances=distances,
        summary=summary,
        output_dir=out,
        timings=timings,
    )


def run_record(
    cfg: ExperimentConfig,
    summary: Dict[str, Any],
    train_report: TrainReport,
    out: Optional[Path],
    command: str = "run",
) -> RunRecord:
    return RunRecord(
        run_id=summary["run_id"],
        command=command,
        config_hash=summary["config_hash"],
        summary_hash=summary["summary_hash"],
        master_seed=cfg.master_seed,
        n_tx=summary["n_tx"],
        hidden_sizes=",".join(str(w) for w in cfg.training.hidden_sizes),
        rrc_ablation=cfg.rrc_ablation,
        p_false=summary["p_false"],
        d_intra_worst_ppm=summary.get("d_intra_worst_ppm"),
        d_inter_worst_ppm=summary.get("d_inter_worst_ppm"),
        identifiable=summary.get("identifiable"),
        train_seconds=train_report.wall_seconds,
        output_dir=str(out) if out is not None else "",
    )


def _point_dir(base: Path, variable: str, value: Any) -> Path:
    label = str(value).lower() if isinstance(value, bool) else str(value)
    return base / f"{variable}={label}"


def run_sweep(spec: SweepSpec, ledger: Optional[RunLedger] = None) -> pd.DataFrame:
    """One ``run_experiment`` per value; failures become rows with an ``error``.

    ``hidden_width`` reuses one generated dataset for every point; the other
    variables (except ``n_tx``) reuse the sampled population.
    """
    base = spec.base
    shared_population = sample_run_population(base) if spec.variable != "n_tx" else None
    shared_data: Optional[GeneratedData] = None
    sweep_id = f"{base.config_hash()[:12]}-{spec.variable}"
    rows: List[Dict[str, Any]] = []

    for value in spec.values:
        row: Dict[str, Any] = {"variable": spec.variable, "value": value}
        try:
            cfg = spec.config_for(value)
            cfg = cfg.with_overrides(output_dir=_point_dir(base.output_dir, spec.variable, value))
            if spec.variable == "hidden_width" and shared_data is None:
                with _stage("generate"):
                    shared_data = generate_dataset(cfg, population=shared_population)
            result = run_experiment(
                cfg,
                data=shared_data if spec.variable == "hidden_width" else None,
                population=shared_population,
            )
            row.update(
                p_false=result.p_false,
                d_intra_worst=result.summary.get("d_intra_worst_ppm", math.nan),
                d_inter_worst=result.summary.get("d_inter_worst_ppm", math.nan),
                train_seconds=result.train_report.wall_seconds,
                error="",
            )
            run_id = result.summary["run_id"]
        except Exception as exc:
            logger.error("sweep_point_failed", variable=spec.variable, value=value, error=str(exc))
            row.update(p_false=math.nan, d_intra_worst=math.nan, d_inter_worst=math.nan, train_seconds=math.nan, error=str(exc))
            run_id = None
        rows.append(row)
        if ledger is not None:
            ledger.record_sweep_point(
                SweepPointRecord(
                    sweep_id=sweep_id,
                    variable=spec.variable,
                    value=str(value),
                    run_id=run_id,
                    p_false=None if math.isnan(row["p_false"]) else row["p_false"],
                    error=row["error"] or None,
                )
            )

    frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    write_table(frame, base.output_dir / FILES["sweep"], SWEEP_COLUMNS)
    logger.info("sweep_complete", variable=spec.variable, points=len(rows), failures=int((frame["error"] != "").sum()))
    return frame


def recompute_report(out: Path, cfg: ExperimentConfig) -> Tuple[EvalReport, Optional[PufDistanceReport]]:
    """Rebuild the evaluation and distance reports from a run directory's CSVs."""
    eval_set = FeatureDataset.from_frame(read_table(out / FILES["eval"], DATASET_COLUMNS))
    predictions = read_table(out / FILES["predictions"], PREDICTION_COLUMNS)
    n_classes = None
    population_path = out / FILES["population"]
    if population_path.exists():
        n_classes = len(read_table(population_path, POPULATION_COLUMNS))
    report = report_from_predictions(
        predictions["device_id"].to_numpy(), predictions["predicted"].to_numpy(), n_classes
    )
    distances = metrics_stage(cfg, eval_set) if _min_frames(eval_set) >= 2 else None
    return report, distances


def _min_frames(dataset: FeatureDataset) -> int:
    counts = np.bincount(dataset.device_ids) if len(dataset) else np.array([0])
    return int(counts[counts > 0].min()) if np.any(counts > 0) else 0


def evaluate_saved_model(cfg: ExperimentConfig, out: Path) -> Tuple[EvalReport, Optional[PufDistanceReport]]:
    """``eval`` subcommand body: score the stored model on the stored eval set."""
    data = load_dataset(out)
    model = load_model(out / FILES["model"])
    with _stage("evaluate"):
        predicted, report = evaluate_stage(cfg, data, model)
    with _stage("metrics"):
        distances = metrics_stage(cfg, data.eval)
    with _stage("write"):
        write_evaluation(data.eval, predicted, report, distances, out)
    return report, distances


def train_saved_dataset(cfg: ExperimentConfig, out: Path) -> TrainReport:
    """``train`` subcommand body: fit a model on the stored training set."""
    data = load_dataset(out)
    with _stage("train"):
        model, report = train_stage(cfg, data)
    with _stage("write"):
        write_training(model, report, out)
    return report


__all__ = [
    "FILES",
    "GeneratedData",
    "RunResult",
    "SweepSpec",
    "generate_dataset",
    "run_experiment",
    "run_sweep",
]
