"""Runtime settings and the experiment document.

``Settings`` holds process-level options from the environment (or ``.env``).
``ExperimentConfig`` is the TOML experiment document; every section is a
pydantic model, so a bad value fails at load time with the offending field.
"""

from __future__ import annotations

import hashlib
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from rfpuf.ann import TrainConfig
from rfpuf.channel import ChannelConfig
from rfpuf.errors import ConfigurationError
from rfpuf.features import MIN_SYMBOLS, RingEstimator
from rfpuf.rxchain import DEFAULT_FFT_SIZE
from rfpuf.txmodel import DEFAULT_SYMBOL_RATE_HZ, RrcParams, VariationConfig

DEFAULT_CONFIG_PATH = Path("config/experiment.toml")


class Settings(BaseSettings):
    """Runtime configuration loaded from environment or `.env`."""

    model_config = SettingsConfigDict(
        env_file=(".env",),
        env_file_encoding="utf-8",
        extra="ignore",
    )

    log_level: str = Field(default="INFO", alias="RFPUF_LOG_LEVEL")
    json_logs: bool = Field(default=True, alias="RFPUF_JSON_LOGS")

    config_path: Optional[Path] = Field(default=None, alias="RFPUF_CONFIG")
    output_dir: Optional[Path] = Field(default=None, alias="RFPUF_OUTPUT_DIR")
    workers: Optional[int] = Field(default=None, alias="RFPUF_WORKERS", ge=1, le=64)

    # empty string disables the run ledger
    ledger_url: str = Field(
        default="sqlite:///./.tmp/ledger.db",
        alias="RFPUF_LEDGER_URL",
    )


@lru_cache(maxsize=1)
def load_settings() -> Settings:
    """Return cached Settings instance, raising a helpful message on failure."""
    try:
        return Settings()
    except ValidationError as exc:
        raise ConfigurationError(f"Invalid configuration: {exc}") from exc


class PopulationConfig(VariationConfig):
    """Population size plus its process-variation distribution."""

    n_tx: int = Field(default=50, ge=1)

    def variation(self) -> VariationConfig:
        return VariationConfig(**self.model_dump(exclude={"n_tx"}))


class FrameConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_symbols: int = Field(default=1024, ge=1)
    symbol_rate_hz: float = Field(default=DEFAULT_SYMBOL_RATE_HZ, gt=0)
    rrc: RrcParams = Field(default_factory=RrcParams)

    @model_validator(mode="after")
    def _long_enough(self) -> "FrameConfig":
        usable = self.n_symbols - self.rrc.span_symbols
        if usable < MIN_SYMBOLS:
            raise ValueError(
                f"n_symbols={self.n_symbols} leaves {usable} symbols after the filter span; "
                f"feature extraction needs {MIN_SYMBOLS}"
            )
        return self


class ReceiverConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    fft_size: int = Field(default=DEFAULT_FFT_SIZE, ge=16)
    fine_cfo: bool = True
    ring_estimator: RingEstimator = "coherent"

    @field_validator("fft_size")
    @classmethod
    def _power_of_two(cls, value: int) -> int:
        if value & (value - 1):
            raise ValueError(f"fft_size must be a power of two, got {value}")
        return value


class TrainingConfig(TrainConfig):
    """Optimizer settings plus the number of training streams per device."""

    frames_per_device_train: int = Field(default=20, ge=2)

    def optimizer(self, seed: int) -> TrainConfig:
        """The plain ``TrainConfig`` with the derived shuffle seed filled in."""
        fields = self.model_dump(exclude={"frames_per_device_train"})
        fields["seed"] = seed
        return TrainConfig(**fields)


class EvaluationConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    frames_per_device_eval: int = Field(default=10, ge=1)
    inter_mode: Literal["centroid", "single"] = "centroid"
    distance_features: Literal["all", "device", "cfo"] = "all"


class AcceptanceConfig(BaseModel):
    """Thresholds applied by ``--check``."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    max_p_false: float = Field(default=0.05, ge=0, le=1)
    require_identifiable: bool = False


class ExperimentConfig(BaseModel):
    """The whole experiment document."""

    model_config = ConfigDict(extra="forbid")

    master_seed: int = Field(default=20181, ge=0)
    rrc_ablation: bool = False
    challenge_mode: Literal["preamble_less", "preamble"] = "preamble_less"
    output_dir: Path = Path("runs/default")
    workers: int = Field(default=1, ge=1, le=64)

    population: PopulationConfig = Field(default_factory=PopulationConfig)
    channel: ChannelConfig = Field(default_factory=ChannelConfig)
    frame: FrameConfig = Field(default_factory=FrameConfig)
    receiver: ReceiverConfig = Field(default_factory=ReceiverConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    acceptance: AcceptanceConfig = Field(default_factory=AcceptanceConfig)

    def deterministic_dump(self) -> Dict[str, Any]:
        """Config echo without the fields that do not affect results."""
        return self.model_dump(mode="json", exclude={"output_dir", "workers"})

    def config_hash(self) -> str:
        payload = json.dumps(self.deterministic_dump(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def with_overrides(self, **dotted: Any) -> "ExperimentConfig":
        """Copy with ``section__field=value`` style overrides, revalidated."""
        document = self.model_dump()
        for key, value in dotted.items():
            _set_path(document, key.split("__"), value)
        return ExperimentConfig.model_validate(document)


def _set_path(document: Dict[str, Any], path: List[str], value: Any) -> None:
    node = document
    for part in path[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise KeyError(f"unknown config section {part!r}")
        node = node[part]
    if path[-1] not in node:
        raise KeyError(f"unknown config field {'.'.join(path)!r}")
    node[path[-1]] = value


def load_experiment_config(path: Optional[Path] = None) -> ExperimentConfig:
    """Parse and validate an experiment document; ``None`` gives the defaults.

    Raises:
        ConfigurationError: The file is missing, is not TOML, or fails validation.
    """
    if path is None:
        return ExperimentConfig()
    try:
        with path.open("rb") as handle:
            document = tomllib.load(handle)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"Experiment config not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"Experiment config {path} is not valid TOML: {exc}") from exc
    try:
        return ExperimentConfig.model_validate(document)
    except ValidationError as exc:
        raise ConfigurationError(f"Invalid experiment config {path}: {exc}") from exc


__all__ = [
    "AcceptanceConfig",
    "EvaluationConfig",
    "ExperimentConfig",
    "FrameConfig",
    "PopulationConfig",
    "ReceiverConfig",
    "Settings",
    "TrainingConfig",
    "load_experiment_config",
    "load_settings",
]
