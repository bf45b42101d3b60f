"""Propagation between a transmitter and the receiver.

Flat attenuation, a Doppler shift and AWGN at a per-frame Eb/N0. Each frame
draws its own ``ChannelState``; the state is recorded next to the frame so any
row of a dataset can be traced back to the conditions it was received under.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Dict

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from rfpuf.txmodel import BITS_PER_SYMBOL, IqFrame, phase_ramp

EBN0_FLOOR_DB = -5.0


class ChannelConfig(BaseModel):
    """Distribution of per-frame channel conditions."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    ebn0_mean_db: float = 20.0
    ebn0_sigma_db: float = Field(default=5.0, ge=0)
    attenuation_min_db: float = Field(default=0.0, ge=0)
    attenuation_max_db: float = Field(default=6.0, ge=0)
    doppler_max_hz: float = Field(default=200.0, ge=0)
    awgn_enabled: bool = True
    ebn0_floor_db: float = EBN0_FLOOR_DB

    @model_validator(mode="after")
    def _check_attenuation_range(self) -> "ChannelConfig":
        if self.attenuation_min_db > self.attenuation_max_db:
            raise ValueError(
                "attenuation_min_db must not exceed attenuation_max_db "
                f"({self.attenuation_min_db} > {self.attenuation_max_db})"
            )
        return self


@dataclass(frozen=True)
class ChannelState:
    """Realized conditions for one frame.

    Attributes:
        ebn0_db: Realized Eb/N0 after the floor clamp.
        attenuation_db: Realized flat loss.
        doppler_hz: Realized frequency shift.
        awgn_enabled: Whether ``apply_channel`` adds noise.
        ebn0_clamped: True when the raw draw fell below the floor.
    """

    ebn0_db: float
    attenuation_db: float
    doppler_hz: float
    awgn_enabled: bool = True
    ebn0_clamped: bool = False

    def __post_init__(self) -> None:
        for name in ("ebn0_db", "attenuation_db", "doppler_hz"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def sample_channel(cfg: ChannelConfig, seed: int) -> ChannelState:
    """Draw Eb/N0 (normal), attenuation (uniform) and Doppler (uniform), in that order."""
    cfg = ChannelConfig.model_validate(cfg)
    rng = np.random.default_rng(seed)
    ebn0_db = float(rng.normal(cfg.ebn0_mean_db, cfg.ebn0_sigma_db))
    attenuation_db = float(rng.uniform(cfg.attenuation_min_db, cfg.attenuation_max_db))
    doppler_hz = float(rng.uniform(-cfg.doppler_max_hz, cfg.doppler_max_hz))

    clamped = ebn0_db < cfg.ebn0_floor_db
    return ChannelState(
        ebn0_db=cfg.ebn0_floor_db if clamped else ebn0_db,
        attenuation_db=attenuation_db,
        doppler_hz=doppler_hz,
        awgn_enabled=cfg.awgn_enabled,
        ebn0_clamped=clamped,
    )


def noise_variance(signal_power: float, ebn0_db: float, oversampling: int) -> float:
    """Complex per-sample noise variance for a given Eb/N0.

    ``signal_power`` is the mean per-sample power of the frame the noise is
    added to; 16-QAM carries 4 bits per symbol.
    """
    return oversampling * signal_power / (BITS_PER_SYMBOL * 10.0 ** (ebn0_db / 10.0))


def apply_channel(frame: IqFrame, state: ChannelState, seed: int) -> IqFrame:
    """Attenuate, Doppler-shift and (optionally) add AWGN to ``frame``."""
    samples = frame.samples * 10.0 ** (-state.attenuation_db / 20.0)
    if state.doppler_hz != 0.0:
        samples = samples * phase_ramp(samples.size, state.doppler_hz, frame.sample_rate_hz)

    if state.awgn_enabled:
        power = float(np.mean(np.abs(samples) ** 2))
        sigma2 = noise_variance(power, state.ebn0_db, frame.oversampling)
        rng = np.random.default_rng(seed)
        rail_std = math.sqrt(sigma2 / 2.0)
        noise_i = rng.standard_normal(samples.size)
        noise_q = rng.standard_normal(samples.size)
        samples = samples + rail_std * (noise_i + 1j * noise_q)
    return frame.with_samples(samples)
