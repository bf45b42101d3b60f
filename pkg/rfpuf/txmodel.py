"""Transmitter population and impaired 16-QAM burst synthesis.

Covers device creation (one ``TxProfile`` per simulated transmitter) and the
transmit half of a response evaluation: PRBS challenge -> Gray 16-QAM ->
root-raised-cosine shaping -> device impairments.

Impairments are applied in a fixed order that is part of the contract:
I/Q imbalance (with DC) -> Rapp AM/AM compression -> carrier offset rotation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from rfpuf.utils.logging import get_logger
from rfpuf.utils.seeding import item_rng

logger = get_logger(__name__)

BITS_PER_SYMBOL = 4
CONSTELLATION_SCALE = 1.0 / math.sqrt(10.0)
# Gray levels indexed by the 2-bit value (b_hi b_lo): 00->-3, 01->-1, 10->+3, 11->+1
GRAY_LEVELS = np.array([-3.0, -1.0, 3.0, 1.0])

PRBS_ORDER = 15
PRBS_PERIOD = (1 << PRBS_ORDER) - 1
PRBS_ZERO_STATE = 0x7FFF

DEFAULT_SYMBOL_RATE_HZ = 1.0e6
PA_SAT_FLOOR = 1e-3


class VariationConfig(BaseModel):
    """Process-variation distribution for a transmitter population."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    carrier_freq_hz: float = Field(default=2.412e9, gt=0)
    cfo_sigma_hz: float = Field(default=20.1e3, ge=0)
    gain_imbalance_sigma_db: float = Field(default=0.5, ge=0)
    phase_imbalance_sigma_deg: float = Field(default=1.0, ge=0)
    dc_offset_sigma: float = Field(default=0.01, ge=0)
    pa_sat_nominal: float = Field(default=2.0, gt=0)
    pa_sat_sigma: float = Field(default=0.1, ge=0)
    pa_smoothness: float = Field(default=2.0, gt=0)


class RrcParams(BaseModel):
    """Root-raised-cosine filter design."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    rolloff: float = Field(default=0.35, ge=0.0, le=1.0)
    span_symbols: int = Field(default=10, ge=4)
    oversampling: int = Field(default=8, ge=1)

    @field_validator("span_symbols")
    @classmethod
    def _span_even(cls, value: int) -> int:
        if value % 2:
            raise ValueError(f"span_symbols must be even, got {value}")
        return value


@dataclass(frozen=True)
class TxProfile:
    """One transmitter's impairment parameters (a PUF instance).

    Attributes:
        device_id: Integer label, 0..n-1 within a population.
        cfo_hz: Signed local-oscillator offset.
        gain_i: I-rail gain (linear).
        gain_q: Q-rail gain (linear).
        phase_imbalance_rad: Quadrature skew.
        dc_i: Additive DC on the I rail.
        dc_q: Additive DC on the Q rail.
        pa_sat: Saturation amplitude, relative to the unit-energy constellation.
        pa_smoothness: Rapp knee sharpness, copied from the population config.
    """

    device_id: int
    cfo_hz: float = 0.0
    gain_i: float = 1.0
    gain_q: float = 1.0
    phase_imbalance_rad: float = 0.0
    dc_i: float = 0.0
    dc_q: float = 0.0
    pa_sat: float = 2.0
    pa_smoothness: float = 2.0

    def __post_init__(self) -> None:
        if self.gain_i <= 0 or self.gain_q <= 0:
            raise ValueError(
                f"rail gains must be positive, got {self.gain_i}, {self.gain_q}"
            )
        if self.pa_sat <= 0:
            raise ValueError(f"pa_sat must be positive, got {self.pa_sat}")
        if self.pa_smoothness <= 0:
            raise ValueError(
                f"pa_smoothness must be positive, got {self.pa_smoothness}"
            )

    @classmethod
    def nominal(cls, device_id: int, cfg: VariationConfig) -> "TxProfile":
        """Impairment-free device for ``cfg``."""
        return cls(
            device_id=device_id,
            pa_sat=cfg.pa_sat_nominal,
            pa_smoothness=cfg.pa_smoothness,
        )


@dataclass(frozen=True, eq=False)
class BitStream:
    """A PRBS challenge: bits in transmission order and the seed that made them.

    Demodulated streams have no generating seed and carry ``seed=None``.
    """

    bits: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1 or bits.size % BITS_PER_SYMBOL:
            raise ValueError(
                f"bit count must be a multiple of {BITS_PER_SYMBOL}, got {bits.size}"
            )
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return int(self.bits.size)


@dataclass(frozen=True, eq=False)
class IqFrame:
    """Complex baseband samples plus the rate metadata needed downstream.

    ``group_delay`` is the accumulated filter delay in samples: the index of
    the first symbol's peak within ``samples``.
    """

    samples: np.ndarray
    sample_rate_hz: float
    symbol_rate_hz: float
    oversampling: int
    group_delay: int = 0

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("frame samples must be a nonempty 1-D sequence")
        if self.oversampling < 1:
            raise ValueError(f"oversampling must be >= 1, got {self.oversampling}")
        expected = self.oversampling * self.symbol_rate_hz
        if not math.isclose(self.sample_rate_hz, expected, rel_tol=1e-12):
            raise ValueError(
                "sample_rate_hz must equal oversampling * symbol_rate_hz "
                f"({self.sample_rate_hz} != {expected})"
            )
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))

    def with_samples(
        self, samples: np.ndarray, group_delay: Optional[int] = None
    ) -> "IqFrame":
        """Copy of this frame carrying new samples (and optionally a new delay)."""
        return replace(
            self,
            samples=samples,
            group_delay=self.group_delay if group_delay is None else group_delay,
        )


def hz_to_ppm(offset_hz: float, carrier_freq_hz: float) -> float:
    return offset_hz / carrier_freq_hz * 1e6


def ppm_to_hz(ppm: float, carrier_freq_hz: float) -> float:
    return ppm * carrier_freq_hz / 1e6


def sample_population(n: int, cfg: VariationConfig, seed: int) -> List[TxProfile]:
    """Draw ``n`` transmitters around the nominal design.

    Device ``k`` draws from its own generator keyed by ``(seed, k)``, so a
    population of size n is a prefix of any larger population with the same
    seed, and devices can be sampled in any order.
    """
    if n < 1:
        raise ValueError(f"population size must be >= 1, got {n}")
    cfg = VariationConfig.model_validate(cfg)
    return [_sample_device(device_id, cfg, seed) for device_id in range(n)]


def _sample_device(device_id: int, cfg: VariationConfig, seed: int) -> TxProfile:
    rng = item_rng(seed, device_id)
    cfo_hz = rng.normal(0.0, cfg.cfo_sigma_hz)
    gain_i_db = rng.normal(0.0, cfg.gain_imbalance_sigma_db)
    gain_q_db = rng.normal(0.0, cfg.gain_imbalance_sigma_db)
    phase_deg = rng.normal(0.0, cfg.phase_imbalance_sigma_deg)
    dc_i = rng.normal(0.0, cfg.dc_offset_sigma)
    dc_q = rng.normal(0.0, cfg.dc_offset_sigma)
    pa_sat = rng.normal(cfg.pa_sat_nominal, cfg.pa_sat_sigma)
    if pa_sat < PA_SAT_FLOOR:
        logger.warning("pa_sat_clamped", device_id=device_id, drawn=float(pa_sat))
        pa_sat = PA_SAT_FLOOR
    return TxProfile(
        device_id=device_id,
        cfo_hz=float(cfo_hz),
        gain_i=float(10.0 ** (gain_i_db / 20.0)),
        gain_q=float(10.0 ** (gain_q_db / 20.0)),
        phase_imbalance_rad=float(np.deg2rad(phase_deg)),
        dc_i=float(dc_i),
        dc_q=float(dc_q),
        pa_sat=float(pa_sat),
        pa_smoothness=cfg.pa_smoothness,
    )


def prbs_state(seed: int) -> int:
    """Initial PRBS register for ``seed``; seeds sharing it send identical bits."""
    return seed % (1 << PRBS_ORDER) or PRBS_ZERO_STATE


def generate_prbs(n_bits: int, seed: int) -> BitStream:
    """PRBS-15 (x^15 + x^14 + 1) bits, ``a[n] = a[n-14] ^ a[n-15]``.

    The first 15 output bits are the initial register, LSB first; the
    register is ``seed mod 2**15`` with a zero state remapped to 0x7FFF.
    """
    if n_bits < BITS_PER_SYMBOL or n_bits % BITS_PER_SYMBOL:
        raise ValueError(
            f"n_bits must be a positive multiple of {BITS_PER_SYMBOL}, got {n_bits}"
        )
    state = prbs_state(seed)

    total = max(n_bits, PRBS_ORDER)
    out = np.empty(total, dtype=np.uint8)
    out[:PRBS_ORDER] = (state >> np.arange(PRBS_ORDER)) & 1
    # 14 new bits depend only on bits at least 14 positions back
    for start in range(PRBS_ORDER, total, PRBS_ORDER - 1):
        stop = min(start + PRBS_ORDER - 1, total)
        out[start:stop] = out[start - 14 : stop - 14] ^ out[start - 15 : stop - 15]
    return BitStream(bits=out[:n_bits].copy(), seed=seed)


def map_bits_to_symbols(bits: Union[BitStream, Sequence[int], np.ndarray]) -> np.ndarray:
    """Gray-mapped 16-QAM with unit average energy.

    Each group ``b3 b2 b1 b0`` maps I from ``b3 b2`` and Q from ``b1 b0``.
    """
    raw = bits.bits if isinstance(bits, BitStream) else np.asarray(bits, dtype=np.uint8)
    if raw.ndim != 1 or raw.size % BITS_PER_SYMBOL:
        raise ValueError(
            f"bit count must be a multiple of {BITS_PER_SYMBOL}, got {raw.size}"
        )
    groups = raw.reshape(-1, BITS_PER_SYMBOL).astype(np.intp)
    i_level = GRAY_LEVELS[2 * groups[:, 0] + groups[:, 1]]
    q_level = GRAY_LEVELS[2 * groups[:, 2] + groups[:, 3]]
    return (i_level + 1j * q_level) * CONSTELLATION_SCALE


def constellation() -> np.ndarray:
    """The 16 ideal points, indexed by their 4-bit value."""
    table = (np.arange(16)[:, None] >> np.arange(3, -1, -1)) & 1
    return map_bits_to_symbols(table.reshape(-1))


def rrc_taps(p: RrcParams) -> np.ndarray:
    """Unit-energy root-raised-cosine impulse response, ``span * osr + 1`` taps."""
    p = RrcParams.model_validate(p)
    beta = p.rolloff
    n_taps = p.span_symbols * p.oversampling + 1
    t = (np.arange(n_taps) - (n_taps - 1) / 2) / p.oversampling

    h = np.empty(n_taps)
    at_zero = np.isclose(t, 0.0)
    if beta > 0:
        at_singularity = np.isclose(np.abs(t), 1.0 / (4.0 * beta))
    else:
        at_singularity = np.zeros(n_taps, dtype=bool)
    general = ~(at_zero | at_singularity)

    h[at_zero] = 1.0 - beta + 4.0 * beta / np.pi
    if beta > 0:
        h[at_singularity] = (beta / np.sqrt(2.0)) * (
            (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * beta))
            + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * beta))
        )
    tg = t[general]
    h[general] = (
        np.sin(np.pi * tg * (1.0 - beta))
        + 4.0 * beta * tg * np.cos(np.pi * tg * (1.0 + beta))
    ) / (np.pi * tg * (1.0 - (4.0 * beta * tg) ** 2))

    return h / np.sqrt(np.sum(h**2))


def pulse_shape(
    symbols: Sequence[complex],
    p: RrcParams,
    symbol_rate_hz: float = DEFAULT_SYMBOL_RATE_HZ,
) -> IqFrame:
    """Zero-insertion upsampling followed by RRC filtering.

    The output holds ``(n_symbols + span) * oversampling`` samples; symbol
    ``k`` peaks at sample ``group_delay + k * oversampling``.
    """
    p = RrcParams.model_validate(p)
    symbols = np.asarray(symbols, dtype=np.complex128)
    if symbols.ndim != 1 or symbols.size == 0:
        raise ValueError("pulse_shape needs a nonempty 1-D symbol sequence")

    osr = p.oversampling
    upsampled = np.zeros(symbols.size * osr, dtype=np.complex128)
    upsampled[::osr] = symbols
    samples = np.convolve(upsampled, rrc_taps(p))
    return IqFrame(
        samples=samples,
        sample_rate_hz=symbol_rate_hz * osr,
        symbol_rate_hz=symbol_rate_hz,
        oversampling=osr,
        group_delay=p.span_symbols * osr // 2,
    )


def phase_ramp(n_samples: int, offset_hz: float, sample_rate_hz: float) -> np.ndarray:
    """``exp(j 2 pi offset k / fs)`` for k = 0..n-1."""
    k = np.arange(n_samples)
    return np.exp(1j * 2.0 * np.pi * offset_hz * k / sample_rate_hz)


def rapp_gain(magnitude: np.ndarray, saturation: float, smoothness: float) -> np.ndarray:
    """Rapp AM/AM gain ``1 / (1 + (|v|/sat)^(2p))^(1/(2p))``."""
    two_p = 2.0 * smoothness
    ratio = np.asarray(magnitude, dtype=np.float64) / saturation
    return (1.0 + ratio**two_p) ** (-1.0 / two_p)


def apply_tx_impairments(frame: IqFrame, profile: TxProfile) -> IqFrame:
    """Apply the device's imbalance, PA compression and LO offset, in that order.

    ``pa_sat`` is relative to the unit-energy constellation; a unit-energy
    stream shaped by a unit-energy filter has per-sample RMS
    ``1/sqrt(oversampling)``, which sets the sample-domain saturation.
    """
    x = frame.samples
    i_rail = x.real
    q_rail = x.imag
    phi = profile.phase_imbalance_rad

    i_out = profile.gain_i * i_rail + profile.dc_i
    q_out = profile.gain_q * (q_rail * np.cos(phi) + i_rail * np.sin(phi)) + profile.dc_q
    v = i_out + 1j * q_out

    saturation = profile.pa_sat / math.sqrt(frame.oversampling)
    v = v * rapp_gain(np.abs(v), saturation, profile.pa_smoothness)

    if profile.cfo_hz != 0.0:
        v = v * phase_ramp(v.size, profile.cfo_hz, frame.sample_rate_hz)
    return frame.with_samples(v)


@dataclass
class TxBurst:
    """Everything the transmitter produced for one frame."""

    bits: BitStream
    symbols: np.ndarray
    frame: IqFrame
    profile: Optional[TxProfile] = field(default=None)


def transmit(
    profile: TxProfile,
    n_symbols: int,
    prbs_seed: int,
    p: RrcParams,
    symbol_rate_hz: float = DEFAULT_SYMBOL_RATE_HZ,
) -> TxBurst:
    """One evaluation of the device: PRBS -> 16-QAM -> RRC -> impairments."""
    bits = generate_prbs(n_symbols * BITS_PER_SYMBOL, prbs_seed)
    symbols = map_bits_to_symbols(bits)
    shaped = pulse_shape(symbols, p, symbol_rate_hz=symbol_rate_hz)
    return TxBurst(
        bits=bits,
        symbols=symbols,
        frame=apply_tx_impairments(shaped, profile),
        profile=profile,
    )
