"""Receiver DSP: AGC, matched filter, carrier recovery and symbol recovery.

``receive`` chains the blocks the way the simulated receiver runs them::

    agc -> matched_filter -> estimate_cfo -> correct_cfo (pre-filter timeline)
        -> matched_filter -> recover_symbols -> refine_cfo -> level_control

Symbol timing is ideal: transmitter and receiver share the sample clock and
the filters record their group delay in ``IqFrame.group_delay``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import signal

from rfpuf.txmodel import (
    BITS_PER_SYMBOL,
    CONSTELLATION_SCALE,
    BitStream,
    IqFrame,
    RrcParams,
    phase_ramp,
    rrc_taps,
)
from rfpuf.utils.logging import get_logger

logger = get_logger(__name__)

DEFAULT_FFT_SIZE = 4096
FFT_ZERO_PAD = 2
CFO_POWER = 4

# bits for Gray level index 0..3 (levels -3, -1, +1, +3)
_LEVEL_BITS = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=np.uint8)


@dataclass(frozen=True, eq=False)
class RxOutput:
    """Receiver result for one frame.

    Attributes:
        symbols: Recovered symbol-rate sequence after carrier and level correction.
        cfo_estimate_hz: Total offset estimate (device CFO + Doppler), coarse + fine.
        agc_gain_db: Total gain applied (power AGC plus decision-directed level).
        noise_var_estimate: Mean squared distance to the nearest ideal point.
        coarse_cfo_hz: The periodogram estimate alone.
    """

    symbols: np.ndarray
    cfo_estimate_hz: float
    agc_gain_db: float
    noise_var_estimate: float
    coarse_cfo_hz: float = 0.0

    def __post_init__(self) -> None:
        if len(self.symbols) == 0:
            raise ValueError("RxOutput needs at least one symbol")
        if not math.isfinite(self.cfo_estimate_hz):
            raise ValueError(f"cfo_estimate_hz must be finite, got {self.cfo_estimate_hz}")


def agc(frame: IqFrame, target_power: float) -> Tuple[IqFrame, float]:
    """Scale ``frame`` to ``target_power`` mean power; returns the frame and gain in dB."""
    if target_power <= 0:
        raise ValueError(f"target_power must be positive, got {target_power}")
    power = frame.mean_power
    if not power > 0 or not math.isfinite(power):
        raise ValueError("AGC needs a frame with nonzero finite mean power")
    scale = math.sqrt(target_power / power)
    return frame.with_samples(frame.samples * scale), 10.0 * math.log10(target_power / power)


def matched_filter(frame: IqFrame, p: RrcParams) -> IqFrame:
    """Convolve with the unit-energy RRC; adds the filter delay to the frame's."""
    p = RrcParams.model_validate(p)
    if frame.oversampling != p.oversampling:
        raise ValueError(
            f"oversampling mismatch: frame {frame.oversampling}, filter {p.oversampling}"
        )
    filtered = np.convolve(frame.samples, rrc_taps(p))
    return frame.with_samples(
        filtered, group_delay=frame.group_delay + p.span_symbols * p.oversampling // 2
    )


def estimate_cfo(frame: IqFrame, fft_size: int = DEFAULT_FFT_SIZE) -> float:
    """Blind carrier offset estimate from the 4th-power spectrum.

    Raising 16-QAM to the 4th power leaves a spectral line at four times the
    offset. The line is located on a Welch periodogram (Hann, 50 % overlap,
    zero-padded) and refined by a parabola through the log power of the peak
    bin and its two neighbours. The result lies in ``[-fs/8, fs/8)``.
    """
    if fft_size < 4:
        raise ValueError(f"fft_size must be >= 4, got {fft_size}")
    if len(frame) < fft_size:
        raise ValueError(
            f"frame of {len(frame)} samples is shorter than one {fft_size}-point segment"
        )
    nfft = FFT_ZERO_PAD * fft_size
    freqs, power = signal.welch(
        frame.samples**CFO_POWER,
        fs=frame.sample_rate_hz,
        window="hann",
        nperseg=fft_size,
        noverlap=fft_size // 2,
        nfft=nfft,
        detrend=False,
        return_onesided=False,
    )
    peak = int(np.argmax(power))
    tiny = np.finfo(float).tiny
    left, centre, right = (
        10.0 * np.log10(max(power[(peak + offset) % nfft], tiny)) for offset in (-1, 0, 1)
    )
    curvature = left - 2.0 * centre + right
    delta = 0.5 * (left - right) / curvature if curvature < 0 else 0.0
    delta = float(np.clip(delta, -0.5, 0.5))

    bin_hz = frame.sample_rate_hz / nfft
    return float((freqs[peak] + delta * bin_hz) / CFO_POWER)


def cfo_resolution_hz(sample_rate_hz: float, fft_size: int = DEFAULT_FFT_SIZE) -> float:
    """Width of one periodogram bin, expressed as a carrier offset."""
    return sample_rate_hz / (FFT_ZERO_PAD * fft_size * CFO_POWER)


def correct_cfo(frame: IqFrame, offset_hz: float) -> IqFrame:
    """Multiply sample k by ``exp(-j 2 pi offset k / fs)``."""
    if offset_hz == 0.0:
        return frame
    return frame.with_samples(
        frame.samples * phase_ramp(len(frame), -offset_hz, frame.sample_rate_hz)
    )


def recover_symbols(frame: IqFrame, p: RrcParams) -> np.ndarray:
    """Sample at the symbol instants and drop ``span/2`` edge symbols on each side.

    A frame carrying n symbols yields ``n - span`` symbols; output symbol i is
    transmitted symbol ``i + span/2``.
    """
    p = RrcParams.model_validate(p)
    osr = frame.oversampling
    n_symbols = (len(frame) - 2 * frame.group_delay) // osr
    edge = p.span_symbols // 2
    if n_symbols - 2 * edge < 1:
        raise ValueError(
            f"frame too short: {n_symbols} symbols leave none after trimming {edge} per edge"
        )
    start = frame.group_delay + edge * osr
    return frame.samples[start : start + (n_symbols - 2 * edge) * osr : osr].copy()


def slice_symbols(symbols: np.ndarray) -> np.ndarray:
    """Nearest ideal 16-QAM point for each symbol (rails decided independently)."""
    return _level_value(np.real(symbols)) + 1j * _level_value(np.imag(symbols))


def _level_index(rail: np.ndarray) -> np.ndarray:
    scaled = np.asarray(rail, dtype=np.float64) / CONSTELLATION_SCALE
    return np.clip(np.floor((scaled + 4.0) / 2.0), 0, 3).astype(np.intp)


def _level_value(rail: np.ndarray) -> np.ndarray:
    return (2.0 * _level_index(rail) - 3.0) * CONSTELLATION_SCALE


def demodulate(symbols: np.ndarray) -> BitStream:
    """Minimum-distance hard decisions with inverse Gray mapping."""
    symbols = np.asarray(symbols, dtype=np.complex128)
    i_bits = _LEVEL_BITS[_level_index(symbols.real)]
    q_bits = _LEVEL_BITS[_level_index(symbols.imag)]
    bits = np.concatenate([i_bits, q_bits], axis=1).reshape(-1)
    return BitStream(bits=bits.astype(np.uint8), seed=None)


def refine_cfo(
    symbols: np.ndarray,
    symbol_rate_hz: float,
    first_index: int,
    max_offset_hz: float,
) -> Tuple[np.ndarray, float]:
    """Remove a residual frequency ramp by decision-directed phase regression.

    Fits per-symbol phase error against the symbol's position on the frame
    timeline (``first_index + i``) by least squares weighted with decision
    energy, and removes the slope only; the intercept is left in place.
    The correction is clipped to ``+/- max_offset_hz``.
    """
    symbols = np.asarray(symbols, dtype=np.complex128)
    if symbols.size < 2:
        return symbols, 0.0
    decisions = slice_symbols(symbols)
    weights = np.abs(decisions) ** 2
    error = np.angle(symbols * np.conj(decisions))
    position = first_index + np.arange(symbols.size, dtype=np.float64)

    mean_pos = np.sum(weights * position) / np.sum(weights)
    mean_err = np.sum(weights * error) / np.sum(weights)
    centred = position - mean_pos
    slope = np.sum(weights * centred * (error - mean_err)) / np.sum(weights * centred**2)

    offset_hz = float(np.clip(slope * symbol_rate_hz / (2.0 * np.pi), -max_offset_hz, max_offset_hz))
    slope = 2.0 * np.pi * offset_hz / symbol_rate_hz
    return symbols * np.exp(-1j * slope * position), offset_hz


def level_control(symbols: np.ndarray) -> Tuple[np.ndarray, float]:
    """Least-squares amplitude correction against hard decisions.

    Returns the rescaled symbols and the applied gain in dB. A non-positive
    fit (decisions unrelated to the data) leaves the symbols untouched.
    """
    symbols = np.asarray(symbols, dtype=np.complex128)
    decisions = slice_symbols(symbols)
    fit = float(np.sum(np.real(symbols * np.conj(decisions))) / np.sum(np.abs(decisions) ** 2))
    if not fit > 0 or not math.isfinite(fit):
        logger.warning("level_control_skipped", fit=fit)
        return symbols, 0.0
    return symbols / fit, -20.0 * math.log10(fit)


def estimate_noise_variance(symbols: np.ndarray) -> float:
    """Mean squared distance from each symbol to its nearest ideal point."""
    symbols = np.asarray(symbols, dtype=np.complex128)
    return float(np.mean(np.abs(symbols - slice_symbols(symbols)) ** 2))


def receive(
    frame: IqFrame,
    p: RrcParams,
    fft_size: int = DEFAULT_FFT_SIZE,
    rrc_ablation: bool = False,
    fine_cfo: bool = True,
) -> RxOutput:
    """Run the full receive chain on one frame.

    With ``rrc_ablation`` the matched filter is bypassed: the unfiltered stream
    is decimated at the symbol instants and divided by the transmit pulse's
    peak tap.
    """
    p = RrcParams.model_validate(p)
    levelled, gain_db = agc(frame, target_power=1.0 / frame.oversampling)

    estimation_input = levelled if rrc_ablation else matched_filter(levelled, p)
    segment = fft_size
    if len(estimation_input) < segment:
        segment = 1 << (len(estimation_input).bit_length() - 1)
    coarse_hz = estimate_cfo(estimation_input, segment)
    corrected = correct_cfo(levelled, coarse_hz)

    if rrc_ablation:
        peak_tap = float(np.max(rrc_taps(p)))
        symbols = recover_symbols(corrected, p) / peak_tap
    else:
        symbols = recover_symbols(matched_filter(corrected, p), p)

    fine_hz = 0.0
    if fine_cfo:
        symbols, fine_hz = refine_cfo(
            symbols,
            frame.symbol_rate_hz,
            first_index=p.span_symbols,
            max_offset_hz=cfo_resolution_hz(frame.sample_rate_hz, segment),
        )
    symbols, level_db = level_control(symbols)

    return RxOutput(
        symbols=symbols,
        cfo_estimate_hz=coarse_hz + fine_hz,
        agc_gain_db=gain_db + level_db,
        noise_var_estimate=estimate_noise_variance(symbols),
        coarse_cfo_hz=coarse_hz,
    )


def bit_error_rate(sent: BitStream, received: BitStream, offset_symbols: int = 0) -> float:
    """Fraction of differing bits, with ``received`` aligned ``offset_symbols`` into ``sent``."""
    start = offset_symbols * BITS_PER_SYMBOL
    reference = sent.bits[start : start + len(received)]
    if reference.size != len(received):
        raise ValueError("received stream extends past the transmitted one")
    return float(np.mean(reference != received.bits))
