"""Tests for the receiver chain."""

import numpy as np
import pytest

from rfpuf.channel import ChannelState, apply_channel
from rfpuf.rxchain import (
    agc,
    bit_error_rate,
    cfo_resolution_hz,
    correct_cfo,
    demodulate,
    estimate_cfo,
    estimate_noise_variance,
    level_control,
    matched_filter,
    receive,
    recover_symbols,
    refine_cfo,
    slice_symbols,
)
from rfpuf.txmodel import (
    RrcParams,
    TxProfile,
    constellation,
    generate_prbs,
    map_bits_to_symbols,
    pulse_shape,
    transmit,
)


def _symbols(n, seed=4):
    return map_bits_to_symbols(generate_prbs(4 * n, seed=seed))


def test_cfo_resolution_at_defaults():
    """Test one bin is fs / (8 * fft) in offset terms."""
    assert cfo_resolution_hz(8e6, 4096) == pytest.approx(244.140625)


class TestBlocks:
    """Tests for the individual receiver blocks."""

    def test_agc_hits_target(self):
        """Test AGC output power and reported gain."""
        frame = pulse_shape(_symbols(256), RrcParams())
        scaled = frame.with_samples(frame.samples * 0.1)
        out, gain_db = agc(scaled, target_power=1.0 / 8)
        assert out.mean_power == pytest.approx(1.0 / 8)
        assert gain_db == pytest.approx(10 * np.log10((1.0 / 8) / scaled.mean_power))

    def test_agc_rejects_silence(self):
        """Test an all-zero frame cannot be levelled."""
        frame = pulse_shape(_symbols(16), RrcParams())
        with pytest.raises(ValueError):
            agc(frame.with_samples(np.zeros(len(frame))), 1.0)

    def test_matched_filter_oversampling_mismatch(self):
        """Test filtering with the wrong oversampling raises."""
        frame = pulse_shape(_symbols(16), RrcParams(oversampling=8))
        with pytest.raises(ValueError):
            matched_filter(frame, RrcParams(oversampling=4))

    def test_loopback_recovers_symbols(self):
        """Test shaping plus matched filtering reproduces the symbols."""
        p = RrcParams(span_symbols=128, oversampling=8)
        sent = _symbols(512)
        received = recover_symbols(matched_filter(pulse_shape(sent, p), p), p)
        assert received.size == 512 - 128
        rms = np.sqrt(np.mean(np.abs(received - sent[64:-64]) ** 2))
        assert rms < 5.1e-4

    def test_short_frame_rejected(self):
        """Test a frame shorter than the filter span raises."""
        p = RrcParams(span_symbols=10)
        with pytest.raises(ValueError):
            recover_symbols(matched_filter(pulse_shape(_symbols(8), p), p), p)

    def test_correct_cfo_undoes_rotation(self):
        """Test correction with the true offset restores the frame."""
        frame = pulse_shape(_symbols(128), RrcParams())
        rotated = correct_cfo(frame, -5e3)
        assert np.allclose(correct_cfo(rotated, 5e3).samples, frame.samples)

    @pytest.mark.parametrize("offset_hz", [30e3, -45e3, 0.0])
    def test_estimate_cfo(self, offset_hz):
        """Test the 4th-power estimate lands within one bin of the truth."""
        p = RrcParams()
        frame = pulse_shape(_symbols(1024), p)
        rotated = correct_cfo(frame, -offset_hz)
        estimate = estimate_cfo(matched_filter(rotated, p), 4096)
        assert abs(estimate - offset_hz) < cfo_resolution_hz(frame.sample_rate_hz, 4096)

    def test_estimate_cfo_needs_one_segment(self):
        """Test frames shorter than the segment raise."""
        frame = pulse_shape(_symbols(16), RrcParams())
        with pytest.raises(ValueError):
            estimate_cfo(frame, 4096)


class TestDecisions:
    """Tests for slicing, demodulation and decision-directed loops."""

    def test_demodulate_ideal_points(self):
        """Test hard decisions invert the Gray mapping."""
        bits = generate_prbs(4 * 300, seed=8)
        assert np.array_equal(demodulate(map_bits_to_symbols(bits)).bits, bits.bits)

    def test_demodulate_with_small_noise(self):
        """Test decisions tolerate perturbations inside the decision region."""
        bits = generate_prbs(4 * 300, seed=8)
        rng = np.random.default_rng(0)
        noisy = map_bits_to_symbols(bits) + 0.05 * (rng.uniform(-1, 1, 300) + 1j * rng.uniform(-1, 1, 300))
        assert bit_error_rate(bits, demodulate(noisy)) == 0.0

    def test_slice_outer_points(self):
        """Test far-out samples slice to the corner points."""
        points = constellation()
        corner = points[np.argmax(points.real + points.imag)]
        assert slice_symbols(np.array([10 + 10j]))[0] == pytest.approx(corner)

    def test_level_control_restores_amplitude(self):
        """Test a 0.9 amplitude loss is undone and reported."""
        ideal = _symbols(400)
        fixed, gain_db = level_control(0.9 * ideal)
        assert np.allclose(fixed, ideal)
        assert gain_db == pytest.approx(-20 * np.log10(0.9))

    def test_refine_cfo_removes_ramp(self):
        """Test a small residual offset is measured and removed exactly."""
        ideal = _symbols(1000)
        position = 10 + np.arange(ideal.size)
        rotated = ideal * np.exp(1j * 2 * np.pi * 20.0 * position / 1e6)
        fixed, offset = refine_cfo(rotated, 1e6, first_index=10, max_offset_hz=244.0)
        assert offset == pytest.approx(20.0, abs=1e-6)
        assert np.allclose(fixed, ideal)

    def test_refine_cfo_is_bounded(self):
        """Test the correction never exceeds its bound."""
        ideal = _symbols(1000)
        position = np.arange(ideal.size)
        rotated = ideal * np.exp(1j * 2 * np.pi * 20.0 * position / 1e6)
        _, offset = refine_cfo(rotated, 1e6, first_index=0, max_offset_hz=5.0)
        assert offset == pytest.approx(5.0)

    def test_noise_variance_of_ideal_points(self):
        """Test ideal symbols have zero residual."""
        assert estimate_noise_variance(constellation()) == pytest.approx(0.0)


def test_bit_error_rate_alignment():
    """Test BER alignment and the overrun check."""
    sent = generate_prbs(400, seed=3)
    tail = demodulate(map_bits_to_symbols(sent.bits[40:]))
    assert bit_error_rate(sent, tail, offset_symbols=10) == 0.0
    with pytest.raises(ValueError):
        bit_error_rate(sent, tail, offset_symbols=20)


class TestReceive:
    """End-to-end tests for receive."""

    P = RrcParams()

    def _burst(self, cfo_hz=30e3, ebn0_db=20.0, awgn=True, n_symbols=1024):
        burst = transmit(TxProfile(device_id=0, cfo_hz=cfo_hz), n_symbols, prbs_seed=17, p=self.P)
        state = ChannelState(ebn0_db=ebn0_db, attenuation_db=3.0, doppler_hz=0.0, awgn_enabled=awgn)
        return burst, apply_channel(burst.frame, state, seed=5)

    def test_noise_free_frame_decodes(self):
        """Test an offset device decodes without errors and its CFO is recovered."""
        burst, frame = self._burst(awgn=False)
        rx = receive(frame, self.P)
        assert rx.symbols.size == 1024 - 10
        assert abs(rx.cfo_estimate_hz - 30e3) < 100.0
        assert bit_error_rate(burst.bits, demodulate(rx.symbols), offset_symbols=5) == 0.0

    def test_noisy_frame(self):
        """Test a 20 dB frame decodes with a small error rate."""
        burst, frame = self._burst(ebn0_db=20.0)
        rx = receive(frame, self.P)
        assert bit_error_rate(burst.bits, demodulate(rx.symbols), offset_symbols=5) < 1e-3
        assert abs(rx.coarse_cfo_hz - 30e3) < cfo_resolution_hz(frame.sample_rate_hz)

    def test_noise_estimate_tracks_snr(self):
        """Test the residual grows as Eb/N0 falls."""
        _, clean = self._burst(ebn0_db=25.0)
        _, noisy = self._burst(ebn0_db=12.0)
        assert receive(noisy, self.P).noise_var_estimate > receive(clean, self.P).noise_var_estimate

    def test_ablation_degrades_symbols(self):
        """Test bypassing the matched filter leaves more residual."""
        _, frame = self._burst(awgn=False)
        filtered = receive(frame, self.P)
        ablated = receive(frame, self.P, rrc_ablation=True)
        assert ablated.noise_var_estimate > filtered.noise_var_estimate

    def test_short_frame_uses_smaller_segment(self):
        """Test frames shorter than the FFT still get an estimate."""
        _, frame = self._burst(awgn=False, n_symbols=128)
        rx = receive(frame, self.P)
        assert rx.symbols.size == 118
        assert abs(rx.cfo_estimate_hz - 30e3) < cfo_resolution_hz(frame.sample_rate_hz, 1024)


def test_long_loopback_is_error_free():
    """Test 10^5 noiseless symbols through the default filters decode without error."""
    p = RrcParams()
    bits = generate_prbs(4 * 100_000, seed=31)
    frame = pulse_shape(map_bits_to_symbols(bits), p)
    symbols = recover_symbols(matched_filter(frame, p), p)
    assert bit_error_rate(bits, demodulate(symbols), offset_symbols=p.span_symbols // 2) == 0.0


def test_cfo_accuracy_over_random_offsets():
    """Test offsets within +/-60 kHz are recovered to 100 Hz at 20 dB over 100 trials."""
    p = RrcParams()
    rng = np.random.default_rng(2024)
    errors = []
    for trial in range(100):
        offset = float(rng.uniform(-60e3, 60e3))
        burst = transmit(TxProfile(device_id=0, cfo_hz=offset), 1024, prbs_seed=1000 + trial, p=p)
        state = ChannelState(ebn0_db=20.0, attenuation_db=0.0, doppler_hz=0.0)
        rx = receive(apply_channel(burst.frame, state, seed=trial), p)
        errors.append(abs(rx.cfo_estimate_hz - offset))
    assert max(errors) < 100.0
