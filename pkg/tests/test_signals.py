"""Signal synthesis, framing and WAV round trips."""

import math

import numpy as np
import pytest

from apfalign.signals import (ParameterError, Signal, WavFormatError, frame,
                              generate_log_sweep, generate_multitone,
                              generate_noise_bursts, generate_pluck, read_wav,
                              write_wav)


def analytic_sweep_phase(t, f1, f2, duration):
    rate_const = duration / math.log(f2 / f1)
    return 2 * math.pi * f1 * rate_const * (np.exp(np.asarray(t) / rate_const) - 1)


class TestLogSweep:
    def test_paper_scale_sweep_length_and_start_frequency(self):
        sig = generate_log_sweep(20, 20000, 10, 192000, 1.0)
        assert len(sig) == 1_920_000
        # instantaneous frequency at t=0 from the first phase increment
        phase = np.unwrap(np.angle(
            np.exp(1j * analytic_sweep_phase(np.arange(64) / 192000,
                                             20, 20000, 10))))
        f0 = (phase[1] - phase[0]) * 192000 / (2 * math.pi)
        assert f0 == pytest.approx(20.0, rel=1e-3)
        assert np.max(np.abs(sig.samples)) <= 1.0

    def test_zero_amplitude_gives_silence(self):
        sig = generate_log_sweep(20, 20000, 0.25, 48000, 0.0)
        assert len(sig) == 12000
        assert np.all(sig.samples == 0.0)

    def test_geometric_midpoint_frequency(self):
        # oracle: central finite difference of the analytic phase at t=1 s
        sig = generate_log_sweep(100, 400, 2, 48000, 1.0)
        eps = 1e-6
        f_mid = (analytic_sweep_phase(1 + eps, 100, 400, 2)
                 - analytic_sweep_phase(1 - eps, 100, 400, 2)) / (2 * eps) / (2 * math.pi)
        assert f_mid == pytest.approx(200.0, rel=1e-2)
        # the synthesized samples follow the same phase law
        n = int(1.0 * 48000)
        expected = np.sin(analytic_sweep_phase(n / 48000, 100, 400, 2))
        assert sig.samples[n] == pytest.approx(expected, abs=1e-9)

    def test_amplitude_envelope_constant(self):
        sig = generate_log_sweep(50, 5000, 1.0, 48000, 0.7)
        batch = frame(sig, 2048)
        # every full window spanning >= one period peaks at the amplitude
        for win in batch.sequences[:-1]:
            assert np.max(np.abs(win)) == pytest.approx(0.7, rel=1e-2)

    def test_invalid_parameters_rejected(self):
        with pytest.raises(ParameterError):
            generate_log_sweep(400, 100, 1, 48000)
        with pytest.raises(ParameterError):
            generate_log_sweep(20, 30000, 1, 48000)
        with pytest.raises(ParameterError):
            generate_log_sweep(20, 2000, -1, 48000)

    def test_synthesis_is_finite(self):
        for gen in (generate_log_sweep(20, 20000, 0.1, 48000, 0.5),
                    generate_multitone([100, 500], 0.1, 48000),
                    generate_noise_bursts(3, 128, 64, 48000),
                    generate_pluck(110, 0.1, 48000)):
            assert np.all(np.isfinite(gen.samples))


class TestFrame:
    def test_exact_division(self):
        sig = Signal(np.arange(4096, dtype=float), 48000)
        batch = frame(sig, 2048)
        assert len(batch) == 2
        assert batch.pad_len == 0

    def test_padding_arithmetic(self):
        sig = Signal(np.arange(5000, dtype=float), 48000)
        batch = frame(sig, 2048)
        assert len(batch) == 3
        assert batch.pad_len == 1144
        assert np.all(batch.sequences[-1][-1144:] == 0.0)

    def test_degenerate_single_sample(self):
        batch = frame(Signal(np.array([0.5]), 48000), 2048)
        assert len(batch) == 1
        assert batch.pad_len == 2047

    def test_reconstruction_is_exact(self):
        rng = np.random.default_rng(0)
        for n in (1, 100, 2048, 5000, 6144):
            samples = rng.standard_normal(n)
            batch = frame(Signal(samples, 48000), 2048)
            assert np.array_equal(batch.reconstruct(), samples)

    def test_empty_signal_rejected(self):
        with pytest.raises(ParameterError):
            frame(Signal(np.array([]), 48000), 2048)

    def test_offsets_contiguous(self):
        batch = frame(Signal(np.zeros(9000), 48000), 2048)
        assert np.array_equal(batch.offsets, [0, 2048, 4096, 6144, 8192])


class TestWav:
    def test_float32_round_trip_identity(self, tmp_path):
        rng = np.random.default_rng(1)
        samples = rng.uniform(-1, 1, 1000).astype(np.float32).astype(np.float64)
        path = tmp_path / "f32.wav"
        write_wav(path, Signal(samples, 48000), bit_depth=32)
        back = read_wav(path)
        assert back.sample_rate == 48000
        assert np.array_equal(back.samples, samples)

    def test_16bit_quantization_bound(self, tmp_path):
        rng = np.random.default_rng(2)
        samples = rng.uniform(-1, 1, 1000)
        path = tmp_path / "i16.wav"
        write_wav(path, Signal(samples, 44100), bit_depth=16)
        back = read_wav(path)
        assert np.max(np.abs(back.samples - samples)) <= 2 ** -15

    def test_24bit_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        samples = rng.uniform(-1, 1, 777)
        path = tmp_path / "i24.wav"
        write_wav(path, Signal(samples, 96000), bit_depth=24)
        back = read_wav(path)
        assert np.max(np.abs(back.samples - samples)) <= 2 ** -23

    def test_stereo_keeps_left_channel_with_warning(self, tmp_path):
        import struct
        left = np.linspace(-0.5, 0.5, 64).astype("<f4")
        right = -left
        inter = np.empty(128, dtype="<f4")
        inter[0::2] = left
        inter[1::2] = right
        data = inter.tobytes()
        header = struct.pack("<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(data),
                             b"WAVE", b"fmt ", 16, 3, 2, 48000,
                             48000 * 8, 8, 32, b"data", len(data))
        path = tmp_path / "stereo.wav"
        path.write_bytes(header + data)
        with pytest.warns(UserWarning):
            sig = read_wav(path)
        assert np.array_equal(sig.samples, left.astype(np.float64))

    def test_corrupt_header_rejected(self, tmp_path):
        path = tmp_path / "bad.wav"
        path.write_bytes(b"not a wave file at all")
        with pytest.raises(WavFormatError):
            read_wav(path)

    def test_unsupported_codec_rejected(self, tmp_path):
        import struct
        data = b"\x00" * 16
        header = struct.pack("<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(data),
                             b"WAVE", b"fmt ", 16, 7, 1, 8000,  # mu-law
                             8000, 1, 8, b"data", len(data))
        path = tmp_path / "mulaw.wav"
        path.write_bytes(header + data)
        with pytest.raises(WavFormatError):
            read_wav(path)
