"""Mono signal container, test-signal synthesis, WAV I/O and framing.

All synthesis returns float64 samples in a nominal [-1, 1] range.  WAV
support covers 16/24-bit PCM and 32-bit IEEE float, mono preferred; the
first channel of a multichannel file is extracted with a warning.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np


class ParameterError(ValueError):
    """Invalid synthesis or framing parameters."""


class WavFormatError(IOError):
    """Unsupported or corrupt WAV data."""


@dataclass
class Signal:
    """A mono sample buffer plus its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ParameterError("Signal samples must be one-dimensional")
        if self.sample_rate <= 0:
            raise ParameterError("sample_rate must be positive")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def require_finite(self) -> "Signal":
        if not np.all(np.isfinite(self.samples)):
            raise ParameterError("signal contains NaN or Inf samples")
        return self


@dataclass
class SequenceBatch:
    """Contiguous non-overlapping windows of a source signal.

    The final partial window is zero-padded; ``pad_len`` records how many
    trailing zeros were added so the source can be reconstructed exactly.
    """

    sequences: np.ndarray          # shape (n_windows, seq_len)
    seq_len: int
    offsets: np.ndarray            # source sample index of each window start
    pad_len: int

    def __len__(self):
        return self.sequences.shape[0]

    def reconstruct(self) -> np.ndarray:
        flat = self.sequences.reshape(-1)
        if self.pad_len:
            flat = flat[:-self.pad_len]
        return flat.copy()


def generate_log_sweep(f1: float, f2: float, duration: float,
                       sample_rate: int, amplitude: float = 0.5) -> Signal:
    """Exponential (log-frequency) sine chirp from ``f1`` to ``f2``.

    x(t) = A*sin(2*pi*f1*L*(exp(t/L) - 1)) with L = duration/ln(f2/f1);
    the instantaneous frequency is f1 at t=0 and f2 at t=duration.
    """
    if not (0.0 < f1 < f2):
        raise ParameterError(f"need 0 < f1 < f2, got f1={f1}, f2={f2}")
    if f2 >= sample_rate / 2.0:
        raise ParameterError(
            f"f2={f2} Hz violates the Nyquist limit at {sample_rate} Hz")
    if duration <= 0.0:
        raise ParameterError("duration must be positive")
    n = int(round(duration * sample_rate))
    t = np.arange(n, dtype=np.float64) / sample_rate
    rate_const = duration / math.log(f2 / f1)
    phase = 2.0 * math.pi * f1 * rate_const * (np.exp(t / rate_const) - 1.0)
    return Signal(amplitude * np.sin(phase), sample_rate).require_finite()


def generate_multitone(freqs, duration: float, sample_rate: int,
                       amplitude: float = 0.5, seed: int = 0) -> Signal:
    """Sum of sinusoids with seeded random phases, peak-normalized."""
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n, dtype=np.float64) / sample_rate
    out = np.zeros(n)
    for f in freqs:
        if f >= sample_rate / 2.0:
            raise ParameterError(f"tone {f} Hz violates the Nyquist limit")
        out += np.sin(2.0 * math.pi * f * t + rng.uniform(0.0, 2.0 * math.pi))
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= amplitude / peak
    return Signal(out, sample_rate).require_finite()


def generate_noise_bursts(n_bursts: int, burst_len: int, gap_len: int,
                          sample_rate: int, amplitude: float = 0.5,
                          seed: int = 0) -> Signal:
    """Hann-windowed white-noise bursts separated by silence."""
    rng = np.random.default_rng(seed)
    window = np.hanning(burst_len)
    parts = []
    for _ in range(n_bursts):
        parts.append(rng.standard_normal(burst_len) * window)
        parts.append(np.zeros(gap_len))
    out = np.concatenate(parts)
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= amplitude / peak
    return Signal(out, sample_rate).require_finite()


def generate_pluck(f0: float, duration: float, sample_rate: int,
                   amplitude: float = 0.5, decay: float = 0.996,
                   seed: int = 0) -> Signal:
    """Karplus-Strong style plucked string (noise-loaded averaged delay line)."""
    if f0 <= 0:
        raise ParameterError("f0 must be positive")
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    delay = max(2, int(round(sample_rate / f0)))
    buf = rng.uniform(-1.0, 1.0, delay)
    out = np.empty(n)
    prev = buf[-1]
    pos = 0
    for i in range(n):
        cur = buf[pos]
        out[i] = cur
        buf[pos] = decay * 0.5 * (prev + cur)
        prev = cur
        pos += 1
        if pos == delay:
            pos = 0
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= amplitude / peak
    return Signal(out, sample_rate).require_finite()


def frame(signal: Signal, seq_len: int = 2048) -> SequenceBatch:
    """Partition a signal into fixed-length windows (last one zero-padded)."""
    if seq_len <= 0:
        raise ParameterError("seq_len must be positive")
    n = len(signal)
    if n == 0:
        raise ParameterError("cannot frame an empty signal")
    n_windows = -(-n // seq_len)
    pad_len = n_windows * seq_len - n
    padded = np.concatenate([signal.samples, np.zeros(pad_len)])
    sequences = padded.reshape(n_windows, seq_len)
    offsets = np.arange(n_windows, dtype=np.int64) * seq_len
    return SequenceBatch(sequences=sequences, seq_len=seq_len,
                         offsets=offsets, pad_len=pad_len)


# ---------------------------------------------------------------------------
# WAV (RIFF) read/write: PCM 16/24-bit and IEEE float 32-bit
# ---------------------------------------------------------------------------

_FORMAT_PCM = 1
_FORMAT_FLOAT = 3


def write_wav(path, signal: Signal, bit_depth: int = 32):
    """Write a mono WAV file (bit_depth 16/24 integer PCM or 32 float)."""
    samples = signal.samples
    if bit_depth == 32:
        fmt, data = _FORMAT_FLOAT, samples.astype("<f4").tobytes()
    elif bit_depth == 16:
        scaled = np.clip(np.round(samples * 32767.0), -32768, 32767)
        fmt, data = _FORMAT_PCM, scaled.astype("<i2").tobytes()
    elif bit_depth == 24:
        scaled = np.clip(np.round(samples * 8388607.0), -8388608, 8388607)
        ints = scaled.astype("<i4")
        raw = ints.view(np.uint8).reshape(-1, 4)[:, :3]
        fmt, data = _FORMAT_PCM, raw.tobytes()
    else:
        raise WavFormatError(f"unsupported bit depth: {bit_depth}")
    bytes_per = bit_depth // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(data), b"WAVE",
        b"fmt ", 16, fmt, 1, signal.sample_rate,
        signal.sample_rate * bytes_per, bytes_per, bit_depth,
        b"data", len(data))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data)


def read_wav(path) -> Signal:
    """Read a WAV file; multichannel input keeps channel 0 with a warning."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")
    fmt_chunk = None
    data_chunk = None
    pos = 12
    while pos + 8 <= len(blob):
        cid = blob[pos:pos + 4]
        (size,) = struct.unpack_from("<I", blob, pos + 4)
        body = blob[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            fmt_chunk = body
        elif cid == b"data":
            data_chunk = body
        pos += 8 + size + (size & 1)
    if fmt_chunk is None or data_chunk is None:
        raise WavFormatError(f"{path}: missing fmt or data chunk")
    if len(fmt_chunk) < 16:
        raise WavFormatError(f"{path}: truncated fmt chunk")
    audio_format, channels, rate, _, _, bits = struct.unpack_from(
        "<HHIIHH", fmt_chunk, 0)
    if audio_format == 0xFFFE and len(fmt_chunk) >= 40:  # WAVE_FORMAT_EXTENSIBLE
        (audio_format,) = struct.unpack_from("<H", fmt_chunk, 24)
    if channels < 1:
        raise WavFormatError(f"{path}: invalid channel count {channels}")
    if audio_format == _FORMAT_FLOAT and bits == 32:
        data = np.frombuffer(data_chunk, dtype="<f4").astype(np.float64)
    elif audio_format == _FORMAT_PCM and bits == 16:
        data = np.frombuffer(data_chunk, dtype="<i2").astype(np.float64) / 32767.0
    elif audio_format == _FORMAT_PCM and bits == 24:
        raw = np.frombuffer(data_chunk, dtype=np.uint8)
        raw = raw[:len(raw) - len(raw) % 3].reshape(-1, 3)
        ints = (raw[:, 0].astype(np.int32)
                | (raw[:, 1].astype(np.int32) << 8)
                | (raw[:, 2].astype(np.int32) << 16))
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        data = ints.astype(np.float64) / 8388607.0
    else:
        raise WavFormatError(
            f"{path}: unsupported codec (format={audio_format}, bits={bits})")
    if channels > 1:
        warnings.warn(f"{path}: {channels} channels, keeping channel 0 only")
        data = data[:len(data) - len(data) % channels]
        data = data.reshape(-1, channels)[:, 0].copy()
    return Signal(data, rate).require_finite()
