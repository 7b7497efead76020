"""Interference-sensitive STFT losses and the time-domain MSE loss.

The interference loss compares, cell by cell, the sum of two magnitude
spectrograms against the spectrogram of the summed signals.  With
``power=1`` the inner difference is nonnegative (triangle inequality) and
vanishes exactly where the two signals are phase-aligned, which makes the
loss blind to gain and sensitive purely to relative phase.  ``power=2``
(squared-magnitude spectrograms) is retained as a comparison variant; its
minimum sits at quadrature rather than alignment, so it is not the default.

Each loss exists as a plain numpy function and as a tape builder used by the
training loop; the numpy form doubles as an oracle for the graph form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


class LossError(ValueError):
    """Invalid loss configuration or operands."""


@dataclass(frozen=True)
class STFTConfig:
    """One analysis resolution: FFT size, hop and (centered) window length."""

    fft_size: int
    hop: int
    win_length: int
    window: str = "hann"
    power: int = 1

    def __post_init__(self):
        if self.hop <= 0:
            raise LossError("hop must be positive")
        if self.win_length > self.fft_size:
            raise LossError("win_length must not exceed fft_size")
        if self.power not in (1, 2):
            raise LossError("power must be 1 or 2")
        if self.window not in ("hann", "rect"):
            raise LossError(f"unknown window: {self.window}")

    def window_values(self):
        if self.window == "hann":
            return np.hanning(self.win_length)
        return np.ones(self.win_length)


def default_resolutions(power: int = 1):
    """The stock multi-resolution set: (512, 50, 240), (1024, 120, 600), (2048, 240, 1200)."""
    return (
        STFTConfig(512, 50, 240, power=power),
        STFTConfig(1024, 120, 600, power=power),
        STFTConfig(2048, 240, 1200, power=power),
    )


@dataclass(frozen=True)
class LossReport:
    """Scalar loss with per-resolution breakdown and batch size."""

    total: float
    per_resolution: tuple
    n_items: int


def _frame_indices(n: int, cfg: STFTConfig):
    if n < cfg.win_length:
        raise LossError(
            f"signal of {n} samples is shorter than one {cfg.win_length}-sample window")
    n_frames = 1 + (n - cfg.win_length) // cfg.hop
    starts = np.arange(n_frames) * cfg.hop
    return starts[:, None] + np.arange(cfg.win_length)[None, :]


def spectrogram(x, cfg: STFTConfig):
    """Magnitude (power=1) or squared-magnitude (power=2) STFT.

    Shape (frames, fft_size//2 + 1); frames = 1 + floor((len - win)/hop).
    Windows shorter than fft_size are zero-padded centered in the frame.
    """
    x = np.asarray(x, dtype=np.float64)
    idx = _frame_indices(x.shape[-1], cfg)
    frames = x[..., idx] * cfg.window_values()
    offset = (cfg.fft_size - cfg.win_length) // 2
    padded = np.zeros(frames.shape[:-1] + (cfg.fft_size,))
    padded[..., offset:offset + cfg.win_length] = frames
    mag = np.abs(np.fft.rfft(padded, axis=-1))
    return mag if cfg.power == 1 else mag * mag


def interference_stft_loss(y, y_hat, cfg: STFTConfig) -> float:
    """Mean over batch items and TF cells of ((S(y)+S(y_hat)) - S(y+y_hat))^2."""
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    y_hat = np.atleast_2d(np.asarray(y_hat, dtype=np.float64))
    if y.shape != y_hat.shape:
        raise LossError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    diff = (spectrogram(y, cfg) + spectrogram(y_hat, cfg)
            - spectrogram(y + y_hat, cfg))
    return float(np.mean(np.mean(diff * diff, axis=(1, 2))))


def mstft_loss(y, y_hat, resolutions=None) -> float:
    return mstft_report(y, y_hat, resolutions).total


def mstft_report(y, y_hat, resolutions=None) -> LossReport:
    """Mean over resolutions of the interference loss, with breakdown."""
    if resolutions is None:
        resolutions = default_resolutions()
    resolutions = tuple(resolutions)
    if not resolutions:
        raise LossError("at least one STFT resolution is required")
    per = tuple(interference_stft_loss(y, y_hat, cfg) for cfg in resolutions)
    n_items = np.atleast_2d(np.asarray(y)).shape[0]
    return LossReport(total=float(np.mean(per)), per_resolution=per,
                      n_items=n_items)


def mse_time_loss(y, y_hat) -> float:
    """Mean squared sample difference."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise LossError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    d = y - y_hat
    return float(np.mean(d * d))


# ---------------------------------------------------------------------------
# Tape builders.  Predictions arrive as a list of per-sample nodes holding
# (batch,)-shaped values; targets are plain arrays of shape (len, batch).
# Both builders return the SUM of per-item losses (the driver divides by the
# full batch size so chunked and whole-batch evaluation agree).
# ---------------------------------------------------------------------------

def tape_mse_loss_sum(pred_nodes, target_mat):
    """Sum over batch items of per-item mean squared error."""
    m = ad.collect(pred_nodes)                      # (len, batch)
    d = ad.sub(m, target_mat)
    per_cell = ad.pow2(d)
    return ad.mul(ad.sum_(per_cell), 1.0 / target_mat.shape[0])


def _tape_spectrogram(node_mat, cfg: STFTConfig, idx):
    frames = ad.gather(node_mat, idx)               # (frames, win, batch)
    win = cfg.window_values()[None, :, None]
    windowed = ad.mul(frames, win)
    offset = (cfg.fft_size - cfg.win_length) // 2
    padded = ad.pad_axis1(windowed, cfg.fft_size, offset)
    z = ad.rfft_axis1(padded)
    return ad.magnitude(z) if cfg.power == 1 else ad.magnitude_sq(z)


def tape_interference_loss_sum(pred_nodes_mat, target_mat, cfg: STFTConfig):
    """Sum over batch items of the per-item interference loss."""
    n, batch = target_mat.shape
    idx = _frame_indices(n, cfg)
    s_target = spectrogram(target_mat.T, cfg)        # (batch, frames, bins)
    s_target = np.moveaxis(s_target, 0, -1)          # (frames, bins, batch)
    s_pred = _tape_spectrogram(pred_nodes_mat, cfg, idx)
    summed = ad.add(pred_nodes_mat, target_mat)
    s_sum = _tape_spectrogram(summed, cfg, idx)
    diff = ad.sub(ad.add(s_pred, s_target), s_sum)
    per_cell = ad.pow2(diff)
    cells_per_item = s_target.shape[0] * s_target.shape[1]
    return ad.mul(ad.sum_(per_cell), 1.0 / cells_per_item)


def tape_mstft_loss_sum(pred_nodes, target_mat, resolutions=None):
    """Sum over batch items of the multi-resolution interference loss."""
    if resolutions is None:
        resolutions = default_resolutions()
    resolutions = tuple(resolutions)
    if not resolutions:
        raise LossError("at least one STFT resolution is required")
    m = ad.collect(pred_nodes)                      # (len, batch)
    total = None
    for cfg in resolutions:
        term = tape_interference_loss_sum(m, target_mat, cfg)
        total = term if total is None else ad.add(total, term)
    return ad.mul(total, 1.0 / len(resolutions))
