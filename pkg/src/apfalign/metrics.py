"""Sample-space similarity metrics and the evaluation report.

``mae`` keeps the 1/(n-1) normalizer of its source definition (a likely
typo for 1/n, negligible at audio lengths); pass ``norm="n"`` for the
conventional variant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .signals import Signal


class MetricError(ValueError):
    """Undefined metric for the given operands."""


def _pair(y_hat, y):
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise MetricError(f"length mismatch: {y_hat.shape} vs {y.shape}")
    return y_hat, y


def mae(y_hat, y, norm: str = "n-1") -> float:
    """Mean absolute error with the literal 1/(n-1) normalizer."""
    y_hat, y = _pair(y_hat, y)
    n = y.size
    if n < 2:
        raise MetricError("mae needs at least 2 samples (1/(n-1) normalizer)")
    total = float(np.sum(np.abs(y_hat - y)))
    return total / (n - 1) if norm == "n-1" else total / n


def mse(y_hat, y) -> float:
    y_hat, y = _pair(y_hat, y)
    d = y_hat - y
    return float(np.mean(d * d))


def esr(y_hat, y) -> float:
    """Error-to-signal ratio: sum|y_hat - y|^2 / sum|y|^2."""
    y_hat, y = _pair(y_hat, y)
    energy = float(np.sum(y * y))
    if energy <= 0.0:
        raise MetricError("esr is undefined for a zero-energy target")
    d = y_hat - y
    return float(np.sum(d * d)) / energy


@dataclass
class MetricsReport:
    """Prediction-vs-target metrics plus the unshifted-input static reference."""

    prediction: dict            # {"mae":, "mse":, "esr":}
    reference: dict
    segments: list | None = None

    def to_json(self) -> str:
        return json.dumps({"prediction": self.prediction,
                           "reference": self.reference,
                           "segments": self.segments}, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        blob = json.loads(text)
        return cls(prediction=blob["prediction"], reference=blob["reference"],
                   segments=blob.get("segments"))

    def to_table(self) -> str:
        rows = [("row", "MAE", "MSE", "ESR"),
                ("prediction", *(f"{self.prediction[k]:.6g}"
                                 for k in ("mae", "mse", "esr"))),
                ("reference", *(f"{self.reference[k]:.6g}"
                                for k in ("mae", "mse", "esr")))]
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(r, widths))
                         for r in rows)


def _metric_row(y_hat, y):
    return {"mae": mae(y_hat, y), "mse": mse(y_hat, y), "esr": esr(y_hat, y)}


def evaluate(bundle, input_signal: Signal, target_signal: Signal,
             n_segments: int = 0) -> MetricsReport:
    """Apply a bundle to the input and compare against the target.

    The "reference" row scores the raw, unshifted input against the target.
    """
    from .train import apply
    if input_signal.sample_rate != target_signal.sample_rate:
        raise MetricError("input and target sample rates differ")
    prediction = apply(bundle, input_signal)
    report = MetricsReport(
        prediction=_metric_row(prediction.samples, target_signal.samples),
        reference=_metric_row(input_signal.samples, target_signal.samples))
    if n_segments > 0:
        bounds = np.linspace(0, len(target_signal), n_segments + 1, dtype=int)
        segments = []
        for i in range(n_segments):
            lo, hi = bounds[i], bounds[i + 1]
            if hi - lo < 2 or float(np.sum(
                    target_signal.samples[lo:hi] ** 2)) <= 0.0:
                continue
            segments.append({
                "start": int(lo), "end": int(hi),
                "prediction": _metric_row(prediction.samples[lo:hi],
                                          target_signal.samples[lo:hi]),
                "reference": _metric_row(input_signal.samples[lo:hi],
                                         target_signal.samples[lo:hi])})
        report.segments = segments
    return report
