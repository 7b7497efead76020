"""Similarity metrics against brute-force loop oracles."""

import numpy as np
import pytest

from apfalign.metrics import MetricError, MetricsReport, esr, evaluate, mae, mse
from apfalign.signals import Signal
from apfalign.train import CoefficientBundle


def loop_mae(y_hat, y):
    total = 0.0
    for a, b in zip(y_hat, y):
        total += abs(a - b)
    return total / (len(y) - 1)


def loop_mse(y_hat, y):
    total = 0.0
    for a, b in zip(y_hat, y):
        total += (a - b) ** 2
    return total / len(y)


def loop_esr(y_hat, y):
    num = den = 0.0
    for a, b in zip(y_hat, y):
        num += (a - b) ** 2
        den += b ** 2
    return num / den


class TestMae:
    def test_identity(self):
        x = np.linspace(-1, 1, 50)
        assert mae(x, x) == 0.0

    def test_literal_normalizer(self):
        y = np.zeros(4)
        y_hat = np.ones(4)
        assert mae(y_hat, y) == pytest.approx(4.0 / 3.0, rel=1e-15)

    def test_conventional_norm_flag(self):
        y = np.zeros(4)
        y_hat = np.ones(4)
        assert mae(y_hat, y, norm="n") == 1.0

    def test_needs_two_samples(self):
        with pytest.raises(MetricError):
            mae(np.ones(1), np.ones(1))

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            y_hat, y = rng.standard_normal((2, 257))
            assert mae(y_hat, y) == pytest.approx(loop_mae(y_hat, y),
                                                  rel=1e-15)


class TestMse:
    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            y_hat, y = rng.standard_normal((2, 313))
            assert mse(y_hat, y) == pytest.approx(loop_mse(y_hat, y),
                                                  rel=1e-15)

    def test_positive_unless_equal(self):
        rng = np.random.default_rng(2)
        y = rng.standard_normal(64)
        assert mse(y, y) == 0.0
        assert mse(y + 1e-9, y) > 0.0


class TestEsr:
    def test_identity_zero(self):
        y = np.linspace(0.1, 1, 32)
        assert esr(y, y) == 0.0

    def test_zero_prediction_is_one(self):
        rng = np.random.default_rng(3)
        y = rng.standard_normal(100)
        assert esr(np.zeros(100), y) == pytest.approx(1.0, rel=1e-15)

    def test_polarity_flip_is_four(self):
        rng = np.random.default_rng(4)
        y = rng.standard_normal(100)
        assert esr(-y, y) == pytest.approx(4.0, rel=1e-15)

    def test_scale_invariance(self):
        rng = np.random.default_rng(5)
        y_hat, y = rng.standard_normal((2, 128))
        base = esr(y_hat, y)
        for k in (0.5, -3.0, 1e6):
            assert esr(k * y_hat, k * y) == pytest.approx(base, rel=1e-12)

    def test_zero_energy_target_rejected(self):
        with pytest.raises(MetricError):
            esr(np.ones(10), np.zeros(10))

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            y_hat, y = rng.standard_normal((2, 199))
            assert esr(y_hat, y) == pytest.approx(loop_esr(y_hat, y),
                                                  rel=1e-15)


class TestEvaluate:
    def _identity_bundle(self, fs=48000):
        return CoefficientBundle(sample_rate=fs, model="naive", sections=[],
                                 provenance={"config_hash": "x"})

    def test_identity_bundle_identical_signals_all_zero(self):
        rng = np.random.default_rng(7)
        sig = Signal(rng.standard_normal(4096), 48000)
        report = evaluate(self._identity_bundle(), sig, sig)
        for row in (report.prediction, report.reference):
            assert row["mae"] == 0.0
            assert row["mse"] == 0.0
            assert row["esr"] == 0.0

    def test_report_serialization_round_trip(self):
        rng = np.random.default_rng(8)
        x = Signal(rng.standard_normal(4096), 48000)
        y = Signal(rng.standard_normal(4096), 48000)
        report = evaluate(self._identity_bundle(), x, y, n_segments=4)
        back = MetricsReport.from_json(report.to_json())
        assert back.prediction == report.prediction
        assert back.reference == report.reference
        assert back.segments == report.segments

    def test_table_has_columns(self):
        rng = np.random.default_rng(9)
        x = Signal(rng.standard_normal(2048), 48000)
        y = Signal(rng.standard_normal(2048), 48000)
        table = evaluate(self._identity_bundle(), x, y).to_table()
        assert "MAE" in table and "MSE" in table and "ESR" in table
        assert "prediction" in table and "reference" in table

    def test_rate_mismatch_rejected(self):
        x = Signal(np.zeros(100), 48000)
        y = Signal(np.zeros(100), 44100)
        with pytest.raises(MetricError):
            evaluate(self._identity_bundle(), x, y)
