"""Unit tests for metrics, scoring rows, and the CSV report format."""

import numpy as np
import pytest

from latentevents.metrics import (
    VariableScore,
    consistency,
    format_table,
    mape,
    mse,
    presentation_value,
    read_report,
    score_variable,
    write_report,
)


class TestMse:
    def test_identity_is_zero(self):
        v = np.array([0.1, 0.5, 0.9])
        assert mse(v, v) == 0.0

    def test_arithmetic(self):
        value = mse(np.array([0.2, 0.4]), np.array([0.1, 0.6]))
        np.testing.assert_allclose(value, 0.025, rtol=1e-12)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(42)
        est = rng.uniform(0, 1, 40)
        truth = rng.uniform(0, 1, 40)
        acc = 0.0
        for e, t in zip(est, truth):
            acc += (e - t) ** 2
        np.testing.assert_allclose(mse(est, truth), acc / 40, rtol=1e-12)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(42)
        est = rng.uniform(0, 1, 30)
        truth = rng.uniform(0, 1, 30)
        perm = rng.permutation(30)
        np.testing.assert_allclose(mse(est, truth), mse(est[perm], truth[perm]), rtol=1e-12)

    def test_shape_errors(self):
        with pytest.raises(ValueError):
            mse(np.array([0.1]), np.array([0.1, 0.2]))
        with pytest.raises(ValueError):
            mse(np.array([]), np.array([]))


class TestMape:
    def test_identity_is_zero(self):
        v = np.array([0.1, 0.5, 0.9])
        assert mape(v, v) == 0.0

    def test_double_is_one(self):
        truth = np.array([0.1, 0.2, 0.4])
        np.testing.assert_allclose(mape(2.0 * truth, truth), 1.0, rtol=1e-12)

    def test_scale_factor_detector(self):
        # mape(c * truth, truth) == |c - 1| for any positive constant c.
        rng = np.random.default_rng(42)
        truth = rng.uniform(0.05, 0.6, 100)
        for c in (0.5, 0.9, 1.3, 3.0):
            np.testing.assert_allclose(mape(c * truth, truth), abs(c - 1), rtol=1e-12)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(42)
        est = rng.uniform(0, 1, 40)
        truth = rng.uniform(0.01, 1, 40)
        acc = 0.0
        for e, t in zip(est, truth):
            acc += abs(e - t) / t
        np.testing.assert_allclose(mape(est, truth), acc / 40, rtol=1e-12)

    def test_tiny_truth_filtered(self):
        est = np.array([0.5, 0.5])
        truth = np.array([1e-9, 0.5])
        assert mape(est, truth) == 0.0  # first sample dropped

    def test_all_filtered_rejected(self):
        with pytest.raises(ValueError):
            mape(np.array([0.5]), np.array([1e-9]))

    def test_permutation_invariant(self):
        rng = np.random.default_rng(42)
        est = rng.uniform(0, 1, 30)
        truth = rng.uniform(0.01, 1, 30)
        perm = rng.permutation(30)
        np.testing.assert_allclose(mape(est, truth), mape(est[perm], truth[perm]), rtol=1e-12)


class TestConsistency:
    def test_identical_vectors(self):
        v = np.array([0.2, 0.7, 0.9])
        assert consistency(v, v) == 1.0

    def test_half_agreement(self):
        # 0.6 vs 0.7 agree (both above); 0.4 vs 0.6 disagree.
        assert consistency(np.array([0.6, 0.4]), np.array([0.7, 0.6])) == 0.5

    def test_symmetric(self):
        rng = np.random.default_rng(42)
        a = rng.uniform(0, 1, 50)
        b = rng.uniform(0, 1, 50)
        assert consistency(a, b) == consistency(b, a)

    def test_threshold_is_strict(self):
        # Exactly at the threshold counts as the negative class on both sides.
        assert consistency(np.array([0.5]), np.array([0.4])) == 1.0
        assert consistency(np.array([0.5]), np.array([0.6])) == 0.0

    def test_custom_threshold(self):
        a = np.array([0.15, 0.25])
        b = np.array([0.05, 0.10])
        assert consistency(a, b, threshold=0.2) == 0.5


class TestReportFormat:
    def _rows(self):
        return [
            VariableScore("y1", "unobserved", "aggl", 0.1, "mse", 0.000123, "prob_sq"),
            VariableScore("y1", "unobserved", "aggl", 0.1, "mape", 0.0454, "fraction"),
            VariableScore("y", "observed", "bcel", None, "mape", 0.0784, "fraction"),
        ]

    def test_round_trip(self, tmp_path):
        path = tmp_path / "report.csv"
        rows = self._rows()
        write_report(path, rows)
        assert read_report(path) == rows

    def test_rewrite_byte_identical(self, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_report(p1, self._rows())
        write_report(p2, self._rows())
        assert p1.read_bytes() == p2.read_bytes()

    def test_header(self, tmp_path):
        path = tmp_path / "report.csv"
        write_report(path, [])
        assert path.read_text() == "variable,role,strategy,lam,metric,value,unit\n"

    def test_missing_lam_round_trips_as_none(self, tmp_path):
        path = tmp_path / "report.csv"
        write_report(path, self._rows())
        loaded = read_report(path)
        assert loaded[0].lam == 0.1
        assert loaded[2].lam is None

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "report.csv"
        path.write_text("wrong,header\n")
        with pytest.raises(ValueError):
            read_report(path)

    def test_score_variable_rows(self):
        est = np.array([0.2, 0.3])
        truth = np.array([0.1, 0.3])
        rows = score_variable("y1", "unobserved", "bcel", None, est, truth)
        assert [r.metric for r in rows] == ["mse", "mape"]
        np.testing.assert_allclose(rows[0].value, mse(est, truth))
        np.testing.assert_allclose(rows[1].value, mape(est, truth))


class TestPresentation:
    def test_scaling_conventions(self):
        # Stored values are raw fractions; presentation scales them.
        assert presentation_value("mse", 0.0021) == (2.1, "MSE x1e3")
        assert presentation_value("mape", 0.517) == (51.7, "MAPE %")
        assert presentation_value("consistency", 0.995) == (99.5, "agree %")

    def test_table_contains_scaled_values(self):
        rows = [
            VariableScore("y1", "unobserved", "bcel", None, "mape", 0.51, "fraction")
        ]
        table = format_table(rows)
        assert "51.00" in table
        assert "y1" in table
