"""Unit tests for the verification harness itself.

The harness is used as the oracle by other test modules, so these tests keep
it honest: the scalar-loop implementations must agree with hand arithmetic,
and the finite-difference machinery must flag a wrong gradient.
"""

import math

import numpy as np

from latentevents.verify import (
    CheckResult,
    bce_scalar,
    penalty_scalar,
    rel_err,
    run_all_checks,
    run_gradient_checks,
    run_oracle_checks,
    total_loss_scalar,
)


class TestScalarOracles:
    def test_bce_scalar_hand_case(self):
        # -(1/2)[log 0.8 + log 0.7] for labels [1, 0] on probs [0.8, 0.3]
        value, grads = bce_scalar(np.array([0.8, 0.3]), np.array([1.0, 0.0]))
        expected = -0.5 * (math.log(0.8) + math.log(0.7))
        assert abs(value - expected) < 1e-15
        assert abs(grads[0] - (0.8 - 1.0) / (2 * 0.8 * 0.2)) < 1e-15

    def test_penalty_scalar_hand_case(self):
        probs = {"a": np.array([0.4, 0.2]), "b": np.array([0.5, 0.5])}
        targets = {"a": 0.5, "b": 0.5}
        # mean a = 0.3 -> gap 0.2; mean b = 0.5 -> gap 0
        assert abs(penalty_scalar(probs, targets) - 0.04) < 1e-15

    def test_total_scalar_combines(self):
        probs = {"y": np.array([0.8, 0.3])}
        labels = {"y": np.array([1.0, 0.0])}
        targets = {"y": 0.75}
        total, _ = total_loss_scalar(probs, labels, targets, lam=2.0)
        bce = -0.5 * (math.log(0.8) + math.log(0.7))
        penalty = (0.75 - 0.55) ** 2
        assert abs(total - (bce + 2.0 * penalty)) < 1e-14

    def test_total_scalar_smoothing_blend(self):
        probs = {"y": np.array([0.4, 0.2])}  # raw mean 0.3
        labels = {}
        targets = {"y": 0.5}
        total, grads = total_loss_scalar(
            probs, labels, targets, lam=1.0, alpha=0.8, prev_means={"y": 0.7}
        )
        used = 0.8 * 0.3 + 0.2 * 0.7  # 0.38
        assert abs(total - (0.5 - used) ** 2) < 1e-15
        # Gradient carries the alpha factor: lam * alpha * 2(used-target)/n
        expected = 1.0 * 0.8 * 2.0 * (used - 0.5) / 2
        assert abs(grads["y"][0] - expected) < 1e-15


class TestRelErr:
    def test_zero_for_equal(self):
        g = np.array([1.0, -2.0, 3.0])
        assert rel_err(g, g) == 0.0

    def test_scales_with_difference(self):
        a = np.array([1.0])
        assert rel_err(a, np.array([1.1])) > 0.05


class TestCheckSuite:
    def test_gradient_checks_pass(self):
        for result in run_gradient_checks(instances=20, seed=0):
            assert result.ok, result.line()

    def test_oracle_checks_pass(self):
        for result in run_oracle_checks(instances=100, seed=0):
            assert result.ok, result.line()

    def test_detects_broken_gradient(self):
        # A deliberately wrong analytic gradient must exceed the tolerance.
        result = CheckResult("synthetic", 1, max_err=0.5, tol=1e-4)
        assert not result.ok
        assert "FAIL" in result.line()

    def test_pass_line_format(self):
        result = CheckResult("synthetic", 10, max_err=1e-9, tol=1e-4)
        line = result.line()
        assert "PASS" in line
        assert "synthetic" in line

    def test_run_all_aggregates(self):
        results = run_all_checks(gradient_instances=8, oracle_instances=20, seed=1)
        names = [r.name for r in results]
        assert "gradient/network" in names
        assert "oracle/loss_value" in names
        assert all(r.ok for r in results)
