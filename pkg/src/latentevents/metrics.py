"""Evaluation metrics and the CSV report format.

Metrics are computed against per-sample true probabilities (available for
synthetic data) or between two independently trained models.  Stored values
are always raw fractions; the conventional presentation scalings (MSE x1000,
MAPE and agreement as percentages) are applied only when formatting tables.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

MIN_TRUTH = 1e-6

REPORT_COLUMNS = ("variable", "role", "strategy", "lam", "metric", "value", "unit")


def _pair(estimated, truth) -> tuple[np.ndarray, np.ndarray]:
    estimated = np.asarray(estimated, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if estimated.shape != truth.shape or estimated.ndim != 1:
        raise ValueError(
            f"inputs must be matching vectors, got {estimated.shape} and {truth.shape}"
        )
    if estimated.size == 0:
        raise ValueError("empty input")
    return estimated, truth


def mse(estimated, truth) -> float:
    """Mean squared error."""
    estimated, truth = _pair(estimated, truth)
    return float(np.mean((estimated - truth) ** 2))


def mape(estimated, truth, min_truth: float = MIN_TRUTH) -> float:
    """Mean absolute percentage error as a fraction (0.5 means 50 percent).

    Samples with truth at or below min_truth are dropped so the ratio stays
    defined.  When the estimate is a constant multiple c of the truth this
    equals |c - 1|, which makes it the natural scale-misidentification probe.
    """
    estimated, truth = _pair(estimated, truth)
    keep = truth > min_truth
    if not keep.any():
        raise ValueError(f"no samples with truth > {min_truth}")
    return float(np.mean(np.abs(estimated[keep] - truth[keep]) / truth[keep]))


def consistency(probs_a, probs_b, threshold: float = 0.5) -> float:
    """Fraction of samples two models classify identically.

    A sample is classified positive when its probability is strictly above
    the threshold.
    """
    probs_a, probs_b = _pair(probs_a, probs_b)
    return float(np.mean((probs_a > threshold) == (probs_b > threshold)))


@dataclass(frozen=True)
class VariableScore:
    """One metric value for one variable under one training strategy."""

    variable: str
    role: str  # "observed" | "unobserved" | "aggregate"
    strategy: str  # "bcel" | "aggl" | "sagg"
    lam: float | None
    metric: str  # "mse" | "mape" | "consistency"
    value: float
    unit: str = "fraction"


def score_variable(
    variable: str,
    role: str,
    strategy: str,
    lam: float | None,
    estimated,
    truth,
) -> list[VariableScore]:
    """MSE and MAPE rows for one variable."""
    return [
        VariableScore(variable, role, strategy, lam, "mse", mse(estimated, truth), "prob_sq"),
        VariableScore(variable, role, strategy, lam, "mape", mape(estimated, truth), "fraction"),
    ]


def write_report(path, rows: list[VariableScore]) -> None:
    """Write scores as CSV with repr-exact floats, byte-stable across reruns."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.variable,
                    row.role,
                    row.strategy,
                    "" if row.lam is None else repr(float(row.lam)),
                    row.metric,
                    repr(float(row.value)),
                    row.unit,
                ]
            )


def read_report(path) -> list[VariableScore]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != REPORT_COLUMNS:
            raise ValueError(f"unexpected report header {header!r}")
        rows = []
        for rec in reader:
            variable, role, strategy, lam, metric, value, unit = rec
            rows.append(
                VariableScore(
                    variable,
                    role,
                    strategy,
                    None if lam == "" else float(lam),
                    metric,
                    float(value),
                    unit,
                )
            )
    return rows


def presentation_value(metric: str, value: float) -> tuple[float, str]:
    """Scale a raw metric for display: MSE x1000, rates as percentages."""
    if metric == "mse":
        return value * 1e3, "MSE x1e3"
    if metric == "mape":
        return value * 1e2, "MAPE %"
    if metric == "consistency":
        return value * 1e2, "agree %"
    return value, metric


def format_table(rows: list[VariableScore]) -> str:
    """Fixed-width text table of scores in presentation units."""
    header = f"{'variable':<28} {'role':<10} {'strategy':<8} {'lam':>7} {'metric':>9} {'value':>10}"
    lines = [header, "-" * len(header)]
    for row in rows:
        value, label = presentation_value(row.metric, row.value)
        lam = "" if row.lam is None else f"{row.lam:g}"
        lines.append(
            f"{row.variable:<28} {row.role:<10} {row.strategy:<8} {lam:>7} {label:>9} {value:>10.2f}"
        )
    return "\n".join(lines)
