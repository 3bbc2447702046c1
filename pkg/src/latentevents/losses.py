"""Training losses: per-sample cross-entropy plus an aggregate-rate penalty.

Three strategies share one code path.  Plain cross-entropy is the penalty
weight lam=0 case.  The penalized strategy adds lam times the summed squared
gap between predicted batch means and known population rates.  The smoothed
variant first blends each variable's batch mean with its running value from
earlier batches and computes the penalty from the blended means, which damps
the noise small batches inject into the rate estimates; only the current
batch's contribution receives gradient.  Keeping one path makes the
equivalences exact: lam=0 reproduces plain cross-entropy bit for bit, and
smoothing weight 1 reproduces the unsmoothed penalty bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .nn import clamp_probs


def bce_loss(probs: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient with respect to the probs.

    Probabilities are clamped away from 0 and 1 before both the loss and the
    gradient, so the gradient is exact for the clamped loss actually computed.
    """
    p = clamp_probs(np.asarray(probs, dtype=np.float64))
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape or p.ndim != 1:
        raise ConfigError(f"probs/labels must be matching vectors, got {p.shape} and {y.shape}")
    if p.size == 0:
        raise ConfigError("empty batch")
    n = p.shape[0]
    loss = float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))
    grad = (p - y) / (n * p * (1.0 - p))
    return loss, grad


def aggregate_loss(
    batch_means: dict[str, float], rate_targets: dict[str, float]
) -> tuple[float, dict[str, float]]:
    """Summed squared gap between batch means and target rates, plus the
    gradient with respect to each mean.

    Variables are visited in sorted name order so the float accumulation is
    deterministic.
    """
    total = 0.0
    grads: dict[str, float] = {}
    for name in sorted(rate_targets):
        if name not in batch_means:
            raise ConfigError(f"rate target for {name!r} but no batch mean for it")
        gap = float(rate_targets[name]) - float(batch_means[name])
        total += gap * gap
        grads[name] = -2.0 * gap
    return total, grads


@dataclass
class SmoothingState:
    """Running per-variable smoothed batch means, carried across batches.

    alpha is the weight on the current batch; the first update passes raw
    means through unchanged.
    """

    alpha: float = 0.8
    batch_count: int = 0
    means: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"smoothing weight must be in (0, 1], got {self.alpha}")


def smoothed_update(
    state: SmoothingState, raw_means: dict[str, float]
) -> tuple[dict[str, float], float]:
    """Blend one batch's raw means into the state; returns (smoothed means,
    gradient factor).

    Previous smoothed values are held constant when differentiating, so the
    gradient factor on the current batch's means is alpha (1 on the first
    batch, which has nothing to blend with).
    """
    if state.batch_count == 0:
        smoothed = {name: raw_means[name] for name in sorted(raw_means)}
        factor = 1.0
    else:
        smoothed = {
            name: state.alpha * raw_means[name] + (1.0 - state.alpha) * state.means[name]
            for name in sorted(raw_means)
        }
        factor = state.alpha
    state.means = smoothed
    state.batch_count += 1
    return smoothed, factor


@dataclass(frozen=True)
class LossReport:
    """One batch's loss breakdown; total == bce + lam * aggregate exactly.

    aggregate is the penalty entering the total (from smoothed means under
    the smoothed strategy); aggregate_raw is always computed from raw means.
    """

    total: float
    bce: float
    aggregate: float
    aggregate_raw: float
    lam: float
    bce_per_variable: dict[str, float] = field(default_factory=dict)


def total_loss(
    probs: dict[str, np.ndarray],
    labels: dict[str, np.ndarray],
    rate_targets: dict[str, float],
    lam: float,
    smoothing: SmoothingState | None = None,
) -> tuple[LossReport, dict[str, np.ndarray]]:
    """Full batch loss and per-variable gradients with respect to the probs.

    probs holds per-sample probabilities for every variable involved; labels
    gives 0/1 vectors for the observed variables; rate_targets gives the known
    population rates entering the penalty.  Passing a SmoothingState selects
    the smoothed penalty and advances the state.  Returns the loss breakdown
    and a dict mapping each supervised variable to d(total)/d(probs).  When
    lam is 0 the penalty is still reported but contributes nothing to the
    total or the gradients.
    """
    if lam < 0.0:
        raise ConfigError(f"penalty weight must be non-negative, got {lam}")
    if lam != 0.0 and not rate_targets:
        raise ConfigError("penalized strategies require aggregate rate targets")
    grads: dict[str, np.ndarray] = {}
    bce_sum = 0.0
    bce_per_variable: dict[str, float] = {}
    for name in sorted(labels):
        if name not in probs:
            raise ConfigError(f"labels for {name!r} but no predictions for it")
        loss, grad = bce_loss(probs[name], labels[name])
        bce_per_variable[name] = loss
        bce_sum += loss
        grads[name] = grad
    for name in rate_targets:
        if name not in probs:
            raise ConfigError(f"rate target for {name!r} but no predictions for it")
    raw_means = {
        name: float(np.mean(probs[name])) for name in sorted(rate_targets)
    }
    aggregate_raw, _ = aggregate_loss(raw_means, rate_targets)
    if smoothing is not None:
        used_means, factor = smoothed_update(smoothing, raw_means)
    else:
        used_means, factor = raw_means, 1.0
    aggregate, mean_grads = aggregate_loss(used_means, rate_targets)
    if lam != 0.0:
        for name in sorted(rate_targets):
            n = probs[name].shape[0]
            per_sample = lam * factor * mean_grads[name] / n
            contribution = np.full(n, per_sample)
            if name in grads:
                grads[name] = grads[name] + contribution
            else:
                grads[name] = contribution
    total = bce_sum + lam * aggregate
    report = LossReport(
        total=total,
        bce=bce_sum,
        aggregate=aggregate,
        aggregate_raw=aggregate_raw,
        lam=lam,
        bce_per_variable=bce_per_variable,
    )
    return report, grads
