"""Independent correctness checks for gradients and loss arithmetic.

Two families of checks, both runnable from the CLI and reused by the test
suite:

* finite-difference checks: every analytic gradient path (network parameters,
  formula algebra, and the full loss-through-graph-through-network chain) is
  compared against central differences on randomly drawn instances;
* scalar oracles: the vectorized losses are recomputed with plain Python
  loops over floats, term by term, and must agree to near machine precision.

The oracle implementations deliberately avoid numpy reductions so they cannot
share a bug with the code under test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import (
    Complement,
    EventGraph,
    Formula,
    HeadRef,
    LatentHead,
    Product,
    WeightedSum,
    eval_graph,
    graph_backward,
)
from .losses import SmoothingState, total_loss
from .nn import PROB_EPS, Network, init_network

FD_STEP = 1e-5
FD_TOL = 1e-4
ORACLE_TOL = 1e-12
REL_FLOOR = 1e-6


@dataclass(frozen=True)
class CheckResult:
    name: str
    n_instances: int
    max_err: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.max_err < self.tol

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return (
            f"{status} {self.name}: max err {self.max_err:.3e} "
            f"(tol {self.tol:.0e}, {self.n_instances} instances)"
        )


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    den = np.maximum(REL_FLOOR, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float((np.abs(analytic - numeric) / den).max())


# --- scalar oracles --------------------------------------------------------


def bce_scalar(probs, labels) -> tuple[float, list[float]]:
    """Loop-based binary cross-entropy; clamping matches the vectorized code."""
    n = len(probs)
    lo, hi = PROB_EPS, 1.0 - PROB_EPS
    total = 0.0
    grads = []
    for i in range(n):
        p = min(max(float(probs[i]), lo), hi)
        y = float(labels[i])
        total += -(y * math.log(p) + (1.0 - y) * math.log1p(-p))
        grads.append((p - y) / (n * p * (1.0 - p)))
    return total / n, grads


def penalty_scalar(probs, rate_targets) -> float:
    """Loop-based penalty from raw batch means."""
    total = 0.0
    for name in sorted(rate_targets):
        acc = 0.0
        for v in probs[name]:
            acc += float(v)
        gap = float(rate_targets[name]) - acc / len(probs[name])
        total += gap * gap
    return total


def total_loss_scalar(
    probs, labels, rate_targets, lam, alpha=None, prev_means=None
) -> tuple[float, dict[str, list[float]]]:
    """Loop-based total loss and gradients, including the mean smoothing.

    prev_means maps variable names to their smoothed means from earlier
    batches; None with alpha set means a first batch (raw means pass
    through).  Only the current batch's alpha-weighted share of each mean
    carries gradient.
    """
    grads: dict[str, list[float]] = {}
    bce_sum = 0.0
    for name in sorted(labels):
        loss, grad = bce_scalar(probs[name], labels[name])
        bce_sum += loss
        grads[name] = grad
    used_means: dict[str, float] = {}
    for name in sorted(rate_targets):
        acc = 0.0
        for v in probs[name]:
            acc += float(v)
        raw = acc / len(probs[name])
        if alpha is not None and prev_means is not None:
            used_means[name] = alpha * raw + (1.0 - alpha) * float(prev_means[name])
        else:
            used_means[name] = raw
    factor = alpha if (alpha is not None and prev_means is not None) else 1.0
    penalty = 0.0
    for name in sorted(rate_targets):
        gap = float(rate_targets[name]) - used_means[name]
        penalty += gap * gap
    if lam != 0.0:
        for name in sorted(rate_targets):
            n = len(probs[name])
            per_sample = (
                lam * factor * 2.0 * (used_means[name] - float(rate_targets[name])) / n
            )
            add = [per_sample] * n
            if name in grads:
                grads[name] = [g + a for g, a in zip(grads[name], add)]
            else:
                grads[name] = add
    return bce_sum + lam * penalty, grads


# --- random instances ------------------------------------------------------


RELU_MARGIN = 1e-3


def _randomize_biases(net: Network, rng: np.random.Generator) -> None:
    # Fresh networks have zero biases, which parks hidden preactivations
    # exactly on the relu kink whenever an earlier layer goes fully dead.
    for layer in net.layers:
        layer.biases[:] = rng.uniform(-0.5, 0.5, size=layer.biases.shape)


def _relu_margin(net: Network, x: np.ndarray) -> float:
    """Distance of the closest relu preactivation to its kink."""
    _, caches = net.forward(x)
    margin = np.inf
    for layer, (_, z, _) in zip(net.layers, caches):
        if layer.activation == "relu":
            margin = min(margin, float(np.abs(z).min()))
    return margin


def _random_network(rng: np.random.Generator) -> tuple[Network, np.ndarray]:
    # Redraw instances that sit within the finite-difference step of a relu
    # kink; the one-sided derivative there is a valid subgradient but central
    # differences straddle it.
    while True:
        n_in = int(rng.integers(1, 5))
        n_hidden = int(rng.integers(0, 3))
        dims = [n_in] + [int(rng.integers(1, 6)) for _ in range(n_hidden)] + [1]
        net = init_network(dims, seed=int(rng.integers(2**31)))
        _randomize_biases(net, rng)
        x = rng.normal(0.0, 1.0, size=(int(rng.integers(1, 9)), n_in))
        if _relu_margin(net, x) > RELU_MARGIN:
            return net, x


def _random_formula(rng: np.random.Generator, names: list[str], depth: int = 0) -> Formula:
    kinds = ["head"] if depth >= 2 else ["head", "product", "complement", "wsum"]
    kind = kinds[int(rng.integers(len(kinds)))]
    if kind == "head":
        return HeadRef(names[int(rng.integers(len(names)))])
    if kind == "product":
        k = int(rng.integers(2, 4))
        return Product(*(_random_formula(rng, names, depth + 1) for _ in range(k)))
    if kind == "complement":
        return Complement(_random_formula(rng, names, depth + 1))
    k = int(rng.integers(1, 4))
    return WeightedSum(
        *(
            (float(rng.uniform(-1.0, 1.0)), _random_formula(rng, names, depth + 1))
            for _ in range(k)
        )
    )


def _random_loss_instance(rng: np.random.Generator):
    """Random probs/labels/targets triple for the loss oracles."""
    n = int(rng.integers(4, 65))
    n_vars = int(rng.integers(1, 4))
    names = [f"v{i}" for i in range(n_vars + int(rng.integers(0, 3)))]
    probs = {name: rng.uniform(0.01, 0.99, size=n) for name in names}
    labels = {
        name: (rng.uniform(0.0, 1.0, n) < probs[name]).astype(np.float64)
        for name in names[:n_vars]
    }
    targets = {name: float(rng.uniform(0.05, 0.95)) for name in names}
    lam = float(rng.choice([0.0, 0.3, 1.0, 17.0]))
    draw = rng.uniform()
    if draw < 1.0 / 3.0:
        alpha, prev_means = None, None
    elif draw < 2.0 / 3.0:
        alpha, prev_means = float(rng.uniform(0.1, 1.0)), None
    else:
        alpha = float(rng.uniform(0.1, 1.0))
        prev_means = {name: float(rng.uniform(0.05, 0.95)) for name in names}
    return probs, labels, targets, lam, alpha, prev_means


# --- finite-difference checks ----------------------------------------------


def _param_fd(net: Network, objective, step: float = FD_STEP) -> float:
    """Max relative error between analytic and central-difference parameter
    gradients, where objective(net) returns (scalar, analytic grads)."""
    _, analytic = objective(net)
    worst = 0.0
    for li, layer in enumerate(net.layers):
        for arr, ai in ((layer.weights, 0), (layer.biases, 1)):
            fd = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + step
                hi, _ = objective(net)
                arr[idx] = orig - step
                lo, _ = objective(net)
                arr[idx] = orig
                fd[idx] = (hi - lo) / (2.0 * step)
            worst = max(worst, rel_err(analytic[li][ai], fd))
    return worst


def check_network_gradients(instances: int, seed: int) -> CheckResult:
    """d(sum(u * net(x)))/d(params) against central differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        net, x = _random_network(rng)
        upstream = rng.normal(0.0, 1.0, size=x.shape[0])

        def objective(net):
            probs, cache = net.forward(x)
            return float(np.sum(upstream * probs)), net.backward(cache, upstream)

        worst = max(worst, _param_fd(net, objective))
    return CheckResult("gradient/network", instances, worst, FD_TOL)


def check_formula_gradients(instances: int, seed: int) -> CheckResult:
    """Formula backprop against central differences on head values."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        names = [f"h{i}" for i in range(int(rng.integers(1, 4)))]
        formula = _random_formula(rng, names)
        n = int(rng.integers(1, 6))
        heads = {name: rng.uniform(0.05, 0.95, size=n) for name in names}
        upstream = rng.normal(0.0, 1.0, size=n)
        analytic = {name: np.zeros(n) for name in names}
        formula.backprop(heads, upstream, analytic)
        for name in names:
            fd = np.zeros(n)
            for i in range(n):
                orig = heads[name][i]
                heads[name][i] = orig + FD_STEP
                hi = float(np.sum(upstream * formula.evaluate(heads)))
                heads[name][i] = orig - FD_STEP
                lo = float(np.sum(upstream * formula.evaluate(heads)))
                heads[name][i] = orig
                fd[i] = (hi - lo) / (2.0 * FD_STEP)
            worst = max(worst, rel_err(analytic[name], fd))
    return CheckResult("gradient/formula", instances, worst, FD_TOL)


def _two_head_graph(rng: np.random.Generator, n_features: int) -> EventGraph:
    heads = (
        LatentHead.dense("a", tuple(range(n_features)), hidden=(3,)),
        LatentHead.dense("b", tuple(range(n_features)), hidden=(2,)),
    )
    observed = {"ab": Product(HeadRef("a"), HeadRef("b"))}
    aggregate = {"a_not_b": Product(HeadRef("a"), Complement(HeadRef("b")))}
    return EventGraph(heads, observed, aggregate)


def check_end_to_end_gradients(instances: int, seed: int) -> CheckResult:
    """Full chain: loss on composed nodes back to every network parameter.

    Covers labelled cross-entropy, the penalty on heads and nodes, nonzero
    penalty weights, and the smoothing factor.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        while True:
            n_features = int(rng.integers(2, 4))
            graph = _two_head_graph(rng, n_features)
            networks = {
                head.name: init_network(
                    head.layer_dims, head.activations, seed=int(rng.integers(2**31))
                )
                for head in graph.heads
            }
            n = int(rng.integers(3, 9))
            x = rng.normal(0.0, 1.0, size=(n, n_features))
            for net in networks.values():
                _randomize_biases(net, rng)
            if all(
                _relu_margin(networks[h.name], x[:, h.feature_subset]) > RELU_MARGIN
                for h in graph.heads
            ):
                break
        labels = {"ab": (rng.uniform(0.0, 1.0, n) < 0.5).astype(np.float64)}
        targets = {
            name: float(rng.uniform(0.1, 0.9))
            for name in ("a", "b", "ab", "a_not_b")
        }
        lam = float(rng.choice([0.0, 0.7, 13.0]))
        alpha = float(rng.uniform(0.2, 1.0))
        prev_means = {name: float(rng.uniform(0.05, 0.95)) for name in targets}

        def smoothing():
            # Fresh state per evaluation so the objective is a pure function
            # of the parameters; seeded past means exercise the alpha factor.
            return SmoothingState(alpha, batch_count=1, means=dict(prev_means))

        def objective(which_net, nets=networks):
            values, caches = {}, {}
            for head in graph.heads:
                probs, cache = nets[head.name].forward(x[:, head.feature_subset])
                values[head.name] = probs
                caches[head.name] = cache
            probs = {**values, **eval_graph(graph, values)}
            report, grads = total_loss(probs, labels, targets, lam, smoothing())
            node_grads = {k: v for k, v in grads.items() if k in graph.nodes()}
            head_grads = graph_backward(graph, values, node_grads)
            for name in graph.head_names:
                if name in grads:
                    head_grads[name] = head_grads[name] + grads[name]
            param_grads = nets[which_net].backward(caches[which_net], head_grads[which_net])
            return report.total, param_grads

        for name in graph.head_names:
            worst = max(
                worst,
                _param_fd(networks[name], lambda net, name=name: objective(name)),
            )
    return CheckResult("gradient/end_to_end", instances, worst, FD_TOL)


def run_gradient_checks(instances: int = 100, seed: int = 0) -> list[CheckResult]:
    """The full finite-difference suite; instances is the count per check."""
    return [
        check_network_gradients(instances, seed),
        check_formula_gradients(instances, seed + 1),
        check_end_to_end_gradients(max(1, instances // 4), seed + 2),
    ]


def run_oracle_checks(instances: int = 1000, seed: int = 0) -> list[CheckResult]:
    """Vectorized losses against the scalar-loop oracles."""
    rng = np.random.default_rng(seed)
    worst_loss = 0.0
    worst_grad = 0.0
    for _ in range(instances):
        probs, labels, targets, lam, alpha, prev_means = _random_loss_instance(rng)
        if alpha is None:
            state = None
        elif prev_means is None:
            state = SmoothingState(alpha)
        else:
            state = SmoothingState(alpha, batch_count=1, means=dict(prev_means))
        report, grads = total_loss(probs, labels, targets, lam, state)
        oracle_total, oracle_grads = total_loss_scalar(
            probs, labels, targets, lam, alpha, prev_means
        )
        worst_loss = max(worst_loss, abs(report.total - oracle_total))
        for name, grad in oracle_grads.items():
            worst_grad = max(worst_grad, float(np.abs(grads[name] - np.asarray(grad)).max()))
    return [
        CheckResult("oracle/loss_value", instances, worst_loss, ORACLE_TOL),
        CheckResult("oracle/loss_gradient", instances, worst_grad, ORACLE_TOL),
    ]


def run_all_checks(
    gradient_instances: int = 100, oracle_instances: int = 1000, seed: int = 0
) -> list[CheckResult]:
    return run_gradient_checks(gradient_instances, seed) + run_oracle_checks(
        oracle_instances, seed
    )
