"""Minimal dense feed-forward networks with exact reverse-mode gradients.

Every probability head in this package is one of these networks: a stack of
dense layers ending in a single sigmoid output, clamped away from 0 and 1 so
downstream log terms stay finite.  Gradients are computed analytically layer
by layer; parameter updates use Adam.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, TrainingDiverged

# Clamp width for probabilities; well below any probability of interest.
PROB_EPS = 1e-7

ACTIVATIONS = ("relu", "sigmoid", "identity")

# One (d_weights, d_biases) pair per layer, aligned with Network.layers.
ParamGrads = list[tuple[np.ndarray, np.ndarray]]


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def clamp_probs(p: np.ndarray) -> np.ndarray:
    """Clip probabilities into [PROB_EPS, 1 - PROB_EPS]."""
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


class DenseLayer:
    """One dense layer: out = activation(x @ weights.T + biases).

    weights has shape (out_dim, in_dim); biases has shape (out_dim,).
    Sigmoid outputs are clamped into [PROB_EPS, 1 - PROB_EPS].
    """

    def __init__(self, weights: np.ndarray, biases: np.ndarray, activation: str):
        if activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {activation!r}; expected one of {ACTIVATIONS}")
        self.weights = np.asarray(weights, dtype=np.float64)
        self.biases = np.asarray(biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ConfigError(
                f"layer shapes inconsistent: weights {self.weights.shape}, biases {self.biases.shape}"
            )
        self.activation = activation

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        """Return (activated output, cache for backward)."""
        z = x @ self.weights.T + self.biases
        if self.activation == "relu":
            a = np.maximum(z, 0.0)
        elif self.activation == "sigmoid":
            a = clamp_probs(sigmoid(z))
        else:
            a = z
        return a, (x, z, a)

    def backward(self, cache: tuple, grad_out: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (grad wrt input, d_weights, d_biases) for upstream grad_out."""
        x, z, a = cache
        if self.activation == "relu":
            gz = grad_out * (z > 0.0)
        elif self.activation == "sigmoid":
            # a is the clamped sigmoid; a*(1-a) is ~PROB_EPS where the clamp binds,
            # matching the true derivative there to within the clamp width.
            gz = grad_out * (a * (1.0 - a))
        else:
            gz = grad_out
        d_weights = gz.T @ x
        d_biases = gz.sum(axis=0)
        grad_in = gz @ self.weights
        return grad_in, d_weights, d_biases


class Network:
    """A stack of DenseLayers forming one probability head.

    The final layer must have exactly one sigmoid output; forward() therefore
    returns one probability per input row, always inside (0, 1).
    """

    def __init__(self, layers: list[DenseLayer]):
        if not layers:
            raise ConfigError("network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ConfigError(
                    f"adjacent layer dims incompatible: {prev.out_dim} -> {nxt.in_dim}"
                )
        last = layers[-1]
        if last.out_dim != 1 or last.activation != "sigmoid":
            raise ConfigError("final layer must have 1 output node with sigmoid activation")
        self.layers = layers

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    def forward(self, features: np.ndarray) -> tuple[np.ndarray, list]:
        """Run the net on an (n, input_dim) batch.

        Returns (probabilities, cache): probabilities has shape (n,) with every
        entry in [PROB_EPS, 1 - PROB_EPS]; cache feeds backward().
        """
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(
                f"expected features of shape (n, {self.input_dim}), got {x.shape}"
            )
        cache = []
        for layer in self.layers:
            x, layer_cache = layer.forward(x)
            cache.append(layer_cache)
        return x[:, 0], cache

    def backward(self, cache: list, upstream_grad: np.ndarray) -> ParamGrads:
        """Gradient of sum_i upstream_grad[i] * output[i] wrt every parameter.

        cache must come from a matching forward() call on this network.
        """
        if len(cache) != len(self.layers):
            raise RuntimeError("cache does not match network layout")
        g = np.asarray(upstream_grad, dtype=np.float64)[:, None]
        grads: ParamGrads = [None] * len(self.layers)  # type: ignore[list-item]
        for k in range(len(self.layers) - 1, -1, -1):
            g, d_weights, d_biases = self.layers[k].backward(cache[k], g)
            grads[k] = (d_weights, d_biases)
        return grads

    def get_parameters(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Copies of (weights, biases) per layer, for snapshot/restore."""
        return [(l.weights.copy(), l.biases.copy()) for l in self.layers]

    def set_parameters(self, params: list[tuple[np.ndarray, np.ndarray]]) -> None:
        if len(params) != len(self.layers):
            raise ValueError("parameter list does not match network layout")
        for layer, (w, b) in zip(self.layers, params):
            if w.shape != layer.weights.shape or b.shape != layer.biases.shape:
                raise ValueError("parameter shapes do not match network layout")
            layer.weights = w.copy()
            layer.biases = b.copy()


def init_network(
    layer_dims: list[int], activations: list[str] | None = None, seed: int = 0
) -> Network:
    """Build a network with seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights.

    layer_dims lists [input_dim, hidden..., 1]; activations (one per layer)
    defaults to relu on hidden layers and sigmoid on the output.  Biases start
    at zero.  The same seed always yields bit-identical parameters.
    """
    if len(layer_dims) < 2:
        raise ConfigError(f"layer_dims needs >= 2 entries, got {layer_dims}")
    if any(d < 1 for d in layer_dims):
        raise ConfigError(f"layer_dims must be positive, got {layer_dims}")
    if layer_dims[-1] != 1:
        raise ConfigError("output layer must have exactly 1 node")
    n_layers = len(layer_dims) - 1
    if activations is None:
        activations = ["relu"] * (n_layers - 1) + ["sigmoid"]
    if len(activations) != n_layers:
        raise ConfigError(
            f"expected {n_layers} activations for {len(layer_dims)} dims, got {len(activations)}"
        )
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(layer_dims, layer_dims[1:], activations):
        limit = 1.0 / np.sqrt(fan_in)
        weights = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        layers.append(DenseLayer(weights, np.zeros(fan_out), act))
    return Network(layers)


class AdamState:
    """Per-network Adam accumulators (first/second moments, step counter)."""

    def __init__(
        self,
        net: Network,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not (0 < beta1 < 1 and 0 < beta2 < 1):
            raise ConfigError("moment decay rates must lie in (0, 1)")
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [(np.zeros_like(l.weights), np.zeros_like(l.biases)) for l in net.layers]
        self.v = [(np.zeros_like(l.weights), np.zeros_like(l.biases)) for l in net.layers]


def optimizer_step(net: Network, grads: ParamGrads, state: AdamState) -> None:
    """Apply one Adam update in place; raises TrainingDiverged on non-finite grads."""
    for d_weights, d_biases in grads:
        if not (np.all(np.isfinite(d_weights)) and np.all(np.isfinite(d_biases))):
            raise TrainingDiverged("non-finite gradient in optimizer step")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for layer, (gw, gb), (mw, mb), (vw, vb) in zip(net.layers, grads, state.m, state.v):
        for param, g, m, v in ((layer.weights, gw, mw, vw), (layer.biases, gb, mb, vb)):
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * np.square(g)
            param -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)


def save_network(net: Network, path) -> None:
    """Write parameters as a text record: dims/activations header, then
    row-major weights and biases per layer, full float64 precision."""
    dims = [net.input_dim] + [l.out_dim for l in net.layers]
    lines = [
        "dims " + " ".join(str(d) for d in dims),
        "activations " + " ".join(l.activation for l in net.layers),
    ]
    for k, layer in enumerate(net.layers):
        lines.append(f"layer {k} weights")
        for row in layer.weights:
            lines.append(" ".join(repr(float(x)) for x in row))
        lines.append(f"layer {k} biases")
        lines.append(" ".join(repr(float(x)) for x in layer.biases))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_network(path) -> Network:
    """Read a network written by save_network (bit-exact round trip)."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("dims "):
        raise ValueError(f"{path}: not a network parameter file")
    dims = [int(tok) for tok in lines[0].split()[1:]]
    acts = lines[1].split()[1:]
    pos = 2
    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        if lines[pos] != f"layer {k} weights":
            raise ValueError(f"{path}: malformed layer {k} header")
        pos += 1
        weights = np.array(
            [[float(tok) for tok in lines[pos + r].split()] for r in range(fan_out)]
        )
        pos += fan_out
        if lines[pos] != f"layer {k} biases":
            raise ValueError(f"{path}: malformed layer {k} bias header")
        pos += 1
        biases = np.array([float(tok) for tok in lines[pos].split()])
        pos += 1
        if weights.shape != (fan_out, fan_in):
            raise ValueError(f"{path}: layer {k} weight shape mismatch")
        layers.append(DenseLayer(weights, biases, acts[k]))
    return Network(layers)
