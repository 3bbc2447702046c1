"""Synthetic scenario generation with known per-sample ground truth.

Each scenario draws Gaussian features, builds true probability functions for
the latent component events, composes the true probabilities of the composite
events exactly per the event graph, and then samples every labelled variable
as an independent Bernoulli trial of its own true probability.  All
randomness flows through one seeded generator in a fixed draw order, so a
given (scenario, n_samples, seed, options) tuple always reproduces the same
bytes.

Two-component scenarios place each probability on a 0.05..0.95 ramp scaled by
prob_cap; at prob_cap = 1 the ramp is steepened so both components saturate
near 1 on a small share of samples, which is the regime where the composite
alone pins down the absolute scale.  The email and search scenarios instead
calibrate a bias by bisection so each event hits a preset population rate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .nn import sigmoid

SPLIT_FRACTIONS = {"train": 0.55, "val": 0.20, "test": 0.25}
MIN_PROB_STD = 0.05
SATURATION_LEVEL = 0.99
MIN_JOINT_SATURATION = 1e-3
MAX_REDRAWS = 1000


@dataclass(frozen=True)
class ScenarioSpec:
    """How one named scenario generates data and which graph models it."""

    name: str
    n_features: int
    graph_preset: str
    true_subsets: dict[str, tuple[int, ...]] | None  # None: random subsets per head
    known_subsets: bool  # expose the generating subsets to the model graph
    rates: dict[str, float] | None = None  # bisection-calibrated event rates
    default_prob_cap: float | None = None


SCENARIOS: dict[str, ScenarioSpec] = {
    "IND_COV_KWN": ScenarioSpec(
        "IND_COV_KWN", 4, "product2",
        {"y1": (0, 1), "y2": (2, 3)}, known_subsets=True, default_prob_cap=0.6,
    ),
    "IND_COV_UNK": ScenarioSpec(
        "IND_COV_UNK", 4, "product2",
        {"y1": (0, 1), "y2": (2, 3)}, known_subsets=False, default_prob_cap=0.6,
    ),
    "PAR_OV_UNK": ScenarioSpec(
        "PAR_OV_UNK", 4, "product2",
        {"y1": (0, 1, 2), "y2": (1, 2, 3)}, known_subsets=False, default_prob_cap=0.6,
    ),
    "COM_OV": ScenarioSpec(
        "COM_OV", 4, "product2",
        {"y1": (0, 1, 2, 3), "y2": (0, 1, 2, 3)}, known_subsets=False,
        default_prob_cap=0.6,
    ),
    "EMAIL_CHAIN": ScenarioSpec(
        "EMAIL_CHAIN", 20, "email_chain", None, known_subsets=False,
        rates={"send": 0.22, "open_given_send": 0.7, "click_given_open": 0.07},
    ),
    "SEARCH_DAG": ScenarioSpec(
        "SEARCH_DAG", 20, "search_dag", None, known_subsets=False,
        rates={
            "search": 0.3,
            "ad_shown_given_search": 0.3,
            "ad_click_given_ad_shown": 0.1,
            "org_click_given_ad_shown": 0.15,
            "org_click_given_no_ad_shown": 0.08,
        },
    ),
}


@dataclass(frozen=True)
class SplitView:
    features: np.ndarray
    labels: dict[str, np.ndarray]
    true_probs: dict[str, np.ndarray]


@dataclass(frozen=True)
class Dataset:
    """Generated samples plus ground truth and fixed split indices."""

    scenario: str
    features: np.ndarray
    labels: dict[str, np.ndarray]
    true_probs: dict[str, np.ndarray]
    splits: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def split_indices(self, split: str) -> np.ndarray:
        try:
            return self.splits[split]
        except KeyError:
            raise ConfigError(
                f"unknown split {split!r}; have {sorted(self.splits)}"
            ) from None

    def view(self, split: str) -> SplitView:
        idx = self.split_indices(split)
        return SplitView(
            features=self.features[idx],
            labels={k: v[idx] for k, v in self.labels.items()},
            true_probs={k: v[idx] for k, v in self.true_probs.items()},
        )


def hide_variable(dataset: Dataset, name: str) -> Dataset:
    """Drop one variable's labels, keeping its ground truth for evaluation."""
    if name not in dataset.labels:
        raise ConfigError(
            f"no labels for {name!r} to hide; labelled variables: {sorted(dataset.labels)}"
        )
    labels = {k: v for k, v in dataset.labels.items() if k != name}
    return Dataset(
        dataset.scenario, dataset.features, labels, dataset.true_probs,
        dataset.splits, dataset.meta,
    )


def true_aggregates(dataset: Dataset, split: str = "train") -> dict[str, float]:
    """Population-rate targets per variable.

    Labelled variables use the empirical label rate on the split, mirroring
    rates read off an aggregate report.  Variables without labels (conditional
    components) fall back to the mean of their true probabilities.  split may
    be "all" for every sample.
    """
    if split == "all":
        idx = np.arange(dataset.n_samples)
    else:
        idx = dataset.split_indices(split)
    out = {}
    for name in sorted(set(dataset.true_probs) | set(dataset.labels)):
        if name in dataset.labels:
            out[name] = float(np.mean(dataset.labels[name][idx]))
        else:
            out[name] = float(np.mean(dataset.true_probs[name][idx]))
    return out


def _make_splits(n: int) -> dict[str, np.ndarray]:
    train_end = int(n * SPLIT_FRACTIONS["train"])
    val_end = int(n * (SPLIT_FRACTIONS["train"] + SPLIT_FRACTIONS["val"]))
    return {
        "train": np.arange(0, train_end),
        "val": np.arange(train_end, val_end),
        "test": np.arange(val_end, n),
    }


def _feature_matrix(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    scales = np.linspace(1.0, 5.0, d)
    return rng.normal(0.0, 1.0, size=(n, d)) * scales


def _ramp_probs(scores: np.ndarray, prob_cap: float, gain: float) -> np.ndarray:
    return prob_cap * (0.05 + 0.95 * sigmoid(gain * scores))


def _draw_labels(
    rng: np.random.Generator,
    true_probs: dict[str, np.ndarray],
    label_order: tuple[str, ...],
) -> dict[str, np.ndarray]:
    """Independent Bernoulli trial per labelled variable, in the given order."""
    n = len(true_probs[label_order[0]])
    return {
        name: (rng.uniform(0.0, 1.0, n) < true_probs[name]).astype(np.float64)
        for name in label_order
    }


def _generate_product2(spec: ScenarioSpec, n: int, seed: int, prob_cap: float) -> Dataset:
    if not 0.0 < prob_cap <= 1.0:
        raise ConfigError(f"prob_cap must be in (0, 1], got {prob_cap}")
    rng = np.random.default_rng(seed)
    features = _feature_matrix(rng, n, spec.n_features)
    splits = _make_splits(n)
    test_idx = splits["test"]
    gain = 4.0 if prob_cap >= 1.0 else 1.0
    head_names = ("y1", "y2")
    for attempt in range(MAX_REDRAWS):
        probs = {}
        weights = {}
        ok = True
        for name in head_names:
            subset = spec.true_subsets[name]
            w = rng.uniform(-1.0, 1.0, size=len(subset))
            p = _ramp_probs(features[:, subset] @ w, prob_cap, gain)
            if float(p[test_idx].std()) < MIN_PROB_STD:
                ok = False
                break
            probs[name] = p
            weights[name] = w
        if ok and prob_cap >= 1.0:
            joint = np.ones(len(test_idx), dtype=bool)
            for name in head_names:
                joint &= probs[name][test_idx] > SATURATION_LEVEL
            if float(joint.mean()) < MIN_JOINT_SATURATION:
                ok = False
        if ok:
            break
    else:
        raise ConfigError(
            f"could not draw suitable weights after {MAX_REDRAWS} attempts"
        )
    true_probs = {**probs, "y": probs["y1"] * probs["y2"]}
    labels = _draw_labels(rng, true_probs, ("y1", "y2", "y"))
    meta = {
        "scenario": spec.name,
        "n_samples": n,
        "seed": seed,
        "prob_cap": prob_cap,
        "gain": gain,
        "redraws": attempt,
        "true_subsets": {k: list(v) for k, v in spec.true_subsets.items()},
        "true_weights": {k: [float(x) for x in v] for k, v in weights.items()},
    }
    return Dataset(spec.name, features, labels, true_probs, splits, meta)


def _calibrate_bias(scores: np.ndarray, rate: float) -> float:
    """Bias b with mean(sigmoid(scores + b)) == rate, found by bisection."""
    lo, hi = -30.0, 30.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(np.mean(sigmoid(scores + mid))) < rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _calibrated_heads(
    rng: np.random.Generator,
    features: np.ndarray,
    rates: dict[str, float],
    head_order: tuple[str, ...],
    subset_size: int = 8,
) -> tuple[dict[str, np.ndarray], dict]:
    """True probability per head: random feature subset, unit-variance score,
    bias calibrated so the mean probability hits the requested rate."""
    d = features.shape[1]
    probs = {}
    meta = {"true_subsets": {}, "true_weights": {}, "biases": {}}
    for name in head_order:
        subset = np.sort(rng.choice(d, size=subset_size, replace=False))
        w = rng.uniform(-1.0, 1.0, size=subset_size)
        raw = features[:, subset] @ w
        scores = raw / float(raw.std())
        bias = _calibrate_bias(scores, rates[name])
        probs[name] = sigmoid(scores + bias)
        meta["true_subsets"][name] = [int(i) for i in subset]
        meta["true_weights"][name] = [float(x) for x in w]
        meta["biases"][name] = bias
    return probs, meta


def _generate_email(spec: ScenarioSpec, n: int, seed: int) -> Dataset:
    rng = np.random.default_rng(seed)
    features = _feature_matrix(rng, n, spec.n_features)
    order = ("send", "open_given_send", "click_given_open")
    probs, head_meta = _calibrated_heads(rng, features, spec.rates, order)
    true_probs = {
        **probs,
        "open": probs["send"] * probs["open_given_send"],
        "click": probs["send"] * probs["open_given_send"] * probs["click_given_open"],
    }
    labels = _draw_labels(rng, true_probs, ("send", "open", "click"))
    meta = {"scenario": spec.name, "n_samples": n, "seed": seed,
            "rates": dict(spec.rates), **head_meta}
    return Dataset(spec.name, features, labels, true_probs, _make_splits(n), meta)


def _generate_search(spec: ScenarioSpec, n: int, seed: int) -> Dataset:
    rng = np.random.default_rng(seed)
    features = _feature_matrix(rng, n, spec.n_features)
    order = (
        "search", "ad_shown_given_search", "ad_click_given_ad_shown",
        "org_click_given_ad_shown", "org_click_given_no_ad_shown",
    )
    probs, head_meta = _calibrated_heads(rng, features, spec.rates, order)
    p_search = probs["search"]
    p_shown_given = probs["ad_shown_given_search"]
    true_probs = {
        **probs,
        "ad_shown": p_search * p_shown_given,
        "ad_click": p_search * p_shown_given * probs["ad_click_given_ad_shown"],
        "organic_click": p_search * p_shown_given * probs["org_click_given_ad_shown"]
        + p_search * (1.0 - p_shown_given) * probs["org_click_given_no_ad_shown"],
    }
    labels = _draw_labels(
        rng, true_probs, ("search", "ad_shown", "ad_click", "organic_click")
    )
    meta = {"scenario": spec.name, "n_samples": n, "seed": seed,
            "rates": dict(spec.rates), **head_meta}
    return Dataset(spec.name, features, labels, true_probs, _make_splits(n), meta)


def generate(
    scenario: str, n_samples: int = 20000, seed: int = 0,
    prob_cap: float | None = None,
) -> Dataset:
    """Generate one scenario's dataset.

    prob_cap applies only to the two-component scenarios; None takes the
    scenario default (0.6).  prob_cap = 1 switches on the saturating regime.
    """
    try:
        spec = SCENARIOS[scenario]
    except KeyError:
        raise ConfigError(
            f"unknown scenario {scenario!r}; valid scenarios: {sorted(SCENARIOS)}"
        ) from None
    if n_samples < 100:
        raise ConfigError(f"n_samples must be at least 100, got {n_samples}")
    if spec.graph_preset == "product2":
        cap = spec.default_prob_cap if prob_cap is None else float(prob_cap)
        return _generate_product2(spec, n_samples, seed, cap)
    if prob_cap is not None:
        raise ConfigError(f"prob_cap does not apply to scenario {scenario!r}")
    if spec.graph_preset == "email_chain":
        return _generate_email(spec, n_samples, seed)
    return _generate_search(spec, n_samples, seed)


# --- on-disk format --------------------------------------------------------


def _is_feature_column(name: str) -> bool:
    return name.startswith("x") and name[1:].isdigit()


def save_dataset(dataset: Dataset, csv_path: str) -> None:
    """Write samples as CSV plus a JSON sidecar (same path + '.meta.json').

    Columns: x0..x{d-1}, one column per observed label, then one per true
    probability prefixed p_.  Floats are written with repr, which round-trips
    float64 exactly, so a save/load cycle reproduces the dataset bit for bit.
    """
    label_names = sorted(dataset.labels)
    for name in label_names:
        if _is_feature_column(name) or name.startswith("p_"):
            raise ConfigError(f"label name {name!r} collides with a column prefix")
    true_names = sorted(dataset.true_probs)
    columns = (
        [f"x{i}" for i in range(dataset.n_features)]
        + label_names
        + [f"p_{k}" for k in true_names]
    )
    with open(csv_path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for i in range(dataset.n_samples):
            parts = [repr(float(v)) for v in dataset.features[i]]
            parts += [repr(float(dataset.labels[k][i])) for k in label_names]
            parts += [repr(float(dataset.true_probs[k][i])) for k in true_names]
            fh.write(",".join(parts) + "\n")
    sidecar = {
        "scenario": dataset.scenario,
        "splits": {k: [int(i) for i in v] for k, v in dataset.splits.items()},
        "meta": dataset.meta,
    }
    with open(csv_path + ".meta.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(csv_path: str) -> Dataset:
    data = np.genfromtxt(csv_path, delimiter=",", names=True, dtype=np.float64)
    columns = list(data.dtype.names)
    feature_columns = sorted(
        (c for c in columns if _is_feature_column(c)), key=lambda c: int(c[1:])
    )
    features = np.column_stack([data[c] for c in feature_columns])
    labels = {
        c: np.ascontiguousarray(data[c])
        for c in columns
        if not _is_feature_column(c) and not c.startswith("p_")
    }
    true_probs = {
        c[len("p_"):]: np.ascontiguousarray(data[c])
        for c in columns
        if c.startswith("p_")
    }
    with open(csv_path + ".meta.json") as fh:
        sidecar = json.load(fh)
    splits = {k: np.asarray(v, dtype=np.int64) for k, v in sidecar["splits"].items()}
    return Dataset(
        sidecar["scenario"], features, labels, true_probs, splits, sidecar["meta"]
    )
