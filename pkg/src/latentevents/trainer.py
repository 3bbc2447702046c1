"""Training loop for latent-head models plus the experiment drivers.

One shared loop covers all three strategies.  Plain cross-entropy is penalty
weight 0; the penalized strategy adds the weighted aggregate-rate penalty; the
smoothed strategy threads a SmoothingState through the batches.  Heads are
updated jointly each batch: loss gradients on composed nodes are routed back
through the formula algebra and combined with any gradient placed on the head
directly by the penalty.

Model selection is epoch-level: after each epoch the full validation split is
scored (cross-entropy plus the unsmoothed penalty at the configured weight)
and the parameters from the best epoch are restored at the end.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .datagen import SCENARIOS, Dataset, generate, hide_variable, true_aggregates
from .errors import ConfigError, TrainingDiverged
from .graph import (
    EventGraph,
    build_graph,
    describe_graph,
    eval_graph,
    graph_backward,
    preset_graph,
    product2_graph,
)
from .losses import SmoothingState, total_loss
from .metrics import VariableScore, consistency, score_variable
from .nn import (
    AdamState,
    Network,
    init_network,
    load_network,
    optimizer_step,
    save_network,
)

STRATEGIES = ("bcel", "aggl", "sagg")
LAM_GRID = (0.1, 1.0, 10.0, 100.0)
PRODUCT_SCENARIOS = ("IND_COV_KWN", "IND_COV_UNK", "PAR_OV_UNK", "COM_OV")


@dataclass(frozen=True)
class TrainConfig:
    """Strategy and optimization settings for one training run."""

    strategy: str = "bcel"
    lam: float = 0.0
    alpha: float = 0.8
    epochs: int = 50
    batch_size: int = 128
    learning_rate: float = 1e-3
    seed: int = 0
    target_split: str = "train"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(
                f"unknown strategy {self.strategy!r}; valid strategies: {STRATEGIES}"
            )
        if self.strategy == "bcel" and self.lam != 0.0:
            raise ConfigError("plain cross-entropy takes no penalty weight; leave lam at 0")
        if self.strategy != "bcel" and self.lam < 0.0:
            raise ConfigError(f"penalty weight must be non-negative, got {self.lam}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError(
                f"bad epochs/batch_size: {self.epochs}/{self.batch_size}"
            )
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"smoothing weight must be in (0, 1], got {self.alpha}")

    def make_smoothing(self) -> SmoothingState | None:
        return SmoothingState(self.alpha) if self.strategy == "sagg" else None


@dataclass
class TrainHistory:
    train_total: list[float] = field(default_factory=list)
    val_total: list[float] = field(default_factory=list)
    val_bce: list[float] = field(default_factory=list)
    val_penalty: list[float] = field(default_factory=list)
    best_epoch: int = -1
    final_smoothing: SmoothingState | None = None


@dataclass
class TrainedModel:
    """Trained head networks bound to their graph and training context."""

    graph: EventGraph
    networks: dict[str, Network]
    config: TrainConfig
    history: TrainHistory
    rate_targets: dict[str, float]

    def head_probs(self, features: np.ndarray) -> dict[str, np.ndarray]:
        out = {}
        for head in self.graph.heads:
            probs, _ = self.networks[head.name].forward(features[:, head.feature_subset])
            out[head.name] = probs
        return out

    def predict(self, features: np.ndarray) -> dict[str, np.ndarray]:
        """Per-sample probabilities for every head and composed node."""
        heads = self.head_probs(features)
        return {**heads, **eval_graph(self.graph, heads)}


def init_models(graph: EventGraph, seed: int) -> dict[str, Network]:
    """One network per head, each on its own child seed stream."""
    networks = {}
    for idx, head in enumerate(graph.heads):
        child = np.random.SeedSequence([seed, 0, idx])
        networks[head.name] = init_network(head.layer_dims, head.activations, seed=child)
    return networks


def _forward_heads(
    networks: dict[str, Network], graph: EventGraph, features: np.ndarray
) -> tuple[dict[str, np.ndarray], dict[str, object]]:
    values, caches = {}, {}
    for head in graph.heads:
        probs, cache = networks[head.name].forward(features[:, head.feature_subset])
        values[head.name] = probs
        caches[head.name] = cache
    return values, caches


def _batch_loss(
    graph: EventGraph,
    head_values: dict[str, np.ndarray],
    labels: dict[str, np.ndarray],
    rate_targets: dict[str, float],
    lam: float,
    smoothing: SmoothingState | None,
):
    """Loss report, per-head gradients.  Shared by training and validation."""
    probs = {**head_values, **eval_graph(graph, head_values)}
    report, grads = total_loss(probs, labels, rate_targets, lam, smoothing)
    node_grads = {k: v for k, v in grads.items() if k in graph.nodes()}
    head_grads = graph_backward(graph, head_values, node_grads)
    for name in graph.head_names:
        if name in grads:
            head_grads[name] = head_grads[name] + grads[name]
    return report, head_grads


def _observed_labels(graph: EventGraph, dataset: Dataset) -> list[str]:
    observed = sorted(set(graph.observed_nodes) & set(dataset.labels))
    if not observed:
        raise ConfigError(
            "no observed node has labels in this dataset; nothing to supervise"
        )
    return observed


def train(
    dataset: Dataset,
    graph: EventGraph,
    config: TrainConfig,
    rate_targets: dict[str, float] | None = None,
) -> TrainedModel:
    """Fit all heads jointly on the train split, select on the val split.

    rate_targets defaults to the dataset's aggregate rates on the configured
    target split.  Targets are supplied even for the plain strategy so the
    penalty can be reported; it only steers training when lam is nonzero.
    """
    if graph.max_feature_index() >= dataset.n_features:
        raise ConfigError(
            f"graph expects feature index {graph.max_feature_index()} but data "
            f"has {dataset.n_features} features"
        )
    observed = _observed_labels(graph, dataset)
    if rate_targets is None:
        rate_targets = true_aggregates(dataset, config.target_split)
    missing = set(rate_targets) - set(graph.variable_names())
    if missing:
        raise ConfigError(f"rate targets for unknown variables: {sorted(missing)}")

    networks = init_models(graph, config.seed)
    adam = {
        name: AdamState(net, learning_rate=config.learning_rate)
        for name, net in networks.items()
    }
    smoothing = config.make_smoothing()
    history = TrainHistory()

    train_view = dataset.view("train")
    val_view = dataset.view("val")
    val_labels = {name: val_view.labels[name] for name in observed}
    n_train = train_view.features.shape[0]

    best_val = np.inf
    best_params = {name: net.get_parameters() for name, net in networks.items()}

    for epoch in range(config.epochs):
        order = np.random.default_rng(
            np.random.SeedSequence([config.seed, 1, epoch])
        ).permutation(n_train)
        batch_totals = []
        for start in range(0, n_train, config.batch_size):
            idx = order[start : start + config.batch_size]
            head_values, caches = _forward_heads(
                networks, graph, train_view.features[idx]
            )
            labels = {name: train_view.labels[name][idx] for name in observed}
            report, head_grads = _batch_loss(
                graph, head_values, labels, rate_targets, config.lam, smoothing
            )
            batch_totals.append(report.total)
            for head in graph.heads:
                grads = networks[head.name].backward(
                    caches[head.name], head_grads[head.name]
                )
                optimizer_step(networks[head.name], grads, adam[head.name])

        val_values, _ = _forward_heads(networks, graph, val_view.features)
        val_report, _ = _batch_loss(
            graph, val_values, val_labels, rate_targets, config.lam, smoothing=None
        )
        history.train_total.append(float(np.mean(batch_totals)))
        history.val_total.append(val_report.total)
        history.val_bce.append(val_report.bce)
        history.val_penalty.append(val_report.aggregate_raw)
        if val_report.total < best_val:
            best_val = val_report.total
            history.best_epoch = epoch
            best_params = {name: net.get_parameters() for name, net in networks.items()}

    history.final_smoothing = smoothing
    for name, net in networks.items():
        net.set_parameters(best_params[name])
    return TrainedModel(graph, networks, config, history, dict(rate_targets))


def select_lam(
    dataset: Dataset,
    graph: EventGraph,
    config: TrainConfig,
    grid: tuple[float, ...] = LAM_GRID,
    rate_targets: dict[str, float] | None = None,
) -> tuple[TrainedModel, dict[float, float]]:
    """Train once per candidate penalty weight; keep the best validation total.

    Each candidate is scored by its own best-epoch validation total loss
    (cross-entropy plus its weighted penalty).  First candidate wins ties.
    Returns the winning model and each candidate's score.
    """
    if config.strategy == "bcel":
        raise ConfigError("plain cross-entropy has no penalty weight to select")
    scores: dict[float, float] = {}
    best_model = None
    best_score = np.inf
    for lam in grid:
        model = train(dataset, graph, replace(config, lam=lam), rate_targets)
        history = model.history
        score = history.val_total[history.best_epoch] if history.val_total else np.inf
        scores[lam] = score
        if best_model is None or score < best_score:
            best_score = score
            best_model = model
    return best_model, scores


# --- persistence -----------------------------------------------------------


def save_model(model: TrainedModel, directory) -> None:
    """Write a trained model as one manifest plus one file per head network."""
    os.makedirs(directory, exist_ok=True)
    manifest = {
        "graph": describe_graph(model.graph),
        "config": asdict(model.config),
        "history": asdict(model.history),
        "rate_targets": model.rate_targets,
        "heads": list(model.graph.head_names),
    }
    with open(os.path.join(directory, "model.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name in model.graph.head_names:
        save_network(model.networks[name], os.path.join(directory, f"head_{name}.txt"))


def load_model(directory) -> TrainedModel:
    with open(os.path.join(directory, "model.json")) as fh:
        manifest = json.load(fh)
    graph = build_graph(manifest["graph"])
    networks = {
        name: load_network(os.path.join(directory, f"head_{name}.txt"))
        for name in manifest["heads"]
    }
    config = TrainConfig(**manifest["config"])
    history_fields = dict(manifest["history"])
    smoothing = history_fields.get("final_smoothing")
    if smoothing is not None:
        history_fields["final_smoothing"] = SmoothingState(**smoothing)
    history = TrainHistory(**history_fields)
    return TrainedModel(graph, networks, config, history, manifest["rate_targets"])


# --- experiment drivers ----------------------------------------------------


def scenario_graph(scenario: str, hidden=None) -> EventGraph:
    """The model graph a scenario is benchmarked with.

    Known-covariate scenarios give each head its generating feature subset;
    all others give every head the full feature vector.
    """
    try:
        spec = SCENARIOS[scenario]
    except KeyError:
        raise ConfigError(
            f"unknown scenario {scenario!r}; valid scenarios: {sorted(SCENARIOS)}"
        ) from None
    if spec.graph_preset == "product2":
        subsets = None
        if spec.known_subsets:
            subsets = (spec.true_subsets["y1"], spec.true_subsets["y2"])
        return product2_graph(subsets, spec.n_features, hidden or (3,))
    if hidden is None:
        return preset_graph(spec.graph_preset, n_features=spec.n_features)
    return preset_graph(spec.graph_preset, n_features=spec.n_features, hidden=hidden)


def variable_role(graph: EventGraph, dataset: Dataset, name: str) -> str:
    if name in graph.observed_nodes and name in dataset.labels:
        return "observed"
    if name in graph.aggregate_nodes:
        return "aggregate"
    return "unobserved"


def evaluate_model(
    model: TrainedModel, dataset: Dataset, split: str = "test"
) -> list[VariableScore]:
    """MSE and MAPE against ground truth for every variable with truth."""
    view = dataset.view(split)
    predictions = model.predict(view.features)
    lam = None if model.config.strategy == "bcel" else model.config.lam
    rows: list[VariableScore] = []
    for name in sorted(dataset.true_probs):
        if name not in predictions:
            continue
        rows.extend(
            score_variable(
                name,
                variable_role(model.graph, dataset, name),
                model.config.strategy,
                lam,
                predictions[name],
                view.true_probs[name],
            )
        )
    return rows


def train_strategy(
    dataset: Dataset,
    graph: EventGraph,
    strategy: str,
    config: TrainConfig,
    lam_grid: tuple[float, ...] = LAM_GRID,
    rate_targets: dict[str, float] | None = None,
) -> TrainedModel:
    """Train one strategy, running the penalty-weight search when it applies.

    An explicit positive lam in the config skips the search.
    """
    config = replace(config, strategy=strategy, lam=0.0 if strategy == "bcel" else config.lam)
    if strategy == "bcel" or config.lam > 0.0:
        return train(dataset, graph, config, rate_targets)
    model, _ = select_lam(dataset, graph, config, lam_grid, rate_targets)
    return model


def run_scenario_benchmark(
    scenarios=PRODUCT_SCENARIOS,
    strategies=STRATEGIES,
    n_samples: int = 20000,
    data_seed: int = 0,
    config: TrainConfig = TrainConfig(),
    prob_cap: float | None = None,
    lam_grid: tuple[float, ...] = LAM_GRID,
    log=None,
) -> list[VariableScore]:
    """Scenario-by-strategy benchmark grid; returns test-split score rows."""
    rows: list[VariableScore] = []
    for scenario in scenarios:
        cap = prob_cap if SCENARIOS[scenario].graph_preset == "product2" else None
        dataset = generate(scenario, n_samples, data_seed, cap)
        graph = scenario_graph(scenario)
        for strategy in strategies:
            start = time.monotonic()
            try:
                model = train_strategy(dataset, graph, strategy, config, lam_grid)
            except TrainingDiverged as exc:
                raise TrainingDiverged(f"[{scenario}/{strategy}] {exc}") from exc
            scored = evaluate_model(model, dataset)
            for row in scored:
                rows.append(
                    VariableScore(
                        f"{scenario}/{row.variable}", row.role, row.strategy,
                        row.lam, row.metric, row.value, row.unit,
                    )
                )
            if log is not None:
                print(
                    f"{scenario} {strategy}: best epoch "
                    f"{model.history.best_epoch}, lam "
                    f"{model.config.lam:g}, {time.monotonic() - start:.1f}s",
                    file=log,
                )
    return rows


def run_correctness(
    strategies=("bcel", "aggl"),
    n_samples: int = 20000,
    data_seed: int = 0,
    config: TrainConfig = TrainConfig(),
    lam_grid: tuple[float, ...] = LAM_GRID,
    log=None,
) -> list[VariableScore]:
    """Hide the send labels in the email chain and try to recover them.

    Open and click labels alone pin down only the products send*open_given_send
    and onward, so plain cross-entropy can drift to a rescaled solution; the
    known population send rate is the extra anchor the penalized strategies
    use.  Returns test-split scores for every variable under each strategy.
    """
    dataset = hide_variable(generate("EMAIL_CHAIN", n_samples, data_seed), "send")
    graph = scenario_graph("EMAIL_CHAIN")
    rows: list[VariableScore] = []
    for strategy in strategies:
        start = time.monotonic()
        model = train_strategy(dataset, graph, strategy, config, lam_grid)
        rows.extend(evaluate_model(model, dataset))
        if log is not None:
            print(
                f"EMAIL_CHAIN(send hidden) {strategy}: best epoch "
                f"{model.history.best_epoch}, lam {model.config.lam:g}, "
                f"{time.monotonic() - start:.1f}s",
                file=log,
            )
    return rows


def run_consistency(
    scenario: str = "SEARCH_DAG",
    strategies=("bcel", "aggl"),
    n_samples: int = 20000,
    data_seed: int = 0,
    model_seeds: tuple[int, int] = (0, 1),
    config: TrainConfig = TrainConfig(),
    lam_grid: tuple[float, ...] = LAM_GRID,
) -> list[VariableScore]:
    """Cross-seed prediction agreement per variable for each strategy.

    Two models differing only in training seed are compared on the test split
    at the 0.5 threshold; identical seeds must agree exactly.
    """
    dataset = generate(scenario, n_samples, data_seed)
    graph = scenario_graph(scenario)
    test = dataset.view("test")
    rows: list[VariableScore] = []
    for strategy in strategies:
        pair = []
        for seed in model_seeds:
            model = train_strategy(
                dataset, graph, strategy, replace(config, seed=seed), lam_grid
            )
            pair.append(model)
        pred_a = pair[0].predict(test.features)
        pred_b = pair[1].predict(test.features)
        lam = None if strategy == "bcel" else pair[0].config.lam
        for name in sorted(dataset.true_probs):
            rows.append(
                VariableScore(
                    f"{scenario}/{name}",
                    variable_role(graph, dataset, name),
                    strategy,
                    lam,
                    "consistency",
                    consistency(pred_a[name], pred_b[name]),
                    "fraction",
                )
            )
    return rows
