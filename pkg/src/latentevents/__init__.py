"""Recover per-sample probabilities of unobserved events from composites.

Observed events are often products or mixtures of latent components (an open
implies a send, an ad click implies the ad was shown).  This package trains
one small probability network per latent component so that their composition
matches the observed labels, optionally anchored by known population rates,
and ships the synthetic benchmarks that measure when the component
probabilities are recovered exactly versus only up to a constant scale.
"""

from .datagen import (
    SCENARIOS,
    Dataset,
    generate,
    hide_variable,
    load_dataset,
    save_dataset,
    true_aggregates,
)
from .errors import ConfigError, GraphError, TrainingDiverged
from .estimator import LatentEventEstimator
from .graph import (
    Complement,
    EventGraph,
    HeadRef,
    LatentHead,
    Product,
    WeightedSum,
    build_graph,
    email_graph,
    eval_graph,
    graph_backward,
    preset_graph,
    product2_graph,
    scale_diagnostic,
    search_graph,
)
from .losses import (
    LossReport,
    SmoothingState,
    aggregate_loss,
    bce_loss,
    smoothed_update,
    total_loss,
)
from .metrics import (
    VariableScore,
    consistency,
    format_table,
    mape,
    mse,
    read_report,
    write_report,
)
from .nn import (
    AdamState,
    DenseLayer,
    Network,
    init_network,
    load_network,
    optimizer_step,
    save_network,
    sigmoid,
)
from .trainer import (
    TrainConfig,
    TrainedModel,
    TrainHistory,
    evaluate_model,
    load_model,
    run_consistency,
    run_correctness,
    run_scenario_benchmark,
    save_model,
    scenario_graph,
    select_lam,
    train,
    train_strategy,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "Complement",
    "ConfigError",
    "Dataset",
    "DenseLayer",
    "EventGraph",
    "GraphError",
    "HeadRef",
    "LatentEventEstimator",
    "LatentHead",
    "LossReport",
    "Network",
    "Product",
    "SCENARIOS",
    "SmoothingState",
    "TrainConfig",
    "TrainHistory",
    "TrainedModel",
    "TrainingDiverged",
    "VariableScore",
    "WeightedSum",
    "aggregate_loss",
    "bce_loss",
    "build_graph",
    "consistency",
    "email_graph",
    "eval_graph",
    "evaluate_model",
    "format_table",
    "generate",
    "graph_backward",
    "hide_variable",
    "init_network",
    "load_dataset",
    "load_model",
    "load_network",
    "mape",
    "mse",
    "optimizer_step",
    "preset_graph",
    "product2_graph",
    "read_report",
    "run_consistency",
    "run_correctness",
    "run_scenario_benchmark",
    "save_dataset",
    "save_model",
    "save_network",
    "scale_diagnostic",
    "scenario_graph",
    "search_graph",
    "select_lam",
    "sigmoid",
    "smoothed_update",
    "total_loss",
    "train",
    "train_strategy",
    "true_aggregates",
    "write_report",
]
