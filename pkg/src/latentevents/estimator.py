"""Estimator-style front end for fitting latent heads to labelled arrays.

Wraps the training loop in the familiar fit/predict shape for use outside the
synthetic benchmark pipeline: X is a feature matrix, y maps observed node
names to 0/1 label vectors, and known population rates for latent variables
enter through rate_targets.  Heads, composition, and net sizes come from the
graph argument (a preset name, a description dict, or an EventGraph).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .datagen import Dataset
from .errors import ConfigError
from .graph import EventGraph, build_graph
from .trainer import TrainConfig, train_strategy


class LatentEventEstimator(BaseEstimator):
    """Fit per-head probability networks from composite-event labels.

    Parameters mirror TrainConfig; lam=0 with a penalized strategy triggers
    the penalty-weight grid search.  val_fraction of the rows (chosen by a
    seeded shuffle) is held out for epoch selection.
    """

    def __init__(
        self,
        graph="product2",
        strategy: str = "aggl",
        lam: float = 0.0,
        alpha: float = 0.8,
        epochs: int = 50,
        batch_size: int = 128,
        learning_rate: float = 1e-3,
        seed: int = 0,
        val_fraction: float = 0.2,
        rate_targets: dict | None = None,
    ):
        self.graph = graph
        self.strategy = strategy
        self.lam = lam
        self.alpha = alpha
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.val_fraction = val_fraction
        self.rate_targets = rate_targets

    def _build_graph(self) -> EventGraph:
        if isinstance(self.graph, EventGraph):
            return self.graph
        return build_graph(self.graph)

    def fit(self, X, y):
        """Fit on features X and a dict of observed-node label vectors y."""
        X = check_array(X, dtype=np.float64)
        if not isinstance(y, dict) or not y:
            raise ConfigError(
                "y must be a non-empty dict mapping observed node names to 0/1 vectors"
            )
        n = X.shape[0]
        labels = {}
        for name, values in y.items():
            values = np.asarray(values, dtype=np.float64).ravel()
            if values.shape[0] != n:
                raise ConfigError(
                    f"labels for {name!r} have length {values.shape[0]}, expected {n}"
                )
            if not np.isin(values, (0.0, 1.0)).all():
                raise ConfigError(f"labels for {name!r} are not 0/1")
            labels[name] = values

        graph = self._build_graph()
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        n_val = int(round(self.val_fraction * n))
        if n_val < 1 or n - n_val < 1:
            raise ConfigError(f"cannot split {n} rows at val_fraction {self.val_fraction}")
        perm = np.random.default_rng(
            np.random.SeedSequence([int(self.seed), 2])
        ).permutation(n)
        splits = {"train": perm[n_val:], "val": perm[:n_val]}

        targets = {
            name: float(np.mean(values[splits["train"]]))
            for name, values in labels.items()
        }
        if self.rate_targets:
            targets.update({k: float(v) for k, v in self.rate_targets.items()})

        dataset = Dataset("custom", X, labels, {}, splits)
        config = TrainConfig(
            strategy=self.strategy,
            lam=0.0 if self.strategy == "bcel" else float(self.lam),
            alpha=self.alpha,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
        )
        self.model_ = train_strategy(
            dataset, graph, self.strategy, config, rate_targets=targets
        )
        self.n_features_in_ = X.shape[1]
        self.variable_names_ = list(self.model_.graph.variable_names())
        return self

    def _checked(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ConfigError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return X

    def predict_proba(self, X) -> dict[str, np.ndarray]:
        """Per-sample probabilities for every head and composed node."""
        X = self._checked(X)
        return self.model_.predict(X)

    def predict(self, X) -> dict[str, np.ndarray]:
        """0/1 event indicators; positive means probability strictly above 0.5."""
        probs = self.predict_proba(X)
        return {name: (p > 0.5).astype(np.int64) for name, p in probs.items()}

    def transform(self, X) -> np.ndarray:
        """Latent head probabilities as columns, in graph head order."""
        X = self._checked(X)
        probs = self.model_.head_probs(X)
        return np.column_stack([probs[name] for name in self.model_.graph.head_names])
