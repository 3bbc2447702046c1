"""Event composition graphs: latent probability heads plus formula algebra.

An EventGraph declares a set of latent heads (each backed by its own small
network) and composed nodes whose probabilities are products, complements, or
weighted sums of head outputs.  Observed nodes carry per-sample labels during
training; aggregate nodes only ever receive population-rate targets.  The
formula algebra is deliberately closed and tiny so that its gradients can be
tested exhaustively.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GraphError


class Formula:
    """Base class for composition formulas over head outputs."""

    def evaluate(self, head_values: dict[str, np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    def backprop(
        self,
        head_values: dict[str, np.ndarray],
        upstream: np.ndarray,
        out_grads: dict[str, np.ndarray],
    ) -> None:
        """Accumulate d(loss)/d(head) into out_grads given upstream = d(loss)/d(self)."""
        raise NotImplementedError

    def head_names(self) -> set[str]:
        raise NotImplementedError


class HeadRef(Formula):
    """A direct reference to a latent head's output."""

    def __init__(self, name: str):
        self.name = name

    def evaluate(self, head_values):
        try:
            return head_values[self.name]
        except KeyError:
            raise GraphError(f"no value supplied for head {self.name!r}") from None

    def backprop(self, head_values, upstream, out_grads):
        out_grads[self.name] = out_grads[self.name] + upstream

    def head_names(self):
        return {self.name}

    def __repr__(self):
        return f"HeadRef({self.name!r})"


class Product(Formula):
    """Product of two or more sub-formulas."""

    def __init__(self, *terms: Formula):
        if len(terms) < 2:
            raise GraphError("Product needs at least two terms")
        self.terms = terms

    def evaluate(self, head_values):
        out = self.terms[0].evaluate(head_values)
        for term in self.terms[1:]:
            out = out * term.evaluate(head_values)
        return out

    def backprop(self, head_values, upstream, out_grads):
        values = [term.evaluate(head_values) for term in self.terms]
        for i, term in enumerate(self.terms):
            partial = upstream
            for j, value in enumerate(values):
                if j != i:
                    partial = partial * value
            term.backprop(head_values, partial, out_grads)

    def head_names(self):
        names = set()
        for term in self.terms:
            names |= term.head_names()
        return names

    def __repr__(self):
        return f"Product{self.terms!r}"


class Complement(Formula):
    """1 - p of a sub-formula."""

    def __init__(self, term: Formula):
        self.term = term

    def evaluate(self, head_values):
        return 1.0 - self.term.evaluate(head_values)

    def backprop(self, head_values, upstream, out_grads):
        self.term.backprop(head_values, -upstream, out_grads)

    def head_names(self):
        return self.term.head_names()

    def __repr__(self):
        return f"Complement({self.term!r})"


class WeightedSum(Formula):
    """Sum of sub-formulas with constant weights fixed at graph build time."""

    def __init__(self, *weighted_terms: tuple[float, Formula]):
        if not weighted_terms:
            raise GraphError("WeightedSum needs at least one term")
        self.weighted_terms = tuple((float(w), t) for w, t in weighted_terms)

    def evaluate(self, head_values):
        weight, term = self.weighted_terms[0]
        out = weight * term.evaluate(head_values)
        for weight, term in self.weighted_terms[1:]:
            out = out + weight * term.evaluate(head_values)
        return out

    def backprop(self, head_values, upstream, out_grads):
        for weight, term in self.weighted_terms:
            term.backprop(head_values, upstream * weight, out_grads)

    def head_names(self):
        names = set()
        for _, term in self.weighted_terms:
            names |= term.head_names()
        return names

    def __repr__(self):
        return f"WeightedSum{self.weighted_terms!r}"


@dataclass(frozen=True)
class LatentHead:
    """One latent probability head: name, its feature view, and its net shape."""

    name: str
    feature_subset: tuple[int, ...]
    layer_dims: tuple[int, ...]
    activations: tuple[str, ...]

    @classmethod
    def dense(cls, name: str, feature_subset, hidden=(3,)) -> "LatentHead":
        """Head with relu hidden layers and a single sigmoid output."""
        subset = tuple(int(i) for i in feature_subset)
        dims = (len(subset), *(int(h) for h in hidden), 1)
        acts = ("relu",) * len(hidden) + ("sigmoid",)
        return cls(name, subset, dims, acts)

    def __post_init__(self):
        if not self.feature_subset:
            raise GraphError(f"head {self.name!r} has an empty feature subset")
        if min(self.feature_subset) < 0:
            raise GraphError(f"head {self.name!r} has negative feature indices")
        if self.layer_dims[0] != len(self.feature_subset):
            raise GraphError(
                f"head {self.name!r}: input dim {self.layer_dims[0]} does not match "
                f"{len(self.feature_subset)} selected features"
            )


@dataclass(frozen=True)
class EventGraph:
    """Validated DAG of latent heads and composed nodes.

    observed_nodes map names to formulas for events with per-sample labels;
    aggregate_nodes are composed events that only ever have rate targets.
    Immutable after construction; evaluation is pure.
    """

    heads: tuple[LatentHead, ...]
    observed_nodes: dict[str, Formula]
    aggregate_nodes: dict[str, Formula] = field(default_factory=dict)

    def __post_init__(self):
        names = [h.name for h in self.heads]
        names += list(self.observed_nodes) + list(self.aggregate_nodes)
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise GraphError(f"duplicate names in graph: {sorted(dupes)}")
        declared = {h.name for h in self.heads}
        node_names = set(self.observed_nodes) | set(self.aggregate_nodes)
        for node, formula in self.nodes().items():
            refs = formula.head_names()
            if not refs:
                raise GraphError(f"node {node!r} references no head")
            for ref in refs - declared:
                if ref in node_names:
                    # Formulas compose heads only; node-to-node references (the
                    # one way to make a cycle) are rejected here.
                    raise GraphError(
                        f"node {node!r} references {ref!r}, which is a composed node; "
                        "formulas may only reference heads"
                    )
                raise GraphError(f"node {node!r} references undeclared head {ref!r}")

    def nodes(self) -> dict[str, Formula]:
        """Observed nodes followed by aggregate nodes, in declaration order."""
        return {**self.observed_nodes, **self.aggregate_nodes}

    def head(self, name: str) -> LatentHead:
        for h in self.heads:
            if h.name == name:
                return h
        raise GraphError(f"no head named {name!r}")

    @property
    def head_names(self) -> tuple[str, ...]:
        return tuple(h.name for h in self.heads)

    def variable_names(self) -> tuple[str, ...]:
        return self.head_names + tuple(self.nodes())

    def max_feature_index(self) -> int:
        return max(max(h.feature_subset) for h in self.heads)


def eval_graph(
    graph: EventGraph, head_values: dict[str, np.ndarray]
) -> dict[str, np.ndarray]:
    """Evaluate every composed node from per-sample head outputs."""
    lengths = {v.shape for v in head_values.values()}
    if len(lengths) > 1:
        raise GraphError(f"head vectors disagree in shape: {sorted(lengths)}")
    return {name: f.evaluate(head_values) for name, f in graph.nodes().items()}


def graph_backward(
    graph: EventGraph,
    head_values: dict[str, np.ndarray],
    node_grads: dict[str, np.ndarray],
) -> dict[str, np.ndarray]:
    """Route loss gradients on composed nodes back to each head (chain rule).

    Returns d(total loss)/d(head output) per head, as per-sample vectors.
    """
    all_nodes = graph.nodes()
    unknown = set(node_grads) - set(all_nodes)
    if unknown:
        raise GraphError(f"gradients supplied for unknown nodes: {sorted(unknown)}")
    n = len(next(iter(head_values.values())))
    grads = {name: np.zeros(n) for name in graph.head_names}
    # Fixed node order keeps float accumulation deterministic.
    for name, formula in all_nodes.items():
        if name in node_grads:
            formula.backprop(head_values, np.asarray(node_grads[name], dtype=np.float64), grads)
    return grads


@dataclass(frozen=True)
class ScaleDiagnostic:
    """Summary of estimated/true probability ratios for one variable.

    A near-constant ratio (small cv) with mean away from 1 is the signature of
    probabilities recovered correctly up to an unidentified constant scale.
    """

    mean_ratio: float
    cv: float
    n_used: int


def scale_diagnostic(
    estimated: np.ndarray, truth: np.ndarray, min_truth: float = 1e-6
) -> ScaleDiagnostic:
    """Mean and coefficient of variation of estimated/truth, where truth > min_truth."""
    estimated = np.asarray(estimated, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if estimated.shape != truth.shape:
        raise ValueError(f"shape mismatch: {estimated.shape} vs {truth.shape}")
    if estimated.size == 0:
        raise ValueError("empty input")
    keep = truth > min_truth
    if not keep.any():
        raise ValueError(f"no samples with truth > {min_truth}")
    ratio = estimated[keep] / truth[keep]
    mean = float(ratio.mean())
    cv = float(ratio.std() / mean) if mean != 0.0 else float("inf")
    return ScaleDiagnostic(mean_ratio=mean, cv=cv, n_used=int(keep.sum()))


# --- graph presets ---------------------------------------------------------


def product2_graph(
    feature_subsets=None, n_features: int = 4, hidden=(3,)
) -> EventGraph:
    """Two latent heads y1, y2 whose product is the observed event y.

    feature_subsets gives (subset_for_y1, subset_for_y2) when the covariate
    split is known; with None both heads see all n_features columns.
    """
    if feature_subsets is None:
        full = tuple(range(n_features))
        feature_subsets = (full, full)
    s1, s2 = feature_subsets
    heads = (
        LatentHead.dense("y1", s1, hidden),
        LatentHead.dense("y2", s2, hidden),
    )
    observed = {"y": Product(HeadRef("y1"), HeadRef("y2"))}
    return EventGraph(heads, observed)


def email_graph(n_features: int = 20, hidden=(70, 40, 20, 10)) -> EventGraph:
    """Send / open-given-send / click-given-open chain with open, click observed.

    Every head sees all features (the modeler does not know which features
    drive which event).
    """
    full = tuple(range(n_features))
    heads = (
        LatentHead.dense("send", full, hidden),
        LatentHead.dense("open_given_send", full, hidden),
        LatentHead.dense("click_given_open", full, hidden),
    )
    open_formula = Product(HeadRef("send"), HeadRef("open_given_send"))
    click_formula = Product(
        HeadRef("send"), HeadRef("open_given_send"), HeadRef("click_given_open")
    )
    return EventGraph(heads, {"open": open_formula, "click": click_formula})


def search_graph(n_features: int = 20, hidden=(70, 40, 20, 10)) -> EventGraph:
    """Search-ad DAG: ad click and organic click observed, five latent heads.

        ad_shown       = search * ad_shown_given_search
        ad_not_shown   = search * (1 - ad_shown_given_search)
        ad_click       = ad_shown * ad_click_given_ad_shown
        organic_click  = ad_shown * org_click_given_ad_shown
                       + ad_not_shown * org_click_given_no_ad_shown
    """
    full = tuple(range(n_features))
    heads = (
        LatentHead.dense("search", full, hidden),
        LatentHead.dense("ad_shown_given_search", full, hidden),
        LatentHead.dense("ad_click_given_ad_shown", full, hidden),
        LatentHead.dense("org_click_given_ad_shown", full, hidden),
        LatentHead.dense("org_click_given_no_ad_shown", full, hidden),
    )
    shown = Product(HeadRef("search"), HeadRef("ad_shown_given_search"))
    not_shown = Product(HeadRef("search"), Complement(HeadRef("ad_shown_given_search")))
    ad_click = Product(
        HeadRef("search"), HeadRef("ad_shown_given_search"), HeadRef("ad_click_given_ad_shown")
    )
    organic = WeightedSum(
        (1.0, Product(HeadRef("search"), HeadRef("ad_shown_given_search"),
                      HeadRef("org_click_given_ad_shown"))),
        (1.0, Product(HeadRef("search"), Complement(HeadRef("ad_shown_given_search")),
                      HeadRef("org_click_given_no_ad_shown"))),
    )
    observed = {"ad_click": ad_click, "organic_click": organic}
    aggregate = {"ad_shown": shown, "ad_not_shown": not_shown}
    return EventGraph(heads, observed, aggregate)


PRESETS = ("product2", "email_chain", "search_dag")


def preset_graph(name: str, **kwargs) -> EventGraph:
    """Build one of the named graph presets."""
    if name == "product2":
        return product2_graph(**kwargs)
    if name == "email_chain":
        return email_graph(**kwargs)
    if name == "search_dag":
        return search_graph(**kwargs)
    raise GraphError(f"unknown graph preset {name!r}; valid presets: {PRESETS}")


# --- config-file graph descriptions ---------------------------------------


def parse_formula(desc) -> Formula:
    """Parse the nested-dict formula form used in experiment config files.

    {"head": name} | {"product": [...]} | {"complement": {...}} |
    {"weighted_sum": [{"weight": w, "term": {...}}, ...]}
    """
    if not isinstance(desc, dict) or len(desc) != 1:
        raise GraphError(f"formula must be a single-key mapping, got {desc!r}")
    kind, body = next(iter(desc.items()))
    if kind == "head":
        if not isinstance(body, str):
            raise GraphError(f"head reference must be a name, got {body!r}")
        return HeadRef(body)
    if kind == "product":
        return Product(*(parse_formula(t) for t in body))
    if kind == "complement":
        return Complement(parse_formula(body))
    if kind == "weighted_sum":
        terms = []
        for entry in body:
            extra = set(entry) - {"weight", "term"}
            if extra:
                raise GraphError(f"unknown keys in weighted_sum term: {sorted(extra)}")
            terms.append((float(entry["weight"]), parse_formula(entry["term"])))
        return WeightedSum(*terms)
    raise GraphError(f"unknown formula kind {kind!r}")


def describe_formula(formula: Formula):
    """Inverse of parse_formula: dump a formula to the nested-dict form."""
    if isinstance(formula, HeadRef):
        return {"head": formula.name}
    if isinstance(formula, Product):
        return {"product": [describe_formula(t) for t in formula.terms]}
    if isinstance(formula, Complement):
        return {"complement": describe_formula(formula.term)}
    if isinstance(formula, WeightedSum):
        return {
            "weighted_sum": [
                {"weight": w, "term": describe_formula(t)}
                for w, t in formula.weighted_terms
            ]
        }
    raise GraphError(f"cannot describe formula {formula!r}")


def describe_graph(graph: EventGraph) -> dict:
    """Dump a graph to the dict form build_graph accepts.

    Heads must follow the dense-factory shape (relu hidden layers, sigmoid
    output), which is the only shape the dict form can express.
    """
    heads = []
    for head in graph.heads:
        expected = ("relu",) * (len(head.layer_dims) - 2) + ("sigmoid",)
        if head.activations != expected or head.layer_dims[-1] != 1:
            raise GraphError(
                f"head {head.name!r} does not follow the dense-factory shape"
            )
        heads.append(
            {
                "name": head.name,
                "features": list(head.feature_subset),
                "hidden": list(head.layer_dims[1:-1]),
            }
        )
    return {
        "heads": heads,
        "observed": {n: describe_formula(f) for n, f in graph.observed_nodes.items()},
        "aggregate": {n: describe_formula(f) for n, f in graph.aggregate_nodes.items()},
    }


def build_graph(description) -> EventGraph:
    """Build a graph from a preset name or a config-file description dict."""
    if isinstance(description, str):
        return preset_graph(description)
    if not isinstance(description, dict):
        raise GraphError(f"graph description must be a name or mapping, got {description!r}")
    extra = set(description) - {"heads", "observed", "aggregate"}
    if extra:
        raise GraphError(f"unknown keys in graph description: {sorted(extra)}")
    heads = []
    for entry in description.get("heads", []):
        extra = set(entry) - {"name", "features", "hidden"}
        if extra:
            raise GraphError(f"unknown keys in head description: {sorted(extra)}")
        heads.append(
            LatentHead.dense(entry["name"], entry["features"], tuple(entry.get("hidden", (3,))))
        )
    observed = {
        name: parse_formula(f) for name, f in description.get("observed", {}).items()
    }
    aggregate = {
        name: parse_formula(f) for name, f in description.get("aggregate", {}).items()
    }
    return EventGraph(tuple(heads), observed, aggregate)
