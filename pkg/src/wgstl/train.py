"""Two-step learning of weighted graph-temporal formulas.

Step 1 trains a network whose undetermined operators carry a continuous
selection coefficient ``b`` (initialized at 0); the sign of each learned
coefficient picks the operator (``b >= 0``: always / forall). Step 2 trains
fresh predicate and weight parameters on the hardened structure and keeps
the parameters with the lowest full training loss seen at an epoch end.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Mapping

import numpy as np

from .engine import ParamStore, backward, forward
from .graph import Dataset, Graph, Sample, build_graph
from .logic import (GraphOp, Node, Temporal, flexible_slots, harden, parse_structure, to_text,
                    walk)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
EXP_CAP = 700.0


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    eta: float = 1.0
    sigma: float = 1.0
    learning_rate: float = 0.05
    batch_size: int = 32
    epochs: int = 500
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_init: float = 0.5
    coef_scale: float = 0.1

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown training option(s): {sorted(unknown)}")
        return cls(**d)


def _margins(r, labels, eta):
    r = np.asarray(r, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if r.shape != labels.shape:
        raise ValueError(f"{r.size} robustness values but {labels.size} labels")
    if not eta > 0:
        raise ValueError("eta must be positive")
    return -eta * labels * r


def loss(r, labels, eta: float = 1.0) -> float:
    """Exponential margin loss ``sum_i exp(-eta * l_i * r_i)``."""
    z = _margins(r, labels, eta)
    if np.any(z > EXP_CAP):
        log.warning("loss exponent saturated at %g for %d sample(s)", EXP_CAP, int((z > EXP_CAP).sum()))
    return float(np.exp(np.minimum(z, EXP_CAP)).sum())


def loss_grad(r, labels, eta: float = 1.0) -> tuple[float, np.ndarray]:
    z = _margins(r, labels, eta)
    e = np.exp(np.minimum(z, EXP_CAP))
    return float(e.sum()), -eta * np.asarray(labels, dtype=float) * e


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_update(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
                state: AdamState, config: TrainConfig) -> tuple[dict, AdamState]:
    """One bias-corrected Adam step; returns new arrays and the advanced state."""
    missing = set(grads) - set(params)
    if missing:
        raise KeyError(f"gradients for unknown parameters {sorted(missing)}")
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = state.t + 1
    m, v, out = dict(state.m), dict(state.v), {}
    for k, x in params.items():
        g = grads.get(k)
        if g is None:
            out[k] = x
            continue
        m[k] = b1 * m.get(k, 0.0) + (1 - b1) * g
        v[k] = b2 * v.get(k, 0.0) + (1 - b2) * g * g
        mhat = m[k] / (1 - b1 ** t)
        vhat = v[k] / (1 - b2 ** t)
        out[k] = x - config.learning_rate * mhat / (np.sqrt(vhat) + config.adam_eps)
    return out, AdamState(m, v, t)


def _check_dataset(dataset: Dataset, template: Node, root: str):
    if len(dataset) == 0:
        raise TrainingError("dataset is empty")
    if root not in dataset.graph.nodes:
        raise TrainingError(f"root node {root!r} is not in the graph")
    labels = set(int(x) for x in dataset.labels)
    if labels != {-1, 1}:
        raise TrainingError(f"training needs both labels, dataset only has {sorted(labels)}")
    if np.isnan(dataset.tensor()).any():
        raise TrainingError("dataset contains missing values; impute them first")


def fit(dataset: Dataset, template: Node, root: str, config: TrainConfig,
         params: ParamStore, assignment, stage: str):
    """Mini-batch Adam on the exponential loss; returns (best params, log rows)."""
    X = dataset.tensor()
    y = dataset.labels
    N = len(y)
    rng = np.random.default_rng([config.seed, 1 if stage == "operators" else 2])
    state = AdamState()
    best, best_loss = params.copy(), math.inf
    history = []
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(N)
        for start in range(0, N, config.batch_size):
            idx = perm[start:start + config.batch_size]
            r, trace = forward(template, params, X[idx], dataset.graph, root, assignment)
            J, dJ = loss_grad(r, y[idx], config.eta)
            if not math.isfinite(J):
                raise TrainingError(f"non-finite loss in {stage} epoch {epoch}")
            grads = backward(trace, params, dJ)
            new, state = adam_update(params.raw, grads, state, config)
            params.update(new)
        r, _ = forward(template, params, X, dataset.graph, root, assignment)
        J = loss(r, y, config.eta)
        if not math.isfinite(J) or not np.all(np.isfinite(r)):
            raise TrainingError(f"non-finite loss in {stage} epoch {epoch}: check data scale")
        acc = float(np.mean(np.where(r >= 0, 1.0, -1.0) == y) * 100.0)
        history.append({"stage": stage, "epoch": epoch, "loss": J, "accuracy": acc})
        if J < best_loss:
            best, best_loss = params.copy(), J
    if config.epochs == 0:
        best = params
    return best, history


def step1_learn_operators(dataset: Dataset, template: Node, config: TrainConfig, root: str,
                          history: list | None = None) -> dict[str, str]:
    """Select every undetermined operator from the sign of its learned coefficient."""
    slots = flexible_slots(template)
    if not slots:
        return {}
    _check_dataset(dataset, template, root)
    params = ParamStore.init(template, dataset.graph, root, dataset.dim, sigma=config.sigma,
                             relaxed=True, seed=config.seed, weight_init=config.weight_init,
                             coef_scale=config.coef_scale)
    # predicates and weights trained here are discarded; only the b signs survive
    params, rows = fit(dataset, template, root, config, params, None, "operators")
    if history is not None:
        history.extend(rows)
    return selection_to_assignment(template, params.selection())


def selection_to_assignment(template: Node, b: Mapping[str, float]) -> dict[str, str]:
    out = {}
    for n in walk(template):
        if isinstance(n, Temporal) and n.kind == "tempX":
            out[n.slot] = "always" if b[n.slot] >= 0 else "eventually"
        elif isinstance(n, GraphOp) and n.kind == "graphX":
            out[n.slot] = "forall" if b[n.slot] >= 0 else "exists"
    return out


def step2_learn_parameters(dataset: Dataset, template: Node, assignment: Mapping[str, str],
                           config: TrainConfig, root: str,
                           history: list | None = None) -> ParamStore:
    harden(template, assignment)
    params = ParamStore.init(template, dataset.graph, root, dataset.dim, sigma=config.sigma,
                             relaxed=False, seed=config.seed, weight_init=config.weight_init,
                             coef_scale=config.coef_scale)
    if config.epochs == 0:
        return params
    _check_dataset(dataset, template, root)
    params, rows = fit(dataset, template, root, config, params, dict(assignment), "parameters")
    if history is not None:
        history.extend(rows)
    return params


@dataclass
class TrainedModel:
    template: Node
    assignment: dict[str, str]
    params: ParamStore
    config: TrainConfig
    root: str
    graph: Graph
    dim_names: tuple[str, ...]
    training_log: list = field(default_factory=list)

    @property
    def formula(self) -> Node:
        return harden(self.template, self.assignment)

    def robustness(self, samples) -> np.ndarray:
        r, _ = forward(self.template, self.params, samples, self.graph, self.root, self.assignment)
        return r

    def to_dict(self) -> dict:
        norm = self.params.normalized()
        return {
            "format_version": FORMAT_VERSION,
            "structure_text": to_text(self.template),
            "operator_assignment": dict(sorted(self.assignment.items())),
            "root": self.root,
            "graph": {"nodes": list(self.graph.nodes), "edges": self.graph.edge_list()},
            "dimensions": list(self.dim_names),
            "parameters": {
                "sigma": self.params.sigma,
                "raw": {k: v.tolist() for k, v in self.params.raw.items()},
                "normalized": {k: v.tolist() for k, v in norm.items()},
                "neighbor_order": {k: list(v) for k, v in self.params.neighbor_order.items()},
            },
            "config": asdict(self.config),
            "training_log": self.training_log,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=False) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainedModel":
        from .schema import validate_model
        validate_model(d)
        template = parse_structure(d["structure_text"])
        p = d["parameters"]
        params = ParamStore(p["raw"], p["sigma"], p["neighbor_order"])
        return cls(template=template, assignment=dict(d["operator_assignment"]), params=params,
                   config=TrainConfig.from_dict(d["config"]), root=d["root"],
                   graph=build_graph(d["graph"]["nodes"], d["graph"]["edges"]),
                   dim_names=tuple(d["dimensions"]), training_log=list(d["training_log"]))

    @classmethod
    def loads(cls, text: str) -> "TrainedModel":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "TrainedModel":
        with open(path) as fh:
            return cls.loads(fh.read())


def train(dataset: Dataset, template: Node, config: TrainConfig, root: str) -> TrainedModel:
    _check_dataset(dataset, template, root)
    history: list = []
    assignment = step1_learn_operators(dataset, template, config, root, history)
    params = step2_learn_parameters(dataset, template, assignment, config, root, history)
    return TrainedModel(template, assignment, params, config, root, dataset.graph,
                        dataset.dim_names, history)


def _check_compatible(model: TrainedModel, dataset_or_sample, graph: Graph | None = None):
    if isinstance(dataset_or_sample, Dataset):
        graph = dataset_or_sample.graph
        d = dataset_or_sample.dim
    else:
        d = dataset_or_sample.trajectory.dim
    if d != len(model.dim_names):
        raise ValueError(f"model expects {len(model.dim_names)} dimensions, data has {d}")
    if graph is not None and graph.nodes != model.graph.nodes:
        # weights only need the neighbors they index to exist in the same order
        for key, order in model.params.neighbor_order.items():
            at = key.split("@", 1)[1]
            if at not in graph.nodes or graph.neighbors(at) != tuple(order):
                raise ValueError(f"data graph does not match the model at node {at!r}")


def classify(model: TrainedModel, sample: Sample, graph: Graph | None = None) -> int:
    _check_compatible(model, sample)
    g = graph or model.graph
    r, _ = forward(model.template, model.params, sample, g, model.root, model.assignment)
    return 1 if r[0] >= 0 else -1


def predict(model: TrainedModel, dataset: Dataset) -> np.ndarray:
    _check_compatible(model, dataset)
    r, _ = forward(model.template, model.params, dataset, dataset.graph, model.root,
                   model.assignment)
    return np.where(r >= 0, 1, -1)


def evaluate(model: TrainedModel, dataset: Dataset) -> float:
    """Percentage of samples whose predicted label matches."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    pred = predict(model, dataset)
    return float(np.sum(pred == dataset.labels) / len(dataset) * 100.0)
