"""Synthetic benchmark setups shared by the scripts and the acceptance tests."""
from __future__ import annotations

import time
from dataclasses import dataclass

from .graph import Graph, build_graph, split
from .logic import Predicate, harden, parse_structure
from .synth import synth_dataset
from .train import TrainConfig, evaluate, step1_learn_operators, train

RECOVERY_TEMPLATE = "(tempX [0 3] (graphX (pred p)))"
COMBINATIONS = [("always", "forall"), ("always", "exists"),
                ("eventually", "forall"), ("eventually", "exists")]


def star_graph(n_leaves: int = 3) -> Graph:
    leaves = [f"n{i + 1}" for i in range(n_leaves)]
    return build_graph(["r"] + leaves, [("r", u) for u in leaves])


@dataclass(frozen=True)
class RecoveryRun:
    truth: tuple[str, str]
    seed: int
    found: tuple[str, str]
    seconds: float

    @property
    def ok(self) -> bool:
        return self.truth == self.found


def recovery_run(temporal: str, graph_op: str, seed: int, *, n_per_class: int = 30,
                 noise: float = 0.1, margin: float = 0.5,
                 config: TrainConfig | None = None) -> RecoveryRun:
    """Generate data from one operator pair and ask step 1 which pair it was."""
    g = star_graph()
    template = parse_structure(RECOVERY_TEMPLATE)
    formula = harden(template, {"t0": temporal, "g0": graph_op})
    ds = synth_dataset(g, formula, {"p": Predicate("p", (1.0,), 0.0)}, root="r",
                       n_pos=n_per_class, n_neg=n_per_class, noise=noise, seed=seed,
                       margin=margin)
    cfg = config or TrainConfig(seed=seed)
    t0 = time.perf_counter()
    found = step1_learn_operators(ds, template, cfg, "r")
    return RecoveryRun((temporal, graph_op), seed, (found["t0"], found["g0"]),
                       time.perf_counter() - t0)


REGIME_STRUCTURE = "(or (tempX [0 3] (graphX (pred p1))) (not (tempX [4 7] (graphX (pred p2)))))"
REGIME_TRUTH = {"t0": "always", "g0": "exists", "t1": "eventually", "g1": "exists"}


def regime_graph() -> Graph:
    return build_graph(["r", "a", "b", "c"], [("r", "a"), ("r", "b"), ("a", "b"), ("b", "c"), ("r", "c")])


def regime_dataset(seed: int = 0, n: int = 200, noise: float = 0.1, margin: float = 1.0):
    """Two-regime data on four nodes, cleanly separated by a case-study shaped formula."""
    formula = harden(parse_structure(REGIME_STRUCTURE), REGIME_TRUTH)
    preds = {"p1": Predicate("p1", (1.0, 0.5), 0.5), "p2": Predicate("p2", (-0.5, 1.0), 0.0)}
    return synth_dataset(regime_graph(), formula, preds, root="r", n_pos=n // 2,
                         n_neg=n - n // 2, noise=noise, seed=seed, margin=margin,
                         dim_names=("x1", "x2"))


def regime_experiment(seed: int = 0, config: TrainConfig | None = None):
    """Train on 80% of a two-regime set; returns (model, test accuracy %, seconds)."""
    ds = regime_dataset(seed)
    tr, te = split(ds, 0.8, seed)
    t0 = time.perf_counter()
    model = train(tr, parse_structure(REGIME_STRUCTURE), config or TrainConfig(seed=seed), "r")
    return model, evaluate(model, te), time.perf_counter() - t0
