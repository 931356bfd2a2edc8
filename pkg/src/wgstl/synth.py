"""Synthetic labeled datasets drawn from a known formula.

Candidates are built from a per-sample level vector ``L``: each
``(node, time)`` entry is ``L`` or, with a per-sample flip probability,
``-L``, plus Gaussian noise. A candidate is kept when its crisp robustness
at the root is beyond ``margin`` on the side of a class that still needs
samples. Flipped entries produce the near misses (one dip, one spike) that
tell the temporal and graph operators apart.
"""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .graph import Dataset, Graph, Sample, Trajectory
from .logic import Node, Predicate, crisp_robustness, span


class SynthesisError(RuntimeError):
    pass


def synth_dataset(graph: Graph, formula: Node, predicates: Mapping[str, Predicate], *,
                  root: str, n_pos: int, n_neg: int, noise: float = 0.0, seed: int = 0,
                  horizon: int | None = None, dim_names: Sequence[str] = ("x1",),
                  margin: float = 0.5, level: float = 3.0, max_flip: float = 0.5,
                  max_tries: int | None = None) -> Dataset:
    d = len(dim_names)
    for p in predicates.values():
        if len(p.a) != d:
            raise ValueError(f"predicate {p.name} has {len(p.a)} coefficients, data has {d} dims")
    graph.index(root)
    h = span(formula) if horizon is None else horizon
    if h < span(formula):
        raise ValueError(f"horizon {h} is shorter than the formula's reach {span(formula)}")
    rng = np.random.default_rng(seed)
    budget = max_tries if max_tries is not None else 2000 * (n_pos + n_neg) + 1000
    shape = (len(graph.nodes), h + 1, d)
    pos: list[Sample] = []
    neg: list[Sample] = []
    tries = 0
    while len(pos) < n_pos or len(neg) < n_neg:
        if tries >= budget:
            raise SynthesisError(
                f"gave up after {tries} candidates with {len(pos)}/{n_pos} positive and "
                f"{len(neg)}/{n_neg} negative samples; margin {margin} may be unreachable")
        tries += 1
        L = rng.uniform(-level, level, size=d)
        flip = rng.random(shape[:2]) < rng.uniform(0.0, max_flip)
        data = np.where(flip[..., None], -L, L) + rng.normal(0.0, 1.0, size=shape) * noise
        traj = Trajectory(graph.nodes, data, tuple(dim_names))
        r = crisp_robustness(traj, graph, root, 0, formula, predicates)
        if r > margin and len(pos) < n_pos:
            pos.append(Sample(traj, 1))
        elif r < -margin and len(neg) < n_neg:
            neg.append(Sample(traj, -1))
    order = rng.permutation(n_pos + n_neg)
    both = pos + neg
    return Dataset(graph, tuple(both[i] for i in order), tuple(dim_names))
