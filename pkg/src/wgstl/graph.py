"""Graphs, graph-based trajectories and labeled datasets.

A trajectory stores its values as one ``(n_nodes, horizon + 1, d)`` array in
node declaration order; ``Trajectory.values`` exposes the per-node view.
Missing entries are NaN until :func:`impute_zeros` is applied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

EARTH_RADIUS_KM = 6371.0


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    nodes: tuple[str, ...]
    edges: frozenset[frozenset[str]]
    coords: Mapping[str, tuple[float, float]] | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(set(self.nodes)) != len(self.nodes):
            dup = sorted({v for v in self.nodes if self.nodes.count(v) > 1})
            raise GraphError(f"duplicate node id(s): {dup}")
        known = set(self.nodes)
        adj: dict[str, set[str]] = {v: set() for v in self.nodes}
        for e in self.edges:
            if len(e) != 2:
                raise GraphError(f"self-loop on {sorted(e)[0]!r}")
            u, v = sorted(e)
            for x in (u, v):
                if x not in known:
                    raise GraphError(f"edge endpoint {x!r} is not a declared node")
            adj[u].add(v)
            adj[v].add(u)
        order = {v: i for i, v in enumerate(self.nodes)}
        nbrs = {v: tuple(sorted(s, key=order.__getitem__)) for v, s in adj.items()}
        object.__setattr__(self, "_nbrs", nbrs)
        object.__setattr__(self, "_index", order)

    def neighbors(self, v: str) -> tuple[str, ...]:
        try:
            return self._nbrs[v]
        except KeyError:
            raise GraphError(f"unknown node id {v!r}") from None

    def index(self, v: str) -> int:
        try:
            return self._index[v]
        except KeyError:
            raise GraphError(f"unknown node id {v!r}") from None

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edge_list(self) -> list[list[str]]:
        """Edges as sorted-by-declaration pairs, in a deterministic order."""
        pairs = [sorted(e, key=self._index.__getitem__) for e in self.edges]
        return sorted(pairs, key=lambda p: (self._index[p[0]], self._index[p[1]]))

    def subgraph(self, keep: Iterable[str]) -> "Graph":
        keep = set(keep)
        nodes = tuple(v for v in self.nodes if v in keep)
        edges = frozenset(e for e in self.edges if e <= keep)
        coords = None if self.coords is None else {v: self.coords[v] for v in nodes if v in self.coords}
        return Graph(nodes, edges, coords)


def build_graph(nodes: Sequence[str], edges: Iterable[Sequence[str]],
                coords: Mapping[str, Sequence[float]] | None = None) -> Graph:
    """Build an undirected graph; repeated or reversed pairs collapse to one edge."""
    es = set()
    for pair in edges:
        if len(pair) != 2:
            raise GraphError(f"edge must have two endpoints, got {list(pair)!r}")
        u, v = pair
        if u == v:
            raise GraphError(f"self-loop on {u!r}")
        es.add(frozenset((u, v)))
    cs = None
    if coords is not None:
        cs = {str(k): (float(c[0]), float(c[1])) for k, c in coords.items()}
    return Graph(tuple(nodes), frozenset(es), cs)


def neighbors(g: Graph, v: str) -> tuple[str, ...]:
    return g.neighbors(v)


def haversine_km(p: Sequence[float], q: Sequence[float]) -> float:
    lat1, lon1, lat2, lon2 = map(math.radians, (p[0], p[1], q[0], q[1]))
    h = (math.sin((lat2 - lat1) / 2) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2)
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def radius_graph(coords: Mapping[str, Sequence[float]], radius_km: float) -> Graph:
    """Connect every pair of nodes whose great-circle distance is at most ``radius_km``."""
    if not radius_km > 0:
        raise GraphError("radius_km must be positive")
    nodes = list(coords)
    for v in nodes:
        if not all(math.isfinite(float(x)) for x in coords[v]):
            raise GraphError(f"non-finite coordinate for node {v!r}")
    edges = [(u, v) for i, u in enumerate(nodes) for v in nodes[i + 1:]
             if haversine_km(coords[u], coords[v]) <= radius_km]
    return build_graph(nodes, edges, coords)


@dataclass(frozen=True)
class Trajectory:
    nodes: tuple[str, ...]
    data: np.ndarray  # (n_nodes, horizon + 1, d)
    dim_names: tuple[str, ...] | None = None

    def __post_init__(self):
        arr = np.array(self.data, dtype=float)
        if arr.ndim != 3 or arr.shape[0] != len(self.nodes) or arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValueError(f"trajectory data must have shape (n_nodes, h+1, d), got {arr.shape}")
        if self.dim_names is not None and len(self.dim_names) != arr.shape[2]:
            raise ValueError("dim_names length does not match d")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def horizon(self) -> int:
        return self.data.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.data.shape[2]

    @property
    def values(self) -> dict[str, np.ndarray]:
        return {v: self.data[i] for i, v in enumerate(self.nodes)}

    def at(self, v: str, k: int) -> np.ndarray:
        return self.data[self.nodes.index(v), k]

    def has_missing(self) -> bool:
        return bool(np.isnan(self.data).any())

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.nodes == other.nodes and self.data.shape == other.data.shape
                and np.array_equal(self.data, other.data, equal_nan=True))

    __hash__ = None


@dataclass(frozen=True)
class Sample:
    trajectory: Trajectory
    label: int

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.label!r}")


@dataclass(frozen=True)
class Dataset:
    graph: Graph
    samples: tuple[Sample, ...]
    dim_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "dim_names", tuple(self.dim_names))
        shapes = set()
        for s in self.samples:
            if s.trajectory.nodes != self.graph.nodes:
                raise ValueError("sample nodes do not match the graph's node order")
            shapes.add(s.trajectory.data.shape[1:])
        if len(shapes) > 1:
            raise ValueError(f"samples disagree on (horizon+1, d): {sorted(shapes)}")
        if shapes and next(iter(shapes))[1] != len(self.dim_names):
            raise ValueError(f"dataset declares {len(self.dim_names)} dimensions, "
                             f"samples have {next(iter(shapes))[1]}")

    def __len__(self):
        return len(self.samples)

    @property
    def horizon(self) -> int | None:
        return self.samples[0].trajectory.horizon if self.samples else None

    @property
    def dim(self) -> int:
        return len(self.dim_names)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=float)

    def tensor(self) -> np.ndarray:
        """All trajectories stacked as ``(N, n_nodes, horizon + 1, d)``."""
        if not self.samples:
            return np.zeros((0, len(self.graph.nodes), 1, self.dim))
        return np.stack([s.trajectory.data for s in self.samples])

    def subset(self, idx: Iterable[int]) -> "Dataset":
        return Dataset(self.graph, tuple(self.samples[i] for i in idx), self.dim_names)


def make_sample(graph: Graph, values: Mapping[str, Sequence], label: int,
                dim_names: Sequence[str] | None = None) -> Sample:
    """Sample from a node-id -> ``(h+1) x d`` mapping; ``None`` entries become NaN."""
    missing = [v for v in graph.nodes if v not in values]
    if missing:
        raise ValueError(f"trajectory lacks node(s) {missing}")
    rows = [np.array([[np.nan if x is None else x for x in row] for row in values[v]], dtype=float)
            for v in graph.nodes]
    shapes = {r.shape for r in rows}
    if len(shapes) != 1:
        raise ValueError(f"nodes disagree on trajectory shape: {sorted(shapes)}")
    traj = Trajectory(graph.nodes, np.stack(rows), tuple(dim_names) if dim_names else None)
    return Sample(traj, int(label))


def impute_zeros(dataset: Dataset) -> Dataset:
    samples = tuple(
        Sample(Trajectory(s.trajectory.nodes, np.nan_to_num(s.trajectory.data, nan=0.0),
                          s.trajectory.dim_names), s.label)
        if s.trajectory.has_missing() else s
        for s in dataset.samples)
    return Dataset(dataset.graph, samples, dataset.dim_names)


# Window label rules: called with (slice_data, following_step_data_or_None, sample, graph)
LabelRule = Callable[[np.ndarray, "np.ndarray | None", Sample, Graph], int]


@dataclass(frozen=True)
class NextStepDim:
    """Label a window by one dimension at one node on the step after the window."""
    dim: int
    threshold: float
    node: str
    needs_next = True

    def __call__(self, window, following, sample, graph):
        x = following[graph.index(self.node), self.dim]
        return 1 if x > self.threshold else -1


@dataclass(frozen=True)
class ConstantFromSample:
    """Every window inherits the label of the sample it was cut from."""
    needs_next = False

    def __call__(self, window, following, sample, graph):
        return sample.label


def next_step_dim(dim: int, threshold: float, node: str) -> NextStepDim:
    return NextStepDim(dim, threshold, node)


def constant_from_sample() -> ConstantFromSample:
    return ConstantFromSample()


def window(dataset: Dataset, length: int, stride: int = 1,
           label_rule: LabelRule | None = None) -> Dataset:
    """Cut every trajectory into contiguous slices of ``length`` steps.

    With a rule that needs the following step (``next_step_dim``) the last
    slice must leave one step after it, so one fewer window is produced.
    """
    rule = label_rule or constant_from_sample()
    needs_next = getattr(rule, "needs_next", False)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if length < 1:
        raise ValueError("window length must be >= 1")
    out = []
    for s in dataset.samples:
        n_steps = s.trajectory.horizon + 1
        avail = n_steps - (1 if needs_next else 0)
        if length > avail:
            raise ValueError(f"window length {length} exceeds available length {avail}")
        for start in range(0, avail - length + 1, stride):
            sl = s.trajectory.data[:, start:start + length]
            nxt = s.trajectory.data[:, start + length] if needs_next else None
            label = rule(sl, nxt, s, dataset.graph)
            out.append(Sample(Trajectory(s.trajectory.nodes, sl, s.trajectory.dim_names), label))
    return Dataset(dataset.graph, tuple(out), dataset.dim_names)


def split(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(train_fraction * n))
    return dataset.subset(perm[:n_train].tolist()), dataset.subset(perm[n_train:].tolist())


def concat(datasets: Sequence[Dataset]) -> Dataset:
    first = datasets[0]
    samples = tuple(s for d in datasets for s in d.samples)
    return Dataset(first.graph, samples, first.dim_names)
