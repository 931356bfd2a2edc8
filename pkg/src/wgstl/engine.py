"""Smooth weighted robustness and its exact gradients.

Every aggregating operator (and, or, always, eventually, forall, exists) uses
one activation, parameterized by a selection coefficient ``b``::

    out = sum_m wbar_m s_m r_m / sum_m wbar_m s_m,   s_m = softmax(-b r / sigma)_m

``b = +1`` gives the soft minimum (and, always, forall) and ``b = -1`` the soft
maximum (or, eventually, exists). Undetermined operators use a trainable
real ``b`` instead.

Evaluation is batched over samples and over time: a subformula evaluated at a
node yields an ``(N, L)`` array holding its value at ``k = 0 .. L-1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .graph import Dataset, Graph, Sample, Trajectory
from .logic import (And, GraphOp, Node, Not, Or, Pred, Predicate, Temporal, TemplateError,
                    EvaluationError, predicate_names, span, walk)

WEIGHT_EPS = 1e-6
_SIGN = {"and": 1.0, "or": -1.0, "always": 1.0, "eventually": -1.0, "forall": 1.0, "exists": -1.0}
WEIGHT_PREFIXES = ("w:", "omega:", "W:")


def positive(raw: np.ndarray) -> np.ndarray:
    return np.abs(raw) + WEIGHT_EPS


def _dpositive(raw: np.ndarray) -> np.ndarray:
    return np.where(raw >= 0, 1.0, -1.0)


def _aggregate(R: np.ndarray, w: np.ndarray, b: float, sigma: float):
    z = (-b / sigma) * R + np.log(w)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    return (p * R).sum(axis=-1), p


def soft_aggregate(r: Sequence[float], w: Sequence[float], b: float, sigma: float) -> float:
    r = np.asarray(r, dtype=float)
    w = np.asarray(w, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("soft_aggregate needs a non-empty group of values")
    if w.shape != r.shape:
        raise ValueError(f"{r.size} values but {w.size} weights")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if not np.all(w > 0):
        raise ValueError("importance weights must be positive")
    out, _ = _aggregate(r, w, float(b), float(sigma))
    return float(out)


def evaluation_nodes(template: Node, graph: Graph, root: str) -> dict[str, list[str]]:
    """Nodes at which each graph-operator slot is evaluated, from ``root``."""
    out: dict[str, list[str]] = {}

    def go(n, at):
        if isinstance(n, Pred):
            return
        if isinstance(n, (Not, Temporal)):
            go(n.child, at)
        elif isinstance(n, (And, Or)):
            for c in n.children:
                go(c, at)
        else:
            lst = out.setdefault(n.slot, [])
            lst.extend(v for v in at if v not in lst)
            nxt = []
            for v in at:
                nbrs = graph.neighbors(v)
                if not nbrs:
                    raise EvaluationError(
                        f"graph quantifier applied at node {v!r}, which has no neighbors")
                nxt.extend(u for u in nbrs if u not in nxt)
            go(n.child, [u for u in graph.nodes if u in nxt])

    graph.index(root)
    go(template, [root])
    return out


class ParamStore:
    """Trainable parameters addressed by slot id.

    Keys: ``a:<pred>``, ``c:<pred>``, ``w:<connective>``, ``omega:<temporal>``,
    ``W:<graphop>@<node>`` and ``b:<slot>`` for operators still being selected.
    Importance weights are stored raw and mapped through ``|x| + 1e-6``.
    """

    def __init__(self, raw: Mapping[str, np.ndarray], sigma: float = 1.0,
                 neighbor_order: Mapping[str, Sequence[str]] | None = None):
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        self.raw = {k: np.array(v, dtype=float).reshape(-1) for k, v in raw.items()}
        self.sigma = float(sigma)
        self.neighbor_order = {k: tuple(v) for k, v in (neighbor_order or {}).items()}
        self.version = 0

    @classmethod
    def init(cls, template: Node, graph: Graph, root: str, dim: int, *, sigma: float = 1.0,
             relaxed: bool = True, seed: int = 0, weight_init: float = 0.5,
             coef_scale: float = 0.1) -> "ParamStore":
        rng = np.random.default_rng(seed)
        raw: dict[str, np.ndarray] = {}
        for name in predicate_names(template):
            raw[f"a:{name}"] = rng.normal(0.0, coef_scale, size=dim) if coef_scale else np.zeros(dim)
            raw[f"c:{name}"] = np.zeros(1)
        at = evaluation_nodes(template, graph, root)
        order: dict[str, tuple[str, ...]] = {}
        for n in walk(template):
            if isinstance(n, (And, Or)):
                raw[f"w:{n.slot}"] = np.full(len(n.children), weight_init)
            elif isinstance(n, Temporal):
                raw[f"omega:{n.slot}"] = np.full(n.width, weight_init)
                if n.kind == "tempX" and relaxed:
                    raw[f"b:{n.slot}"] = np.zeros(1)
            elif isinstance(n, GraphOp):
                for v in at[n.slot]:
                    key = f"W:{n.slot}@{v}"
                    order[key] = graph.neighbors(v)
                    raw[key] = np.full(len(order[key]), weight_init)
                if n.kind == "graphX" and relaxed:
                    raw[f"b:{n.slot}"] = np.zeros(1)
        return cls(raw, sigma, order)

    def __getitem__(self, key):
        return self.raw[key]

    def keys(self):
        return self.raw.keys()

    def copy(self) -> "ParamStore":
        return ParamStore({k: v.copy() for k, v in self.raw.items()}, self.sigma, self.neighbor_order)

    def set(self, key: str, value) -> None:
        self.raw[key] = np.array(value, dtype=float).reshape(self.raw[key].shape)
        self.version += 1

    def update(self, new_raw: Mapping[str, np.ndarray]) -> None:
        for k, v in new_raw.items():
            self.raw[k] = np.asarray(v, dtype=float)
        self.version += 1

    def weight(self, key: str) -> np.ndarray:
        return positive(self.raw[key])

    def normalized(self) -> dict[str, np.ndarray]:
        out = {}
        for k, v in self.raw.items():
            if k.startswith(WEIGHT_PREFIXES):
                w = positive(v)
                out[k] = w / w.sum()
        return out

    def predicates(self) -> dict[str, Predicate]:
        return {k[2:]: Predicate(k[2:], tuple(float(x) for x in v), float(self.raw["c:" + k[2:]][0]))
                for k, v in self.raw.items() if k.startswith("a:")}

    def selection(self) -> dict[str, float]:
        return {k[2:]: float(v[0]) for k, v in self.raw.items() if k.startswith("b:")}

    def __eq__(self, other):
        if not isinstance(other, ParamStore):
            return NotImplemented
        return (self.sigma == other.sigma and self.raw.keys() == other.raw.keys()
                and all(np.array_equal(self.raw[k], other.raw[k]) for k in self.raw)
                and self.neighbor_order == other.neighbor_order)


def as_tensor(samples, graph: Graph) -> np.ndarray:
    """Stack samples into ``(N, n_nodes, T, d)``."""
    if isinstance(samples, Dataset):
        return samples.tensor()
    if isinstance(samples, Sample):
        samples = samples.trajectory
    if isinstance(samples, Trajectory):
        if samples.nodes != graph.nodes:
            raise ValueError("trajectory nodes do not match the graph")
        return samples.data[None]
    if isinstance(samples, np.ndarray):
        return samples[None] if samples.ndim == 3 else samples
    return np.stack([as_tensor(s, graph)[0] for s in samples])


@dataclass
class AggRecord:
    key: tuple
    children: list  # child keys; for temporal, a single key
    R: np.ndarray
    p: np.ndarray
    wkey: str
    wbar: np.ndarray
    b: float
    bkey: str | None
    out: np.ndarray
    kind: str
    lo: int = 0


@dataclass
class EvalTrace:
    """Intermediates of one batched forward pass, in evaluation order."""
    X: np.ndarray
    sigma: float
    records: list = field(default_factory=list)
    values: dict = field(default_factory=dict)
    root_key: tuple | None = None
    params_id: int = 0
    params_version: int = 0

    def softness(self, rec: AggRecord) -> np.ndarray:
        """Per-entry s_m coefficients of an aggregation record."""
        z = (-rec.b / self.sigma) * rec.R
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)


class _Forward:
    def __init__(self, params: ParamStore, X: np.ndarray, graph: Graph,
                 assignment: Mapping[str, str] | None):
        self.params = params
        self.X = X
        self.graph = graph
        self.assignment = assignment
        self.trace = EvalTrace(X, params.sigma, params_id=id(params), params_version=params.version)

    def selection(self, kind: str, slot: str):
        if kind in _SIGN:
            return _SIGN[kind], None
        if self.assignment is not None and slot in self.assignment:
            return _SIGN[self.assignment[slot]], None
        key = f"b:{slot}"
        if key not in self.params.raw:
            raise KeyError(f"operator in slot {slot} is undetermined and has no coefficient {key}")
        return float(self.params.raw[key][0]), key

    def agg(self, key, R, wkey, kind, slot, children, lo=0):
        w = self.params.weight(wkey)
        if w.shape[0] != R.shape[-1]:
            raise ValueError(f"parameter {wkey} has {w.shape[0]} weights, group has {R.shape[-1]}")
        b, bkey = self.selection(kind, slot)
        out, p = _aggregate(R, w, b, self.params.sigma)
        self.trace.records.append(AggRecord(key, children, R, p, wkey, w / w.sum(), b, bkey, out,
                                            kind, lo))
        return out

    def ev(self, node: Node, v: str, L: int) -> np.ndarray:
        key = (id(node), v, L)
        vals = self.trace.values
        if key in vals:
            return vals[key]
        if isinstance(node, Pred):
            vi = self.graph.index(v)
            a = self.params.raw[f"a:{node.name}"]
            c = self.params.raw[f"c:{node.name}"][0]
            out = self.X[:, vi, :L, :] @ a - c
            self.trace.records.append(("pred", key, node.name, vi))
        elif isinstance(node, Not):
            ck = (id(node.child), v, L)
            out = -self.ev(node.child, v, L)
            self.trace.records.append(("not", key, ck))
        elif isinstance(node, (And, Or)):
            kids = [self.ev(c, v, L) for c in node.children]
            ckeys = [(id(c), v, L) for c in node.children]
            kind = "and" if isinstance(node, And) else "or"
            out = self.agg(key, np.stack(kids, axis=-1), f"w:{node.slot}", kind, node.slot, ckeys)
        elif isinstance(node, Temporal):
            Lc = L + node.hi
            C = self.ev(node.child, v, Lc)
            R = sliding_window_view(C, node.width, axis=1)[:, node.lo:node.lo + L, :]
            out = self.agg(key, R, f"omega:{node.slot}", node.kind, node.slot,
                           [(id(node.child), v, Lc)], node.lo)
        else:
            nbrs = self.graph.neighbors(v)
            if not nbrs:
                raise EvaluationError(f"graph quantifier applied at node {v!r}, "
                                      f"which has no neighbors")
            kids = [self.ev(node.child, u, L) for u in nbrs]
            wkey = f"W:{node.slot}@{v}"
            if wkey not in self.params.raw:
                raise KeyError(f"no neighbor weights {wkey}; parameters were built for another root")
            out = self.agg(key, np.stack(kids, axis=-1), wkey, node.kind, node.slot,
                           [(id(node.child), u, L) for u in nbrs])
        vals[key] = out
        return out


def forward(template: Node, params: ParamStore, samples, graph: Graph, root: str,
            assignment: Mapping[str, str] | None = None) -> tuple[np.ndarray, EvalTrace]:
    """Smooth weighted robustness at ``(root, k=0)`` for every sample.

    Returns an ``(N,)`` array and the trace needed by :func:`backward`.
    Undetermined operators use ``assignment`` when given, else their
    continuous coefficient ``b:<slot>``.
    """
    X = as_tensor(samples, graph)
    graph.index(root)
    T = X.shape[2]
    if span(template) > T - 1:
        raise TemplateError(f"structure reads {span(template)} steps ahead but the horizon "
                            f"is {T - 1}")
    f = _Forward(params, X, graph, assignment)
    out = f.ev(template, root, 1)
    f.trace.root_key = (id(template), root, 1)
    return out[:, 0].copy(), f.trace


def backward(trace: EvalTrace, params: ParamStore, upstream=None) -> dict[str, np.ndarray]:
    """Gradient of ``sum_i upstream_i * r_i`` w.r.t. every raw parameter."""
    if trace.params_id != id(params) or trace.params_version != params.version:
        raise ValueError("trace was produced with different parameters")
    N = trace.X.shape[0]
    up = np.ones(N) if upstream is None else np.asarray(upstream, dtype=float).reshape(N)
    grads = {k: np.zeros_like(v) for k, v in params.raw.items()}
    adj = {trace.root_key: up[:, None].copy()}

    def push(key, g):
        if key in adj:
            adj[key] = adj[key] + g
        else:
            adj[key] = g

    sigma = trace.sigma
    X = trace.X
    for rec in reversed(trace.records):
        if isinstance(rec, AggRecord):
            G = adj.pop(rec.key, None)
            if G is None:
                continue
            dev = rec.R - rec.out[..., None]
            Gp = G[..., None] * rec.p
            dR = Gp * (1.0 - (rec.b / sigma) * dev)
            raw_w = params.raw[rec.wkey]
            dw = (Gp * dev).reshape(-1, dev.shape[-1]).sum(axis=0) / positive(raw_w)
            grads[rec.wkey] += dw * _dpositive(raw_w)
            if rec.bkey is not None:
                grads[rec.bkey][0] += -(Gp * rec.R * dev).sum() / sigma
            if rec.kind in ("always", "eventually", "tempX"):
                (ck,) = rec.children
                L = rec.R.shape[1]
                gc = np.zeros((N, ck[2]))
                for j in range(rec.R.shape[2]):
                    gc[:, rec.lo + j:rec.lo + j + L] += dR[:, :, j]
                push(ck, gc)
            else:
                for m, ck in enumerate(rec.children):
                    push(ck, dR[..., m])
        elif rec[0] == "not":
            G = adj.pop(rec[1], None)
            if G is not None:
                push(rec[2], -G)
        else:
            _, key, name, vi = rec
            G = adj.pop(key, None)
            if G is None:
                continue
            L = key[2]
            grads[f"a:{name}"] += np.einsum("nl,nld->d", G, X[:, vi, :L, :])
            grads[f"c:{name}"][0] -= G.sum()
    return grads
