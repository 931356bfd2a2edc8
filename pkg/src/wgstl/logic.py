"""Formula templates, the structure grammar, and crisp monitoring.

Structures are s-expressions::

    (or (tempX [0 6] (graphX (pred p1)))
        (not (tempX [7 14] (graphX (pred p2)))))

``tempX``/``graphX`` are operators whose kind is learned from data. Slot ids
are assigned in pre-order while parsing (``c0, c1, ...`` for connectives,
``t0, ...`` for temporal operators, ``g0, ...`` for graph operators), so
parsing the same text twice yields equal trees. ``;`` starts a comment.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Iterator, Mapping, Sequence, Union

import numpy as np

from .graph import Graph, Trajectory

TEMPORAL_KINDS = ("always", "eventually", "tempX")
GRAPH_KINDS = ("forall", "exists", "graphX")
UNDETERMINED = ("tempX", "graphX")


class StructureSyntaxError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{msg} (line {line}, column {col})")
        self.line = line
        self.col = col


class TemplateError(ValueError):
    pass


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class Pred:
    name: str


@dataclass(frozen=True)
class Not:
    child: "Node"


@dataclass(frozen=True)
class And:
    children: tuple["Node", ...]
    slot: str = ""


@dataclass(frozen=True)
class Or:
    children: tuple["Node", ...]
    slot: str = ""


@dataclass(frozen=True)
class Temporal:
    kind: str
    lo: int
    hi: int
    child: "Node"
    slot: str = ""

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1


@dataclass(frozen=True)
class GraphOp:
    kind: str
    child: "Node"
    slot: str = ""


Node = Union[Pred, Not, And, Or, Temporal, GraphOp]


@dataclass(frozen=True)
class Predicate:
    """``f(x) = a . x - c``; the predicate holds where ``f > 0``."""
    name: str
    a: tuple[float, ...]
    c: float

    def __call__(self, x) -> float:
        return float(np.dot(self.a, x) - self.c)


def walk(node: Node) -> Iterator[Node]:
    yield node
    if isinstance(node, (Not, Temporal, GraphOp)):
        yield from walk(node.child)
    elif isinstance(node, (And, Or)):
        for c in node.children:
            yield from walk(c)


def predicate_names(node: Node) -> list[str]:
    seen = []
    for n in walk(node):
        if isinstance(n, Pred) and n.name not in seen:
            seen.append(n.name)
    return seen


def flexible_slots(node: Node) -> list[str]:
    return [n.slot for n in walk(node)
            if isinstance(n, (Temporal, GraphOp)) and n.kind in UNDETERMINED]


def is_hardened(node: Node) -> bool:
    return not flexible_slots(node)


def span(node: Node) -> int:
    """Number of steps past ``k`` that evaluating ``node`` at ``k`` reads."""
    if isinstance(node, Pred):
        return 0
    if isinstance(node, Temporal):
        return node.hi + span(node.child)
    if isinstance(node, (Not, GraphOp)):
        return span(node.child)
    return max(span(c) for c in node.children)


def check_horizon(node: Node, horizon: int) -> None:
    need = span(node)
    if need > horizon:
        raise TemplateError(f"structure reads {need} steps ahead but the horizon is {horizon}")


def validate(node: Node) -> None:
    has_t = has_g = False
    for n in walk(node):
        if isinstance(n, Temporal):
            has_t = True
            if n.kind not in TEMPORAL_KINDS:
                raise TemplateError(f"unknown temporal kind {n.kind!r}")
            if not 0 <= n.lo <= n.hi:
                raise TemplateError(f"malformed interval [{n.lo} {n.hi}]")
        elif isinstance(n, GraphOp):
            has_g = True
            if n.kind not in GRAPH_KINDS:
                raise TemplateError(f"unknown graph kind {n.kind!r}")
        elif isinstance(n, (And, Or)) and len(n.children) < 2:
            raise TemplateError("and/or need at least two operands")
    if not (has_t and has_g):
        raise TemplateError("a structure needs at least one temporal operator "
                            "and one graph operator")


def number_slots(node: Node) -> Node:
    """Reassign canonical pre-order slot ids (what the parser would produce)."""
    counters = {"c": 0, "t": 0, "g": 0}

    def fresh(p):
        s = f"{p}{counters[p]}"
        counters[p] += 1
        return s

    def go(n):
        if isinstance(n, Pred):
            return n
        if isinstance(n, Not):
            return Not(go(n.child))
        if isinstance(n, (And, Or)):
            slot = fresh("c")
            return type(n)(tuple(go(c) for c in n.children), slot)
        if isinstance(n, Temporal):
            slot = fresh("t")
            return Temporal(n.kind, n.lo, n.hi, go(n.child), slot)
        slot = fresh("g")
        return GraphOp(n.kind, go(n.child), slot)

    return go(node)


def harden(node: Node, assignment: Mapping[str, str]) -> Node:
    """Replace every undetermined operator by its assigned kind (slot ids kept)."""
    missing = [s for s in flexible_slots(node) if s not in assignment]
    if missing:
        raise TemplateError(f"assignment does not cover slot(s) {missing}")

    def go(n):
        if isinstance(n, Pred):
            return n
        if isinstance(n, Not):
            return Not(go(n.child))
        if isinstance(n, (And, Or)):
            return replace(n, children=tuple(go(c) for c in n.children))
        kind = n.kind
        if kind in UNDETERMINED:
            kind = assignment[n.slot]
            allowed = TEMPORAL_KINDS[:2] if isinstance(n, Temporal) else GRAPH_KINDS[:2]
            if kind not in allowed:
                raise TemplateError(f"slot {n.slot} cannot take operator {kind!r}")
        return replace(n, kind=kind, child=go(n.child))

    return go(node)


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(r"\s+|;[^\n]*|[()\[\]]|-?\d+|[A-Za-z_][A-Za-z0-9_.\-]*|.")


def _tokenize(text: str):
    line, col = 1, 1
    for m in _TOKEN.finditer(text):
        tok = m.group()
        if not tok.isspace() and not tok.startswith(";"):
            yield tok, line, col
        nl = tok.count("\n")
        if nl:
            line += nl
            col = len(tok) - tok.rfind("\n")
        else:
            col += len(tok)


class _Parser:
    def __init__(self, text):
        self.toks = list(_tokenize(text))
        self.i = 0
        self.end = (text.count("\n") + 1, len(text) - text.rfind("\n"))
        self.counters = {"c": 0, "t": 0, "g": 0}

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self, expect=None):
        tok = self.peek()
        if tok is None:
            raise StructureSyntaxError("unexpected end of input", *self.end)
        if expect is not None and tok[0] != expect:
            raise StructureSyntaxError(f"expected {expect!r}, found {tok[0]!r}", tok[1], tok[2])
        self.i += 1
        return tok

    def integer(self):
        tok, line, col = self.next()
        if not re.fullmatch(r"-?\d+", tok):
            raise StructureSyntaxError(f"expected an integer, found {tok!r}", line, col)
        return int(tok), line, col

    def fresh(self, p):
        s = f"{p}{self.counters[p]}"
        self.counters[p] += 1
        return s

    def phi(self):
        self.next("(")
        op, line, col = self.next()
        if op == "pred":
            name, nl, nc = self.next()
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_.\-]*", name):
                raise StructureSyntaxError(f"bad predicate name {name!r}", nl, nc)
            node = Pred(name)
        elif op == "not":
            node = Not(self.phi())
        elif op in ("and", "or"):
            slot = self.fresh("c")
            kids = [self.phi(), self.phi()]
            while self.peek() is not None and self.peek()[0] == "(":
                kids.append(self.phi())
            node = (And if op == "and" else Or)(tuple(kids), slot)
        elif op in TEMPORAL_KINDS:
            slot = self.fresh("t")
            self.next("[")
            lo, _, _ = self.integer()
            hi, hl, hc = self.integer()
            self.next("]")
            if lo < 0 or lo > hi:
                raise StructureSyntaxError(f"malformed interval [{lo} {hi}]", hl, hc)
            node = Temporal(op, lo, hi, self.phi(), slot)
        elif op in GRAPH_KINDS:
            slot = self.fresh("g")
            node = GraphOp(op, self.phi(), slot)
        else:
            raise StructureSyntaxError(f"unknown operator {op!r}", line, col)
        self.next(")")
        return node


def parse_formula(text: str) -> Node:
    """Parse any formula, including ones without temporal or graph operators."""
    p = _Parser(text)
    node = p.phi()
    extra = p.peek()
    if extra is not None:
        raise StructureSyntaxError(f"trailing input {extra[0]!r}", extra[1], extra[2])
    return node


def parse_structure(text: str) -> Node:
    node = parse_formula(text)
    validate(node)
    return node


def to_text(node: Node) -> str:
    if isinstance(node, Pred):
        return f"(pred {node.name})"
    if isinstance(node, Not):
        return f"(not {to_text(node.child)})"
    if isinstance(node, (And, Or)):
        op = "and" if isinstance(node, And) else "or"
        return f"({op} " + " ".join(to_text(c) for c in node.children) + ")"
    if isinstance(node, Temporal):
        return f"({node.kind} [{node.lo} {node.hi}] {to_text(node.child)})"
    return f"({node.kind} {to_text(node.child)})"


# ---------------------------------------------------------------- crisp monitor

def _eval(traj: Trajectory, graph: Graph, v: str, k: int, node: Node,
          preds: Mapping[str, Predicate], boolean: bool):
    if k < 0 or k > traj.horizon:
        raise EvaluationError(f"time index {k} outside horizon [0, {traj.horizon}]")
    if isinstance(node, Pred):
        try:
            p = preds[node.name]
        except KeyError:
            raise EvaluationError(f"no parameters for predicate {node.name!r}") from None
        val = p(traj.at(v, k))
        return val > 0 if boolean else val
    if isinstance(node, Not):
        r = _eval(traj, graph, v, k, node.child, preds, boolean)
        return (not r) if boolean else -r
    if isinstance(node, (And, Or)):
        rs = [_eval(traj, graph, v, k, c, preds, boolean) for c in node.children]
        if boolean:
            return all(rs) if isinstance(node, And) else any(rs)
        return min(rs) if isinstance(node, And) else max(rs)
    if isinstance(node, Temporal):
        if node.kind not in ("always", "eventually"):
            raise EvaluationError(f"operator in slot {node.slot} is undetermined")
        if k + node.hi > traj.horizon:
            raise EvaluationError(f"interval [{k + node.lo}, {k + node.hi}] exceeds horizon "
                                  f"{traj.horizon}")
        rs = [_eval(traj, graph, v, kk, node.child, preds, boolean)
              for kk in range(k + node.lo, k + node.hi + 1)]
        if boolean:
            return all(rs) if node.kind == "always" else any(rs)
        return min(rs) if node.kind == "always" else max(rs)
    if node.kind not in ("forall", "exists"):
        raise EvaluationError(f"operator in slot {node.slot} is undetermined")
    nbrs = graph.neighbors(v)
    if not nbrs:
        raise EvaluationError(f"graph quantifier applied at node {v!r}, which has no neighbors")
    rs = [_eval(traj, graph, u, k, node.child, preds, boolean) for u in nbrs]
    if boolean:
        return all(rs) if node.kind == "forall" else any(rs)
    return min(rs) if node.kind == "forall" else max(rs)


def boolean_sat(traj: Trajectory, graph: Graph, v: str, k: int, formula: Node,
                predicates: Mapping[str, Predicate]) -> bool:
    return bool(_eval(traj, graph, v, k, formula, predicates, True))


def crisp_robustness(traj: Trajectory, graph: Graph, v: str, k: int, formula: Node,
                     predicates: Mapping[str, Predicate]) -> float:
    return float(_eval(traj, graph, v, k, formula, predicates, False))


# ---------------------------------------------------------------- printing

def _fmt(x: float) -> str:
    s = f"{x:.4f}"
    return "0.0000" if s == "-0.0000" else s


def format_predicate(p: Predicate, dim_names: Sequence[str] | None = None) -> str:
    names = list(dim_names) if dim_names else [f"x{j + 1}" for j in range(len(p.a))]
    parts = []
    for j, (coef, nm) in enumerate(zip(p.a, names)):
        mag = _fmt(abs(coef))
        if j == 0:
            parts.append(f"{'-' if coef < 0 and mag != '0.0000' else ''}{mag}*{nm}")
        else:
            parts.append(f"{'-' if coef < 0 and mag != '0.0000' else '+'} {mag}*{nm}")
    return " ".join(parts) + f" > {_fmt(p.c)}"


def format_vector(xs) -> str:
    return "[" + ", ".join(_fmt(x) for x in xs) + "]"


def print_formula(template: Node, assignment: Mapping[str, str], params,
                  dim_names: Sequence[str] | None = None) -> str:
    """Render a learned formula: the hardened structure, then ``;`` annotation lines.

    The first line parses back to the hardened template; annotations carry the
    normalized importance weights and predicate coefficients.
    """
    hard = harden(template, assignment)
    norm = params.normalized()
    lines = [to_text(hard)]
    for n in walk(hard):
        if isinstance(n, (And, Or)):
            key = f"w:{n.slot}"
            if key not in norm:
                raise KeyError(f"missing parameter slot {key}")
            ws = ", ".join(f"w{i + 1}={_fmt(x)}" for i, x in enumerate(norm[key]))
            lines.append(f"; {'and' if isinstance(n, And) else 'or'} {n.slot}: {ws}")
        elif isinstance(n, Temporal):
            key = f"omega:{n.slot}"
            if key not in norm:
                raise KeyError(f"missing parameter slot {key}")
            lines.append(f"; {n.kind} {n.slot} [{n.lo} {n.hi}]: Omega={format_vector(norm[key])}")
        elif isinstance(n, GraphOp):
            keys = [k for k in norm if k.startswith(f"W:{n.slot}@")]
            if not keys:
                raise KeyError(f"missing parameter slot W:{n.slot}@...")
            for key in keys:
                at = key.split("@", 1)[1]
                nb = ", ".join(params.neighbor_order[key])
                lines.append(f"; {n.kind} {n.slot} at {at} over ({nb}): "
                             f"W={format_vector(norm[key])}")
    for name, p in params.predicates().items():
        lines.append(f"; {name} := {format_predicate(p, dim_names)}")
    return "\n".join(lines)
