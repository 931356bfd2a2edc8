import re

import hypothesis
import pytest

from wgstl.graph import build_graph
from wgstl.engine import ParamStore, backward, forward
from wgstl.logic import (And, GraphOp, Not, Or, Pred, Temporal, number_slots, span)

hypothesis.settings.register_profile("default", max_examples=100, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")

SIX_NODES = ["v1", "v2", "v3", "v4", "v5", "v6"]
SIX_EDGES = [("v1", "v2"), ("v1", "v4"), ("v2", "v3"), ("v3", "v4"),
              ("v4", "v5"), ("v4", "v6"), ("v5", "v6")]


@pytest.fixture
def six_node_graph():
    return build_graph(SIX_NODES, SIX_EDGES)


@pytest.fixture
def star4():
    return build_graph(["r", "a", "b", "c"], [("r", "a"), ("r", "b"), ("r", "c"), ("a", "b")])


def random_graph(rng, n_nodes, p=0.5, connected_root=True):
    nodes = [f"n{i}" for i in range(n_nodes)]
    edges = [(u, v) for i, u in enumerate(nodes) for v in nodes[i + 1:] if rng.random() < p]
    if connected_root:
        # every node gets at least one neighbor so graph quantifiers are defined everywhere
        have = {x for e in edges for x in e}
        for i, v in enumerate(nodes):
            if v not in have:
                u = nodes[(i + 1) % n_nodes]
                edges.append((v, u))
                have |= {u, v}
    return build_graph(nodes, edges)


def random_formula(rng, depth, preds=("p", "q"), hardened=True, max_hi=2):
    """Random formula tree with canonical slot ids."""
    def go(d):
        if d == 0:
            return Pred(str(rng.choice(preds)))
        op = rng.choice(["not", "and", "or", "temp", "graph", "pred"],
                        p=[0.15, 0.15, 0.15, 0.25, 0.25, 0.05])
        if op == "pred":
            return Pred(str(rng.choice(preds)))
        if op == "not":
            return Not(go(d - 1))
        if op in ("and", "or"):
            cls = And if op == "and" else Or
            return cls((go(d - 1), go(d - 1)))
        if op == "temp":
            lo = int(rng.integers(0, max_hi + 1))
            hi = int(rng.integers(lo, max_hi + 1))
            kinds = ["always", "eventually"] + ([] if hardened else ["tempX"])
            return Temporal(str(rng.choice(kinds)), lo, hi, go(d - 1))
        kinds = ["forall", "exists"] + ([] if hardened else ["graphX"])
        return GraphOp(str(rng.choice(kinds)), go(d - 1))
    return number_slots(go(depth))


def ensure_template(rng, node, hardened=True):
    """Wrap so the tree has at least one temporal and one graph operator."""
    from wgstl.logic import walk
    kinds = {type(n) for n in walk(node)}
    if GraphOp not in kinds:
        node = GraphOp(str(rng.choice(["forall", "exists"] + ([] if hardened else ["graphX"]))), node)
    if Temporal not in kinds:
        node = Temporal(str(rng.choice(["always", "eventually"] + ([] if hardened else ["tempX"]))),
                        0, int(rng.integers(0, 2)), node)
    return number_slots(node)


def depth(node):
    """Operator nesting depth; a bare predicate has depth 0."""
    if isinstance(node, Pred):
        return 0
    kids = node.children if isinstance(node, (And, Or)) else (node.child,)
    return 1 + max(depth(k) for k in kids)


def random_case(rng, hardened, max_hi=2, dim=2):
    g = random_graph(rng, int(rng.integers(2, 6)))
    h = int(rng.integers(1, 7))
    while True:
        t = ensure_template(rng, random_formula(rng, int(rng.integers(1, 5)), hardened=hardened,
                                                max_hi=max_hi), hardened)
        if span(t) <= h and depth(t) <= 4:
            break
    root = str(rng.choice(g.nodes))
    X = rng.normal(size=(int(rng.integers(1, 4)), len(g.nodes), h + 1, dim))
    return g, t, root, X


def finite_difference_check(rng, h=1e-5):
    """Return the worst relative error over every parameter of one random case."""
    g, t, root, X = random_case(rng, hardened=False)
    p = ParamStore.init(t, g, root, X.shape[-1], seed=int(rng.integers(1 << 30)))
    for k in p.keys():
        p.raw[k] = p.raw[k] + rng.uniform(-0.4, 0.4, p.raw[k].shape)
    upstream = rng.normal(size=X.shape[0])
    r, tr = forward(t, p, X, g, root)
    grads = backward(tr, p, upstream)
    worst = 0.0
    for k in p.keys():
        for i in range(p.raw[k].size):
            q = p.copy()
            q.raw[k][i] += h
            fp = forward(t, q, X, g, root)[0] @ upstream
            q.raw[k][i] -= 2 * h
            fm = forward(t, q, X, g, root)[0] @ upstream
            fd = (fp - fm) / (2 * h)
            an = grads[k][i]
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-6))
    return worst



_ACCEPTANCE = {}


def pytest_runtest_makereport(item, call):
    m = re.match(r"test_criterion_(\d+)_", item.name)
    if not m:
        return
    n = int(m.group(1))
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        if call.excinfo is None:
            status = "PASS"
        elif call.excinfo.errisinstance(pytest.skip.Exception):
            status = "SKIP"
        else:
            status = "FAIL"
        _ACCEPTANCE.setdefault(n, []).append((item.name, status))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        results = _ACCEPTANCE[n]
        statuses = {s for _, s in results}
        overall = "FAIL" if "FAIL" in statuses else ("PASS" if "PASS" in statuses else "SKIP")
        detail = ", ".join(f"{name}={s}" for name, s in results)
        terminalreporter.write_line(f"criterion {n}: {overall}  [{detail}]")
