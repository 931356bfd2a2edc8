import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from wgstl.engine import ParamStore, backward, forward, soft_aggregate
from wgstl.graph import Trajectory, build_graph
from wgstl.logic import EvaluationError, crisp_robustness, parse_structure

import reference
from conftest import finite_difference_check, random_case

finite = st.floats(-10, 10, allow_nan=False)


def test_constant_vector():
    for b in (1.0, -1.0, 0.3):
        assert soft_aggregate([2.5, 2.5, 2.5], [0.1, 3.0, 1.0], b, 0.7) == pytest.approx(2.5, abs=1e-15)


def test_closed_form_value():
    # s1 = e^-1 / (e^-1 + e^-2), result s1*1 + s2*2, evaluated in 30-digit arithmetic
    assert soft_aggregate([1, 2], [1, 1], 1.0, 1.0) == pytest.approx(1.2689414213699951, abs=1e-15)


def test_small_sigma_is_min_max():
    assert soft_aggregate([1, 2], [1, 1], 1.0, 0.01) == pytest.approx(1.0, abs=1e-6)
    assert soft_aggregate([1, 2], [1, 1], -1.0, 0.01) == pytest.approx(2.0, abs=1e-6)


@pytest.mark.parametrize("r, w, sigma, msg", [
    ([], [], 1.0, "non-empty"),
    ([1.0], [1.0], 0.0, "sigma"),
    ([1.0, 2.0], [1.0, 0.0], 1.0, "positive"),
    ([1.0, 2.0], [1.0], 1.0, "weights"),
])
def test_soft_aggregate_errors(r, w, sigma, msg):
    with pytest.raises(ValueError, match=msg):
        soft_aggregate(r, w, 1.0, sigma)


@st.composite
def agg_inputs(draw, max_n=16):
    n = draw(st.integers(1, max_n))
    r = draw(arrays(float, n, elements=finite))
    w = draw(arrays(float, n, elements=st.floats(1e-3, 10)))
    b = draw(st.sampled_from([1.0, -1.0]) | st.floats(-2, 2))
    sigma = draw(st.floats(1e-3, 10))
    return r, w, b, sigma


@given(agg_inputs())
def test_bounded_by_min_max(args):
    r, w, b, sigma = args
    out = soft_aggregate(r, w, b, sigma)
    assert r.min() - 1e-12 <= out <= r.max() + 1e-12


@given(agg_inputs(), st.floats(0.01, 100))
def test_joint_positive_homogeneity(args, lam):
    r, w, b, sigma = args
    lhs = soft_aggregate(lam * r, w, b, lam * sigma)
    rhs = lam * soft_aggregate(r, w, b, sigma)
    assert lhs == pytest.approx(rhs, abs=1e-12 * max(1.0, lam * np.abs(r).max()))


@given(agg_inputs(), st.floats(1e-3, 1e3))
def test_weight_scale_invariance(args, c):
    r, w, b, sigma = args
    assert soft_aggregate(r, c * w, b, sigma) == pytest.approx(
        soft_aggregate(r, w, b, sigma), abs=1e-12 * max(1.0, np.abs(r).max()))


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=8, unique=True),
       st.sampled_from([1.0, -1.0]))
def test_limit_monotone_in_sigma(r, b):
    r = np.array(r)
    if np.min(np.diff(np.sort(r))) < 1e-3:
        return
    target = r.min() if b > 0 else r.max()
    gaps = [abs(soft_aggregate(r, np.ones_like(r), b, s) - target) for s in (1, 0.1, 0.01, 0.001)]
    assert all(g1 >= g2 for g1, g2 in zip(gaps, gaps[1:]))


# ---- forward / backward

def single_neighbor_setup(value=2.3):
    g = build_graph(["r", "n"], [("r", "n")])
    t = parse_structure("(always [0 0] (forall (pred p)))")
    p = ParamStore.init(t, g, "r", 1, coef_scale=0.0)
    p.set("a:p", [1.0])
    data = np.zeros((2, 1, 1))
    data[1, 0, 0] = value
    return g, t, p, Trajectory(g.nodes, data)


def test_singleton_aggregations_are_identity():
    g, t, p, traj = single_neighbor_setup(2.3)
    r, _ = forward(t, p, traj, g, "r")
    assert r.tolist() == [pytest.approx(2.3, abs=1e-15)]


def test_linear_predicate_gradients():
    g, t, p, traj = single_neighbor_setup(2.3)
    p.set("c:p", [0.4])
    r, tr = forward(t, p, traj, g, "r")
    grads = backward(tr, p)
    assert grads["c:p"].tolist() == [-1.0]
    assert grads["a:p"][0] == pytest.approx(2.3, abs=1e-15)


def test_backward_rejects_stale_trace():
    g, t, p, traj = single_neighbor_setup()
    _, tr = forward(t, p, traj, g, "r")
    p.set("c:p", [1.0])
    with pytest.raises(ValueError, match="different parameters"):
        backward(tr, p)


def test_forward_errors():
    g = build_graph(["r", "n", "x"], [("r", "n")])
    t = parse_structure("(always [0 3] (forall (forall (pred p))))")
    with pytest.raises(EvaluationError, match="no neighbors"):
        ParamStore.init(t, build_graph(["r"], []), "r", 1)
    p = ParamStore.init(t, g, "r", 1)
    with pytest.raises(Exception, match="horizon"):
        forward(t, p, np.zeros((1, 3, 3, 1)), g, "r")


def test_relaxed_endpoints_match_hardened():
    rng = np.random.default_rng(4)
    g = build_graph(["r", "a", "b"], [("r", "a"), ("r", "b")])
    t = parse_structure("(or (tempX [0 2] (graphX (pred p))) (not (tempX [1 3] (graphX (pred p)))))")
    p = ParamStore.init(t, g, "r", 2, relaxed=True, seed=1)
    X = rng.normal(size=(7, 3, 5, 2))
    for bt0, bg0, bt1, bg1 in [(1, 1, -1, -1), (-1, 1, 1, -1), (1, -1, -1, 1)]:
        for k, val in (("b:t0", bt0), ("b:g0", bg0), ("b:t1", bt1), ("b:g1", bg1)):
            p.set(k, [val])
        relaxed, _ = forward(t, p, X, g, "r")
        assign = {"t0": "always" if bt0 > 0 else "eventually", "g0": "forall" if bg0 > 0 else "exists",
                  "t1": "always" if bt1 > 0 else "eventually", "g1": "forall" if bg1 > 0 else "exists"}
        hard, _ = forward(t, p, X, g, "r", assignment=assign)
        np.testing.assert_array_equal(relaxed, hard)


@pytest.mark.parametrize("seed", range(10))
def test_gradients_match_finite_differences(seed):
    assert finite_difference_check(np.random.default_rng(seed)) <= 1e-4


def soft_vs_crisp_gap(rng, sigma=0.01):
    """|smooth - crisp| relative to the spread of predicate values, equal weights."""
    g, t, root, X = random_case(rng, hardened=True, max_hi=1, dim=1)
    # integer-valued signals: competing values differ by >= 1 or tie exactly
    X = np.round(X * 3)
    p = ParamStore.init(t, g, root, 1, sigma=sigma, coef_scale=0.0)
    if "a:p" in p.raw:
        p.set("a:p", [1.0])
    if "a:q" in p.raw:
        p.set("a:q", [-1.0])
        p.set("c:q", [0.5])
    soft, _ = forward(t, p, X, g, root)
    preds = p.predicates()
    crisp = np.array([crisp_robustness(Trajectory(g.nodes, x), g, root, 0, t, preds) for x in X])
    spread = max(1.0, float(X.max() - X.min()))
    return float(np.max(np.abs(soft - crisp)) / spread)


def test_small_sigma_forward_matches_crisp():
    rng = np.random.default_rng(123)
    gaps = [soft_vs_crisp_gap(rng) for _ in range(200)]
    assert max(gaps) <= 1e-3


RAIN_OMEGA1 = [0.1087, 0.2210, 0.0655, 0.1927, 0.0163, 0.1349, 0.2609]
RAIN_W = [0.0443, 0.1439, 0.0319, 0.1930, 0.1299, 0.0000, 0.1984, 0.1719, 0.0867]
ALBURY_NEIGHBORS = ["WaggaWagga", "Canberra", "Tuggeranong", "MountGinini", "Bendigo", "Sale",
                    "MelbourneAirport", "Melbourne", "Watsonia"]


def albury_model_params():
    g = build_graph(["Albury"] + ALBURY_NEIGHBORS, [("Albury", v) for v in ALBURY_NEIGHBORS])
    t = parse_structure("(or (always [0 6] (exists (pred p))) "
                        "(not (eventually [7 14] (exists (pred p)))))")
    p = ParamStore.init(t, g, "Albury", 4, relaxed=False, coef_scale=0.0)
    p.set("omega:t0", RAIN_OMEGA1)
    p.set("W:g0@Albury", RAIN_W)
    p.set("W:g1@Albury", RAIN_W)
    p.set("w:c0", [0.6891, 0.3109])
    p.set("a:p", [-0.0298, 0.0226, 0.0222, -0.0309])
    p.set("c:p", [0.6593])
    return g, t, p


def test_rain_model_matches_reference():
    # a learned rain model for the Albury region, evaluated on synthetic weather
    g, t, p = albury_model_params()
    rng = np.random.default_rng(2013)
    X = np.concatenate([rng.uniform(0, 12, (3, 10, 15, 1)), rng.uniform(0, 8, (3, 10, 15, 2)),
                        rng.choice([-1.0, 1.0], (3, 10, 15, 1))], axis=-1)
    r, _ = forward(t, p, X, g, "Albury")
    weights = {k: list(p.weight(k)) for k in p.keys() if k.startswith(("w:", "omega:", "W:"))}
    preds = {n: (q.a, q.c) for n, q in p.predicates().items()}
    expected = [reference.robustness(t, x.tolist(), g, "Albury", 0, weights, preds, 1.0) for x in X]
    np.testing.assert_allclose(r, expected, rtol=0, atol=1e-12)
