import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from prisample import analysis
from prisample.analysis import (
    InclusionScheme,
    SchemeTag,
    conjecture_compare,
    exact_oracle,
    exactify,
    marginals,
    sample_exact_k,
    unit_variance,
)
from prisample.model import SeededGenerator


def test_unit_variance_table():
    n, k = 20, 5
    assert unit_variance(SchemeTag.PRI, n, k) == 3.75
    assert unit_variance(SchemeTag.UR, n, k) == 3.0
    assert unit_variance(SchemeTag.THR, n, k) == 3.0
    assert math.isclose(unit_variance(SchemeTag.WR, n, k), 3.4205, abs_tol=5e-5)
    assert unit_variance(SchemeTag.PRI, n, 1) == math.inf


def test_wr_presence_variance_from_definition():
    # Var(w/p * 1[present]) = w^2 (1 - p) / p for w = 1
    n, k = 20, 5
    p = 1 - (1 - 1 / n) ** k
    assert math.isclose(unit_variance(SchemeTag.WR, n, k), (1 - p) / p, rel_tol=1e-12)


def test_fixed_threshold_variance():
    assert analysis.fixed_thr_item_variance(2.0, 3.0) == 2.0
    assert analysis.fixed_thr_item_variance(5.0, 3.0) == 0.0
    assert analysis.pair_inversion_prob(1.0, 4.0) == 0.125


def _brute_unit_pri(n, k, grid=400):
    """Oracle by midpoint-rule enumeration over all alphas for tiny unit instances."""
    pts = (np.arange(grid) + 0.5) / grid
    mesh = np.array(list(itertools.product(pts, repeat=n)))
    q = 1.0 / mesh
    order = np.argsort(-q, axis=1)
    tau = np.take_along_axis(q, order[:, k:k + 1], axis=1)[:, 0]
    kept = (order[:, :k] == 0).any(axis=1)
    est = np.where(kept, np.maximum(1.0, tau), 0.0)
    return est.mean(), est.var()


def test_oracle_against_grid_enumeration():
    mean, var = _brute_unit_pri(3, 2, grid=150)
    assert math.isclose(exact_oracle([1, 1, 1], 2, 0).value, 1.0, rel_tol=1e-9)
    assert math.isclose(mean, 1.0, rel_tol=2e-2)
    assert math.isclose(var, exact_oracle([1, 1, 1], 2, 0, "variance").value, rel_tol=5e-2)


@pytest.mark.parametrize("weights,k", [((1.0, 1.0, 1.0), 2), ((4.0, 2.0, 1.0, 1.0), 2), ((3.0, 2.0, 1.0), 1)])
def test_oracle_means_are_exact(weights, k):
    for i, w in enumerate(weights):
        assert math.isclose(exact_oracle(weights, k, i).value, w, rel_tol=1e-8)


def test_oracle_values():
    assert math.isclose(exact_oracle([1, 1, 1, 1], 2, 0, "variance").value, 2.0, rel_tol=1e-8)
    assert math.isclose(exact_oracle([3, 2, 1], 2, 0, "cross_moment", other_item=1).value, 6.0, rel_tol=1e-8)
    assert abs(exact_oracle([3, 2, 1], 2, 0, "covariance", other_item=1).value) < 1e-8
    assert exact_oracle([1, 1], 1, 0, "second_moment").value == math.inf


def test_oracle_monte_carlo_agrees():
    q = exact_oracle([4, 2, 1, 1], 3, 3, "variance").value
    m = exact_oracle([4, 2, 1, 1], 3, 3, "variance", method="monte_carlo", trials=400_000, seed=1)
    assert abs(m.value - q) < 4 * m.stderr


def test_oracle_refusals():
    with pytest.raises(ValueError):
        exact_oracle([1] * 5, 2, 0)
    with pytest.raises(ValueError):
        exact_oracle([1, 0, 1], 2, 0)
    with pytest.raises(ValueError):
        exact_oracle([1, 1, 1], 2, 0, "cross_moment")
    with pytest.raises(ValueError):
        exact_oracle([1, 1, 1], 2, 0, "skewness")


# --------------------------------------------------------------------------
# exactify


def test_exactify_examples():
    ev = exactify([0.5, 0.5, 1.0])
    assert len(ev) == 1 and ev[0].forced == (2,) and ev[0].pick == 1 and ev[0].mass == 1.0
    ev = exactify([0.75, 0.75, 0.5])
    assert [round(e.mass, 12) for e in ev] == [0.75, 0.25]
    assert ev[1].forced == (0, 1)


def test_exactify_rejects_non_integer_sum():
    with pytest.raises(ValueError):
        exactify([0.3, 0.3])
    with pytest.raises(ValueError):
        InclusionScheme.from_probs([1.2, 0.8])


@st.composite
def feasible(draw):
    n = draw(st.integers(1, 12))
    k = draw(st.integers(1, n))
    raw = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n)))
    # water-fill raw weights into probabilities summing to k
    tau = 1.0
    for _ in range(200):
        p = np.minimum(1.0, raw * tau)
        tau *= k / p.sum()
    p = np.minimum(1.0, raw * tau)
    p *= k / p.sum()
    p = np.minimum(p, 1.0)
    if abs(p.sum() - k) > 1e-12:
        p = np.full(n, k / n)
    return p


@given(feasible())
def test_exactify_properties(p):
    n = len(p)
    k = round(p.sum())
    ev = exactify(p)
    assert len(ev) <= n
    assert abs(math.fsum(e.mass for e in ev) - 1) <= 1e-12
    assert all(e.size == k for e in ev)
    assert np.abs(marginals(ev, n) - p).max() <= 1e-9


def test_exactify_marginals_by_enumeration():
    p = [0.9, 0.6, 0.3, 0.2]
    ev = exactify(p)
    # expand every event into explicit k-sets and sum their probabilities
    probs = {}
    for e in ev:
        for chosen in itertools.combinations(e.pool, e.pick):
            s = tuple(sorted(e.forced + chosen))
            probs[s] = probs.get(s, 0.0) + e.mass / math.comb(len(e.pool), e.pick)
    marg = np.zeros(4)
    for s, pr in probs.items():
        assert len(s) == 2
        marg[list(s)] += pr
    assert np.allclose(marg, p, atol=1e-12)


def test_sample_exact_k_draws():
    p = np.array([0.9, 0.6, 0.3, 0.2])
    draws = sample_exact_k(exactify(p), 4, 100_000, SeededGenerator(0))
    assert np.all(draws.sum(axis=1) == 2)
    se = np.sqrt(p * (1 - p) / len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - p) < 4 * se)


def test_threshold_scheme():
    s = InclusionScheme.threshold([4, 2, 1, 1], 2)
    assert s.probs == (1.0, 0.5, 0.25, 0.25) and s.k == 2


def test_conjecture_compare_quadrature_and_exact():
    rec = conjecture_compare([4.0, 2.0, 1.0, 1.0], 2)
    assert rec.method == "quadrature" and rec.holds and rec.pri_total < rec.thr_total
    rec = conjecture_compare([4.0, 2.0, 1.0, 1.0], 3)
    assert rec.method == "exact" and rec.pri_total == 0.0
    assert rec.label == "empirical evidence"
