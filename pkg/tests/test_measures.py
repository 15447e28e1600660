import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from ergonash.errors import ConfigurationError
from ergonash.grids import TorusGrid, VelocityGrid, periodic_interp
from ergonash.measures import (
    PhaseMeasure,
    StateMeasure,
    empirical_measure,
    marginal,
    product_measure,
    wasserstein1,
)


def lp_oracle(a, b, n):
    """Transport LP on the n-cycle written from scratch with scipy."""
    x = np.arange(n) / n
    d = np.abs(x[:, None] - x[None, :])
    cost = np.minimum(d, 1 - d).ravel()
    A = np.vstack([np.kron(np.eye(n), np.ones(n)), np.kron(np.ones(n), np.eye(n))])
    res = linprog(cost, A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    return res.fun


def random_measure(rng, n, sparse=False):
    w = rng.random(n)
    if sparse:
        w[rng.random(n) < 0.6] = 0.0
        w[rng.integers(n)] += 0.1
    return w / w.sum()


def test_grid_basics():
    g = TorusGrid(1, 4)
    np.testing.assert_allclose(g.nodes[:, 0], [0, 0.25, 0.5, 0.75])
    assert g.flat_index(np.array([[5]]))[0] == 1
    vg = VelocityGrid(3.0, 33)
    assert vg.nodes[vg.zero_index, 0] == 0.0
    np.testing.assert_array_equal(vg.axis, -vg.axis[::-1])
    with pytest.raises(ConfigurationError):
        VelocityGrid(3.0, 32)


def test_periodic_interp_is_exact_at_nodes_and_linear_between():
    g = TorusGrid(1, 8)
    f = np.arange(8.0)
    np.testing.assert_allclose(periodic_interp(f, g, g.nodes), f)
    assert periodic_interp(f, g, np.array([[0.9375]]))[0] == pytest.approx(3.5)  # halfway 7 -> 0


def test_marginal_examples():
    xg, vg = TorusGrid(1, 4), VelocityGrid(1.0, 3)
    w = np.zeros((4, 3))
    w[0, 0], w[0, 2], w[1, 0] = 0.3, 0.2, 0.5
    m = marginal(PhaseMeasure(xg, vg, w))
    np.testing.assert_allclose(m.weights, [0.5, 0.5, 0, 0])
    u = marginal(PhaseMeasure(xg, vg, np.full((4, 3), 1 / 12)))
    np.testing.assert_allclose(u.weights, 0.25)


def test_validation():
    g = TorusGrid(1, 4)
    with pytest.raises(ConfigurationError):
        StateMeasure(g, [0.5, 0.5, 0.1, 0])
    with pytest.raises(ConfigurationError):
        StateMeasure(g, [1.5, -0.5, 0, 0])


def test_product_examples():
    g = TorusGrid(1, 2)
    p = product_measure([StateMeasure(g, [0.25, 0.75]), StateMeasure(g, [0.5, 0.5])])
    np.testing.assert_allclose(p, [[0.125, 0.125], [0.375, 0.375]])
    g4 = TorusGrid(1, 4)
    np.testing.assert_allclose(product_measure([StateMeasure.uniform(g4)] * 2), 1 / 16)
    d = product_measure([StateMeasure.dirac(g4, 1), StateMeasure.dirac(g4, 3)])
    assert d[1, 3] == 1.0 and d.sum() == 1.0
    with pytest.raises(ConfigurationError):
        product_measure([StateMeasure.uniform(g4)] * 5)


def test_empirical_examples():
    g = TorusGrid(1, 4)
    np.testing.assert_array_equal(empirical_measure([0.0], g).weights, [1, 0, 0, 0])
    np.testing.assert_array_equal(empirical_measure([0.0, 0.5], g).weights, [0.5, 0, 0.5, 0])
    np.testing.assert_array_equal(empirical_measure([0.26], g).weights, [0, 1, 0, 0])
    # exact tie between nodes 0.25 and 0.5 goes to the smaller index
    np.testing.assert_array_equal(empirical_measure([0.375], g).weights, [0, 1, 0, 0])


def test_w1_examples():
    g = TorusGrid(1, 64)
    u = StateMeasure.uniform(g)
    assert wasserstein1(u, u) == 0.0
    assert wasserstein1(StateMeasure.dirac(g, 0), StateMeasure.dirac(g, 32)) == pytest.approx(0.5)
    assert wasserstein1(StateMeasure.dirac(g, 0), StateMeasure.dirac(g, 48)) == pytest.approx(0.25)
    with pytest.raises(ConfigurationError):
        wasserstein1(u, StateMeasure.uniform(TorusGrid(1, 32)))


@given(st.integers(0, 10_000), st.integers(2, 16), st.booleans())
def test_w1_matches_lp_oracle(seed, n, sparse):
    rng = np.random.default_rng(seed)
    a, b = random_measure(rng, n, sparse), random_measure(rng, n, sparse)
    g = TorusGrid(1, n)
    assert abs(wasserstein1(StateMeasure(g, a), StateMeasure(g, b)) - lp_oracle(a, b, n)) <= 1e-9


@given(st.integers(0, 10_000))
def test_w1_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    g = TorusGrid(1, 12)
    a, b, c = (StateMeasure(g, random_measure(rng, 12)) for _ in range(3))
    assert wasserstein1(a, b) == wasserstein1(b, a)
    assert wasserstein1(a, c) <= wasserstein1(a, b) + wasserstein1(b, c) + 1e-9


def test_w1_two_dimensional():
    g = TorusGrid(2, 4)
    a = StateMeasure.dirac(g, 0)
    b = StateMeasure.dirac(g, g.size - 1)  # node (0.75, 0.75): wrapped offset (0.25, 0.25)
    assert wasserstein1(a, b) == pytest.approx(np.sqrt(2) * 0.25)
    assert wasserstein1(a, a) == pytest.approx(0.0, abs=1e-12)


@given(st.integers(0, 10_000))
def test_mass_conservation(seed):
    rng = np.random.default_rng(seed)
    xg, vg = TorusGrid(1, 8), VelocityGrid(1.0, 5)
    w = rng.random((8, 5))
    mu = PhaseMeasure(xg, vg, w / w.sum())
    assert abs(marginal(mu).weights.sum() - 1) <= 1e-12
    ms = [StateMeasure(xg, random_measure(rng, 8)) for _ in range(3)]
    assert abs(product_measure(ms).sum() - 1) <= 1e-12
    assert abs(empirical_measure(rng.random(17), xg).weights.sum() - 1) <= 1e-12


def test_json_round_trip_bit_exact():
    rng = np.random.default_rng(0)
    g = TorusGrid(2, 5)
    m = StateMeasure(g, random_measure(rng, 25))
    back = StateMeasure.from_json(m.to_json())
    assert np.array_equal(back.weights, m.weights) and back.grid == g
    doc = json.loads(m.to_json())
    assert doc["grid"]["d"] == 2 and doc["grid"]["n"] == 5 and len(doc["weights"]) == 25
    xg, vg = TorusGrid(1, 6), VelocityGrid(2.0, 5)
    w = rng.random((6, 5))
    mu = PhaseMeasure(xg, vg, w / w.sum())
    assert np.array_equal(PhaseMeasure.from_dict(json.loads(json.dumps(mu.to_dict()))).weights, mu.weights)
