import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance
from oracles import brute_force_ot_cost, dyadic_simplex
from otclean.errors import ConvergenceWarning, InfeasibleMarginals, InstanceTooLarge, NonFiniteCost, ShapeMismatch
from otclean.ot import SinkhornConfig, exact_ot, plan_objective, sinkhorn


def test_single_cell():
    t = sinkhorn([[0.7]], [1.0], [1.0])
    assert t.plan.tolist() == [[1.0]]


@pytest.mark.parametrize("gamma", [1e-3, 1e-2, 1.0])
def test_zero_cost_gives_product(gamma):
    t = sinkhorn(np.zeros((2, 2)), [0.5, 0.5], [0.5, 0.5], SinkhornConfig(gamma=gamma))
    np.testing.assert_allclose(t.plan, np.full((2, 2), 0.25), atol=1e-15)


def test_gamma_1e3_close_to_exact_on_6x3(rng):
    d, a, b = random_instance(rng, 6, 3)
    t = sinkhorn(d, a, b, SinkhornConfig(gamma=1e-3, max_iterations=50_000))
    assert abs(plan_objective(t, d)[0] - exact_ot(d, a, b)[1]) <= 1e-2


def test_marginal_errors():
    with pytest.raises(InfeasibleMarginals):
        sinkhorn(np.zeros((2, 2)), [0.5, 0.6], [0.5, 0.5])
    with pytest.raises(InfeasibleMarginals):
        sinkhorn(np.zeros((2, 2)), [1.0, 0.0], [0.5, 0.5])
    with pytest.raises(NonFiniteCost):
        sinkhorn([[0.0, np.inf]], [1.0], [0.5, 0.5])
    with pytest.raises(InstanceTooLarge):
        exact_ot(np.zeros((1025, 1)), np.full(1025, 1 / 1025), [1.0])


def test_config_validation():
    for bad in ({"gamma": 0.0}, {"tolerance": -1.0}, {"max_iterations": 0}):
        with pytest.raises(ValueError):
            SinkhornConfig(**bad)


def test_nonconvergence_warns_and_returns(rng):
    d, a, b = random_instance(rng, 40, 6)
    with pytest.warns(ConvergenceWarning):
        t = sinkhorn(d, a, b, SinkhornConfig(gamma=1e-3, max_iterations=3))
    assert not t.converged
    assert t.marginal_violation > 1e-9
    assert np.all(t.plan >= 0)


def test_plan_invariants(rng):
    for _ in range(20):
        d, a, b = random_instance(rng, int(rng.integers(1, 80)), int(rng.integers(1, 10)))
        t = sinkhorn(d, a, b)
        assert t.converged and t.marginal_violation <= 1e-9
        assert np.all(t.plan >= 0)
        assert abs(t.plan.sum() - 1) <= 2 * t.marginal_violation + 1e-15
        np.testing.assert_allclose(t.plan.sum(axis=1), a, atol=1e-9, rtol=0)
        np.testing.assert_allclose(t.plan.sum(axis=0), b, atol=1e-9, rtol=0)
        cost, ent, obj = plan_objective(t, d)
        assert obj == pytest.approx(cost - 1e-2 * ent)
        assert t.objective == pytest.approx(obj)


def test_cost_nonincreasing_as_gamma_falls(rng):
    for _ in range(10):
        d, a, b = random_instance(rng, int(rng.integers(2, 65)), int(rng.integers(2, 9)))
        costs = [plan_objective(sinkhorn(d, a, b, SinkhornConfig(gamma=g, max_iterations=50_000)), d)[0]
                 for g in (1e-1, 1e-2, 1e-3)]
        assert costs[0] >= costs[1] - 1e-12 >= costs[2] - 2e-12
        assert abs(costs[2] - exact_ot(d, a, b)[1]) <= 1e-2


def test_high_gamma_limit(rng):
    d, a, b = random_instance(rng, 30, 5)
    t = sinkhorn(d, a, b, SinkhornConfig(gamma=1e3))
    assert np.abs(t.plan - np.outer(a, b)).max() <= 1e-4


def test_permutation_equivariance(rng):
    d, a, b = random_instance(rng, 25, 4)
    perm = rng.permutation(25)
    t = sinkhorn(d, a, b).plan
    tp = sinkhorn(d[perm], a[perm], b).plan
    np.testing.assert_allclose(tp, t[perm], atol=1e-12)


def test_stabilized_matches_naive(rng):
    for gamma in (1e-1, 1e-2):
        d, a, b = random_instance(rng, 20, 4)
        d = d / 2  # keep the naive kernel comfortably above underflow
        cfg = SinkhornConfig(gamma=gamma, max_iterations=20_000, tolerance=1e-12)
        stab = sinkhorn(d, a, b, cfg).plan
        naive = sinkhorn(d, a, b, SinkhornConfig(gamma=gamma, max_iterations=20_000, tolerance=1e-12,
                                                 stabilized=False)).plan
        assert np.abs(stab - naive).max() <= 1e-8


def test_plan_objective_examples():
    assert plan_objective(np.array([[1.0]]), np.array([[0.3]]))[:2] == (0.3, 0.0)
    cost, ent, _ = plan_objective(np.full((2, 2), 0.25), np.zeros((2, 2)))
    assert cost == 0.0 and ent == pytest.approx(2 * np.log(2), rel=1e-15)
    with pytest.raises(ShapeMismatch):
        plan_objective(np.ones((2, 2)), np.ones((2, 3)))


def test_plan_objective_double_loop(rng):
    t, d = rng.dirichlet(np.ones(12)).reshape(4, 3), rng.uniform(0, 2, (4, 3))
    t[0, 0] = 0.0
    cost = ent = 0.0
    for i in range(4):
        for j in range(3):
            cost += t[i, j] * d[i, j]
            if t[i, j] > 0:
                ent -= t[i, j] * np.log(t[i, j])
    got = plan_objective(t, d, 0.5)
    np.testing.assert_allclose(got, (cost, ent, cost - 0.5 * ent), rtol=1e-13)


def test_exact_examples():
    plan, cost = exact_ot(np.array([[0.0, 1.0], [1.0, 0.0]]), [0.5, 0.5], [0.5, 0.5])
    assert cost == 0.0
    np.testing.assert_array_equal(plan, np.diag([0.5, 0.5]))
    assert exact_ot(np.array([[0.0, 1.0], [0.0, 1.0]]), [0.5, 0.5], [0.5, 0.5])[1] == 0.5


def test_exact_matches_vertex_search_on_dyadic_instances(rng):
    for _ in range(15):
        n, k = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        d = rng.integers(0, 10, size=(n, k)).astype(float)
        a, b = dyadic_simplex(rng, n), dyadic_simplex(rng, k)
        plan, cost = exact_ot(d, a, b)
        assert cost == float(brute_force_ot_cost(d, a, b))
        np.testing.assert_allclose(plan.sum(axis=1), a, atol=1e-15)
        np.testing.assert_allclose(plan.sum(axis=0), b, atol=1e-15)


def test_exact_matches_vertex_search_on_real_instances(rng):
    for _ in range(10):
        d, a, b = random_instance(rng, 4, 3)
        assert exact_ot(d, a, b)[1] == pytest.approx(float(brute_force_ot_cost(d, a, b)), abs=1e-12)


def test_exact_agrees_with_linprog(rng):
    linprog = pytest.importorskip("scipy.optimize").linprog
    for _ in range(10):
        d, a, b = random_instance(rng, int(rng.integers(2, 20)), int(rng.integers(2, 8)))
        n, k = d.shape
        eq = np.vstack([np.kron(np.eye(n), np.ones(k)), np.kron(np.ones(n), np.eye(k))])
        ref = linprog(d.ravel(), A_eq=eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
        assert exact_ot(d, a, b)[1] == pytest.approx(ref.fun, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 40), st.integers(1, 8), st.sampled_from([1e-1, 1e-2]))
def test_sinkhorn_feasibility_property(seed, n, k, gamma):
    d, a, b = random_instance(np.random.default_rng(seed), n, k)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        t = sinkhorn(d, a, b, SinkhornConfig(gamma=gamma))
    assert t.marginal_violation <= 1e-9
