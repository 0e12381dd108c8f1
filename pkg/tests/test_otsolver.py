import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from budro.errors import ConfigError
from budro.fairmetric import CostMatrix
from budro.otsolver import (LossColumns, SolverConfig, TransportPlan, corner_enumeration_oracle, dual_objective,
                            dual_subgradient, entropic_dual_objective, plan_marginals, recover_primal_exact,
                            recover_primal_heuristic, sinkhorn_objective, solve, solve_dual_bisection,
                            solve_dual_sgd, solve_entropic, solve_entropic_sgd, worst_case_loss)

from conftest import random_instance

ETA_STAR = 1.8136663
VALUE = 0.6735114
IDENTITY_VALUE = 0.2201


def test_t2_losses(t2):
    R, _ = t2
    assert np.allclose(R.dense(), [[0.1269, 2.1269], [1.3133, 0.3133]], atol=5e-5)


def test_dual_objective_t2(t2):
    R, C = t2
    assert abs(dual_objective(R, C, 0.25, ETA_STAR) - VALUE) < 1e-6
    assert abs(dual_objective(R, C, 0.25, 0.0) - R.dense().max(axis=0).mean()) < 1e-15
    big = 1e6
    asymptote = 0.25 * big + np.trace(R.dense()) / 2
    assert abs(dual_objective(R, C, 0.25, big) - asymptote) < 1e-6
    with pytest.raises(ValueError):
        dual_objective(R, C, 0.25, -1.0)


def test_dual_subgradient_t2(t2):
    R, C = t2
    assert dual_subgradient(R, C, 0.25, 1.0) == pytest.approx(-0.75, abs=1e-15)
    assert dual_subgradient(R, C, 0.25, 2.0) == pytest.approx(0.25, abs=1e-15)
    assert dual_subgradient(R, C, 1.0, 0.0) >= 0


def test_bisection_t2(t2):
    R, C = t2
    sol = solve_dual_bisection(R, C, 0.25)
    assert abs(sol.eta - ETA_STAR) < 1e-6
    assert abs(sol.primal_value - VALUE) < 1e-6 and abs(sol.dual_value - sol.primal_value) < 1e-12
    assert np.allclose(sol.plan.to_dense(), [[0.5, 0.25], [0.0, 0.25]], atol=1e-15)
    assert sol.plan_cost == pytest.approx(0.25, abs=1e-15)
    zero = solve_dual_bisection(R, C, 0.0)
    assert np.array_equal(zero.plan.to_dense(), np.eye(2) / 2)
    assert abs(zero.primal_value - IDENTITY_VALUE) < 5e-5
    full = solve_dual_bisection(R, C, 1.0)
    assert full.eta == 0.0 and abs(full.primal_value - 1.7201) < 5e-5
    with pytest.raises(ConfigError):
        solve_dual_bisection(R, C, -0.1)


def test_recover_exact_t2(t2):
    R, C = t2
    # column 2's kink: R_12 - eta = R_22
    kink = R.dense()[0, 1] - R.dense()[1, 1]
    assert abs(kink - ETA_STAR) < 1e-6
    plan, how = recover_primal_exact(R, C, 0.25, kink)
    assert how == "exact"
    dense = plan.to_dense()
    assert dense[0, 0] == 0.5 and dense[1, 0] == 0
    assert dense[0, 1] == 0.25 and dense[1, 1] == 0.25
    assert plan.cost == 0.25


def test_recover_heuristic_t2_outcomes(t2):
    R, C = t2
    eta = solve_dual_bisection(R, C, 0.25).eta
    seen = set()
    for seed in range(40):
        plan = recover_primal_heuristic(R, C, eta, seed)
        assert np.allclose(plan.column_sums(), 0.5, atol=0)
        dense = plan.to_dense()
        assert dense[0, 0] == 0.5
        seen.add(int(np.argmax(dense[:, 1])))
    assert seen == {0, 1}


def test_heuristic_matches_exact_without_ties():
    rng = np.random.default_rng(7)
    for _ in range(20):
        R, C, eps = random_instance(rng)
        eta = float(rng.uniform(0, 3))
        a = recover_primal_heuristic(R, C, eta, 0).to_dense()
        b, _ = recover_primal_exact(R, C, 1e9, eta)
        assert np.array_equal(a, b.to_dense())


def test_dual_sgd_t2(t2):
    R, C = t2
    cfg = SolverConfig(epsilon=0.25, batch_size=2, step_size=0.1, schedule="constant", momentum=0.0,
                       max_iters=5000, eta0=0.0, tol=1e-14)
    sol = solve_dual_sgd(R, C, SolverConfig(**{**cfg.__dict__, "schedule": "sqrt"}))
    assert abs(sol.eta - ETA_STAR) < 1e-3
    zero = solve_dual_sgd(R, C, SolverConfig(epsilon=1.0, batch_size=2, eta0=0.0, max_iters=50))
    assert zero.eta == 0.0 and all(e == 0.0 for e in zero.info["eta_history"])


def test_dual_sgd_batch_clipped():
    rng = np.random.default_rng(0)
    R, C, eps = random_instance(rng)
    sol = solve_dual_sgd(R, C, SolverConfig(epsilon=eps, batch_size=10 ** 6, max_iters=5))
    assert sol.iterations <= 5


def test_sinkhorn_objective_limits(t2):
    R, C = t2
    assert sinkhorn_objective(R, C, 0.25, 0.1, 1e4) == pytest.approx(0.25, abs=1e-12)
    # at eta = 0 both columns prefer the off-diagonal row, so the whole unit cost is spent
    assert sinkhorn_objective(R, C, 0.25, 1e-4, 0.0) == pytest.approx(0.25 - 1.0, abs=1e-6)


def test_entropic_t2(t2):
    R, C = t2
    sol = solve_entropic(R, C, 0.25, 0.001)
    assert abs(sol.primal_value - VALUE) < 5e-3
    assert sol.plan_cost <= 0.25 + 1e-12
    wide = solve_entropic(R, C, 1.0, 1e6)
    assert np.all(np.abs(wide.plan.to_dense() - 0.25) < 1e-3)


def test_entropic_zero_budget(t2):
    R, C = t2
    sol = solve_entropic(R, C, 0.0, 0.01)
    assert np.array_equal(sol.plan.to_dense(), np.eye(2) / 2)
    assert sol.eta == math.inf


def test_entropic_sgd_matches_root(t2):
    R, C = t2
    gamma = 0.05
    root = solve_entropic(R, C, 0.25, gamma).eta
    cfg = SolverConfig(epsilon=0.25, gamma=gamma, batch_size=2, step_size=0.5, momentum=0.0, max_iters=5000,
                       eta0=0.0, tol=1e-14)
    assert abs(solve_entropic_sgd(R, C, cfg).eta - root) < 1e-2


def test_entropic_gradient_tends_to_subgradient(t2):
    R, C = t2
    h = 1e-6
    for eta in (0.5, 1.0, 2.0, 3.0):
        fd = (entropic_dual_objective(R, C, 0.25, 1e-4, eta + h)
              - entropic_dual_objective(R, C, 0.25, 1e-4, eta - h)) / (2 * h)
        assert abs(fd - dual_subgradient(R, C, 0.25, eta)) < 1e-4


def test_oracle_t2_and_trivial_cases(t2):
    R, C = t2
    o = corner_enumeration_oracle(R, C, 0.25)
    assert abs(o.eta - ETA_STAR) < 1e-6 and abs(o.primal_value - VALUE) < 1e-6
    assert abs(o.dual_value - o.primal_value) < 1e-12
    const = LossColumns([0.7, 0.7, 0.7], [0.7, 0.7, 0.7], [0, 1, 0])
    Cc = CostMatrix.from_dense(np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0.0]]))
    oc = corner_enumeration_oracle(const, Cc, 0.5)
    assert oc.primal_value == pytest.approx(0.7, abs=1e-15)
    assert np.array_equal(oc.plan.to_dense(), np.eye(3) / 3)
    o0 = corner_enumeration_oracle(R, C, 0.0)
    assert np.array_equal(o0.plan.to_dense(), np.eye(2) / 2)
    with pytest.raises(ConfigError):
        corner_enumeration_oracle(LossColumns(np.ones(60), np.ones(60), np.zeros(60)),
                                  CostMatrix.from_dense(np.zeros((60, 60))), 0.1)


def test_plan_marginals_and_loss_t2(t2):
    R, C = t2
    plan = solve_dual_bisection(R, C, 0.25).plan
    w = plan_marginals(plan, [1, 0])
    # index k*n + i: (x1,0), (x2,0), (x1,1), (x2,1)
    assert np.allclose(w, [0.25, 0.25, 0.5, 0.0], atol=1e-15)
    assert abs(worst_case_loss(R, plan) - VALUE) < 1e-6
    ident = TransportPlan.identity(2)
    assert worst_case_loss(R, ident) == pytest.approx(np.trace(R.dense()) / 2, abs=1e-15)
    assert np.allclose(plan_marginals(ident, [1, 0]), [0, 0.5, 0.5, 0])


def test_solve_dispatch(t2):
    R, C = t2
    for method in ("dual-bisection", "dual-sgd", "entropic", "entropic-sgd"):
        sol = solve(R, C, SolverConfig(epsilon=0.25, gamma=0.01), method)
        assert np.allclose(sol.plan.column_sums(), 0.5, atol=1e-12)
    with pytest.raises(ConfigError):
        solve(R, C, SolverConfig(), "simplex")


@given(st.integers(0, 10 ** 6), st.floats(0, 5))
def test_weak_duality(seed, eta):
    R, C, eps = random_instance(np.random.default_rng(seed), n_max=8)
    sol = solve_dual_bisection(R, C, eps)
    assert dual_objective(R, C, eps, eta) >= sol.primal_value - 1e-12
    assert sol.dual_value >= sol.primal_value - 1e-12


@given(st.integers(0, 10 ** 6))
def test_column_values_convex_nonincreasing(seed):
    R, C, _ = random_instance(np.random.default_rng(seed), n_max=8)
    Rd, Cd = R.dense(), C.to_dense()
    etas = np.linspace(0, 4, 41)
    lam = np.array([(Rd - e * Cd).max(axis=0) for e in etas])
    assert np.all(np.diff(lam, axis=0) <= 1e-12)
    assert np.all(lam[:-2] + lam[2:] - 2 * lam[1:-1] >= -1e-12)


@given(st.integers(0, 10 ** 6))
def test_bisection_matches_lp(seed):
    R, C, eps = random_instance(np.random.default_rng(seed), n_max=7)
    n = R.n
    A_eq = np.zeros((n, n * n))
    for j in range(n):
        A_eq[j, j::n] = 1
    lp = linprog(-R.dense().ravel(), A_ub=C.to_dense().ravel()[None], b_ub=[eps], A_eq=A_eq,
                 b_eq=np.full(n, 1 / n), bounds=(0, None), method="highs")
    sol = solve_dual_bisection(R, C, eps)
    assert abs(sol.primal_value + lp.fun) < 1e-7
    assert np.all(np.abs(sol.plan.column_sums() - 1 / n) <= 1e-15)
    assert sol.plan_cost <= eps * (1 + 1e-6) + 1e-12
