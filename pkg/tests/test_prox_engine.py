import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inertiafb.problem import (Block, CompositeProblem, IdentityOp, L1Norm,
                               NonnegIndicator, SmoothOracle,
                               StructuredConvexTerm, ZeroFunction)
from inertiafb.prox_engine import (EngineError, ProxQuery, conjugate_prox,
                                   dual_objective, eval_h, solve_inexact_prox,
                                   theta_from_tau)
from tests.conftest import quadratic_l1_problem, scalar_l1_problem


class TestTheta:
    def test_tau_zero_is_one(self):
        assert theta_from_tau(0.0) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("tau", [0.0, 0.5, 1.0, 10.0, 1e6])
    def test_two_formulas_agree(self, tau):
        alt = 1.0 / (math.sqrt(1.0 + tau / 2.0) + math.sqrt(tau / 2.0)) ** 2
        assert abs(theta_from_tau(tau) - alt) <= 1e-15

    @given(st.floats(0.0, 1e8))
    @settings(max_examples=100, deadline=None)
    def test_range_and_monotone(self, tau):
        th = theta_from_tau(tau)
        assert 0.0 < th <= 1.0
        assert theta_from_tau(tau + 1.0) < th


class TestEvalH:
    def test_y_equals_x_is_zero(self):
        p, _, _ = quadratic_l1_problem(n=4)
        x = np.ones(4)
        assert eval_h(p, x, x, 0.5, 0.1, x) == pytest.approx(0.0, abs=1e-14)

    def test_hand_example_no_inertia(self):
        p = scalar_l1_problem()
        x = np.array([1.0])
        y = np.array([0.0])
        # |0| - |1| + 1*(0-1) + (0-1)^2/2 = -1.5
        assert eval_h(p, x, x, 1.0, 0.0, y) == pytest.approx(-1.5)

    def test_hand_example_with_inertia(self):
        p = scalar_l1_problem()
        x = np.array([1.0])
        s = np.array([0.0])
        y = np.array([0.0])
        # -1 + (1 - 0.5)(-1) + 0.5 = -1.0
        assert eval_h(p, x, s, 1.0, 0.5, y) == pytest.approx(-1.0)

    def test_infinite_outside_domain(self):
        f0 = SmoothOracle(lambda x: 0.0, lambda x: np.zeros_like(x))
        f1 = StructuredConvexTerm([], xi=NonnegIndicator(), n=1)
        p = CompositeProblem(f0, f1, 1)
        assert eval_h(p, np.array([1.0]), np.array([1.0]), 1.0, 0.0,
                      np.array([-1.0])) == np.inf

    def test_x_outside_domain_is_hard_error(self):
        f0 = SmoothOracle(lambda x: 0.0, lambda x: np.zeros_like(x))
        f1 = StructuredConvexTerm([], xi=NonnegIndicator(), n=1)
        p = CompositeProblem(f0, f1, 1)
        with pytest.raises(ValueError):
            eval_h(p, np.array([-1.0]), np.array([0.0]), 1.0, 0.0,
                   np.array([1.0]))


class TestConjugateProx:
    def test_abs_projects_onto_interval(self):
        got = conjugate_prox(L1Norm(1.0), np.array([2.0]), 1.0)
        assert got[0] == pytest.approx(1.0)

    def test_shifted_l1(self):
        # prox of sigma*g* with g(u)=|u-3|: projection of v - sigma*3
        fn = L1Norm(1.0, shift=np.array([3.0]))
        got = conjugate_prox(fn, np.array([0.0]), 2.0)
        assert got[0] == pytest.approx(-1.0)

    def test_nonneg_cone(self):
        fn = NonnegIndicator()
        v = np.array([2.0, -3.0])
        np.testing.assert_allclose(conjugate_prox(fn, v, 1.7),
                                   np.minimum(v, 0.0))

    @given(st.floats(-5, 5), st.floats(0.1, 5.0))
    @settings(max_examples=40, deadline=None)
    def test_matches_brute_force(self, v, sigma):
        # minimize sigma*g*(w) + 0.5 (w - v)^2 for g = |.|:
        # g* = indicator of [-1,1], so the prox is clip(v, -1, 1)
        got = conjugate_prox(L1Norm(1.0), np.array([v]), sigma)[0]
        assert got == pytest.approx(np.clip(v, -1.0, 1.0), abs=1e-12)


class TestDualObjective:
    def test_w_zero_gives_c(self):
        p, b, _ = quadratic_l1_problem(n=6, weight=0.3)
        x = np.zeros(6)
        q = ProxQuery(x=x, s=x, alpha=1.0, beta=0.0, tau=0.0)
        psi, cand = dual_objective(p, q, np.zeros(6))
        v = p.f0.grad(x)
        c = -0.5 * float(v @ v) - p.f1.value(x)
        assert psi == pytest.approx(c, rel=1e-12)
        np.testing.assert_allclose(cand, x - v)

    def test_outside_dual_domain_is_minus_inf(self):
        p, _, _ = quadratic_l1_problem(n=3, weight=0.3)
        x = np.zeros(3)
        q = ProxQuery(x=x, s=x, alpha=1.0, beta=0.0, tau=0.0)
        psi, _ = dual_objective(p, q, np.full(3, 10.0))
        assert psi == -np.inf

    def test_weak_duality_random_w(self):
        p, _, _ = quadratic_l1_problem(n=8, weight=0.3)
        rng = np.random.default_rng(0)
        x = rng.standard_normal(8)
        s = rng.standard_normal(8)
        q = ProxQuery(x=x, s=s, alpha=0.7, beta=0.2, tau=0.0)
        for _ in range(20):
            w = rng.uniform(-0.3, 0.3, 8)
            psi, cand = dual_objective(p, q, w)
            h = eval_h(p, x, s, 0.7, 0.2, cand)
            assert psi <= h + 1e-10 * (1.0 + abs(h))


class TestSolveInexactProx:
    def test_matches_soft_threshold_oracle(self):
        p, b, _ = quadratic_l1_problem(n=100, seed=3, weight=0.3)
        rng = np.random.default_rng(7)
        x = rng.standard_normal(100)
        q = ProxQuery(x=x, s=x, alpha=1.0, beta=0.0, tau=0.0,
                      abs_tol=1e-10, max_inner=5000)
        res = solve_inexact_prox(p, q)
        # xbar = x - (x - b) = b; exact prox = soft(b, 0.3)
        ref = np.sign(b) * np.maximum(np.abs(b) - 0.3, 0.0)
        assert res.ok
        np.testing.assert_allclose(res.y_tilde, ref, atol=1e-6)

    def test_stationary_point_fires_abs_branch(self):
        p = scalar_l1_problem()
        x = np.array([0.0])
        q = ProxQuery(x=x, s=x, alpha=1.0, beta=0.0, tau=0.0, abs_tol=1e-12)
        res = solve_inexact_prox(p, q)
        assert res.converged == "abs"
        assert abs(res.y_tilde[0]) < 1e-10
        assert res.h_value == pytest.approx(0.0, abs=1e-12)

    def test_gap_branch_with_positive_tau(self):
        p, _, _ = quadratic_l1_problem(n=30, seed=1)
        rng = np.random.default_rng(2)
        x = rng.standard_normal(30)
        s = rng.standard_normal(30)
        q = ProxQuery(x=x, s=s, alpha=0.5, beta=0.3, tau=1.0)
        res = solve_inexact_prox(p, q)
        assert res.converged == "gap"
        assert res.h_value <= (2.0 / 3.0) * res.psi_value + 1e-12
        assert res.epsilon == pytest.approx(-0.5 * res.h_value)

    def test_dist33_certificate(self):
        p, _, _ = quadratic_l1_problem(n=20, seed=5)
        rng = np.random.default_rng(8)
        x = rng.standard_normal(20)
        for tau in (0.0, 1.0, 1e6):
            q = ProxQuery(x=x, s=x, alpha=0.8, beta=0.0, tau=tau,
                          abs_tol=1e-12)
            res = solve_inexact_prox(p, q)
            theta = theta_from_tau(tau)
            d = res.y_tilde - x
            lhs = (theta / (2 * 0.8)) * float(d @ d)
            assert lhs <= -res.h_value + 1e-10 * (1.0 + abs(res.h_value))

    def test_h_value_nonpositive(self):
        p, _, _ = quadratic_l1_problem(n=10, seed=9)
        rng = np.random.default_rng(10)
        for i in range(10):
            x = rng.standard_normal(10)
            q = ProxQuery(x=x, s=rng.standard_normal(10), alpha=0.3,
                          beta=0.1, tau=10.0)
            res = solve_inexact_prox(p, q)
            assert res.h_value <= 1e-12

    def test_weak_duality_at_every_inner_iterate(self):
        p, _, _ = quadratic_l1_problem(n=40, seed=11)
        rng = np.random.default_rng(12)
        x = rng.standard_normal(40)
        seen = []

        def hook(l, h, psi):
            seen.append((l, h, psi))
            assert psi <= h + 1e-10 * (1.0 + abs(h))

        q = ProxQuery(x=x, s=x, alpha=1.0, beta=0.0, tau=0.0, abs_tol=1e-10)
        solve_inexact_prox(p, q, inner_hook=hook)
        assert seen

    def test_maxiter_flag(self):
        p, _, _ = quadratic_l1_problem(n=30, seed=13)
        rng = np.random.default_rng(14)
        x = rng.standard_normal(30)
        q = ProxQuery(x=x, s=x, alpha=1.0, beta=0.0, tau=0.0, abs_tol=0.0,
                      max_inner=1)
        res = solve_inexact_prox(p, q)
        # abs_tol=0 is unreachable in finite time here
        assert res.converged == "maxiter" and not res.ok

    def test_warm_start_reduces_inner_iterations(self):
        p, _, _ = quadratic_l1_problem(n=60, seed=15)
        rng = np.random.default_rng(16)
        x = rng.standard_normal(60)
        q = ProxQuery(x=x, s=x, alpha=0.9, beta=0.0, tau=0.0, abs_tol=1e-9)
        cold = solve_inexact_prox(p, q)
        x2 = x + 1e-3 * rng.standard_normal(60)
        q2 = ProxQuery(x=x2, s=x2, alpha=0.9, beta=0.0, tau=0.0, abs_tol=1e-9)
        warm = solve_inexact_prox(p, q2, warm_start=cold.w_tilde)
        cold2 = solve_inexact_prox(p, q2)
        assert warm.inner_iters <= cold2.inner_iters

    def test_no_blocks_returns_exact_point(self):
        f0 = SmoothOracle(lambda x: 0.5 * float(np.dot(x, x)), lambda x: x)
        f1 = StructuredConvexTerm([], xi=NonnegIndicator(), n=2)
        p = CompositeProblem(f0, f1, 2)
        x = np.array([1.0, -0.0])
        q = ProxQuery(x=x, s=x, alpha=0.5, beta=0.0, tau=1e6)
        res = solve_inexact_prox(p, q)
        # exact projection of x - alpha*x onto the nonnegative orthant
        np.testing.assert_allclose(res.y_tilde, np.maximum(0.5 * x, 0.0))
        assert res.inner_iters == 0

    def test_invalid_query_rejected(self):
        with pytest.raises(ValueError):
            ProxQuery(x=np.zeros(1), s=np.zeros(1), alpha=0.0, beta=0.0,
                      tau=0.0)
        with pytest.raises(ValueError):
            ProxQuery(x=np.zeros(1), s=np.zeros(1), alpha=1.0, beta=0.0,
                      tau=-1.0)

    def test_x_outside_domain_is_engine_error(self):
        f0 = SmoothOracle(lambda x: 0.0, lambda x: np.zeros_like(x))
        f1 = StructuredConvexTerm([], xi=NonnegIndicator(), n=1)
        p = CompositeProblem(f0, f1, 1)
        q = ProxQuery(x=np.array([-1.0]), s=np.array([0.0]), alpha=1.0,
                      beta=0.0, tau=0.0)
        with pytest.raises(EngineError):
            solve_inexact_prox(p, q)
