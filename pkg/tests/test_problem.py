import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inertiafb.problem import (Block, CompositeProblem, IdentityOp, L1Norm,
                               MatrixOp, NonnegIndicator, NonposIndicator,
                               SmoothOracle, StructuredConvexTerm,
                               ZeroFunction, adjoint_residual, check_gradient,
                               eval_f, power_iteration_sq_norm)
from tests.conftest import quadratic_l1_problem, smooth_only_problem


def brute_force_prox_1d(fn, u, sigma, lo=-10.0, hi=10.0, steps=200001):
    grid = np.linspace(lo, hi, steps)
    vals = np.array([fn.value(np.array([g])) + (g - u) ** 2 / (2 * sigma)
                     for g in grid])
    return grid[np.argmin(vals)]


class TestEvalF:
    def test_hand_example(self):
        n = 2
        f0 = SmoothOracle(lambda x: 0.5 * float(np.dot(x, x)), lambda x: x)
        f1 = StructuredConvexTerm([Block(IdentityOp(n), L1Norm(1.0))],
                                  xi=ZeroFunction(), n=n, op_norm_sq_bound=1.0)
        p = CompositeProblem(f0, f1, n)
        assert eval_f(p, np.array([1.0, -2.0])) == pytest.approx(5.5)

    def test_indicator_outside_domain(self):
        f0 = SmoothOracle(lambda x: 0.0, lambda x: np.zeros_like(x))
        f1 = StructuredConvexTerm([], xi=NonnegIndicator(), n=1)
        p = CompositeProblem(f0, f1, 1)
        assert eval_f(p, np.array([-1.0])) == np.inf
        assert eval_f(p, np.array([2.0])) == 0.0

    def test_zero_case(self):
        p, _, _ = quadratic_l1_problem(n=3)
        z = np.zeros(3)
        assert np.isfinite(eval_f(p, z))

    def test_dimension_mismatch_is_hard_error(self):
        p, _, _ = quadratic_l1_problem(n=3)
        with pytest.raises(ValueError):
            eval_f(p, np.zeros(4))


class TestProxFunctions:
    @pytest.mark.parametrize("u,sigma", [(2.0, 1.0), (-0.7, 0.3), (0.1, 2.0)])
    def test_l1_prox_against_brute_force(self, u, sigma):
        fn = L1Norm(1.3)
        got = fn.prox(np.array([u]), sigma)[0]
        ref = brute_force_prox_1d(fn, u, sigma)
        assert got == pytest.approx(ref, abs=2e-4)

    def test_l1_prox_with_shift(self):
        g0 = np.array([2.0])
        fn = L1Norm(1.0, shift=g0)
        got = fn.prox(np.array([4.0]), 0.5)[0]
        ref = brute_force_prox_1d(fn, 4.0, 0.5)
        assert got == pytest.approx(ref, abs=2e-4)

    def test_nonneg_prox_clamps(self):
        fn = NonnegIndicator()
        np.testing.assert_allclose(fn.prox(np.array([-1.0, 2.0]), 1.0),
                                   [0.0, 2.0])

    def test_nonneg_value_exact(self):
        fn = NonnegIndicator()
        assert fn.value(np.array([0.0, 1.0])) == 0.0
        assert fn.value(np.array([-1e-300])) == np.inf

    def test_nonpos_prox(self):
        fn = NonposIndicator()
        np.testing.assert_allclose(fn.prox(np.array([-1.0, 2.0]), 1.0),
                                   [-1.0, 0.0])

    def test_l1_conjugate_box(self):
        fn = L1Norm(0.5)
        assert fn.conjugate(np.array([0.5, -0.5])) == 0.0
        assert fn.conjugate(np.array([0.6])) == np.inf

    def test_l1_conjugate_with_shift_is_linear(self):
        g0 = np.array([3.0, -1.0])
        fn = L1Norm(1.0, shift=g0)
        w = np.array([0.5, -1.0])
        assert fn.conjugate(w) == pytest.approx(float(w @ g0))

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=8),
           st.lists(st.floats(-50, 50), min_size=1, max_size=8),
           st.floats(0.01, 10.0))
    @settings(max_examples=50, deadline=None)
    def test_prox_nonexpansive(self, u, v, sigma):
        m = min(len(u), len(v))
        u, v = np.array(u[:m]), np.array(v[:m])
        fn = L1Norm(1.0)
        pu, pv = fn.prox(u, sigma), fn.prox(v, sigma)
        assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-12

    @given(st.floats(-5, 5), st.floats(0.05, 5.0))
    @settings(max_examples=50, deadline=None)
    def test_prox_decreases_moreau_objective(self, u, sigma):
        fn = L1Norm(1.0)
        uu = np.array([u])
        p = fn.prox(uu, sigma)
        lhs = fn.value(p) + float(np.dot(p - uu, p - uu)) / (2 * sigma)
        assert lhs <= fn.value(uu) + 1e-12


class TestLinearOps:
    def test_matrix_adjoint(self):
        rng = np.random.default_rng(0)
        op = MatrixOp(rng.standard_normal((7, 4)))
        assert adjoint_residual(op, rng) < 1e-12

    def test_identity_adjoint(self):
        rng = np.random.default_rng(1)
        assert adjoint_residual(IdentityOp(9), rng) < 1e-15

    def test_power_iteration_matches_eig(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((6, 6))
        op = MatrixOp(a)
        lam = power_iteration_sq_norm(op, iters=500)
        ref = float(np.linalg.norm(a, 2) ** 2)
        assert lam == pytest.approx(ref, rel=1e-6)

    def test_default_norm_bound_is_valid(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((5, 8))
        term = StructuredConvexTerm([Block(MatrixOp(a), L1Norm(1.0))],
                                    xi=ZeroFunction(), n=8)
        assert term.op_norm_sq_bound >= float(np.linalg.norm(a, 2) ** 2)


class TestStructuredTerm:
    def test_value_sums_blocks(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((3, 5))
        term = StructuredConvexTerm(
            [Block(MatrixOp(a), L1Norm(2.0)), Block(IdentityOp(5), L1Norm(1.0))],
            xi=NonnegIndicator(), n=5)
        x = np.abs(rng.standard_normal(5))
        expected = 2.0 * np.sum(np.abs(a @ x)) + np.sum(np.abs(x))
        assert term.value(x) == pytest.approx(expected)
        assert term.value(-x) == np.inf

    def test_split_roundtrip(self):
        term = StructuredConvexTerm(
            [Block(IdentityOp(3), L1Norm(1.0)), Block(IdentityOp(3), L1Norm(1.0))],
            xi=ZeroFunction(), n=3, op_norm_sq_bound=2.0)
        w = np.arange(6.0)
        parts = term.split(w)
        np.testing.assert_allclose(np.concatenate(parts), w)

    def test_stacked_matvec_rmatvec_adjoint(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((4, 6))
        term = StructuredConvexTerm(
            [Block(MatrixOp(a), L1Norm(1.0)), Block(IdentityOp(6), L1Norm(1.0))],
            xi=ZeroFunction(), n=6)
        x = rng.standard_normal(6)
        w = rng.standard_normal(10)
        lhs = float(np.dot(term.matvec(x), w))
        rhs = float(np.dot(x, term.rmatvec(w)))
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestCheckGradient:
    def test_quadratic_exact(self):
        p = smooth_only_problem(n=6)
        rng = np.random.default_rng(6)
        rep = check_gradient(p, rng.standard_normal(6))
        assert rep.max_rel_error < 1e-8
        assert rep.probed == 6

    def test_detects_wrong_gradient(self):
        f0 = SmoothOracle(lambda x: 0.5 * float(np.dot(x, x)),
                          lambda x: 2.0 * x)
        f1 = StructuredConvexTerm([], xi=ZeroFunction(), n=3)
        p = CompositeProblem(f0, f1, 3)
        rep = check_gradient(p, np.array([1.0, 2.0, 3.0]))
        assert rep.max_rel_error > 1e-2


class TestSmoothOracleCache:
    def test_cache_returns_fresh_copies(self):
        calls = []
        f0 = SmoothOracle(lambda x: 0.0,
                          lambda x: (calls.append(1), np.array(x))[1])
        x = np.array([1.0, 2.0])
        g1 = f0.grad(x)
        g1[0] = 99.0
        g2 = f0.grad(x)
        assert g2[0] == 1.0
        assert len(calls) == 1
