"""Composite problem abstraction ``f = f0 + f1``.

``f0`` is a smooth (possibly nonconvex) term exposed through value/gradient
oracles.  ``f1`` is a convex term with the structure

    f1(x) = sum_i g_i(M_i x) + xi(x),

where each ``g_i`` and ``xi`` admit closed-form proximity operators and the
``M_i`` are linear operators with exact adjoints.  Points are dense float64
arrays; extended-real values use ``numpy.inf``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class DomainError(ValueError):
    """A point lies outside the open set where a smooth oracle is defined."""


# ---------------------------------------------------------------------------
# smooth part


class SmoothOracle:
    """Value/gradient oracle for the smooth term.

    Parameters
    ----------
    value_fn, grad_fn : callable
        Evaluate f0 and its gradient at a flat float64 array.
    lipschitz_hint : float, optional
        A priori Lipschitz constant of the gradient, if known.
    """

    def __init__(self, value_fn: Callable[[np.ndarray], float],
                 grad_fn: Callable[[np.ndarray], np.ndarray],
                 lipschitz_hint: Optional[float] = None):
        self._value_fn = value_fn
        self._grad_fn = grad_fn
        self.lipschitz_hint = lipschitz_hint
        # solvers evaluate value and gradient repeatedly at the same point
        # (descent tests, merit values, subproblem setup); memoize the last
        # few points to avoid recomputing expensive oracles
        self._value_cache: list = []
        self._grad_cache: list = []

    @staticmethod
    def _lookup(cache: list, key: bytes):
        for k, v in cache:
            if k == key:
                return v
        return None

    @staticmethod
    def _store(cache: list, key: bytes, val, depth: int = 3):
        cache.append((key, val))
        if len(cache) > depth:
            cache.pop(0)

    def value(self, x: np.ndarray) -> float:
        key = np.asarray(x, dtype=float).tobytes()
        hit = self._lookup(self._value_cache, key)
        if hit is None:
            hit = float(self._value_fn(x))
            self._store(self._value_cache, key, hit)
        return hit

    def grad(self, x: np.ndarray) -> np.ndarray:
        key = np.asarray(x, dtype=float).tobytes()
        hit = self._lookup(self._grad_cache, key)
        if hit is None:
            hit = np.asarray(self._grad_fn(x), dtype=float)
            self._store(self._grad_cache, key, hit)
        return hit.copy()


# ---------------------------------------------------------------------------
# linear operators


class LinearOp:
    """Linear operator with an exact adjoint, acting on flat arrays."""

    in_dim: int
    out_dim: int

    def matvec(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class IdentityOp(LinearOp):
    def __init__(self, n: int):
        self.in_dim = self.out_dim = n

    def matvec(self, x):
        return np.asarray(x, dtype=float)

    def rmatvec(self, y):
        return np.asarray(y, dtype=float)


class MatrixOp(LinearOp):
    def __init__(self, a: np.ndarray):
        self.a = np.asarray(a, dtype=float)
        self.out_dim, self.in_dim = self.a.shape

    def matvec(self, x):
        return self.a @ x

    def rmatvec(self, y):
        return self.a.T @ y


def adjoint_residual(op: LinearOp, rng: np.random.Generator,
                     trials: int = 5) -> float:
    """Worst relative defect of <Mx, y> = <x, M^T y> on random vectors."""
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(op.in_dim)
        y = rng.standard_normal(op.out_dim)
        lhs = float(np.dot(op.matvec(x), y))
        rhs = float(np.dot(x, op.rmatvec(y)))
        worst = max(worst, abs(lhs - rhs) / (1.0 + abs(lhs) + abs(rhs)))
    return worst


def power_iteration_sq_norm(op: LinearOp, iters: int = 50,
                            seed: int = 0) -> float:
    """Estimate of lambda_max(M^T M) by power iteration."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.in_dim)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = op.rmatvec(op.matvec(v))
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
    return lam


# ---------------------------------------------------------------------------
# proximable convex functions


class ProxFunction:
    """Convex function with a closed-form proximity operator.

    ``prox(u, sigma)`` returns the minimizer of ``value(y) + ||y-u||^2 /
    (2 sigma)``.  Functions used as a block term ``g_i`` additionally expose
    ``conjugate(w)``, the convex conjugate value, which the dual engine needs
    to evaluate the dual objective.  Indicator-type conjugates accept a small
    relative feasibility slack so that dual iterates touched by roundoff do
    not flip to ``-inf``.
    """

    #: relative feasibility slack for indicator-type conjugates
    feas_rtol = 1e-9

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def prox(self, u: np.ndarray, sigma: float) -> np.ndarray:
        raise NotImplementedError

    def conjugate(self, w: np.ndarray) -> float:
        raise NotImplementedError(f"{type(self).__name__} has no conjugate oracle")


class ZeroFunction(ProxFunction):
    def value(self, x):
        return 0.0

    def prox(self, u, sigma):
        return np.asarray(u, dtype=float)

    def conjugate(self, w):
        if np.max(np.abs(w), initial=0.0) <= self.feas_rtol:
            return 0.0
        return np.inf


class L1Norm(ProxFunction):
    """``weight * ||u - shift||_1``; conjugate is linear on a box."""

    def __init__(self, weight: float = 1.0, shift: Optional[np.ndarray] = None):
        if weight <= 0:
            raise ValueError("weight must be positive")
        self.weight = float(weight)
        self.shift = None if shift is None else np.asarray(shift, dtype=float)

    def _centered(self, u):
        return u if self.shift is None else u - self.shift

    def value(self, x):
        return self.weight * float(np.sum(np.abs(self._centered(x))))

    def prox(self, u, sigma):
        t = sigma * self.weight
        z = self._centered(np.asarray(u, dtype=float))
        out = np.sign(z) * np.maximum(np.abs(z) - t, 0.0)
        return out if self.shift is None else out + self.shift

    def conjugate(self, w):
        w = np.asarray(w, dtype=float)
        if np.max(np.abs(w), initial=0.0) > self.weight * (1.0 + self.feas_rtol):
            return np.inf
        if self.shift is None:
            return 0.0
        return float(np.dot(w, self.shift))


class NonnegIndicator(ProxFunction):
    """Indicator of the nonnegative orthant; feasibility test is exact."""

    def value(self, x):
        return 0.0 if np.min(x, initial=0.0) >= 0.0 else np.inf

    def prox(self, u, sigma):
        return np.maximum(u, 0.0)

    def conjugate(self, w):
        # support function of the cone {w <= 0}
        if np.max(w, initial=0.0) <= self.feas_rtol:
            return 0.0
        return np.inf


class NonposIndicator(ProxFunction):
    """Indicator of the nonpositive cone (used in conjugate-prox tests)."""

    def value(self, x):
        return 0.0 if np.max(x, initial=0.0) <= 0.0 else np.inf

    def prox(self, u, sigma):
        return np.minimum(u, 0.0)


# ---------------------------------------------------------------------------
# structured convex term and composite problem


@dataclass
class Block:
    op: LinearOp
    fn: ProxFunction


class StructuredConvexTerm:
    """``f1(x) = sum_i g_i(M_i x) + xi(x)`` with stacked dual variables.

    ``op_norm_sq_bound`` must upper-bound ``||M||^2`` for the stacked operator
    ``M``; when omitted it is estimated by 50 power iterations times a 1.05
    safety factor (the dual step size relies on the bound being valid).
    """

    def __init__(self, blocks: Sequence[Block], xi: ProxFunction, n: int,
                 op_norm_sq_bound: Optional[float] = None):
        self.blocks = list(blocks)
        self.xi = xi
        self.n = int(n)
        self.dual_dim = sum(b.op.out_dim for b in self.blocks)
        self._offsets = np.cumsum([0] + [b.op.out_dim for b in self.blocks])
        if op_norm_sq_bound is None and self.blocks:
            op_norm_sq_bound = 1.05 * power_iteration_sq_norm(_Stacked(self))
        self.op_norm_sq_bound = float(op_norm_sq_bound or 0.0)

    def split(self, w: np.ndarray) -> list[np.ndarray]:
        return [w[self._offsets[i]:self._offsets[i + 1]]
                for i in range(len(self.blocks))]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if not self.blocks:
            return np.zeros(0)
        return np.concatenate([b.op.matvec(x) for b in self.blocks])

    def rmatvec(self, w: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n)
        for b, wi in zip(self.blocks, self.split(w)):
            out += b.op.rmatvec(wi)
        return out

    def value(self, x: np.ndarray) -> float:
        total = self.xi.value(x)
        if not np.isfinite(total):
            return np.inf
        for b in self.blocks:
            total += b.fn.value(b.op.matvec(x))
            if not np.isfinite(total):
                return np.inf
        return float(total)

    def conjugate_sum(self, w: np.ndarray) -> float:
        total = 0.0
        for b, wi in zip(self.blocks, self.split(w)):
            total += b.fn.conjugate(wi)
            if not np.isfinite(total):
                return np.inf
        return total


class _Stacked(LinearOp):
    def __init__(self, term: StructuredConvexTerm):
        self.term = term
        self.in_dim = term.n
        self.out_dim = term.dual_dim

    def matvec(self, x):
        return self.term.matvec(x)

    def rmatvec(self, y):
        return self.term.rmatvec(y)


def stacked_op(term: StructuredConvexTerm) -> LinearOp:
    return _Stacked(term)


@dataclass
class CompositeProblem:
    f0: SmoothOracle
    f1: StructuredConvexTerm
    n: int

    def __post_init__(self):
        if self.f1.n != self.n:
            raise ValueError("f1 dimension does not match problem dimension")


def eval_f(problem: CompositeProblem, x: np.ndarray) -> float:
    """``f0(x) + f1(x)``; ``+inf`` exactly when x is outside dom(f1)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise ValueError(f"expected shape ({problem.n},), got {x.shape}")
    f1x = problem.f1.value(x)
    if not np.isfinite(f1x):
        return np.inf
    return problem.f0.value(x) + f1x


@dataclass
class GradientReport:
    max_rel_error: float
    probed: int
    skipped: list = field(default_factory=list)


def check_gradient(problem: CompositeProblem, x: np.ndarray,
                   step: Optional[float] = None, max_coords: int = 32,
                   seed: int = 0) -> GradientReport:
    """Central-difference check of the smooth gradient at ``x``.

    Probes at most ``max_coords`` random coordinates; a coordinate whose
    probe leaves the domain of f0 is skipped and flagged in the report.
    """
    x = np.asarray(x, dtype=float)
    if step is None:
        step = 1e-6 * (1.0 + float(np.linalg.norm(x)))
    g = problem.f0.grad(x)
    rng = np.random.default_rng(seed)
    coords = np.arange(x.size)
    if x.size > max_coords:
        coords = rng.choice(x.size, size=max_coords, replace=False)
    worst = 0.0
    skipped = []
    for i in coords:
        e = np.zeros_like(x)
        e[i] = step
        try:
            fp = problem.f0.value(x + e)
            fm = problem.f0.value(x - e)
        except DomainError:
            skipped.append(int(i))
            continue
        if not (np.isfinite(fp) and np.isfinite(fm)):
            skipped.append(int(i))
            continue
        fd = (fp - fm) / (2.0 * step)
        worst = max(worst, abs(fd - g[i]) / (1.0 + abs(g[i])))
    return GradientReport(max_rel_error=worst, probed=len(coords) - len(skipped),
                          skipped=skipped)
