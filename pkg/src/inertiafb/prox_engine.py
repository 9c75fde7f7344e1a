"""Inexact inertial proximal-gradient point via a dual FISTA loop.

For the strongly convex subproblem

    h(y; x, s) = f1(y) - f1(x) + <grad f0(x) - (beta/alpha)(x-s), y-x>
                 + ||y-x||^2 / (2 alpha)

the engine maximizes the concave dual and stops as soon as the primal
candidate ``y = prox_{alpha xi}(xbar - alpha M^T w)`` closes the gap test

    h(y) <= (2 / (2 + tau)) * psi(w),

which certifies ``0 in eps-subdiff of h`` at y with
``eps = -(tau/2) h(y)``.  Weak duality ``psi <= h`` is asserted at every
inner iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from inertiafb.problem import CompositeProblem, ProxFunction


class EngineError(RuntimeError):
    """Inner solver contract violation (weak duality broken, bad query)."""


def theta_from_tau(tau: float) -> float:
    """Strong-convexity factor ``2/(sqrt(2+tau)+sqrt(tau))^2`` in (0, 1]."""
    return 2.0 / (math.sqrt(2.0 + tau) + math.sqrt(tau)) ** 2


@dataclass
class ProxQuery:
    x: np.ndarray
    s: np.ndarray
    alpha: float
    beta: float
    tau: float
    max_inner: int = 2000
    abs_tol: Optional[float] = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")


@dataclass
class ProxResult:
    y_tilde: np.ndarray
    h_value: float
    psi_value: float
    epsilon: float
    w_tilde: np.ndarray
    inner_iters: int
    converged: str  # "gap" | "abs" | "maxiter"

    @property
    def ok(self) -> bool:
        return self.converged != "maxiter"


def eval_h(problem: CompositeProblem, x: np.ndarray, s: np.ndarray,
           alpha: float, beta: float, y: np.ndarray) -> float:
    """Subproblem objective; ``+inf`` iff y is outside dom(f1)."""
    f1x = problem.f1.value(x)
    if not np.isfinite(f1x):
        raise ValueError("x must lie in dom(f1)")
    f1y = problem.f1.value(y)
    if not np.isfinite(f1y):
        return np.inf
    v = problem.f0.grad(x) - (beta / alpha) * (x - s)
    d = y - x
    return float(f1y - f1x + np.dot(v, d) + np.dot(d, d) / (2.0 * alpha))


def conjugate_prox(g: ProxFunction, v: np.ndarray, sigma: float) -> np.ndarray:
    """``prox_{sigma g*}(v)`` through Moreau's identity."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    v = np.asarray(v, dtype=float)
    return v - sigma * g.prox(v / sigma, 1.0 / sigma)


class _DualProblem:
    """Quantities of one subproblem instance, shared across inner iterates."""

    def __init__(self, problem: CompositeProblem, query: ProxQuery):
        self.problem = problem
        self.f1 = problem.f1
        self.alpha = query.alpha
        x, s = query.x, query.s
        f1x = self.f1.value(x)
        if not np.isfinite(f1x):
            raise EngineError("prox query with x outside dom(f1)")
        self.f1x = f1x
        self.x = x
        self.v = problem.f0.grad(x) - (query.beta / query.alpha) * (x - s)
        self.xbar = x - self.alpha * self.v
        self.c = -0.5 * self.alpha * float(np.dot(self.v, self.v)) - f1x
        self.xbar_sq = float(np.dot(self.xbar, self.xbar))

    def primal(self, w: np.ndarray) -> np.ndarray:
        q = self.xbar - self.alpha * self.f1.rmatvec(w)
        return self.f1.xi.prox(q, self.alpha)

    def h(self, y: np.ndarray) -> float:
        f1y = self.f1.value(y)
        if not np.isfinite(f1y):
            return np.inf
        d = y - self.x
        return float(f1y - self.f1x + np.dot(self.v, d)
                     + np.dot(d, d) / (2.0 * self.alpha))

    def psi(self, w: np.ndarray):
        q = self.xbar - self.alpha * self.f1.rmatvec(w)
        z = self.f1.xi.prox(q, self.alpha)
        conj = self.f1.conjugate_sum(w)
        if not np.isfinite(conj):
            return -np.inf, z
        r = z - q
        val = (self.f1.xi.value(z)
               + (np.dot(r, r) - np.dot(q, q) + self.xbar_sq) / (2.0 * self.alpha)
               - conj + self.c)
        return float(val), z


def dual_objective(problem: CompositeProblem, query: ProxQuery,
                   w: np.ndarray):
    """Dual value and primal candidate at ``w``.

    Returns ``(psi, primal_candidate)``; ``psi`` is ``-inf`` when ``w`` is
    outside the dual domain (some conjugate value is infinite).
    """
    return _DualProblem(problem, query).psi(np.asarray(w, dtype=float))


def solve_inexact_prox(problem: CompositeProblem, query: ProxQuery,
                       warm_start: Optional[np.ndarray] = None,
                       inner_hook: Optional[Callable[[int, float, float], None]] = None,
                       ) -> ProxResult:
    """Compute an inexact inertial proximal point with a gap certificate.

    FISTA runs on the negated dual with step ``1/(alpha ||M||^2)``; the
    stopping test uses the best dual value seen so far together with its
    primal candidate.  When ``tau == 0`` the gap test degenerates, so the
    engine instead requires ``h - psi <= abs_tol``; the same absolute branch
    also catches the stationary case ``h(yhat) = 0`` for ``tau > 0``.
    ``inner_hook(l, h, psi)``, when given, observes every inner iterate.
    """
    dp = _DualProblem(problem, query)
    tau = query.tau
    eta_gap = 2.0 / (2.0 + tau)
    abs_tol = query.abs_tol
    if abs_tol is None:
        fx = problem.f0.value(query.x) + dp.f1x
        abs_tol = 1e-12 * (1.0 + abs(fx))

    m = problem.f1.dual_dim
    if warm_start is not None and warm_start.shape == (m,):
        w = np.array(warm_start, dtype=float)
    else:
        w = np.zeros(m)

    # psi is a sum of terms on the scale of |c| and |f1(x)|, so its
    # cancellation noise is relative to that scale, not to |h|
    guard_tol = 1e-10 * (1.0 + abs(dp.c) + abs(dp.f1x))

    def duality_guard(h_val, psi_val):
        if psi_val > h_val + guard_tol * (1.0 + abs(h_val)):
            raise EngineError(
                f"weak duality violated: psi={psi_val!r} > h={h_val!r}")

    def finish(y, h_val, psi_val, w_val, iters, branch):
        eps = -(tau / 2.0) * h_val
        return ProxResult(y_tilde=y, h_value=h_val, psi_value=psi_val,
                          epsilon=max(eps, 0.0), w_tilde=w_val,
                          inner_iters=iters, converged=branch)

    # evaluate the starting dual point (iterate 0)
    psi_best, y_best = dp.psi(w)
    h_best = dp.h(y_best)
    w_best = w
    if inner_hook is not None:
        inner_hook(0, h_best, psi_best)
    duality_guard(h_best, psi_best)

    def stop_branch(h_val, psi_val):
        gap = h_val - psi_val
        if tau > 0 and h_val <= eta_gap * psi_val:
            return "gap"
        if tau == 0 and gap <= abs_tol:
            return "abs"
        if abs(h_val) <= abs_tol and gap <= abs_tol:
            return "abs"
        return ""

    branch = stop_branch(h_best, psi_best)
    if branch or m == 0:
        # m == 0 means the primal candidate is the exact prox point
        return finish(y_best, h_best, psi_best, w_best, 0, branch or "gap")

    # FISTA on -psi
    bound = problem.f1.op_norm_sq_bound
    if bound <= 0:
        raise EngineError("op_norm_sq_bound must be positive with blocks present")
    sigma = 1.0 / (query.alpha * bound)
    t = 1.0
    u = w.copy()
    w_prev = w.copy()
    since_improve = 0
    for it in range(1, query.max_inner + 1):
        z_u = dp.primal(u)
        w_new = np.asarray(u + sigma * problem.f1.matvec(z_u), dtype=float)
        parts = []
        for blk, vi in zip(problem.f1.blocks, problem.f1.split(w_new)):
            parts.append(conjugate_prox(blk.fn, vi, sigma))
        w_new = np.concatenate(parts)

        psi_l, y_l = dp.psi(w_new)
        h_l = dp.h(y_l)
        if inner_hook is not None:
            inner_hook(it, h_l, psi_l)
        duality_guard(h_l, psi_l)
        if psi_l > psi_best:
            psi_best, y_best, h_best, w_best = psi_l, y_l, h_l, w_new
            since_improve = 0
        else:
            since_improve += 1
        branch = stop_branch(h_best, psi_best)
        if branch:
            return finish(y_best, h_best, psi_best, w_best, it, branch)
        # cancellation noise can pin the computed psi strictly below a
        # numerically stationary h ~ 0, leaving both tests unreachable;
        # a stalled dual with |h| <= abs_tol is accepted as stationary
        if since_improve >= 50 and abs(h_best) <= abs_tol:
            return finish(y_best, h_best, psi_best, w_best, it, "abs")

        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        u = w_new + ((t - 1.0) / t_new) * (w_new - w_prev)
        w_prev = w_new
        t = t_new

    return finish(y_best, h_best, psi_best, w_best, query.max_inner, "maxiter")
