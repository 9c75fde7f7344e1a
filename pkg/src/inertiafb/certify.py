"""Post-hoc verification of solver traces.

Each check replays one of the inequalities the solvers are supposed to
maintain: sufficient decrease of the merit value against the per-iteration
quantity d_k (H1), the step-norm bound through d_k (H4), the distance and
gap certificates of the inexact prox engine, the algebraic couplings between
alpha_k, beta_k and the Lipschitz estimate, the Armijo inequality, and weak
duality psi <= h.  Checks are pure functions over a trace: same rows in,
same verdicts out.  A check that lacks the columns it needs reports
``incomplete`` rather than failing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from inertiafb.prox_engine import theta_from_tau
from inertiafb.trace import Trace

_REL_TOL = 1e-9


@dataclass
class CheckResult:
    name: str
    status: str  # "pass" | "fail" | "incomplete"
    worst_residual: float = 0.0
    worst_k: int = -1
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "pass"


@dataclass
class CertReport:
    checks: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.status != "fail" for c in self.checks.values())

    def format(self) -> str:
        lines = []
        for name in sorted(self.checks):
            c = self.checks[name]
            lines.append(f"{name}.status={c.status}")
            lines.append(f"{name}.worst_residual={c.worst_residual:.6e}")
            lines.append(f"{name}.worst_k={c.worst_k}")
            if c.detail:
                lines.append(f"{name}.detail={c.detail}")
        for key in sorted(self.summary):
            lines.append(f"summary.{key}={self.summary[key]}")
        lines.append(f"overall={'pass' if self.ok else 'fail'}")
        return "\n".join(lines) + "\n"


def _solver_kind(trace: Trace) -> str:
    name = str(trace.meta.get("solver", ""))
    if name.startswith("ipila"):
        return "ipila"
    return name


def _worst(name: str, residuals) -> CheckResult:
    worst, worst_k = -math.inf, -1
    for k, r in residuals:
        if r > worst:
            worst, worst_k = r, k
    if worst_k < 0:
        return CheckResult(name=name, status="pass")
    status = "pass" if worst <= 0.0 else "fail"
    return CheckResult(name=name, status=status, worst_residual=worst,
                       worst_k=worst_k)


def check_H1(trace: Trace, a_k_rule=None) -> CheckResult:
    """Sufficient decrease: ``phi_{k+1} + a_k d_{k+1}^2 <= phi_k``.

    ``a_k_rule`` maps a row dict to the constant a_k; by default it is chosen
    from the trace metadata (1 for the backtracking solver, sigma times the
    smallest observed lambda_k for the line-search solver, 0 for the
    baseline, whose d_k is a plain step norm).
    """
    if not trace.rows:
        raise ValueError("empty trace")
    if a_k_rule is None:
        kind = _solver_kind(trace)
        if kind == "i2piano":
            a_k_rule = lambda row: 1.0
        elif kind == "ipila":
            lam_min = min((r.get("lambda_k", 1.0) for r in trace.rows),
                          default=1.0)
            if not math.isfinite(lam_min):
                lam_min = 1.0
            sigma = float(trace.meta.get("sigma", 1e-4))
            a_k_rule = lambda row, a=sigma * lam_min: a
        else:
            a_k_rule = lambda row: 0.0

    phis = [float(trace.meta["phi_init"])] if "phi_init" in trace.meta else []
    if not phis:
        return CheckResult("H1", "incomplete", detail="missing phi_init")
    residuals = []
    prev = phis[0]
    for row in trace.rows:
        phi = row["phi"]
        d = row.get("d_k", 0.0)
        lhs = phi + a_k_rule(row) * d * d
        tol = _REL_TOL * (1.0 + abs(prev))
        residuals.append((row["k"], (lhs - prev - tol) / (1.0 + abs(prev))))
        prev = phi
    return _worst("H1", residuals)


def h4_constants(trace: Trace):
    """Solver-specific ``(p, k_shift)`` for the step-norm bound."""
    kind = _solver_kind(trace)
    if kind == "i2piano":
        gamma = float(trace.meta["gamma"])
        return 1.0 / math.sqrt(gamma), 1
    if kind == "ipila":
        theta = float(trace.meta.get("theta",
                                     theta_from_tau(float(trace.meta["tau"]))))
        alphas = [r.get("alpha_k", math.nan) for r in trace.rows]
        alpha_max = max((a for a in alphas if math.isfinite(a)), default=1.0)
        return math.sqrt(2.0 * alpha_max / theta), 0
    return 1.0, 0


def check_H4(trace: Trace, p: float, k_shift: int) -> CheckResult:
    """Step-norm relates to d: ``||x^{k+1} - x^k|| <= p * d_{k+k'}``."""
    if not trace.rows:
        raise ValueError("empty trace")
    residuals = []
    n = len(trace.rows)
    for i, row in enumerate(trace.rows):
        j = i + k_shift
        if j >= n:
            continue
        step = row.get("x_step_norm", 0.0)
        bound = p * trace.rows[j]["d_k"]
        tol = _REL_TOL * (1.0 + bound)
        residuals.append((row["k"], (step - bound - tol) / (1.0 + bound)))
    return _worst("H4", residuals)


def check_prox_certificates(trace: Trace, tau=None) -> CheckResult:
    """Distance and gap certificates of the inexact prox computation.

    Row-wise: ``(theta / 2 alpha_k) ||y - x||^2 <= -h`` and ``h <= (2 /
    (2 + tau)) psi`` up to the absolute slack that the engine's stationary
    branch is allowed.  Uses ``y_step_norm`` when the rows carry it and the
    (never larger) ``x_step_norm`` otherwise.
    """
    if not trace.rows:
        raise ValueError("empty trace")
    if tau is None:
        if "tau" not in trace.meta:
            return CheckResult("prox", "incomplete", detail="missing tau")
        tau = float(trace.meta["tau"])
    theta = theta_from_tau(tau)
    eta_gap = 2.0 / (2.0 + tau)
    f0 = abs(float(trace.meta.get("f_init", 0.0)))
    slack = 1e-10 * (1.0 + f0)
    residuals = []
    for row in trace.rows:
        h = row["h"]
        psi = row.get("psi", math.nan)
        alpha = row.get("alpha_k", math.nan)
        step = row.get("y_step_norm", row.get("x_step_norm", 0.0))
        if not (math.isfinite(alpha) and alpha > 0):
            continue
        dist = (theta / (2.0 * alpha)) * step * step
        tol = _REL_TOL * (1.0 + abs(h))
        r1 = (dist - (-h) - tol) / (1.0 + abs(h))
        r2 = -math.inf
        if math.isfinite(psi):
            r2 = (h - eta_gap * psi - slack - tol) / (1.0 + abs(h))
        residuals.append((row["k"], max(r1, r2)))
    return _worst("prox", residuals)


def check_duality_gap(trace: Trace) -> CheckResult:
    """Weak duality along the trace: ``psi <= h``.

    The recorded psi carries cancellation noise proportional to the
    objective magnitude, so the check allows the same absolute slack as the
    gap certificate.
    """
    if not trace.rows:
        raise ValueError("empty trace")
    f0 = abs(float(trace.meta.get("f_init", 0.0)))
    slack = 1e-10 * (1.0 + f0)
    residuals = []
    for row in trace.rows:
        h, psi = row["h"], row.get("psi", math.nan)
        if not math.isfinite(psi):
            continue
        tol = slack + 1e-10 * (1.0 + abs(h))
        residuals.append((row["k"], (psi - h - tol) / (1.0 + abs(h))))
    return _worst("duality-gap", residuals)


def _ipila_alpha_from_beta(beta: float, delta: float, gamma: float):
    # invert beta = (b-1)/(b-1/2), b = (L+2 delta)/(L+2 gamma)
    if beta <= 0.0 or beta >= 1.0:
        return None
    b = (1.0 - 0.5 * beta) / (1.0 - beta)
    if b <= 1.0:
        return None
    L = (2.0 * delta - 2.0 * gamma * b) / (b - 1.0)
    return 2.0 * (1.0 - beta) / (L + 2.0 * gamma)


def check_param_identities(trace: Trace) -> CheckResult:
    """Replays the algebraic coupling between alpha_k, beta_k and L_k."""
    if not trace.rows:
        raise ValueError("empty trace")
    kind = _solver_kind(trace)
    residuals = []
    if kind == "i2piano":
        delta = float(trace.meta["delta"])
        gamma = float(trace.meta["gamma"])
        omega = float(trace.meta["omega"])
        theta = float(trace.meta["theta"])
        top = 1.0 + theta * omega
        for row in trace.rows:
            L, a, bta = row["L_or_gamma"], row["alpha_k"], row["beta_k"]
            b = (L + 2.0 * delta) / (L + 2.0 * gamma)
            beta_e = 0.5 * top * (b - 1.0) / (b - 0.5)
            alpha_e = (top - 2.0 * beta_e) / (L + 2.0 * gamma)
            # identity chain: (1+theta*omega)/(2a) - L/2 - beta/(2a) = delta
            lhs = top / (2.0 * a) - L / 2.0 - bta / (2.0 * a)
            r = max(abs(bta - beta_e) / (1.0 + abs(beta_e)),
                    abs(a - alpha_e) / (1.0 + abs(alpha_e)),
                    abs(lhs - delta) / (1.0 + abs(delta)),
                    abs(delta - bta / (2.0 * a) - gamma) / (1.0 + gamma))
            residuals.append((row["k"], r - _REL_TOL))
    elif kind == "ipila":
        variant = str(trace.meta.get("variant", ""))
        if variant == "practical-sec5":
            gamma = float(trace.meta["gamma_min"])
            for row in trace.rows:
                alpha_e = _ipila_alpha_from_beta(row["beta_k"], 0.5, gamma)
                if alpha_e is None:
                    continue
                r = abs(row["alpha_k"] - alpha_e) / (1.0 + abs(alpha_e))
                residuals.append((row["k"], r - _REL_TOL))
        else:
            a_max = float(trace.meta["alpha_max"])
            b_max = float(trace.meta["beta_max"])
            for row in trace.rows:
                r = max(abs(row["alpha_k"] - a_max) / (1.0 + a_max),
                        abs(row["beta_k"] - b_max) / (1.0 + b_max))
                residuals.append((row["k"], r - _REL_TOL))
    else:
        for row in trace.rows:
            L, a = row["L_or_gamma"], row["alpha_k"]
            r = max(abs(a * L - 1.0), abs(row["beta_k"]))
            residuals.append((row["k"], r - _REL_TOL))
    return _worst("param-identities", residuals)


def check_armijo(trace: Trace) -> CheckResult:
    """Merit Armijo inequality on accepted line-search steps."""
    if not trace.rows:
        raise ValueError("empty trace")
    if _solver_kind(trace) != "ipila":
        return CheckResult("armijo", "incomplete",
                           detail="solver has no line search")
    if "phi_init" not in trace.meta:
        return CheckResult("armijo", "incomplete", detail="missing phi_init")
    sigma = float(trace.meta.get("sigma", 1e-4))
    prev = float(trace.meta["phi_init"])
    residuals = []
    for row in trace.rows:
        lam, delta_k = row.get("lambda_k", math.nan), row.get("delta_k", 0.0)
        if not math.isfinite(lam) or lam <= 0.0:
            return CheckResult("armijo", "fail", worst_k=row["k"],
                               detail="nonpositive lambda_k")
        bound = prev + sigma * lam * delta_k
        tol = _REL_TOL * (1.0 + abs(prev))
        residuals.append((row["k"], (row["phi"] - bound - tol) / (1.0 + abs(prev))))
        prev = row["phi"]
    return _worst("armijo", residuals)


def summarize(trace: Trace) -> CertReport:
    """Runs every applicable check and aggregates convergence statistics."""
    if not trace.rows:
        raise ValueError("empty trace")
    report = CertReport()
    p, k_shift = h4_constants(trace)
    for result in (check_H1(trace), check_H4(trace, p, k_shift),
                   check_prox_certificates(trace), check_duality_gap(trace),
                   check_param_identities(trace), check_armijo(trace)):
        report.checks[result.name] = result

    d = trace.column("d_k")
    lams = [v for v in trace.column("lambda_k") if math.isfinite(v)]
    report.summary = {
        "rows": len(trace.rows),
        "f_final": trace.rows[-1]["f"],
        "phi_final": trace.rows[-1]["phi"],
        "sum_d_k": sum(v for v in d if math.isfinite(v)),
        "min_lambda_k": min(lams) if lams else float("nan"),
        "total_inner_iters": sum(trace.column("inner_iters")),
        "total_backtracks": sum(trace.column("backtracks")),
    }
    return report
