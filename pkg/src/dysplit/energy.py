"""Energy (Lyapunov) machinery: merit values, descent and lower-bound
verification, explicit energy gradients, and sublinear-rate certificates.

The checks consume solver traces row by row and report violations instead of
raising, so uncertified runs can still be inspected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .problem import INFINITE, CompositeObjective
from .stepsize import StepParams

__all__ = [
    "EnergyReport",
    "h_gamma",
    "theta",
    "theta_gradients",
    "check_descent",
    "check_lower_bound",
    "check_lower_bound_constants",
    "rate_check",
    "theta_subgradient_estimate",
]


def h_gamma(p: CompositeObjective, gamma: float, y, z, x) -> float:
    """Anchored merit value of a (y, z, x) triple.

    H = f1(y) + f2(z) + h(y) + ||y - x - gamma*grad_h(y)||^2/(2*gamma)
        - ||z - x - gamma*grad_h(y)||^2/(2*gamma).
    Returns INFINITE exactly when f2(z) is.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    v2 = p.f2.eval(z)
    if not math.isfinite(v2):
        return INFINITE
    gh = p.h.grad(y)
    a = y - x - gamma * gh
    b = z - x - gamma * gh
    return (
        float(p.f1.eval(y))
        + float(v2)
        + float(p.h.eval(y))
        + float(np.sum(a * a)) / (2.0 * gamma)
        - float(np.sum(b * b)) / (2.0 * gamma)
    )


def theta(p: CompositeObjective, params: StepParams, u) -> float:
    """Energy of the extended tuple u = (y, z, x, x1, x2).

    theta = h_gamma(y, z, x) + alpha^2/(2*gamma) * ||x1 - x2||^2.
    Nonincreasing along certified runs.
    """
    y, z, x, x1, x2 = u
    base = h_gamma(p, params.gamma, y, z, x)
    if not math.isfinite(base):
        return INFINITE
    d = np.asarray(x1, dtype=np.float64) - np.asarray(x2, dtype=np.float64)
    return base + params.alpha**2 / (2.0 * params.gamma) * float(np.sum(d * d))


def theta_gradients(p: CompositeObjective, params: StepParams, u):
    """Closed-form gradient blocks of the energy w.r.t. y, x, x1, x2.

    The z-block is set-valued (it contains the f2 subdifferential) and is
    covered by the criticality residual instead.  Requires the Hessian
    action of h.
    """
    if p.h.hessian_vec is None:
        raise ValueError("theta_gradients needs h.hessian_vec (Hessian action of h)")
    y, z, x, x1, x2 = (np.asarray(t, dtype=np.float64) for t in u)
    gamma, alpha = params.gamma, params.alpha
    g_y = p.f1.grad(y) + (y - x) / gamma + p.h.hessian_vec(y, z - y)
    g_x = (z - y) / gamma
    g_x1 = (alpha**2 / gamma) * (x1 - x2)
    return g_y, g_x, g_x1, -g_x1


@dataclass
class EnergyReport:
    """Outcome of the trace-level theory checks.

    ``violations`` lists (k, deficit) pairs where the guaranteed energy drop
    failed by ``deficit`` beyond the rounding slack; empty on certified runs.
    The ``min_*_by_k`` lists are running minima of the step/gap norms, and
    ``rate_constants`` holds the observed sup of sqrt(K)*min together with
    the theoretical bound it must stay below.
    """

    theta_seq: list[float] = field(default_factory=list)
    violations: list[tuple[int, float]] = field(default_factory=list)
    min_dx_by_k: list[float] = field(default_factory=list)
    min_dy_by_k: list[float] = field(default_factory=list)
    min_yz_by_k: list[float] = field(default_factory=list)
    rate_constants: dict[str, float | bool] = field(default_factory=dict)

    def to_dict(self) -> dict:
        def scrub(v):
            # Infinite bounds (alpha = 0 runs) are not strict JSON.
            if isinstance(v, float) and not math.isfinite(v):
                return None
            return v

        return {
            "violations": [[int(k), float(d)] for k, d in self.violations],
            "n_violations": len(self.violations),
            "theta_first": self.theta_seq[0] if self.theta_seq else None,
            "theta_last": self.theta_seq[-1] if self.theta_seq else None,
            "theta_monotone": not self.violations
            and all(
                b <= a + 1e-12 * max(1.0, abs(a))
                for a, b in zip(self.theta_seq, self.theta_seq[1:])
            ),
            "rate_constants": {k: scrub(v) for k, v in self.rate_constants.items()},
        }


def theta_subgradient_estimate(p: CompositeObjective, params: StepParams, u) -> float:
    """Norm of the explicit subgradient element of the energy at u.

    Stacks the four gradient blocks with the z-block member
    -(x - x1)/gamma - alpha*(x1 - x2)/gamma implied by the update rules; its
    norm bounds dist(0, d(theta)) at iterate tuples and is expected to be
    controlled by ||x - x1|| + ||x1 - x2|| with a run-dependent constant that
    is logged, never asserted.
    """
    g_y, g_x, g_x1, g_x2 = theta_gradients(p, params, u)
    _, _, x, x1, x2 = (np.asarray(t, dtype=np.float64) for t in u)
    z_member = -(x - x1) / params.gamma - params.alpha * (x1 - x2) / params.gamma
    total = sum(float(np.sum(g * g)) for g in (g_y, g_x, g_x1, g_x2, z_member))
    return math.sqrt(total)


def _running_min(values) -> list[float]:
    out: list[float] = []
    cur = math.inf
    for v in values:
        cur = min(cur, v)
        out.append(cur)
    return out


def check_descent(trace, params: StepParams, tol: float = 1e-8) -> EnergyReport:
    """Verify the per-iteration guaranteed energy drop along a trace.

    For consecutive rows k and k+1 the inequality
    theta_k - theta_{k+1} >= rho1*||dy_{k+1}||^2 + xi*||dx_k||^2
    must hold, with rho1 = (Lambda - tau)*(1/gamma + L_h/2).  A row pair is a
    violation when the drop falls short by more than tol*max(1, |theta_k|).
    Violations are recorded, never raised: on an uncertified run they are
    expected and simply reported.
    """
    report = EnergyReport(theta_seq=[row.theta for row in trace])
    rho1 = params.descent_dy_coeff
    xi = params.xi
    for i in range(len(trace) - 1):
        lhs = trace[i].theta - trace[i + 1].theta
        dy = trace[i + 1].dy_norm
        rhs = rho1 * dy * dy + xi * trace[i].dx_norm ** 2
        slack = tol * max(1.0, abs(trace[i].theta))
        if lhs < rhs - slack:
            report.violations.append((trace[i + 1].k, rhs - lhs))
    report.min_dx_by_k = _running_min(row.dx_norm for row in trace)
    report.min_dy_by_k = _running_min(
        row.dy_norm for row in trace if not math.isnan(row.dy_norm)
    )
    report.min_yz_by_k = _running_min(row.yz_gap for row in trace)
    if len(trace) >= 10:
        report.rate_constants = rate_check(trace, params)
    return report


def check_lower_bound_constants(
    L_f1: float, L_h: float, gamma: float, trace, tol: float = 1e-8
) -> bool:
    """Row-wise check that the energy dominates the objective:

    theta_k >= F(z_k) + (1/(2*gamma) - (L_f1 + L_h)/2) * ||y_k - z_k||^2.
    Requires gamma < 1/(L_f1 + L_h) so the coefficient is positive.
    """
    coeff = 1.0 / (2.0 * gamma) - (L_f1 + L_h) / 2.0
    if coeff <= 0:
        raise ValueError(
            f"lower-bound coefficient {coeff:.3e} not positive; "
            "gamma must be below 1/(L_f1 + L_h)"
        )
    for row in trace:
        if not math.isfinite(row.objective):
            return False
        bound = row.objective + coeff * row.yz_gap**2
        if row.theta < bound - tol * max(1.0, abs(row.theta)):
            return False
    return True


def check_lower_bound(
    p: CompositeObjective, gamma: float, trace, tol: float = 1e-8
) -> bool:
    """Same as :func:`check_lower_bound_constants` with the constants taken
    from the composite's terms."""
    return check_lower_bound_constants(
        p.f1.lipschitz, p.h.lipschitz, gamma, trace, tol
    )


def rate_check(trace, params: StepParams, tol: float = 1e-9) -> dict[str, float | bool]:
    """Sublinear-rate certificates from the summed descent inequality.

    Summing the guaranteed drops gives
    sum_k ||dx_k||^2 <= (theta_1 - theta_min)/xi, hence
    sqrt(K) * min_{k<=K} ||dx_k|| <= sqrt((theta_1 - theta_min)/xi) for every
    prefix K.  The same telescoping bounds dy (with the dy coefficient) and
    the y-z gap (via ||y_k - z_k|| <= ||dx_k|| + alpha*||dx_{k-1}||).
    Returns observed sups, theoretical bounds, and per-family pass flags.
    """
    if len(trace) < 10:
        raise ValueError(f"rate_check needs at least 10 rows, got {len(trace)}")
    theta1 = trace[0].theta
    theta_min = min(row.theta for row in trace)
    gap = max(theta1 - theta_min, 0.0)

    def sup_sqrtk_min(values: list[float]) -> float:
        sup = 0.0
        cur = math.inf
        for i, v in enumerate(values):
            cur = min(cur, v)
            sup = max(sup, math.sqrt(i + 1.0) * cur)
        return sup

    # Prefixes stop one row short of the end so the theta value closing each
    # telescoped sum is an observed one.
    dx = [row.dx_norm for row in trace[:-1]]
    dy = [row.dy_norm for row in trace[1:]]
    yz = [row.yz_gap for row in trace[:-1]]

    out: dict[str, float | bool] = {}
    xi = params.xi
    out["dx_sup"] = sup_sqrtk_min(dx)
    out["dx_bound"] = math.sqrt(gap / xi) if xi > 0 else math.inf
    out["dx_ok"] = out["dx_sup"] <= out["dx_bound"] * (1.0 + tol) + tol

    rho1 = params.descent_dy_coeff
    out["dy_sup"] = sup_sqrtk_min(dy)
    out["dy_bound"] = math.sqrt(gap / rho1) if rho1 > 0 else math.inf
    out["dy_ok"] = out["dy_sup"] <= out["dy_bound"] * (1.0 + tol) + tol

    out["yz_sup"] = sup_sqrtk_min(yz)
    out["yz_bound"] = (
        math.sqrt(2.0 * (1.0 + params.alpha**2) * gap / xi) if xi > 0 else math.inf
    )
    out["yz_ok"] = out["yz_sup"] <= out["yz_bound"] * (1.0 + tol) + tol

    # Summability of the squared steps, the quantity the prefix bounds
    # telescope from.
    out["dx_sq_sum"] = float(sum(v * v for v in dx))
    out["dx_sq_bound"] = gap / xi if xi > 0 else math.inf
    out["dx_sq_ok"] = out["dx_sq_sum"] <= out["dx_sq_bound"] * (1.0 + tol) + tol
    # Empirical finite-length statistic: the running sum of ||dx_k|| stays
    # bounded on convergent runs.
    out["dx_total"] = float(sum(row.dx_norm for row in trace))
    return out
