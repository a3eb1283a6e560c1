"""Step-size and extrapolation-weight calculus for the split solver.

Everything here is closed-form: the admissible inertia cap Lambda(gamma),
the gamma thresholds keeping that cap positive, the descent margin
xi(alpha, gamma), and the curvature constants induced by a plugged denoiser
when it replaces the first proximal step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "StepParams",
    "lambda_of_gamma",
    "gamma_threshold",
    "xi_of",
    "make_params",
    "default_params",
    "pnp_nonsmooth_constants",
    "pnp_nonsmooth_gamma_threshold",
]


def lambda_of_gamma(gamma: float, L_f1: float, L_h: float, l: float) -> float:
    """Upper bound Lambda(gamma) on the admissible extrapolation weight.

    Lambda(gamma) = (1 - gamma*l - 2*gamma*L_h) / (2 + gamma*L_h) - gamma^2 * L_f1^2.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return (1.0 - gamma * l - 2.0 * gamma * L_h) / (2.0 + gamma * L_h) - gamma**2 * L_f1**2


def gamma_threshold(L_f1: float, L_h: float, l: float) -> float:
    """Largest gamma_bar with every gamma in (0, gamma_bar) admissible.

    Admissible means gamma < 1/(L_f1 + L_h) and Lambda(gamma) > 0.  For
    L_h = 0 the bound is the exact positive root of Lambda; for L_h > 0 it is
    min(1/(L_f1+L_h), gamma_0) with gamma_0 the positive root of the
    quadratic sufficient condition
    (L_h*L_f1 + L_f1^2) g^2 + (2*L_h + L_f1 + l) g - 1 = 0.
    """
    if L_f1 <= 0:
        raise ValueError(f"L_f1 must be positive, got {L_f1}")
    if L_h < 0:
        raise ValueError(f"L_h must be nonnegative, got {L_h}")
    if L_h == 0.0:
        return (-l + math.sqrt(l * l + 8.0 * L_f1**2)) / (4.0 * L_f1**2)
    a = L_h * L_f1 + L_f1**2
    b = 2.0 * L_h + L_f1 + l
    gamma0 = (-b + math.sqrt(b * b + 4.0 * a)) / (2.0 * a)
    return min(1.0 / (L_f1 + L_h), gamma0)


def xi_of(alpha: float, gamma: float, L_h: float, tau: float) -> float:
    """Descent margin multiplying ||x^k - x^{k-1}||^2 in the energy drop.

    xi = alpha/gamma + alpha*L_h - alpha^2*L_h/2 - gamma*alpha^2*L_h^2/2
         - alpha^2*L_h/(2*tau) - alpha^2/(tau*gamma).
    Zero exactly when alpha = 0; positive whenever alpha < tau < Lambda(gamma).
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return (
        alpha / gamma
        + alpha * L_h
        - alpha**2 * L_h / 2.0
        - gamma * alpha**2 * L_h**2 / 2.0
        - alpha**2 * L_h / (2.0 * tau)
        - alpha**2 / (tau * gamma)
    )


@dataclass(frozen=True)
class StepParams:
    """Solver parameters together with the constants they were sized against.

    In certified mode the constructor enforced gamma < 1/(L_f1+L_h),
    0 <= alpha < tau < Lambda(gamma) and xi > 0 (xi = 0 allowed only for
    alpha = 0), which is exactly what the descent guarantees require.
    """

    gamma: float
    alpha: float
    tau: float
    lambda_gamma: float
    xi: float
    L_f1: float
    L_h: float
    l: float
    certified: bool

    @property
    def descent_dy_coeff(self) -> float:
        """Coefficient of ||y^{k+1} - y^k||^2 in the guaranteed energy drop."""
        return (self.lambda_gamma - self.tau) * (1.0 / self.gamma + self.L_h / 2.0)


def make_params(
    gamma: float,
    alpha: float,
    L_f1: float,
    L_h: float,
    l: float,
    tau: float | None = None,
    certified: bool = True,
) -> StepParams:
    """Assemble :class:`StepParams`, validating the admissibility conditions.

    With ``certified=False`` the derived quantities are still computed but no
    condition is enforced; downstream theory checks then only warn.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    lam = lambda_of_gamma(gamma, L_f1, L_h, l)
    if tau is None:
        tau = (alpha + lam) / 2.0
    if certified:
        cap = L_f1 + L_h
        if cap > 0 and gamma >= 1.0 / cap:
            raise ValueError(
                f"gamma={gamma:.6g} violates gamma < 1/(L_f1+L_h) = {1.0 / cap:.6g}"
            )
        if lam <= 0:
            raise ValueError(
                f"Lambda(gamma) = {lam:.6g} <= 0 at gamma={gamma:.6g}; "
                "reduce gamma below gamma_threshold"
            )
        if not alpha < lam:
            raise ValueError(f"alpha={alpha:.6g} must be < Lambda(gamma)={lam:.6g}")
        if alpha > 0 and not (alpha < tau < lam):
            raise ValueError(
                f"tau={tau:.6g} must lie in (alpha, Lambda(gamma)) = "
                f"({alpha:.6g}, {lam:.6g})"
            )
    if tau <= 0:
        # Degenerate uncertified corner (lam <= 0, alpha = 0); keep xi defined.
        tau = max(tau, 1e-16)
    xi = xi_of(alpha, gamma, L_h, tau)
    if certified and alpha > 0 and xi <= 0:
        raise ValueError(f"xi(alpha, gamma) = {xi:.6g} <= 0; parameters not admissible")
    return StepParams(
        gamma=gamma,
        alpha=alpha,
        tau=tau,
        lambda_gamma=lam,
        xi=xi,
        L_f1=L_f1,
        L_h=L_h,
        l=l,
        certified=certified,
    )


def default_params(
    L_f1: float, L_h: float, l: float, alpha_fraction: float
) -> StepParams:
    """Certified parameters: gamma at 99% of its threshold, alpha as a
    fraction of Lambda(gamma), tau at the midpoint of (alpha, Lambda)."""
    if not 0.0 <= alpha_fraction < 1.0:
        raise ValueError(f"alpha_fraction must be in [0, 1), got {alpha_fraction}")
    gamma = 0.99 * gamma_threshold(L_f1, L_h, l)
    lam = lambda_of_gamma(gamma, L_f1, L_h, l)
    if lam <= 0:
        raise ValueError("no admissible gamma for the given constants")
    alpha = alpha_fraction * lam
    return make_params(gamma, alpha, L_f1, L_h, l)


def pnp_nonsmooth_constants(L: float, gamma: float) -> tuple[float, float]:
    """Curvature constants of the denoiser-induced first term.

    When a gradient-step denoiser with contraction factor L < 1 replaces the
    first proximal step, the induced smooth term has gradient Lipschitz
    constant L/(gamma*(1-L)) and lower-curvature constant L/(gamma*(L+1)).
    """
    if not 0.0 <= L < 1.0:
        raise ValueError(f"denoiser gradient Lipschitz constant must be in [0,1), got {L}")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return L / (gamma * (1.0 - L)), L / (gamma * (L + 1.0))


def pnp_nonsmooth_gamma_threshold(L: float, L_h: float) -> float:
    """Largest admissible gamma for the denoiser-in-first-slot scheme.

    Because gamma*L_f1 = L/(1-L) is gamma-free, admissibility reduces to
    L/(1-L) + gamma*L_h < 1 together with Lambda(gamma) > 0, where
    Lambda(gamma) = (1/(L+1) - 2*gamma*L_h)/(2 + gamma*L_h) - (L/(1-L))^2.
    For L_h = 0 and a feasible L the gamma range is unbounded (returns inf).
    """
    if not 0.0 < L < 1.0:
        raise ValueError(f"need 0 < L < 1, got {L}")
    ratio = L / (1.0 - L)
    a = 1.0 / (L + 1.0)
    b = ratio * ratio
    if ratio >= 1.0 or a / 2.0 - b <= 0:
        raise ValueError(
            f"denoiser constant L={L} too large: no gamma satisfies the "
            "admissibility conditions (need roughly L < 0.4)"
        )
    if L_h == 0.0:
        return math.inf
    g_cap = (1.0 - ratio) / L_h
    g_lambda = (a - 2.0 * b) / (L_h * (2.0 + b))
    return min(g_cap, g_lambda)
