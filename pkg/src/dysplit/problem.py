"""Term abstractions for composite objectives F = f1 + f2 + h.

``f1`` and ``h`` are smooth terms carrying gradient and curvature constants;
``f2`` only needs a value (possibly +inf) and a proximal map.  The split
solver consumes these through :class:`CompositeObjective`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .tensorops import norm

__all__ = [
    "INFINITE",
    "ProxFailure",
    "SmoothTerm",
    "ProxableTerm",
    "CompositeObjective",
    "zero_smooth_term",
    "zero_proxable_term",
    "objective_value",
    "criticality_residual",
]

# Sentinel for an infinite term value (indicator outside its set).  Code
# must branch on it before doing arithmetic, see objective_value.
INFINITE = math.inf


class ProxFailure(RuntimeError):
    """Inner proximal solver did not reach its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class SmoothTerm:
    """A differentiable term with Lipschitz gradient.

    ``lipschitz`` bounds the gradient's Lipschitz constant.  ``lower_curvature``
    is a constant l with the term + (l/2)||.||^2 convex; any l in
    [-lipschitz, lipschitz] is admissible, smaller is sharper.  ``prox`` is an
    optional closed-form proximal map (gamma, v) -> argmin; when absent the
    solver falls back to an inner gradient descent (:func:`prox_of_smooth`).
    ``hessian_vec`` applies the (transposed) Hessian at x to a vector, needed
    only by the energy-gradient diagnostics; ``hessian_bound`` is a uniform
    bound on its operator norm.
    """

    eval: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    lower_curvature: float = 0.0
    prox: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    hessian_vec: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    hessian_bound: Optional[float] = None


@dataclass(frozen=True)
class ProxableTerm:
    """A proper closed term given by value and proximal map.

    ``prox(gamma, v)`` returns one minimizer of eval(u) + ||u - v||^2 / (2*gamma),
    deterministically.  ``eval`` may return INFINITE.
    """

    eval: Callable[[np.ndarray], float]
    prox: Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CompositeObjective:
    f1: SmoothTerm
    f2: ProxableTerm
    h: SmoothTerm


def zero_smooth_term() -> SmoothTerm:
    """The identically-zero smooth term (prox is the identity)."""
    return SmoothTerm(
        eval=lambda x: 0.0,
        grad=lambda x: np.zeros_like(np.asarray(x, dtype=np.float64)),
        lipschitz=0.0,
        lower_curvature=0.0,
        prox=lambda gamma, v: np.array(v, dtype=np.float64),
        hessian_vec=lambda x, v: np.zeros_like(np.asarray(v, dtype=np.float64)),
        hessian_bound=0.0,
    )


def zero_proxable_term() -> ProxableTerm:
    return ProxableTerm(
        eval=lambda x: 0.0,
        prox=lambda gamma, v: np.array(v, dtype=np.float64),
    )


def objective_value(p: CompositeObjective, x) -> float:
    """F(x) = f1(x) + f2(x) + h(x); INFINITE exactly when f2(x) is."""
    x = np.asarray(x, dtype=np.float64)
    v2 = p.f2.eval(x)
    if not math.isfinite(v2):
        return INFINITE
    return float(p.f1.eval(x)) + float(v2) + float(p.h.eval(x))


def prox_of_smooth(
    term: SmoothTerm,
    gamma: float,
    v,
    tol: float = 1e-12,
    max_iter: int = 500,
) -> np.ndarray:
    """Proximal map of a smooth term by gradient descent on the prox objective.

    The objective u -> term(u) + ||u - v||^2/(2*gamma) is strongly convex as
    long as gamma < 1/lower_curvature, which certified step sizes guarantee,
    so plain gradient descent with the optimal fixed step converges linearly.
    The gradient-norm target is scaled by the strong-convexity modulus, which
    bounds the solution error by ``tol * (1 + ||v||)``; :class:`ProxFailure`
    is raised if it is not met within ``max_iter`` sweeps.
    """
    v = np.asarray(v, dtype=np.float64)
    if term.prox is not None:
        return term.prox(gamma, v)
    mu = 1.0 / gamma - term.lower_curvature
    lip = term.lipschitz + 1.0 / gamma
    if mu <= 0:
        raise ValueError(
            f"prox objective not strongly convex: gamma={gamma}, "
            f"lower_curvature={term.lower_curvature}"
        )
    step = 2.0 / (mu + lip)
    target = tol * mu * (1.0 + norm(v))
    u = np.array(v)
    residual = math.inf
    for _ in range(max_iter):
        g = term.grad(u) + (u - v) / gamma
        residual = norm(g)
        if residual <= target:
            return u
        u = u - step * g
    raise ProxFailure("smooth-term prox did not converge", residual)


def criticality_residual(p: CompositeObjective, state, gamma: float) -> float:
    """Distance bound to a critical point, evaluated at the z-iterate.

    The z-update's optimality condition makes
    ``v = (2y - z - w)/gamma - grad_h(y)`` an exact element of the
    subdifferential of f2 at z, so ``||grad_f1(z) + grad_h(z) + v||`` bounds
    the distance from 0 to the subdifferential of F at z.  It vanishes along
    convergent runs.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    y, z, w = state.y, state.z, state.w
    v = (2.0 * y - z - w) / gamma - p.h.grad(y)
    return norm(p.f1.grad(z) + p.h.grad(z) + v)
