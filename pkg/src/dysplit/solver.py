"""The extrapolated three-operator splitting loop and its plug-and-play
variants, with stopping rules and per-iteration diagnostic traces.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .energy import h_gamma, theta
from .priors import GradStepDenoiser, PhiSigma
from .problem import (
    CompositeObjective,
    ProxableTerm,
    SmoothTerm,
    criticality_residual,
    objective_value,
    prox_of_smooth,
)
from .stepsize import StepParams, pnp_nonsmooth_constants
from .tensorops import norm

__all__ = [
    "SolverError",
    "DysState",
    "StopRule",
    "TraceRow",
    "initial_state",
    "dys_step",
    "solve",
    "solve_pnp_smooth",
    "solve_pnp_nonsmooth",
    "pnp_smooth_composite",
    "pnp_nonsmooth_composite",
]


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class DysState:
    """One iteration's worth of iterates.

    ``x_curr``/``x_prev`` are the running pair feeding the extrapolation;
    ``w``, ``y``, ``z`` are the iterates the step just produced.  At k = 0
    everything aliases the start point.
    """

    x_curr: np.ndarray
    x_prev: np.ndarray
    w: np.ndarray
    y: np.ndarray
    z: np.ndarray
    k: int


@dataclass(frozen=True)
class StopRule:
    """Stop when the relative objective change drops below eps or at k_max."""

    eps: float = 1e-8
    k_max: int = 1000

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.k_max < 1:
            raise ValueError(f"k_max must be >= 1, got {self.k_max}")


@dataclass(frozen=True)
class TraceRow:
    """Diagnostics of one completed iteration.

    ``dy_norm`` is NaN on the first row (no previous y exists yet); every
    other field is finite on a healthy run.  ``elapsed_s`` is wall time since
    the solve started and is deliberately left out of the CSV serialization
    so traces stay byte-reproducible.
    """

    k: int
    theta: float
    h_gamma: float
    dx_norm: float
    dy_norm: float
    yz_gap: float
    crit_residual: float
    objective: float
    psnr: Optional[float]
    elapsed_s: float


def initial_state(x0) -> DysState:
    x0 = np.asarray(x0, dtype=np.float64)
    return DysState(x_curr=x0, x_prev=x0, w=x0, y=x0, z=x0, k=0)


def dys_step(p: CompositeObjective, params: StepParams, s: DysState) -> DysState:
    """One extrapolated splitting step.

    w = x_k + alpha (x_k - x_{k-1});  y = prox_{gamma f1}(w);
    z = prox_{gamma f2}(2y - gamma grad_h(y) - w);  x_{k+1} = w + (z - y).
    The four updates run in exactly this order.
    """
    gamma, alpha = params.gamma, params.alpha
    w = s.x_curr + alpha * (s.x_curr - s.x_prev)
    y = prox_of_smooth(p.f1, gamma, w)
    z = p.f2.prox(gamma, 2.0 * y - gamma * p.h.grad(y) - w)
    x_next = w + (z - y)
    if not np.all(np.isfinite(x_next)):
        raise SolverError(f"non-finite iterate after step {s.k + 1}")
    return DysState(x_curr=x_next, x_prev=s.x_curr, w=w, y=y, z=z, k=s.k + 1)


def _explain_nonfinite(p: CompositeObjective, state: DysState) -> str:
    parts = {
        "f1(y)": p.f1.eval(state.y),
        "f2(z)": p.f2.eval(state.z),
        "h(y)": p.h.eval(state.y),
    }
    bad = [name for name, val in parts.items() if not math.isfinite(val)]
    return ", ".join(bad) if bad else "quadratic coupling terms"


def solve(
    p: CompositeObjective,
    params: StepParams,
    x0,
    stop: StopRule,
    trace_hook: Optional[Callable[[TraceRow], None]] = None,
    psnr_fn: Optional[Callable[[np.ndarray], float]] = None,
    tuple_hook: Optional[Callable[[tuple], None]] = None,
) -> tuple[DysState, list[TraceRow]]:
    """Run the splitting iteration from x0 until the stop rule fires.

    The energy is evaluated on the completed tuple
    (y^{k+1}, z^{k+1}, x^{k+1}, x^k, x^{k-1}) after every step, and the stop
    rule compares the objective at consecutive z-iterates (the only iterate
    guaranteed feasible for an indicator term).  ``trace_hook`` receives each
    TraceRow as it is produced; ``tuple_hook`` receives the raw energy tuple
    for diagnostics that need the iterates themselves.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    state = initial_state(x0)
    prev_obj = objective_value(p, x0)
    trace: list[TraceRow] = []
    t0 = time.perf_counter()
    for _ in range(stop.k_max):
        x_before_prev = state.x_prev
        prev_y = state.y
        new = dys_step(p, params, state)
        u = (new.y, new.z, new.x_curr, new.x_prev, x_before_prev)
        th = theta(p, params, u)
        if not math.isfinite(th):
            raise SolverError(
                f"energy not finite at iteration {new.k}; offending term(s): "
                f"{_explain_nonfinite(p, new)}"
            )
        hg = h_gamma(p, params.gamma, new.y, new.z, new.x_curr)
        obj = objective_value(p, new.z)
        row = TraceRow(
            k=new.k,
            theta=th,
            h_gamma=hg,
            dx_norm=norm(new.x_curr - new.x_prev),
            dy_norm=norm(new.y - prev_y) if new.k > 1 else math.nan,
            yz_gap=norm(new.y - new.z),
            crit_residual=criticality_residual(p, new, params.gamma),
            objective=obj,
            psnr=psnr_fn(new.z) if psnr_fn is not None else None,
            elapsed_s=time.perf_counter() - t0,
        )
        trace.append(row)
        if trace_hook is not None:
            trace_hook(row)
        if tuple_hook is not None:
            tuple_hook(u)
        state = new
        if math.isfinite(obj) and math.isfinite(prev_obj):
            rel = abs(obj - prev_obj) / max(1.0, abs(prev_obj))
            if rel < stop.eps:
                break
        prev_obj = obj
    return state, trace


def _denoiser_as_prox(d: GradStepDenoiser, gamma: float):
    """The denoiser is the unit-step prox of its induced prior, so dividing
    the prior by gamma makes it the gamma-step prox; valid only at that
    gamma."""

    def prox(g: float, v):
        if abs(g - gamma) > 1e-12 * max(1.0, gamma):
            raise ValueError(
                f"denoiser prox is tied to gamma={gamma}, called with {g}"
            )
        return d.apply(v)

    return prox


def pnp_smooth_composite(
    f: SmoothTerm, d: GradStepDenoiser, h: SmoothTerm, gamma: float
) -> CompositeObjective:
    """The explicit objective a denoiser-in-z run minimizes:
    f + (induced prior)/gamma + h."""
    if d.lipschitz >= 1.0:
        raise ValueError(f"denoiser contraction factor must be < 1, got {d.lipschitz}")
    if f.prox is None:
        raise ValueError("f must carry a proximal map")
    phi = PhiSigma(d)
    f2 = ProxableTerm(
        eval=lambda x: phi.eval(x) / gamma,
        prox=_denoiser_as_prox(d, gamma),
    )
    return CompositeObjective(f1=f, f2=f2, h=h)


def pnp_nonsmooth_composite(
    f: ProxableTerm, d: GradStepDenoiser, h: SmoothTerm, params: StepParams
) -> CompositeObjective:
    """The explicit objective a denoiser-in-y run minimizes:
    (induced prior)/gamma + f + h, with the induced curvature constants."""
    if d.lipschitz >= 1.0:
        raise ValueError(f"denoiser contraction factor must be < 1, got {d.lipschitz}")
    gamma = params.gamma
    L_f1, l = pnp_nonsmooth_constants(d.lipschitz, gamma)
    for got, want, name in ((params.L_f1, L_f1, "L_f1"), (params.l, l, "l")):
        if abs(got - want) > 1e-6 * max(1.0, abs(want)):
            raise ValueError(
                f"params.{name}={got:.6g} does not match the denoiser-induced "
                f"constant {want:.6g}; build params with pnp_nonsmooth_constants"
            )
    phi = PhiSigma(d)
    f1 = SmoothTerm(
        eval=lambda x: phi.eval(x) / gamma,
        grad=lambda x: phi.grad(x) / gamma,
        lipschitz=L_f1,
        lower_curvature=l,
        prox=_denoiser_as_prox(d, gamma),
    )
    return CompositeObjective(f1=f1, f2=f, h=h)


def solve_pnp_smooth(
    f: SmoothTerm,
    d: GradStepDenoiser,
    h: SmoothTerm,
    params: StepParams,
    x0,
    stop: StopRule,
    trace_hook=None,
    psnr_fn=None,
    tuple_hook=None,
) -> tuple[DysState, list[TraceRow]]:
    """Splitting loop with the denoiser in the second (z) slot.

    Equivalent to :func:`solve` on f1 = f, f2 = phi/gamma, h = h, where phi
    is the denoiser's induced prior; the trace's energy and objective columns
    use that composite, evaluated exactly whenever the denoiser is invertible
    in closed form.
    """
    p = pnp_smooth_composite(f, d, h, params.gamma)
    return solve(p, params, x0, stop, trace_hook=trace_hook, psnr_fn=psnr_fn,
                 tuple_hook=tuple_hook)


def solve_pnp_nonsmooth(
    f: ProxableTerm,
    d: GradStepDenoiser,
    h: SmoothTerm,
    params: StepParams,
    x0,
    stop: StopRule,
    trace_hook=None,
    psnr_fn=None,
    tuple_hook=None,
) -> tuple[DysState, list[TraceRow]]:
    """Splitting loop with the denoiser in the first (y) slot.

    The induced prior phi/gamma plays the smooth first term; its curvature
    constants L/(gamma(1-L)) and L/(gamma(L+1)) must be the ones ``params``
    was built with.
    """
    p = pnp_nonsmooth_composite(f, d, h, params)
    return solve(p, params, x0, stop, trace_hook=trace_hook, psnr_fn=psnr_fn,
                 tuple_hook=tuple_hook)
