"""Concrete terms for the imaging experiments: least-squares data fidelity,
Tikhonov and box terms, isotropic TV with a split-Bregman prox, smoothed
(Huber) TV, and gradient-step denoisers with an exactly evaluable induced
prior.
"""

from __future__ import annotations

import math
import struct
import warnings

import numpy as np

from .problem import INFINITE, ProxFailure, ProxableTerm, SmoothTerm
from .tensorops import CirculantOperator, norm

__all__ = [
    "LeastSquaresTerm",
    "ls_prox",
    "tv_value",
    "tv_prox",
    "tv_term",
    "box_prox",
    "box_term",
    "tikhonov_term",
    "huber_tv_term",
    "GradStepDenoiser",
    "PhiSigma",
    "linear_denoiser",
    "gradient_step_denoiser",
    "phi_sigma_eval",
    "weak_convexity_certificate",
    "save_denoiser_weights",
    "load_denoiser_weights",
]


# ---------------------------------------------------------------------------
# least-squares data term


def _cg(matvec, rhs, tol, max_iter):
    """Plain conjugate gradient for an SPD system; errors on non-convergence."""
    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    rs = float(np.sum(r * r))
    target = tol * math.sqrt(float(np.sum(rhs * rhs)))
    if math.sqrt(rs) <= target:
        return x
    for _ in range(max_iter):
        ap = matvec(p)
        alpha = rs / float(np.sum(p * ap))
        x = x + alpha * p
        r = r - alpha * ap
        rs_new = float(np.sum(r * r))
        if math.sqrt(rs_new) <= target:
            return x
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise ProxFailure("conjugate gradient did not converge", math.sqrt(rs))


class LeastSquaresTerm:
    """f(x) = ||A x - b||^2 / (2 nu^2) for a linear operator A.

    ``A`` needs apply/apply_adjoint plus spectrum_abs_max (an operator-norm
    bound); when it also provides solve_shifted_normal the proximal map is
    closed-form, otherwise conjugate gradient solves the shifted normal
    equations.
    """

    def __init__(self, A, b, nu: float):
        if nu <= 0:
            raise ValueError(f"noise level must be positive, got {nu}")
        self.A = A
        self.b = np.asarray(b, dtype=np.float64)
        self.nu = float(nu)
        self._atb = A.apply_adjoint(self.b)
        smax = A.spectrum_abs_max()
        smin = A.spectrum_abs_min() if hasattr(A, "spectrum_abs_min") else 0.0
        self.lipschitz = smax**2 / nu**2
        self.lower_curvature = -(smin**2) / nu**2

    def eval(self, x) -> float:
        r = self.A.apply(x) - self.b
        return float(np.sum(r * r)) / (2.0 * self.nu**2)

    def grad(self, x) -> np.ndarray:
        return self.A.apply_adjoint(self.A.apply(x) - self.b) / self.nu**2

    def hessian_vec(self, x, v) -> np.ndarray:
        return self.A.apply_adjoint(self.A.apply(v)) / self.nu**2

    def prox(self, gamma: float, v, tol: float = 1e-9, max_iter: int = 500) -> np.ndarray:
        """argmin ||A u - b||^2/(2 nu^2) + ||u - v||^2/(2 gamma)."""
        if gamma <= 0:
            raise ValueError(f"gamma must be positive, got {gamma}")
        v = np.asarray(v, dtype=np.float64)
        a = self.nu**2 / gamma
        rhs = a * v + self._atb
        if hasattr(self.A, "solve_shifted_normal"):
            return self.A.solve_shifted_normal(a, rhs)
        matvec = lambda u: a * u + self.A.apply_adjoint(self.A.apply(u))
        return _cg(matvec, rhs, tol, max_iter)

    def as_smooth(self) -> SmoothTerm:
        return SmoothTerm(
            eval=self.eval,
            grad=self.grad,
            lipschitz=self.lipschitz,
            lower_curvature=self.lower_curvature,
            prox=self.prox,
            hessian_vec=self.hessian_vec,
            hessian_bound=self.lipschitz,
        )


def ls_prox(term: LeastSquaresTerm, gamma: float, v) -> np.ndarray:
    return term.prox(gamma, v)


# ---------------------------------------------------------------------------
# isotropic total variation (periodic forward differences)


def _forward_diffs(u: np.ndarray):
    gx = np.roll(u, -1, axis=0) - u
    gy = np.roll(u, -1, axis=1) - u if u.ndim >= 2 else None
    return gx, gy


def _div_adjoint(wx: np.ndarray, wy):
    out = np.roll(wx, 1, axis=0) - wx
    if wy is not None:
        out = out + np.roll(wy, 1, axis=1) - wy
    return out


def tv_value(x, weight: float = 1.0) -> float:
    """Isotropic total variation with periodic boundary, summed over channels."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return sum(tv_value(x[..., c], weight) for c in range(x.shape[2]))
    gx, gy = _forward_diffs(x)
    if gy is None:
        return weight * float(np.sum(np.abs(gx)))
    return weight * float(np.sum(np.sqrt(gx * gx + gy * gy)))


def _laplacian_symbol(shape) -> np.ndarray:
    sym = np.zeros(shape, dtype=np.float64)
    for axis, n in enumerate(shape):
        freq = np.arange(n)
        s = 4.0 * np.sin(np.pi * freq / n) ** 2
        expand = [None] * len(shape)
        expand[axis] = slice(None)
        sym = sym + s[tuple(expand)]
    return sym


def tv_prox(gamma: float, weight: float, v, max_inner: int = 100) -> np.ndarray:
    """Approximate prox of weight*TV at v via split Bregman.

    Minimizes weight*TV(u) + ||u - v||^2/(2*gamma) with at most ``max_inner``
    outer sweeps; the quadratic subproblem is solved exactly by FFT at every
    sweep (periodic boundary).  Deterministic given inputs; remaining
    inexactness is documented, not an error.
    """
    if gamma <= 0 or weight < 0:
        raise ValueError(f"need gamma > 0 and weight >= 0, got {gamma}, {weight}")
    v = np.asarray(v, dtype=np.float64)
    if weight == 0.0:
        return v.copy()
    if v.ndim == 3:
        out = np.empty_like(v)
        for c in range(v.shape[2]):
            out[..., c] = tv_prox(gamma, weight, v[..., c], max_inner)
        return out

    mu = 1.0 / (gamma * weight)
    # Penalty at mu/4: the quadratic step then contracts fast in the common
    # weak-regularization regime (gamma*weight << 1) while the shrink
    # threshold 1/lam stays well scaled.
    lam = 0.25 * mu
    denom = mu + lam * _laplacian_symbol(v.shape)
    u = v.copy()
    dx = np.zeros_like(v)
    bx = np.zeros_like(v)
    two_d = v.ndim >= 2
    dy = np.zeros_like(v) if two_d else None
    by = np.zeros_like(v) if two_d else None
    vnorm = norm(v)
    for _ in range(max_inner):
        rhs = mu * v + lam * _div_adjoint(dx - bx, (dy - by) if two_d else None)
        u_new = np.real(np.fft.ifftn(np.fft.fftn(rhs) / denom))
        gx, gy = _forward_diffs(u_new)
        tx = gx + bx
        if two_d:
            ty = gy + by
            mag = np.sqrt(tx * tx + ty * ty)
        else:
            mag = np.abs(tx)
        scale = np.maximum(mag - 1.0 / lam, 0.0) / np.maximum(mag, 1e-300)
        dx = scale * tx
        bx = tx - dx
        if two_d:
            dy = scale * ty
            by = ty - dy
        if norm(u_new - u) <= 1e-13 * max(1.0, vnorm):
            u = u_new
            break
        u = u_new
    return u


def tv_term(weight: float, max_inner: int = 100) -> ProxableTerm:
    return ProxableTerm(
        eval=lambda x: tv_value(x, weight),
        prox=lambda gamma, v: tv_prox(gamma, weight, v, max_inner),
    )


# ---------------------------------------------------------------------------
# box indicator


def box_prox(lo: float, hi: float, v) -> np.ndarray:
    """Elementwise clip of v to [lo, hi]; gamma-independent for indicators."""
    if lo > hi:
        raise ValueError(f"empty box: lo={lo} > hi={hi}")
    return np.clip(np.asarray(v, dtype=np.float64), lo, hi)


def box_term(lo: float, hi: float) -> ProxableTerm:
    if lo > hi:
        raise ValueError(f"empty box: lo={lo} > hi={hi}")
    slack = 1e-12 * max(1.0, abs(lo), abs(hi))

    def eval_(x):
        x = np.asarray(x, dtype=np.float64)
        if np.all(x >= lo - slack) and np.all(x <= hi + slack):
            return 0.0
        return INFINITE

    return ProxableTerm(eval=eval_, prox=lambda gamma, v: box_prox(lo, hi, v))


# ---------------------------------------------------------------------------
# Tikhonov term


def tikhonov_term(beta: float) -> SmoothTerm:
    """(beta/2) ||x||^2, strongly convex with closed-form prox."""
    if beta < 0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    return SmoothTerm(
        eval=lambda x: 0.5 * beta * float(np.sum(np.square(np.asarray(x, dtype=np.float64)))),
        grad=lambda x: beta * np.asarray(x, dtype=np.float64),
        lipschitz=beta,
        lower_curvature=-beta,
        prox=lambda gamma, v: np.asarray(v, dtype=np.float64) / (1.0 + gamma * beta),
        hessian_vec=lambda x, v: beta * np.asarray(v, dtype=np.float64),
        hessian_bound=beta,
    )


# ---------------------------------------------------------------------------
# Huber-smoothed isotropic TV (used when TV must sit in the smooth slot)


def huber_tv_term(weight: float, eps_h: float, shape) -> SmoothTerm:
    """Isotropic TV with Huber smoothing eps_h on the gradient magnitude.

    Convex and differentiable; the gradient Lipschitz constant is
    weight * lambda_max(D^T D) / eps_h with the difference-operator spectrum
    evaluated exactly on the given grid.  No closed-form prox: the solver's
    inner strongly-convex descent computes it.
    """
    if weight <= 0 or eps_h <= 0:
        raise ValueError("weight and eps_h must be positive")
    lap_max = float(np.max(_laplacian_symbol(tuple(shape))))

    def eval_(x):
        x = np.asarray(x, dtype=np.float64)
        gx, gy = _forward_diffs(x)
        mag = np.abs(gx) if gy is None else np.sqrt(gx * gx + gy * gy)
        val = np.where(mag <= eps_h, mag**2 / (2.0 * eps_h), mag - eps_h / 2.0)
        return weight * float(np.sum(val))

    def grad_(x):
        x = np.asarray(x, dtype=np.float64)
        gx, gy = _forward_diffs(x)
        mag = np.abs(gx) if gy is None else np.sqrt(gx * gx + gy * gy)
        scale = 1.0 / np.maximum(mag, eps_h)
        wx = scale * gx
        wy = scale * gy if gy is not None else None
        return weight * _div_adjoint(wx, wy)

    return SmoothTerm(
        eval=eval_,
        grad=grad_,
        lipschitz=weight * lap_max / eps_h,
        lower_curvature=0.0,
    )


# ---------------------------------------------------------------------------
# gradient-step denoisers


class GradStepDenoiser:
    """Denoiser of the form D(x) = x - grad_g(x) with contraction factor < 1.

    ``g_eval``/``g_grad`` define the underlying potential; ``lipschitz`` is a
    bound L < 1 on the Lipschitz constant of grad_g, which makes D invertible
    on the whole space.  Linear instances carry the real multiplier array
    ``spectrum_q`` of grad_g so the induced prior admits exact spectral
    certificates; nonlinear ones invert D by contraction iteration.
    """

    def __init__(self, g_eval, g_grad, lipschitz, sigma, inverse=None, spectrum_q=None):
        if not 0.0 <= lipschitz < 1.0:
            raise ValueError(
                f"gradient-step denoiser needs Lipschitz bound in [0,1), got {lipschitz}"
            )
        self.g_eval = g_eval
        self.g_grad = g_grad
        self.lipschitz = float(lipschitz)
        self.sigma = float(sigma)
        self.spectrum_q = spectrum_q
        self._inverse = inverse

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return x - self.g_grad(x)

    def inverse(self, x, tol: float = 1e-12, max_iter: int = 10000) -> np.ndarray:
        """Solve D(u) = x.  Contraction iteration u <- x + grad_g(u) unless a
        closed-form inverse was supplied."""
        x = np.asarray(x, dtype=np.float64)
        if self._inverse is not None:
            return self._inverse(x)
        u = x.copy()
        target = tol * (1.0 + norm(x))
        residual = math.inf
        for _ in range(max_iter):
            u_new = x + self.g_grad(u)
            residual = norm(u_new - u)
            u = u_new
            if residual <= target:
                return u
        raise ProxFailure("denoiser inversion did not converge", residual)


class PhiSigma:
    """The nonconvex prior induced by a gradient-step denoiser.

    phi(x) = g(D^{-1}(x)) - ||D^{-1}(x) - x||^2 / 2, whose proximal map (unit
    step) is exactly the denoiser; grad phi(x) = D^{-1}(x) - x.  phi is
    L/(L+1)-weakly convex and its gradient is L/(1-L)-Lipschitz.
    """

    def __init__(self, denoiser: GradStepDenoiser):
        self.denoiser = denoiser

    def eval(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        try:
            u = self.denoiser.inverse(x)
        except ProxFailure as exc:
            warnings.warn(f"denoiser inverse failed, treating prior as +inf: {exc}")
            return INFINITE
        d = u - x
        return float(self.denoiser.g_eval(u)) - 0.5 * float(np.sum(d * d))

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self.denoiser.inverse(x) - x

    def grad_lipschitz(self) -> float:
        if self.denoiser.spectrum_q is not None:
            q = self.denoiser.spectrum_q
            return float(np.max(q / (1.0 - q)))
        L = self.denoiser.lipschitz
        return L / (1.0 - L)

    def weak_convexity_modulus(self) -> float:
        L = self.denoiser.lipschitz
        return L / (L + 1.0)


def phi_sigma_eval(phi: PhiSigma, x) -> float:
    return phi.eval(x)


def weak_convexity_certificate(
    phi: PhiSigma, rho: float, rng=None, n_samples: int = 100, shape=None
) -> bool:
    """Check that phi + (rho/2)||.||^2 is convex.

    Linear denoisers are certified spectrally (the Hessian multiplier of phi
    is q/(1-q), so the shifted Hessian is PSD iff min q/(1-q) >= -rho).
    Otherwise the secant inequality is sampled on random segments.
    """
    q = phi.denoiser.spectrum_q
    if q is not None:
        return bool(np.min(q / (1.0 - q)) >= -rho - 1e-12)
    if shape is None:
        raise ValueError("sampled certificate needs a shape to draw points from")
    rng = rng or np.random.default_rng(0)
    for _ in range(n_samples):
        a = rng.standard_normal(shape)
        b = rng.standard_normal(shape)
        t = float(rng.uniform(0.05, 0.95))
        lhs = phi.eval(t * a + (1.0 - t) * b)
        rhs = (
            t * phi.eval(a)
            + (1.0 - t) * phi.eval(b)
            + 0.5 * rho * t * (1.0 - t) * float(np.sum((a - b) ** 2))
        )
        if lhs > rhs + 1e-10:
            return False
    return True


def linear_denoiser(c: float, G: CirculantOperator, sigma: float) -> GradStepDenoiser:
    """Analytic gradient-step denoiser built from a smoothing operator G.

    With g(x) = (c/2) ||(I - G) x||^2 the denoiser D = I - c (I - G)^2 is
    linear and self-adjoint, invertible spectrally, and every induced-prior
    quantity is exactly computable.  Requires 0 < c < 1 and a real G-spectrum
    inside [0, 1].
    """
    if not 0.0 < c < 1.0:
        raise ValueError(f"need 0 < c < 1, got {c}")
    spec = G.spectrum
    scale = max(1.0, float(np.max(np.abs(spec))))
    if float(np.max(np.abs(spec.imag))) > 1e-10 * scale:
        raise ValueError("smoothing operator must have a real spectrum (symmetric kernel)")
    g_hat = spec.real
    if float(np.min(g_hat)) < -1e-10 or float(np.max(g_hat)) > 1.0 + 1e-10:
        raise ValueError(
            f"smoothing spectrum must lie in [0, 1], got "
            f"[{float(np.min(g_hat)):.3g}, {float(np.max(g_hat)):.3g}]"
        )
    q = c * (1.0 - g_hat) ** 2
    p = 1.0 - q

    def g_grad(x):
        return np.real(np.fft.ifftn(q * np.fft.fftn(x)))

    def g_eval(x):
        r = np.asarray(x, dtype=np.float64) - G.apply(x)
        return 0.5 * c * float(np.sum(r * r))

    def inverse(u):
        return np.real(np.fft.ifftn(np.fft.fftn(u) / p))

    return GradStepDenoiser(
        g_eval=g_eval,
        g_grad=g_grad,
        lipschitz=float(np.max(q)),
        sigma=sigma,
        inverse=inverse,
        spectrum_q=q,
    )


def gradient_step_denoiser(g_eval, g_grad, lipschitz: float, sigma: float) -> GradStepDenoiser:
    """Wrap an externally supplied potential triple as a denoiser; the
    inverse (and hence the induced prior) is computed by contraction."""
    return GradStepDenoiser(g_eval=g_eval, g_grad=g_grad, lipschitz=lipschitz, sigma=sigma)


# ---------------------------------------------------------------------------
# weights file for nonlinear denoisers
#
# Layout (little-endian): magic b"GSDN", uint32 version (=1), uint32 ndim,
# ndim * uint32 kernel dims, float64 weight, then the kernel entries as
# row-major float64.  The file defines the potential
#     g(x) = weight * sum_i logcosh((K x)_i)
# with K the circulant operator of the stored kernel, so
# grad g = weight * K^T tanh(K x) and L = weight * max|K_hat|^2.

_WEIGHTS_MAGIC = b"GSDN"


def save_denoiser_weights(path, kernel, weight: float) -> None:
    kernel = np.asarray(kernel, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(_WEIGHTS_MAGIC)
        fh.write(struct.pack("<II", 1, kernel.ndim))
        fh.write(struct.pack(f"<{kernel.ndim}I", *kernel.shape))
        fh.write(struct.pack("<d", float(weight)))
        fh.write(kernel.astype("<f8").tobytes(order="C"))


def _logcosh(t: np.ndarray) -> np.ndarray:
    a = np.abs(t)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


def load_denoiser_weights(path, shape, sigma: float) -> GradStepDenoiser:
    """Load a nonlinear gradient-step denoiser for operands of ``shape``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _WEIGHTS_MAGIC:
        raise ValueError(f"{path}: not a denoiser weights file")
    version, ndim = struct.unpack_from("<II", data, 4)
    if version != 1:
        raise ValueError(f"{path}: unsupported weights version {version}")
    dims = struct.unpack_from(f"<{ndim}I", data, 12)
    off = 12 + 4 * ndim
    (weight,) = struct.unpack_from("<d", data, off)
    off += 8
    count = int(np.prod(dims))
    kernel = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(dims)
    K = CirculantOperator(kernel, shape)
    lip = weight * K.spectrum_abs_max() ** 2
    if lip >= 1.0:
        raise ValueError(
            f"{path}: weight * ||K||^2 = {lip:.6g} >= 1, not a contraction"
        )

    def g_eval(x):
        return weight * float(np.sum(_logcosh(K.apply(x))))

    def g_grad(x):
        return weight * K.apply_adjoint(np.tanh(K.apply(x)))

    return GradStepDenoiser(g_eval=g_eval, g_grad=g_grad, lipschitz=lip, sigma=sigma)
