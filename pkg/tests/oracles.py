"""Independent reference implementations used as test oracles.

Everything here is deliberately written without touching the library's
computational paths: direct convolution instead of FFT, taut-string instead
of split Bregman, hand-rolled reference iterations instead of the solver.
"""

import numpy as np


def direct_circular_convolution(kernel_embedded, x):
    """O(n^2) periodic convolution with a kernel already embedded on the
    operand grid (center at index 0)."""
    x = np.asarray(x, dtype=np.float64)
    k = np.asarray(kernel_embedded, dtype=np.float64)
    out = np.zeros_like(x)
    it = np.ndindex(*x.shape)
    for idx in it:
        acc = 0.0
        for kidx in np.ndindex(*x.shape):
            src = tuple((i - j) % n for i, j, n in zip(idx, kidx, x.shape))
            acc += k[kidx] * x[src]
        out[idx] = acc
    return out


def tv1d_taut_string(y, lam):
    """Exact 1-D total variation denoising (non-periodic):
    argmin_u 0.5*||u - y||^2 + lam * sum |u_{i+1} - u_i|,
    by the taut-string / direct algorithm."""
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    x = np.empty(n)
    if n == 0:
        return x
    if n == 1 or lam <= 0:
        return y.copy()
    k = k0 = kminus = kplus = 0
    vmin = y[0] - lam
    vmax = y[0] + lam
    umin = lam
    umax = -lam
    while True:
        if k == n - 1:
            if umin < 0.0:
                x[k0 : kminus + 1] = vmin
                k = k0 = kminus = kminus + 1
                vmin = y[k]
                umin = lam
                umax = y[k] + lam - vmax
            elif umax > 0.0:
                x[k0 : kplus + 1] = vmax
                k = k0 = kplus = kplus + 1
                vmax = y[k]
                umax = -lam
                umin = y[k] - lam - vmin
            else:
                x[k0:] = vmin + umin / (k - k0 + 1)
                return x
            continue
        if y[k + 1] + umin < vmin - lam:
            x[k0 : kminus + 1] = vmin
            k = k0 = kminus = kplus = kminus + 1
            vmin = y[k]
            vmax = y[k] + 2.0 * lam
            umin = lam
            umax = -lam
        elif y[k + 1] + umax > vmax + lam:
            x[k0 : kplus + 1] = vmax
            k = k0 = kminus = kplus = kplus + 1
            vmin = y[k] - 2.0 * lam
            vmax = y[k]
            umin = lam
            umax = -lam
        else:
            k += 1
            umin += y[k] - vmin
            umax += y[k] - vmax
            if umin >= lam:
                vmin += (umin - lam) / (k - k0 + 1)
                umin = lam
                kminus = k
            if umax <= -lam:
                vmax += (umax + lam) / (k - k0 + 1)
                umax = -lam
                kplus = k
    return x


def tv1d_optimality_gap(u, y, lam, tol=1e-9):
    """Certify a candidate 1-D TV solution through its optimality system:
    the running dual s_i = s_{i-1} + (u_i - y_i)/lam must stay in [-1, 1],
    match the jump signs, and return to 0 at the end.  Returns the largest
    constraint violation."""
    u = np.asarray(u, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(u)
    worst = 0.0
    s_prev = 0.0
    for i in range(n):
        s = s_prev + (u[i] - y[i]) / lam
        if i == n - 1:
            worst = max(worst, abs(s))
        else:
            worst = max(worst, abs(s) - 1.0)
            jump = u[i + 1] - u[i]
            if abs(jump) > tol:
                worst = max(worst, abs(s - np.sign(jump)))
        s_prev = s
    return worst


def grid_prox(f, gamma, x, lo=-5.0, hi=5.0, pitch=1e-3):
    """Brute-force 1-D prox: minimize f(u) + (u-x)^2/(2*gamma) on a grid."""
    grid = np.arange(lo + x, hi + x + pitch / 2, pitch)
    vals = np.array([f(np.array([u])) + (u - x) ** 2 / (2.0 * gamma) for u in grid])
    return grid[int(np.argmin(vals))]


def reference_drs(prox_f1, prox_f2, gamma, x0, iters):
    """Douglas-Rachford reference: two prox maps, no gradient step, no
    extrapolation.  Returns the list of (y, z, x) triples."""
    x = np.asarray(x0, dtype=np.float64).copy()
    out = []
    for _ in range(iters):
        y = prox_f1(gamma, x)
        z = prox_f2(gamma, 2.0 * y - x)
        x = x + (z - y)
        out.append((y, z, x.copy()))
    return out


def reference_proximal_gradient(prox_f2, grad_h, gamma, x0, iters):
    """Forward-backward reference: x <- prox_{gamma f2}(x - gamma grad_h(x))."""
    x = np.asarray(x0, dtype=np.float64).copy()
    out = []
    for _ in range(iters):
        x = prox_f2(gamma, x - gamma * grad_h(x))
        out.append(x.copy())
    return out


def central_difference_gradient(f, x, step=1e-6):
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = step
        gflat[i] = (f((flat + e).reshape(x.shape)) - f((flat - e).reshape(x.shape))) / (
            2.0 * step
        )
    return g


def anchored_merit_alternate_form(p, gamma, y, z, x):
    """The other algebraic expansion of the anchored merit value, used as an
    independent oracle:  f1(y) + f2(z) + h(y)
      + ||2y - z - x - gamma*gh||^2/(2 gamma)
      - ||x - y + gamma*gh||^2/(2 gamma) - ||y - z||^2/gamma."""
    gh = p.h.grad(y)
    t1 = 2.0 * y - z - x - gamma * gh
    t2 = x - y + gamma * gh
    t3 = y - z
    return (
        p.f1.eval(y)
        + p.f2.eval(z)
        + p.h.eval(y)
        + float(np.sum(t1 * t1)) / (2.0 * gamma)
        - float(np.sum(t2 * t2)) / (2.0 * gamma)
        - float(np.sum(t3 * t3)) / gamma
    )
