import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from dysplit import CompositeObjective, SmoothTerm, zero_proxable_term, zero_smooth_term


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


def quadratic_term(diag, lin=None):
    """f(x) = 0.5 x^T diag(d) x + c^T x as a SmoothTerm with exact prox."""
    d = np.asarray(diag, dtype=np.float64)
    c = np.zeros_like(d) if lin is None else np.asarray(lin, dtype=np.float64)
    return SmoothTerm(
        eval=lambda x: 0.5 * float(np.sum(d * x * x)) + float(np.sum(c * x)),
        grad=lambda x: d * x + c,
        lipschitz=float(np.max(np.abs(d))),
        lower_curvature=float(-np.min(d)),
        prox=lambda gamma, v: (v - gamma * c) / (1.0 + gamma * d),
        hessian_vec=lambda x, v: d * v,
        hessian_bound=float(np.max(np.abs(d))),
    )


def quadratic_objective(diag, lin=None):
    return CompositeObjective(
        f1=quadratic_term(diag, lin), f2=zero_proxable_term(), h=zero_smooth_term()
    )
