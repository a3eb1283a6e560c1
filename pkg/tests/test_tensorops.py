import numpy as np
import pytest

from dysplit import CirculantOperator, circ_apply, circ_solve, dot
from oracles import direct_circular_convolution


def test_dot_hand_values():
    assert dot([1.0, 2.0, 3.0], [4.0, 5.0, 6.0]) == 32.0
    x = np.arange(5.0)
    assert dot(x, np.zeros(5)) == 0.0


def test_dot_matches_summation_oracle(rng):
    a = rng.standard_normal(5)
    b = rng.standard_normal(5)
    expected = sum(float(a[i]) * float(b[i]) for i in range(5))
    assert abs(dot(a, b) - expected) <= 1e-14 * max(1.0, abs(expected))


def test_dot_shape_mismatch():
    with pytest.raises(ValueError):
        dot(np.zeros(3), np.zeros(4))


def test_delta_kernel_is_identity(rng):
    x = rng.standard_normal((6, 6))
    op = CirculantOperator(np.array([[1.0]]), x.shape)
    np.testing.assert_allclose(circ_apply(op, x), x, atol=1e-14)
    delta3 = np.zeros((3, 3))
    delta3[1, 1] = 1.0  # centered delta in a 3x3 window
    op3 = CirculantOperator(delta3, x.shape)
    np.testing.assert_allclose(circ_apply(op3, x), x, atol=1e-14)


def test_uniform_kernel_averages(rng):
    x = rng.standard_normal((4, 4))
    op = CirculantOperator(np.full((4, 4), 1.0 / 16.0), (4, 4))
    out = circ_apply(op, x)
    np.testing.assert_allclose(out, np.full((4, 4), x.mean()), atol=1e-12)


def test_apply_matches_direct_convolution(rng):
    x = rng.standard_normal((8, 8))
    kernel = rng.standard_normal((3, 3))
    op = CirculantOperator(kernel, (8, 8))
    np.testing.assert_allclose(
        circ_apply(op, x), direct_circular_convolution(op.kernel, x), atol=1e-10
    )


def test_apply_is_linear(rng):
    op = CirculantOperator(rng.standard_normal((3, 3)), (8, 8))
    x = rng.standard_normal((8, 8))
    y = rng.standard_normal((8, 8))
    lhs = op.apply(2.5 * x - 1.25 * y)
    rhs = 2.5 * op.apply(x) - 1.25 * op.apply(y)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_adjoint_identity(rng):
    op = CirculantOperator(rng.standard_normal((3, 3)), (8, 8))
    for _ in range(5):
        x = rng.standard_normal((8, 8))
        y = rng.standard_normal((8, 8))
        lhs = dot(op.apply(x), y)
        rhs = dot(x, op.apply_adjoint(y))
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_solve_zero_operator(rng):
    r = rng.standard_normal((5, 5))
    op = CirculantOperator(np.zeros((1, 1)), (5, 5))
    np.testing.assert_allclose(circ_solve(2.0, op, r), r / 2.0, atol=1e-13)


def test_solve_identity_operator(rng):
    r = rng.standard_normal((5, 5))
    op = CirculantOperator(np.array([[1.0]]), (5, 5))
    np.testing.assert_allclose(circ_solve(1.0, op, r), r / 2.0, atol=1e-13)


def test_solve_residual_and_roundtrip(rng):
    op = CirculantOperator(rng.standard_normal((3, 3)), (8, 8))
    r = rng.standard_normal((8, 8))
    a = 0.7
    u = circ_solve(a, op, r)
    residual = a * u + op.apply_adjoint(op.apply(u)) - r
    assert np.linalg.norm(residual) <= 1e-9 * np.linalg.norm(r)
    # solve o (aI + A^T A) is the identity
    w = rng.standard_normal((8, 8))
    applied = a * w + op.apply_adjoint(op.apply(w))
    np.testing.assert_allclose(circ_solve(a, op, applied), w, rtol=1e-9, atol=1e-9)


def test_solve_rejects_nonpositive_shift(rng):
    op = CirculantOperator(np.array([[1.0]]), (4, 4))
    with pytest.raises(ValueError):
        circ_solve(0.0, op, np.zeros((4, 4)))


def test_shape_mismatch_errors(rng):
    op = CirculantOperator(np.array([[1.0]]), (4, 4))
    with pytest.raises(ValueError):
        op.apply(np.zeros((5, 5)))


def test_spectrum_bounds(rng):
    k = np.abs(rng.standard_normal((3, 3)))
    k /= k.sum()
    op = CirculantOperator(k, (8, 8))
    assert op.spectrum_abs_max() == pytest.approx(1.0, abs=1e-12)
    assert 0.0 <= op.spectrum_abs_min() <= op.spectrum_abs_max()
