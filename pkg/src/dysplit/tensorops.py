"""Dense array helpers and FFT-backed circulant (periodic) linear operators.

Iterates, images and observations are plain float64 numpy arrays.  The
circulant operator implements periodic-boundary convolution, its adjoint,
and the spectral solve of ``(a*I + A^T A) u = r`` that the least-squares
proximal map needs.
"""

from __future__ import annotations

import numpy as np

__all__ = ["dot", "norm", "CirculantOperator", "circ_apply", "circ_solve"]


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def dot(a, b) -> float:
    """Euclidean inner product of two arrays of identical shape."""
    a = _as_array(a)
    b = _as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch in dot: {a.shape} vs {b.shape}")
    return float(np.sum(a * b))


def norm(a) -> float:
    """Euclidean norm, treating the array as one long vector."""
    a = _as_array(a)
    return float(np.sqrt(np.sum(a * a)))


def _embed_kernel(kernel: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Zero-pad ``kernel`` to ``shape`` with its center wrapped to index 0.

    The kernel center is ``size // 2`` along each axis, so a 1x1 delta (or
    any odd kernel with a single central 1) becomes the exact identity.
    """
    kernel = _as_array(kernel)
    if kernel.ndim != len(shape):
        raise ValueError(
            f"kernel rank {kernel.ndim} does not match operand rank {len(shape)}"
        )
    for ks, s in zip(kernel.shape, shape):
        if ks > s:
            raise ValueError(f"kernel {kernel.shape} larger than operand {shape}")
    padded = np.zeros(shape, dtype=np.float64)
    padded[tuple(slice(0, ks) for ks in kernel.shape)] = kernel
    center = tuple(ks // 2 for ks in kernel.shape)
    return np.roll(padded, tuple(-c for c in center), axis=tuple(range(len(shape))))


class CirculantOperator:
    """Circular convolution with a fixed kernel on a fixed grid.

    The forward transform of the embedded kernel is cached at construction
    and never mutated, so instances are safe to share.
    """

    def __init__(self, kernel, shape: tuple[int, ...] | list[int]):
        self.shape = tuple(int(s) for s in shape)
        self.kernel = _embed_kernel(kernel, self.shape)
        self.spectrum = np.fft.fftn(self.kernel)
        self.spectrum.setflags(write=False)
        # Single-entry kernels are scaled shifts; applying them spatially is
        # exact (no FFT rounding) and cheap.
        nz = np.argwhere(self.kernel != 0.0)
        self._shift = None
        if len(nz) == 0:
            self._shift = (tuple(0 for _ in self.shape), 0.0)
        elif len(nz) == 1:
            idx = tuple(int(i) for i in nz[0])
            self._shift = (idx, float(self.kernel[idx]))

    @classmethod
    def from_spectrum(cls, spectrum: np.ndarray) -> "CirculantOperator":
        """Build directly from a transfer function (no spatial kernel given)."""
        op = cls.__new__(cls)
        op.shape = tuple(spectrum.shape)
        op.spectrum = np.array(spectrum, dtype=np.complex128)
        op.spectrum.setflags(write=False)
        op.kernel = np.real(np.fft.ifftn(op.spectrum))
        op._shift = None
        return op

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = _as_array(x)
        if x.shape != self.shape:
            raise ValueError(f"operand shape {x.shape}, operator shape {self.shape}")
        return x

    def apply(self, x) -> np.ndarray:
        """A x, i.e. circular convolution of x with the kernel."""
        x = self._check(x)
        if self._shift is not None:
            idx, c = self._shift
            return c * np.roll(x, idx, axis=tuple(range(x.ndim)))
        return np.real(np.fft.ifftn(self.spectrum * np.fft.fftn(x)))

    def apply_adjoint(self, x) -> np.ndarray:
        """A^T x, via the conjugate spectrum."""
        x = self._check(x)
        if self._shift is not None:
            idx, c = self._shift
            return c * np.roll(x, tuple(-i for i in idx), axis=tuple(range(x.ndim)))
        return np.real(np.fft.ifftn(np.conj(self.spectrum) * np.fft.fftn(x)))

    def solve_shifted_normal(self, a: float, r) -> np.ndarray:
        """Solve (a*I + A^T A) u = r spectrally."""
        if a <= 0:
            raise ValueError(f"shift must be positive, got {a}")
        r = self._check(r)
        denom = a + np.abs(self.spectrum) ** 2
        return np.real(np.fft.ifftn(np.fft.fftn(r) / denom))

    def spectrum_abs_max(self) -> float:
        """max |A_hat|, the operator 2-norm."""
        return float(np.max(np.abs(self.spectrum)))

    def spectrum_abs_min(self) -> float:
        """min |A_hat|, the smallest singular value."""
        return float(np.min(np.abs(self.spectrum)))


def circ_apply(op: CirculantOperator, x) -> np.ndarray:
    return op.apply(x)


def circ_solve(a: float, op: CirculantOperator, r) -> np.ndarray:
    return op.solve_shifted_normal(a, r)
