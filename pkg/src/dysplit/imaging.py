"""Degradation synthesis (blur, downsampling, seeded Gaussian noise),
image quality metrics, image/kernel I/O, and the bundled synthetic test
image.  Intensities live in [0, 1] everywhere; 8/16-bit scales appear only
at file boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import convolve2d

from .tensorops import CirculantOperator

__all__ = [
    "Downsampler",
    "DownsampledBlur",
    "DegradationModel",
    "degrade",
    "upsample_nearest",
    "psnr",
    "ssim",
    "load_image",
    "save_image",
    "gaussian_kernel",
    "uniform_kernel",
    "motion_kernel",
    "load_kernel_text",
    "synthetic_image",
]


@dataclass(frozen=True)
class Downsampler:
    """Keep the upper-left pixel of each s-by-s patch; adjoint zero-fills."""

    s: int

    def __post_init__(self):
        if self.s < 1:
            raise ValueError(f"scale factor must be >= 1, got {self.s}")

    def _check(self, shape):
        if shape[0] % self.s or shape[1] % self.s:
            raise ValueError(f"dims {shape[:2]} not divisible by scale {self.s}")

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        self._check(x.shape)
        return x[:: self.s, :: self.s].copy()

    def adjoint(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        full = list(y.shape)
        full[0] *= self.s
        full[1] *= self.s
        out = np.zeros(full, dtype=np.float64)
        out[:: self.s, :: self.s] = y
        return out


class DownsampledBlur:
    """A = S B: circulant blur followed by s-fold downsampling.

    spectrum_abs_max returns the blur's bound (||S|| = 1 so it still bounds
    ||A||); the smallest singular value is reported as 0 since downsampling
    has a nontrivial null space complement.
    """

    def __init__(self, blur: CirculantOperator, down: Downsampler):
        self.blur = blur
        self.down = down
        self.in_shape = blur.shape
        self.out_shape = tuple(n // down.s for n in blur.shape)

    def apply(self, x) -> np.ndarray:
        return self.down.apply(self.blur.apply(x))

    def apply_adjoint(self, y) -> np.ndarray:
        return self.blur.apply_adjoint(self.down.adjoint(y))

    def spectrum_abs_max(self) -> float:
        return self.blur.spectrum_abs_max()

    def spectrum_abs_min(self) -> float:
        return 0.0


@dataclass(frozen=True)
class DegradationModel:
    """Forward model b = A x + noise with A the blur, optionally downsampled.

    Noise is nu * standard normal drawn from the counter-based Philox
    generator keyed by ``seed``, making observations reproducible across
    platforms.
    """

    blur: CirculantOperator
    down: Optional[Downsampler]
    nu: float
    seed: int

    @property
    def operator(self):
        if self.down is not None and self.down.s > 1:
            return DownsampledBlur(self.blur, self.down)
        return self.blur

    def degrade(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        clean = self.operator.apply(x)
        rng = np.random.Generator(np.random.Philox(self.seed))
        return clean + self.nu * rng.standard_normal(clean.shape)


def degrade(model: DegradationModel, x) -> np.ndarray:
    return model.degrade(x)


def upsample_nearest(x, s: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.repeat(np.repeat(x, s, axis=0), s, axis=1)


# ---------------------------------------------------------------------------
# quality metrics


def psnr(x, ref, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE), capped at 100 dB for near-identical images."""
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch in psnr: {x.shape} vs {ref.shape}")
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    mse = float(np.mean((x - ref) ** 2))
    if mse < peak**2 * 1e-10:
        return 100.0
    return 10.0 * math.log10(peak**2 / mse)


def _gaussian_window(size: int = 11, std: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * std**2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(x, ref, peak: float = 1.0) -> float:
    """Mean structural similarity with an 11x11 Gaussian window (std 1.5),
    K1 = 0.01, K2 = 0.03; channels are averaged."""
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch in ssim: {x.shape} vs {ref.shape}")
    if x.ndim == 3:
        vals = [ssim(x[..., c], ref[..., c], peak) for c in range(x.shape[2])]
        return float(np.mean(vals))
    if min(x.shape) < 11:
        raise ValueError(f"image {x.shape} smaller than the 11x11 ssim window")
    win = _gaussian_window()
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    f = lambda a: convolve2d(a, win, mode="valid")
    mu_x = f(x)
    mu_r = f(ref)
    var_x = f(x * x) - mu_x**2
    var_r = f(ref * ref) - mu_r**2
    cov = f(x * ref) - mu_x * mu_r
    num = (2.0 * mu_x * mu_r + c1) * (2.0 * cov + c2)
    den = (mu_x**2 + mu_r**2 + c1) * (var_x + var_r + c2)
    return float(np.mean(num / den))


# ---------------------------------------------------------------------------
# image files: PGM written in-repo, PNG through Pillow


def _read_pgm(data: bytes) -> np.ndarray:
    tokens = []
    i = 0
    while len(tokens) < 4 and i < len(data):
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
        elif data[i : i + 1].isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise ValueError("corrupt PGM header")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise ValueError("corrupt PGM header") from exc
    if not (0 < maxval < 65536) or width <= 0 or height <= 0:
        raise ValueError("corrupt PGM header")
    i += 1  # single whitespace byte after maxval
    if maxval < 256:
        raw = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=i)
    else:
        raw = np.frombuffer(data, dtype=">u2", count=width * height, offset=i)
    if raw.size != width * height:
        raise ValueError("truncated PGM payload")
    return raw.reshape(height, width).astype(np.float64) / maxval


def load_image(path) -> np.ndarray:
    """Read a PGM (P5) or PNG image into a float array in [0, 1]."""
    path = str(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"P5":
        with open(path, "rb") as fh:
            return _read_pgm(fh.read())
    from PIL import Image

    img = Image.open(path)
    arr = np.asarray(img)
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    if arr.dtype in (np.uint16, np.int32):
        return arr.astype(np.float64) / 65535.0
    raise ValueError(f"unsupported image dtype {arr.dtype} in {path}")


def save_image(path, x, bits: int = 8) -> None:
    """Write a [0, 1] image as PGM (P5) or PNG depending on the extension."""
    path = str(path)
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    if bits not in (8, 16):
        raise ValueError(f"bits must be 8 or 16, got {bits}")
    maxval = 255 if bits == 8 else 65535
    quant = np.rint(x * maxval).astype(np.uint16)
    if path.lower().endswith(".pgm"):
        if x.ndim != 2:
            raise ValueError("PGM supports grayscale images only")
        header = f"P5\n{x.shape[1]} {x.shape[0]}\n{maxval}\n".encode()
        payload = (
            quant.astype(np.uint8).tobytes()
            if bits == 8
            else quant.astype(">u2").tobytes()
        )
        with open(path, "wb") as fh:
            fh.write(header + payload)
        return
    if path.lower().endswith(".png"):
        from PIL import Image

        if bits == 8:
            img = Image.fromarray(quant.astype(np.uint8))
        else:
            if x.ndim != 2:
                raise ValueError("16-bit PNG supports grayscale only")
            img = Image.fromarray(quant.astype(np.uint32), mode="I").convert("I;16")
        img.save(path)
        return
    raise ValueError(f"unsupported image format for {path} (use .pgm or .png)")


# ---------------------------------------------------------------------------
# blur kernels


def gaussian_kernel(size: int, std: float) -> np.ndarray:
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    if std <= 0:
        raise ValueError(f"std must be positive, got {std}")
    half = size // 2
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * std**2))
    k = np.outer(g, g)
    return k / k.sum()


def uniform_kernel(size: int) -> np.ndarray:
    if size < 1:
        raise ValueError(f"kernel size must be positive, got {size}")
    return np.full((size, size), 1.0 / size**2)


def motion_kernel(length: int, angle_deg: float) -> np.ndarray:
    """Straight-line motion blur rasterized by dense sampling along the line."""
    if length < 1:
        raise ValueError(f"length must be positive, got {length}")
    size = length if length % 2 == 1 else length + 1
    k = np.zeros((size, size))
    c = size // 2
    t = np.linspace(-(length - 1) / 2.0, (length - 1) / 2.0, 16 * length)
    rad = math.radians(angle_deg)
    rows = np.rint(c + t * math.sin(rad)).astype(int)
    cols = np.rint(c + t * math.cos(rad)).astype(int)
    np.add.at(k, (rows, cols), 1.0)
    return k / k.sum()


def load_kernel_text(path, normalize: bool = True) -> np.ndarray:
    """Read a kernel from a plain-text matrix: one row per line, entries
    separated by whitespace, '#' starts a comment."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            rows.append([float(tok) for tok in line.split()])
    if not rows:
        raise ValueError(f"{path}: no kernel data")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{path}: ragged kernel rows")
    k = np.array(rows, dtype=np.float64)
    if normalize:
        s = k.sum()
        if abs(s) < 1e-300:
            raise ValueError(f"{path}: kernel sums to zero, cannot normalize")
        k = k / s
    return k


# ---------------------------------------------------------------------------
# bundled deterministic test image


def synthetic_image(n: int = 32) -> np.ndarray:
    """A deterministic n-by-n grayscale test pattern in [0, 1]: gradient
    background, a bright rectangle, a disk, and a mild sinusoidal texture."""
    if n < 4:
        raise ValueError(f"image size must be >= 4, got {n}")
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    img = 0.2 + 0.3 * (i + j) / (2.0 * (n - 1))
    img = img + 0.35 * ((i >= n // 4) & (i < n // 2) & (j >= n // 4) & (j < n // 2))
    disk = (i - 5 * n // 8) ** 2 + (j - 3 * n // 8) ** 2 <= (n // 6) ** 2
    img = img + 0.25 * disk
    img = img + 0.05 * np.sin(2.0 * np.pi * 3.0 * i / n) * np.cos(2.0 * np.pi * 2.0 * j / n)
    return np.clip(img, 0.0, 1.0)
