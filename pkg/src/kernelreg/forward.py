"""Matrix-free forward operators F and their adjoints.

Three measurement models: convolutional blur (circular or symmetric
boundary), superresolution (blur followed by decimation), and inpainting
(pixel sampling). Each model exposes apply_forward / apply_adjoint as
black boxes plus a dense materialization for desk-scale verification.

The blur pair is built so that adjointness holds to rounding error: the
forward pass is gather(pad) -> valid correlation, and the adjoint is the
exact transpose of each stage (full correlation -> scatter-add fold).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .counting import OpCounter
from .errors import ConfigurationError, InputError, ShapeMismatch, SizeCapExceeded
from .image import Image

__all__ = [
    "ForwardModel",
    "BlurModel",
    "SuperresModel",
    "InpaintModel",
    "add_noise",
    "materialize_forward",
    "load_kernel",
    "load_mask",
    "gaussian_kernel",
]

DENSE_CAP = 4096  # max pixel count for materialization


def gaussian_kernel(size: int, std: float) -> np.ndarray:
    """Sampled 2-D Gaussian, normalized to unit sum."""
    if size < 1 or size % 2 == 0:
        raise ConfigurationError(f"kernel size must be odd positive, got {size}")
    if std <= 0:
        raise ConfigurationError(f"kernel std must be positive, got {std}")
    coords = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(coords**2) / (2.0 * std * std))
    k = np.outer(g, g)
    return k / k.sum()


def load_kernel(path) -> np.ndarray:
    """Read a blur kernel from a plain-text matrix (space-separated rows)."""
    try:
        k = np.loadtxt(Path(path), ndmin=2, dtype=np.float64)
    except Exception as exc:
        raise InputError(f"{path}: unreadable kernel file ({exc})") from exc
    return k


def load_mask(path) -> np.ndarray:
    """Read an inpainting mask from a PGM/PNG image; nonzero means observed."""
    from .image import load_image

    return load_image(path).pixels > 0.0


class _Convolver:
    """Exact-adjoint 2-D convolution with a declared boundary rule."""

    def __init__(self, shape: tuple[int, int], kernel: np.ndarray, boundary: str):
        kernel = np.asarray(kernel, dtype=np.float64)
        if kernel.ndim != 2:
            raise ConfigurationError("blur kernel must be a 2-D array")
        if np.any(kernel < 0) or not np.all(np.isfinite(kernel)):
            raise ConfigurationError("blur kernel entries must be finite and nonnegative")
        if kernel.sum() <= 0:
            raise ConfigurationError("blur kernel must have positive sum")
        if boundary not in ("circular", "symmetric"):
            raise ConfigurationError(f"unknown boundary rule '{boundary}'")
        h, w = shape
        kh, kw = kernel.shape
        self.shape = shape
        self.kernel = kernel
        self.boundary = boundary
        # center anchor; pad so a 'valid' correlation returns shape (h, w)
        top, left = kh // 2, kw // 2
        bottom, right = kh - 1 - top, kw - 1 - left
        mode = "wrap" if boundary == "circular" else "symmetric"
        idx = np.arange(h * w).reshape(h, w)
        self._gather = np.pad(idx, ((top, bottom), (left, right)), mode=mode).reshape(-1)
        self._ext_shape = (h + kh - 1, w + kw - 1)
        self._flipped = kernel[::-1, ::-1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        # true convolution: gather-pad then correlate with the flipped kernel
        ext = x.reshape(-1)[self._gather].reshape(self._ext_shape)
        view = np.lib.stride_tricks.sliding_window_view(ext, self.kernel.shape)
        return np.einsum("ijkl,kl->ij", view, self._flipped)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        # transpose of 'valid' correlation is full correlation with the
        # unflipped kernel; transpose of the gather-pad is a scatter-add fold
        kh, kw = self.kernel.shape
        ypad = np.pad(y, ((kh - 1, kh - 1), (kw - 1, kw - 1)))
        view = np.lib.stride_tricks.sliding_window_view(ypad, self.kernel.shape)
        ext = np.einsum("ijkl,kl->ij", view, self.kernel)
        folded = np.bincount(self._gather, weights=ext.reshape(-1), minlength=self.shape[0] * self.shape[1])
        return folded.reshape(self.shape)


class ForwardModel:
    """Base contract: apply/adjoint with declared input and output shapes."""

    variant: str
    input_shape: tuple[int, int]
    output_shape: tuple[int, int]

    def __init__(self):
        self.counter = OpCounter()

    def _apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _adjoint(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply_forward(self, x: Image) -> np.ndarray:
        """F x as a measurement array of output_shape."""
        if x.shape != self.input_shape:
            raise ShapeMismatch(f"expected input {self.input_shape}, got {x.shape}")
        self.counter.tick_apply()
        return self._apply(x.pixels)

    def apply_adjoint(self, y: np.ndarray) -> Image:
        """F^T y as an image of input_shape."""
        y = np.asarray(y, dtype=np.float64)
        if y.shape != self.output_shape:
            raise ShapeMismatch(f"expected measurement {self.output_shape}, got {y.shape}")
        self.counter.tick_adjoint()
        return Image(self._adjoint(y))

    # flat-vector entry points used by the linear-system plumbing
    def apply_vec(self, x: np.ndarray) -> np.ndarray:
        self.counter.tick_apply()
        return self._apply(x.reshape(self.input_shape)).reshape(-1)

    def adjoint_vec(self, y: np.ndarray) -> np.ndarray:
        self.counter.tick_adjoint()
        return self._adjoint(y.reshape(self.output_shape)).reshape(-1)

    @property
    def n(self) -> int:
        return self.input_shape[0] * self.input_shape[1]

    @property
    def m(self) -> int:
        return self.output_shape[0] * self.output_shape[1]


class BlurModel(ForwardModel):
    """y = k * x under a circular or symmetric boundary rule."""

    variant = "blur"

    def __init__(self, shape: tuple[int, int], kernel, boundary: str = "circular"):
        super().__init__()
        self._conv = _Convolver(shape, kernel, boundary)
        self.kernel = self._conv.kernel
        self.boundary = boundary
        self.input_shape = shape
        self.output_shape = shape

    def _apply(self, x):
        return self._conv.forward(x)

    def _adjoint(self, y):
        return self._conv.adjoint(y)


class SuperresModel(ForwardModel):
    """F = S B: blur then keep pixels at (phase + i*K, phase + j*K)."""

    variant = "superres"

    def __init__(self, shape: tuple[int, int], kernel, factor: int,
                 boundary: str = "circular", phase: int = 0):
        super().__init__()
        if factor < 1:
            raise ConfigurationError(f"superres factor must be >= 1, got {factor}")
        h, w = shape
        if h % factor or w % factor:
            raise ConfigurationError(
                f"factor {factor} must divide image dimensions {shape}"
            )
        if not (0 <= phase < factor):
            raise ConfigurationError(f"phase must lie in [0, {factor}), got {phase}")
        self._conv = _Convolver(shape, kernel, boundary)
        self.kernel = self._conv.kernel
        self.boundary = boundary
        self.factor = factor
        self.phase = phase
        self.input_shape = shape
        self.output_shape = (h // factor, w // factor)

    def _apply(self, x):
        blurred = self._conv.forward(x)
        return blurred[self.phase :: self.factor, self.phase :: self.factor]

    def _adjoint(self, y):
        up = np.zeros(self.input_shape)
        up[self.phase :: self.factor, self.phase :: self.factor] = y
        return self._conv.adjoint(up)


class InpaintModel(ForwardModel):
    """Gather observed pixels (row-major mask order); adjoint scatters."""

    variant = "inpaint"

    def __init__(self, mask):
        super().__init__()
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim != 2:
            raise ConfigurationError("mask must be a 2-D boolean array")
        if not mask.any():
            raise ConfigurationError("mask must observe at least one pixel")
        self.mask = mask
        self.input_shape = mask.shape
        self.output_shape = (int(mask.sum()),)

    def _apply(self, x):
        return x[self.mask]

    def _adjoint(self, y):
        out = np.zeros(self.input_shape)
        out[self.mask] = y
        return out

    @property
    def m(self) -> int:
        return self.output_shape[0]


def add_noise(y: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """Add i.i.d. Gaussian noise of standard deviation sigma (intensity units)."""
    if sigma < 0:
        raise ConfigurationError(f"sigma must be nonnegative, got {sigma}")
    y = np.asarray(y, dtype=np.float64)
    if sigma == 0.0:
        return y.copy()
    rng = np.random.default_rng(seed)
    return y + sigma * rng.standard_normal(y.shape)


def materialize_forward(model: ForwardModel) -> np.ndarray:
    """Dense m x n matrix of the forward operator (column j = F e_j)."""
    if model.n > DENSE_CAP:
        raise SizeCapExceeded(f"{model.n} pixels exceeds dense cap {DENSE_CAP}")
    cols = np.empty((model.m, model.n))
    e = np.zeros(model.n)
    with model.counter.paused():
        for j in range(model.n):
            e[j] = 1.0
            cols[:, j] = model.apply_vec(e)
            e[j] = 0.0
    return cols
