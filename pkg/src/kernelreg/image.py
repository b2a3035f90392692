"""Image container, quality metrics, and grayscale file I/O.

Intensities live on the [0, 1] scale. Values may leave [0, 1] during
processing (solver iterates are unclamped); clamping happens only when an
image is exported to disk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError, ShapeMismatch

__all__ = [
    "Image",
    "PixelIndexMap",
    "psnr",
    "ssim",
    "load_image",
    "save_image",
]


class Image:
    """Immutable 2-D grayscale intensity grid.

    Pixels are stored row-major as float64. Construction rejects
    non-finite values; the array is frozen so instances can be shared
    freely across threads.
    """

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        arr = np.array(pixels, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.size == 0:
            raise ShapeMismatch(f"expected non-empty 2-D grid, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InputError("image contains non-finite intensities")
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    # -- basic geometry -----------------------------------------------------

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    @property
    def n(self) -> int:
        """Pixel count."""
        return self.pixels.size

    def vector(self) -> np.ndarray:
        """Row-major flat view (read-only)."""
        return self.pixels.reshape(-1)

    @classmethod
    def from_vector(cls, vec, shape: tuple[int, int]) -> "Image":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != shape[0] * shape[1]:
            raise ShapeMismatch(
                f"vector of length {vec.size} does not fill a {shape} grid"
            )
        return cls(vec.reshape(shape))

    @classmethod
    def constant(cls, value: float, shape: tuple[int, int]) -> "Image":
        return cls(np.full(shape, value, dtype=np.float64))

    def __repr__(self):
        return f"Image({self.height}x{self.width})"


@dataclass(frozen=True)
class PixelIndexMap:
    """Row-major bijection between linear indices [0, n) and (row, col)."""

    height: int
    width: int

    @property
    def n(self) -> int:
        return self.height * self.width

    def to_linear(self, row: int, col: int) -> int:
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise ShapeMismatch(f"pixel ({row}, {col}) outside {self.height}x{self.width}")
        return row * self.width + col

    def to_pixel(self, index: int) -> tuple[int, int]:
        if not (0 <= index < self.n):
            raise ShapeMismatch(f"linear index {index} outside [0, {self.n})")
        return divmod(index, self.width)


# -- metrics ----------------------------------------------------------------

PEAK = 1.0  # dynamic range of the [0, 1] intensity convention


def _check_same_shape(a: Image, b: Image):
    if a.shape != b.shape:
        raise ShapeMismatch(f"shape mismatch: {a.shape} vs {b.shape}")


def psnr(reference: Image, candidate: Image) -> float:
    """Peak signal-to-noise ratio in dB, peak value 1.0.

    Returns +inf when the images are identical (zero MSE).
    """
    _check_same_shape(reference, candidate)
    mse = float(np.mean((reference.pixels - candidate.pixels) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma * sigma))
    win = np.outer(g, g)
    return win / win.sum()


def _window_filter(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    # 'valid'-mode weighted local mean; fresh per-window sums keep the
    # result independent of any running-sum accumulation order.
    view = np.lib.stride_tricks.sliding_window_view(img, win.shape)
    return np.einsum("ijkl,kl->ij", view, win)


def ssim(reference: Image, candidate: Image) -> float:
    """Mean local SSIM, 11x11 Gaussian window (sigma 1.5), C1=0.01^2, C2=0.03^2."""
    _check_same_shape(reference, candidate)
    if reference.height < 11 or reference.width < 11:
        raise ShapeMismatch("ssim needs images of at least 11x11 pixels")
    x = reference.pixels
    y = candidate.pixels
    win = _gaussian_window()
    c1 = (0.01 * PEAK) ** 2
    c2 = (0.03 * PEAK) ** 2

    mu_x = _window_filter(x, win)
    mu_y = _window_filter(y, win)
    var_x = _window_filter(x * x, win) - mu_x**2
    var_y = _window_filter(y * y, win) - mu_y**2
    cov = _window_filter(x * y, win) - mu_x * mu_y

    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


# -- file I/O ---------------------------------------------------------------


def _read_pgm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if raw[:2] not in (b"P2", b"P5"):
        raise InputError(f"{path}: not a PGM file (missing P2/P5 magic)")
    magic = raw[:2]

    # Tokenize the header: magic, width, height, maxval. '#' starts a comment.
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(raw):
            raise InputError(f"{path}: truncated PGM header")
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    width, height, maxval = (int(t) for t in tokens)
    if not (0 < maxval < 65536):
        raise InputError(f"{path}: unsupported PGM maxval {maxval}")

    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        if maxval < 256:
            data = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=pos)
        else:
            data = np.frombuffer(raw, dtype=">u2", count=width * height, offset=pos)
        if data.size != width * height:
            raise InputError(f"{path}: truncated PGM pixel data")
        grid = data.reshape(height, width).astype(np.float64)
    else:  # P2, ASCII
        body = raw[pos:].split(b"\n")
        cleaned = b" ".join(line.split(b"#", 1)[0] for line in body)
        values = np.array(cleaned.split(), dtype=np.float64)
        if values.size != width * height:
            raise InputError(f"{path}: expected {width * height} samples, got {values.size}")
        grid = values.reshape(height, width)
    return grid / float(maxval)


def _write_pgm(img: Image, path: Path, maxval: int):
    q = np.floor(np.clip(img.pixels, 0.0, 1.0) * maxval + 0.5)
    header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
    if maxval < 256:
        payload = q.astype(np.uint8).tobytes()
    else:
        payload = q.astype(">u2").tobytes()
    path.write_bytes(header + payload)


def load_image(path) -> Image:
    """Load a grayscale PGM (P2/P5) or PNG, scaled to [0, 1].

    Color PNG input is converted by luminance; 16-bit grays scale by 65535.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        return Image(_read_pgm(path))
    if suffix == ".png":
        from PIL import Image as PILImage

        try:
            with PILImage.open(path) as im:
                if im.mode in ("I;16", "I;16B", "I"):
                    arr = np.asarray(im, dtype=np.float64) / 65535.0
                elif im.mode == "L":
                    arr = np.asarray(im, dtype=np.float64) / 255.0
                else:
                    arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
        except Exception as exc:  # Pillow raises various decode errors
            raise InputError(f"{path}: unreadable PNG ({exc})") from exc
        return Image(arr)
    raise InputError(f"{path}: unsupported format '{suffix}' (use .pgm or .png)")


def save_image(img: Image, path, bit_depth: int = 8):
    """Write an image, clamping to [0, 1] and quantizing round-half-up."""
    if bit_depth not in (8, 16):
        raise InputError(f"unsupported bit depth {bit_depth}")
    path = Path(path)
    maxval = (1 << bit_depth) - 1
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        _write_pgm(img, path, maxval)
        return
    if suffix == ".png":
        from PIL import Image as PILImage

        q = np.floor(np.clip(img.pixels, 0.0, 1.0) * maxval + 0.5)
        if bit_depth == 8:
            PILImage.fromarray(q.astype(np.uint8), mode="L").save(path)
        else:
            PILImage.fromarray(q.astype(np.uint16)).save(path)
        return
    raise InputError(f"{path}: unsupported format '{suffix}' (use .pgm or .png)")
