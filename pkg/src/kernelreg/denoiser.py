"""Kernel denoisers W = D^{-1} K built from a guide image, matrix-free.

K holds pairwise feature-similarity weights phi(zeta_s, zeta_t) truncated
to a square search window; D is the diagonal of its row sums. Features are
guide patches (NLM variants) or single guide intensities (bilateral,
yaroslavsky), with the pixel-position part of the feature handled by a
separable spatial profile.

Weights are precomputed per window offset, so one apply costs one pass
over the (2R+1)^2 offsets. Mirror offsets reuse the same weight arrays,
which makes the materialized K symmetric to the last bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .counting import OpCounter
from .errors import ConfigurationError, ShapeMismatch, SizeCapExceeded
from .image import Image

__all__ = ["KernelConfig", "KernelDenoiser", "build_denoiser"]

VARIANTS = ("nlm-gaussian", "nlm-laplacian", "bilateral", "yaroslavsky")
PROFILES = ("hat", "gaussian", "box")

DENSE_CAP = 4096


@dataclass(frozen=True)
class KernelConfig:
    """Kernel-filter parameters.

    patch_radius None resolves to the variant default (3 for NLM variants,
    0 for the pixel-feature ones). spatial_bandwidth None resolves to
    search_radius / 2 and only matters for the gaussian profile.
    """

    variant: str = "nlm-gaussian"
    patch_radius: int | None = None
    search_radius: int = 10
    intensity_bandwidth: float = 0.1
    spatial_profile: str = "hat"
    spatial_bandwidth: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown kernel variant '{self.variant}'")
        if self.spatial_profile not in PROFILES:
            raise ConfigurationError(f"unknown spatial profile '{self.spatial_profile}'")
        if self.search_radius < 1:
            raise ConfigurationError("search_radius must be >= 1")
        if self.intensity_bandwidth <= 0:
            raise ConfigurationError("intensity_bandwidth must be positive")
        pr = self.patch_radius
        if pr is not None:
            if pr < 0:
                raise ConfigurationError("patch_radius must be >= 0")
            if self.variant in ("bilateral", "yaroslavsky") and pr != 0:
                raise ConfigurationError(
                    f"{self.variant} uses the pixel-intensity feature only "
                    "(patch_radius must be 0)"
                )
        if self.spatial_bandwidth is not None and self.spatial_bandwidth <= 0:
            raise ConfigurationError("spatial_bandwidth must be positive")

    @property
    def effective_patch_radius(self) -> int:
        if self.patch_radius is not None:
            return self.patch_radius
        return 3 if self.variant.startswith("nlm") else 0

    @property
    def effective_spatial_bandwidth(self) -> float:
        if self.spatial_bandwidth is not None:
            return self.spatial_bandwidth
        return self.search_radius / 2.0

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "patch_radius": self.effective_patch_radius,
            "search_radius": self.search_radius,
            "intensity_bandwidth": self.intensity_bandwidth,
            "spatial_profile": self.spatial_profile,
            "spatial_bandwidth": self.effective_spatial_bandwidth,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelConfig":
        known = {}
        for key in ("variant", "spatial_profile"):
            if key in d:
                known[key] = str(d[key])
        for key in ("patch_radius", "search_radius"):
            if key in d and d[key] is not None:
                known[key] = int(d[key])
        for key in ("intensity_bandwidth", "spatial_bandwidth"):
            if key in d and d[key] is not None:
                known[key] = float(d[key])
        return cls(**known)


def _spatial_factor(config: KernelConfig, di: int, dj: int) -> float:
    r = config.search_radius
    if config.spatial_profile == "hat":
        # separable product of 1-D triangles: strictly positive on the
        # window, zero beyond it, and positive definite on any pixel grid
        # (each 1-D triangle is a box autocorrelation)
        return (1.0 - abs(di) / (r + 1.0)) * (1.0 - abs(dj) / (r + 1.0))
    if config.spatial_profile == "gaussian":
        hs = config.effective_spatial_bandwidth
        return float(np.exp(-(di * di + dj * dj) / (2.0 * hs * hs)))
    return 1.0  # box


def _window_sum(arr: np.ndarray, radius: int) -> np.ndarray:
    """Exact (2r+1)^2 box sum, 'valid' mode, fresh per-window summation."""
    if radius == 0:
        return arr
    size = 2 * radius + 1
    rows = np.lib.stride_tricks.sliding_window_view(arr, size, axis=0).sum(axis=-1)
    return np.lib.stride_tricks.sliding_window_view(rows, size, axis=1).sum(axis=-1)


class KernelDenoiser:
    """The pair (W, D) for a fixed guide image and kernel configuration."""

    def __init__(self, guide: Image, config: KernelConfig, offsets, weights, row_sums):
        self.guide = guide
        self.config = config
        self._offsets = offsets      # list of (di, dj)
        self._weights = weights      # dict offset -> full (H, W) array
        self.row_sums = row_sums     # diagonal of D, shape (H, W)
        self.counter = OpCounter()

    @property
    def shape(self) -> tuple[int, int]:
        return self.guide.shape

    @property
    def n(self) -> int:
        return self.guide.n

    # -- black-box applications ----------------------------------------------

    def _weighted_shift_sum(self, x: np.ndarray) -> np.ndarray:
        """K x: accumulate w_delta[s] * x[s + delta] over window offsets."""
        h, w = self.shape
        acc = np.zeros((h, w))
        for (di, dj), wgt in self._weights.items():
            s_r = slice(max(-di, 0), h - max(di, 0))
            s_c = slice(max(-dj, 0), w - max(dj, 0))
            t_r = slice(max(-di, 0) + di, h - max(di, 0) + di)
            t_c = slice(max(-dj, 0) + dj, w - max(dj, 0) + dj)
            acc[s_r, s_c] += wgt[s_r, s_c] * x[t_r, t_c]
        return acc

    def _apply(self, x: np.ndarray) -> np.ndarray:
        return self._weighted_shift_sum(x) / self.row_sums

    def _apply_adjoint(self, x: np.ndarray) -> np.ndarray:
        # W^T = D W D^{-1} = K D^{-1} since K is symmetric
        return self._weighted_shift_sum(x / self.row_sums)

    def apply(self, x: Image) -> Image:
        """Denoise: W x (row-stochastic window-weighted average)."""
        if x.shape != self.shape:
            raise ShapeMismatch(f"expected {self.shape}, got {x.shape}")
        self.counter.tick_apply()
        return Image(self._apply(x.pixels))

    def apply_adjoint(self, x: Image) -> Image:
        """W^T x, computed as D W D^{-1} x at the cost of one apply."""
        if x.shape != self.shape:
            raise ShapeMismatch(f"expected {self.shape}, got {x.shape}")
        self.counter.tick_adjoint()
        return Image(self._apply_adjoint(x.pixels))

    def apply_vec(self, x: np.ndarray) -> np.ndarray:
        self.counter.tick_apply()
        return self._apply(x.reshape(self.shape)).reshape(-1)

    def adjoint_vec(self, x: np.ndarray) -> np.ndarray:
        self.counter.tick_adjoint()
        return self._apply_adjoint(x.reshape(self.shape)).reshape(-1)

    # -- dense materialization -------------------------------------------------

    def materialize(self, cap: int = DENSE_CAP) -> tuple[np.ndarray, np.ndarray]:
        """Dense (W, D) pair; D returned as the vector of row sums."""
        h, w = self.shape
        n = self.n
        if n > cap:
            raise SizeCapExceeded(f"{n} pixels exceeds dense cap {cap}")
        lin = np.arange(n).reshape(h, w)
        K = np.zeros((n, n))
        for (di, dj), wgt in self._weights.items():
            s_r = slice(max(-di, 0), h - max(di, 0))
            s_c = slice(max(-dj, 0), w - max(dj, 0))
            t_r = slice(max(-di, 0) + di, h - max(di, 0) + di)
            t_c = slice(max(-dj, 0) + dj, w - max(dj, 0) + dj)
            K[lin[s_r, s_c].ravel(), lin[t_r, t_c].ravel()] = wgt[s_r, s_c].ravel()
        d = self.row_sums.reshape(-1)
        return K / d[:, None], d.copy()

    def materialize_kernel(self, cap: int = DENSE_CAP) -> np.ndarray:
        """Dense symmetric K (unnormalized weights)."""
        W, d = self.materialize(cap)
        return W * d[:, None]


def _feature_distances(guide: np.ndarray, config: KernelConfig, di: int, dj: int) -> np.ndarray:
    """Patch/pixel feature distance between s and s+delta for all valid s.

    Returns the squared-l2 distance for gaussian-kernel variants and the
    l1 distance for the laplacian one, over the (2p+1)^2 patch extracted
    from the symmetric (mirror) extension of the guide.
    """
    p = config.effective_patch_radius
    h, w = guide.shape
    gp = np.pad(guide, p, mode="symmetric") if p else guide
    lr = h + 2 * p - abs(di)
    lc = w + 2 * p - abs(dj)
    r0 = max(-di, 0)
    c0 = max(-dj, 0)
    diff = gp[r0 + di : r0 + di + lr, c0 + dj : c0 + dj + lc] - gp[r0 : r0 + lr, c0 : c0 + lc]
    if config.variant == "nlm-laplacian":
        return _window_sum(np.abs(diff), p)
    return _window_sum(diff * diff, p)


def _intensity_weight(config: KernelConfig, dist: np.ndarray) -> np.ndarray:
    hband = config.intensity_bandwidth
    if config.variant == "nlm-laplacian":
        return np.exp(-dist / hband)
    return np.exp(-dist / (2.0 * hband * hband))


def build_denoiser(guide: Image, config: KernelConfig) -> KernelDenoiser:
    """Compute window weights and row sums for the kernel filter."""
    h, w = guide.shape
    r = config.search_radius
    weights: dict[tuple[int, int], np.ndarray] = {}

    # self weight: phi(zeta_s, zeta_s) = spatial(0) * 1 = 1
    weights[(0, 0)] = np.ones((h, w))

    # compute the positive half of the window; mirrors share storage via a
    # shifted copy so K is symmetric by construction
    for di in range(0, min(r, h - 1) + 1):
        for dj in range(-min(r, w - 1), min(r, w - 1) + 1):
            if di == 0 and dj <= 0:
                continue
            spatial = _spatial_factor(config, di, dj)
            if spatial <= 0.0:
                continue
            dist = _feature_distances(guide.pixels, config, di, dj)
            wgt = np.zeros((h, w))
            s_r = slice(0, h - di)
            s_c = slice(max(-dj, 0), w - max(dj, 0))
            wgt[s_r, s_c] = spatial * _intensity_weight(config, dist)
            weights[(di, dj)] = wgt

            mirror = np.zeros((h, w))
            m_r = slice(di, h)
            m_c = slice(max(dj, 0), w - max(-dj, 0))
            mirror[m_r, m_c] = wgt[s_r, s_c]
            weights[(-di, -dj)] = mirror

    row_sums = np.zeros((h, w))
    for wgt in weights.values():
        row_sums += wgt
    if np.any(row_sums <= 0):
        raise ConfigurationError("kernel row sums must be strictly positive")
    return KernelDenoiser(guide, config, sorted(weights), weights, row_sums)
