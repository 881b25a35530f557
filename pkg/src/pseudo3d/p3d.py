"""Pseudo-3D transform: turn a 2D image into a volume of unrolled sliding windows.

For a ``k x k`` window and stride ``s``, an ``H x W`` image becomes an
``H_t x W_t x k*k`` volume with ``H_t = (H - k)/s + 1`` and
``W_t = (W - k)/s + 1``. The depth fiber at ``(i, j)`` is the window whose
top-left corner is ``(i*s, j*s)``, flattened row-major. Unlike im2col, the
window grid keeps its two spatial axes instead of being flattened into one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, DimensionError
from .tensor import center_crop, resize_trilinear

MODEL_SHAPE = (64, 64, 32)


@dataclass(frozen=True)
class P3DConfig:
    k: int = 5
    s: int = 1

    def __post_init__(self):
        if int(self.k) < 1 or int(self.s) < 1:
            raise ConfigurationError(f"window and stride must be >= 1, got k={self.k}, s={self.s}")

    def grid_extent(self, n: int, axis: str = "H") -> int:
        if n < self.k:
            raise DimensionError(f"window k={self.k} exceeds image {axis} extent {n}")
        residue = (n - self.k) % self.s
        if residue:
            raise ConfigurationError(
                f"({axis} - k) mod s = ({n} - {self.k}) mod {self.s} = {residue}, must be 0"
            )
        return (n - self.k) // self.s + 1

    def volume_shape(self, H: int, W: int) -> tuple[int, int, int]:
        return self.grid_extent(H, "H"), self.grid_extent(W, "W"), self.k * self.k

    def compatible_extent(self, n: int) -> int:
        """Largest extent <= n that the window/stride pair tiles exactly."""
        if n < self.k:
            raise DimensionError(f"window k={self.k} exceeds extent {n}")
        return n - (n - self.k) % self.s


def to_pseudo3d(img: np.ndarray, cfg: P3DConfig = P3DConfig()) -> np.ndarray:
    """Unroll every ``k x k`` window of ``img`` into a depth fiber.

    ``H x W`` input gives ``H_t x W_t x k*k``. A multi-channel ``H x W x C``
    input is transformed per channel and returned as ``H_t x W_t x k*k x C``.
    """
    img = np.asarray(img)
    if img.ndim == 3:
        return np.stack([to_pseudo3d(img[:, :, c], cfg) for c in range(img.shape[2])], axis=-1)
    if img.ndim != 2:
        raise DimensionError(f"to_pseudo3d expects an H x W image, got shape {img.shape}")
    Ht, Wt, Dt = cfg.volume_shape(*img.shape)
    win = sliding_window_view(img, (cfg.k, cfg.k))[:: cfg.s, :: cfg.s]
    return np.ascontiguousarray(win.reshape(Ht, Wt, Dt))


def _check_volume(vol: np.ndarray, cfg: P3DConfig) -> np.ndarray:
    vol = np.asarray(vol)
    if vol.ndim != 3 or vol.shape[2] != cfg.k * cfg.k:
        raise DimensionError(f"expected H_t x W_t x {cfg.k * cfg.k} volume for k={cfg.k}, got shape {vol.shape}")
    return vol


def source_shape(vol_shape: Sequence[int], cfg: P3DConfig) -> tuple[int, int]:
    """Smallest image extents whose transform has ``vol_shape``."""
    Ht, Wt = vol_shape[0], vol_shape[1]
    return (Ht - 1) * cfg.s + cfg.k, (Wt - 1) * cfg.s + cfg.k


def _copies(vol: np.ndarray, cfg: P3DConfig):
    """Yield ``(image-slice, fiber-values)`` for each window offset ``(a, b)``."""
    k, s = cfg.k, cfg.s
    Ht, Wt = vol.shape[:2]
    for a in range(k):
        for b in range(k):
            sl = (slice(a, a + s * (Ht - 1) + 1, s), slice(b, b + s * (Wt - 1) + 1, s))
            yield sl, vol[:, :, a * k + b]


def from_pseudo3d(vol: np.ndarray, cfg: P3DConfig, H: int, W: int) -> np.ndarray:
    """Rebuild the ``H x W`` image by averaging every copy of each pixel.

    Pixels not covered by any window (only possible when ``s > k``) are 0.
    The average is taken relative to the first copy, so a volume whose copies
    agree reproduces the source image bit for bit.
    """
    vol = _check_volume(vol, cfg)
    expected = cfg.volume_shape(H, W)
    if vol.shape != expected:
        raise DimensionError(f"volume shape {vol.shape} inconsistent with image {H}x{W}, k={cfg.k}, s={cfg.s}")
    dtype = vol.dtype if np.issubdtype(vol.dtype, np.floating) else np.float64
    ref = np.zeros((H, W), dtype=dtype)
    count = np.zeros((H, W), dtype=np.int64)
    # Reverse pass so the first copy (lowest offset) is the one left in ref.
    for sl, values in reversed(list(_copies(vol, cfg))):
        ref[sl] = values
        count[sl] += 1
    dev = np.zeros((H, W), dtype=dtype)
    for sl, values in _copies(vol, cfg):
        dev[sl] += values - ref[sl]
    covered = count > 0
    out = ref.copy()
    out[covered] += dev[covered] / count[covered]
    return out


def consistency_residual(vol: np.ndarray, cfg: P3DConfig) -> float:
    """Largest spread (max - min) among the copies of any single source pixel."""
    vol = _check_volume(vol, cfg)
    H, W = source_shape(vol.shape, cfg)
    hi = np.full((H, W), -np.inf)
    lo = np.full((H, W), np.inf)
    for sl, values in _copies(vol, cfg):
        hi[sl] = np.maximum(hi[sl], values)
        lo[sl] = np.minimum(lo[sl], values)
    covered = np.isfinite(hi)
    if not covered.any():
        return 0.0
    return float(np.max(hi[covered] - lo[covered]))


def auto_crop(img: np.ndarray, cfg: P3DConfig) -> np.ndarray:
    """Center-crop ``img`` to the largest extents the window/stride pair tiles exactly."""
    img = np.asarray(img)
    extent = [cfg.compatible_extent(img.shape[0]), cfg.compatible_extent(img.shape[1])]
    return center_crop(img, extent + list(img.shape[2:]))


def pseudo3d_for_model(img: np.ndarray, cfg: P3DConfig = P3DConfig(), target: Sequence[int] = MODEL_SHAPE) -> np.ndarray:
    """Pseudo-3D transform followed by a trilinear resize to the model input shape."""
    vol = to_pseudo3d(img, cfg)
    if vol.ndim != 3:
        raise DimensionError("pseudo3d_for_model expects a single-channel image")
    return resize_trilinear(vol, target)
