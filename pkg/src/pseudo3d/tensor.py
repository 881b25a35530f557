"""Dense tensor primitives: deterministic GEMM, corner-aligned resampling, cropping.

Tensors are plain ``numpy.ndarray`` objects in C (row-major) order. Axis
meaning is fixed by the caller: images are ``H x W``, volumes ``H x W x D``,
matrices ``rows x cols``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from .errors import BoundsError, DimensionError

FLOAT_DTYPES = (np.float32, np.float64)


def as_tensor(x, dtype=None) -> np.ndarray:
    """Return ``x`` as a contiguous floating array, checking it is finite and non-empty."""
    arr = np.asarray(x)
    if dtype is None:
        dtype = arr.dtype if arr.dtype in FLOAT_DTYPES else np.float64
    arr = np.ascontiguousarray(arr, dtype=dtype)
    if arr.size == 0 or any(n < 1 for n in arr.shape):
        raise DimensionError(f"tensor extents must be positive, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError("tensor contains non-finite values")
    return arr


def _matmul_block(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.result_type(a, b))
    # Strict left-to-right accumulation over the inner axis.
    for k in range(a.shape[1]):
        out += a[:, k : k + 1] * b[k : k + 1, :]
    return out


def matmul(a: np.ndarray, b: np.ndarray, threads: int = 1) -> np.ndarray:
    """Matrix product with a fixed reduction order.

    Every output element is accumulated as ``((a[i,0]b[0,j] + a[i,1]b[1,j]) + ...)``
    regardless of ``threads``; threading only splits the output columns, so
    results are bit-identical for any thread count. BLAS is deliberately not
    used because its blocking depends on the machine and thread count.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    n = b.shape[1]
    threads = max(1, int(threads))
    if threads == 1 or n < 2 * threads:
        return _matmul_block(a, b)
    bounds = np.linspace(0, n, threads + 1).astype(int)
    chunks = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda lh: _matmul_block(a, b[:, lh[0] : lh[1]]), chunks))
    return np.concatenate(parts, axis=1)


def _interp_axis(x: np.ndarray, axis: int, size: int) -> np.ndarray:
    n = x.shape[axis]
    if size == n:
        return x
    if n == 1:
        return np.repeat(x, size, axis=axis)
    if size == 1:
        pos = np.zeros(1)
    else:
        # Corner-aligned: output endpoints land exactly on input endpoints.
        pos = np.arange(size) * ((n - 1) / (size - 1))
    lo = np.minimum(np.floor(pos).astype(np.intp), n - 2)
    t = pos - lo
    shape = [1] * x.ndim
    shape[axis] = size
    t = t.reshape(shape).astype(x.dtype)
    v0 = np.take(x, lo, axis=axis)
    v1 = np.take(x, lo + 1, axis=axis)
    # v0 + t*(v1 - v0) keeps constant runs exact (the difference is 0).
    out = v0 + t * (v1 - v0)
    return np.clip(out, np.minimum(v0, v1), np.maximum(v0, v1))


def resize_linear(x: np.ndarray, target: Sequence[int]) -> np.ndarray:
    """Separable multilinear resize on a corner-aligned grid (any rank)."""
    x = np.asarray(x)
    target = tuple(int(t) for t in target)
    if len(target) != x.ndim:
        raise DimensionError(f"target {target} does not match tensor rank {x.ndim}")
    if any(t < 1 for t in target) or any(n < 1 for n in x.shape):
        raise DimensionError(f"resize extents must be >= 1: {x.shape} -> {target}")
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    out = x
    for axis, size in enumerate(target):
        out = _interp_axis(out, axis, size)
    return np.ascontiguousarray(out)


def resize_trilinear(v: np.ndarray, target: Sequence[int]) -> np.ndarray:
    """Resize an ``H x W x D`` volume to ``target`` with trilinear interpolation."""
    v = np.asarray(v)
    if v.ndim != 3:
        raise DimensionError(f"resize_trilinear expects H x W x D, got shape {v.shape}")
    return resize_linear(v, target)


def resize_bilinear(img: np.ndarray, target: Sequence[int]) -> np.ndarray:
    """Resize an ``H x W`` image to ``target`` with bilinear interpolation."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise DimensionError(f"resize_bilinear expects H x W, got shape {img.shape}")
    return resize_linear(img, target)


def crop(t: np.ndarray, origin: Sequence[int], extent: Sequence[int]) -> np.ndarray:
    """Copy the block ``t[origin : origin + extent]`` (per axis)."""
    t = np.asarray(t)
    if len(origin) != t.ndim or len(extent) != t.ndim:
        raise DimensionError(f"crop needs {t.ndim} origins and extents, got {len(origin)}/{len(extent)}")
    index = []
    for axis, (o, e, n) in enumerate(zip(origin, extent, t.shape)):
        if o < 0 or e < 1 or o + e > n:
            raise BoundsError(f"crop out of range on axis {axis}: origin {o} + extent {e} > size {n}")
        index.append(slice(o, o + e))
    return t[tuple(index)].copy()


def center_crop(t: np.ndarray, extent: Sequence[int]) -> np.ndarray:
    origin = [(n - e) // 2 for n, e in zip(t.shape, extent)]
    return crop(t, origin, extent)
