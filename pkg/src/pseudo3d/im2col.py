"""im2col / col2im lowering and GEMM-backed 2D convolution.

Layouts: inputs are ``H x W x C``, kernels ``M x k x k x C``. The patch matrix
has one column per window (windows enumerated row-major over output
positions) and ``k*k*C`` rows, unrolled in (window-row, window-col, channel)
order. Kernels are flattened in the same order, so ``conv = K_hat @ I_hat``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, DimensionError
from .tensor import matmul


@dataclass(frozen=True)
class ConvSpec:
    k: int
    C: int = 1
    M: int = 1
    P: int = 0
    s: int = 1

    def __post_init__(self):
        for name in ("k", "C", "M", "s"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"ConvSpec.{name} must be >= 1, got {getattr(self, name)}")
        if self.P < 0:
            raise ConfigurationError(f"ConvSpec.P must be >= 0, got {self.P}")

    def output_extent(self, n: int, axis: str = "H") -> int:
        """Number of window positions along one axis of extent ``n``."""
        span = n + 2 * self.P - self.k
        if span < 0:
            raise DimensionError(
                f"window k={self.k} exceeds padded {axis} extent {n + 2 * self.P} (P={self.P})"
            )
        residue = span % self.s
        if residue:
            raise ConfigurationError(
                f"({axis} + 2P - k) mod s = ({n} + {2 * self.P} - {self.k}) mod {self.s} = {residue}, must be 0"
            )
        return span // self.s + 1

    def patch_rows(self) -> int:
        return self.k * self.k * self.C

    def patch_cols(self, H: int, W: int) -> int:
        return self.output_extent(H, "H") * self.output_extent(W, "W")


def _check_input(x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 2 and spec.C == 1:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[2] != spec.C:
        raise DimensionError(f"expected H x W x {spec.C} input, got shape {x.shape}")
    return x


def _pad(x: np.ndarray, P: int) -> np.ndarray:
    if P == 0:
        return x
    return np.pad(x, ((P, P), (P, P), (0, 0)))


def im2col(x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Unroll every convolution window of ``x`` into a column.

    Returns a ``(k*k*C) x (H_o*W_o)`` matrix.
    """
    x = _check_input(x, spec)
    H, W, C = x.shape
    Ho, Wo = spec.output_extent(H, "H"), spec.output_extent(W, "W")
    k, s = spec.k, spec.s
    # windows: (H', W', C, k, k) -> strided -> (Ho, Wo, k, k, C)
    win = sliding_window_view(_pad(x, spec.P), (k, k), axis=(0, 1))[::s, ::s]
    win = win.transpose(0, 1, 3, 4, 2)
    assert win.shape[:2] == (Ho, Wo)
    return np.ascontiguousarray(win.reshape(Ho * Wo, k * k * C).T)


def col2im(cols: np.ndarray, H: int, W: int, spec: ConvSpec) -> np.ndarray:
    """Scatter-add patch columns back into an ``H x W x C`` image (adjoint of im2col)."""
    cols = np.asarray(cols)
    Ho, Wo = spec.output_extent(H, "H"), spec.output_extent(W, "W")
    k, s, P, C = spec.k, spec.s, spec.P, spec.C
    if cols.shape != (k * k * C, Ho * Wo):
        raise DimensionError(
            f"cols shape {cols.shape} inconsistent with H={H}, W={W}, {spec}: expected {(k * k * C, Ho * Wo)}"
        )
    patches = cols.T.reshape(Ho, Wo, k, k, C)
    out = np.zeros((H + 2 * P, W + 2 * P, C), dtype=cols.dtype)
    for a in range(k):
        for b in range(k):
            out[a : a + s * (Ho - 1) + 1 : s, b : b + s * (Wo - 1) + 1 : s, :] += patches[:, :, a, b, :]
    return out[P : P + H, P : P + W, :]


def kernel_matrix(kernels: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Flatten ``M x k x k x C`` kernels into the ``M x (k*k*C)`` kernel-patch matrix."""
    kernels = np.asarray(kernels)
    expected = (spec.M, spec.k, spec.k, spec.C)
    if kernels.shape != expected:
        raise DimensionError(f"kernel shape {kernels.shape} does not match spec {expected}")
    return kernels.reshape(spec.M, -1)


def conv2d_gemm(x: np.ndarray, kernels: np.ndarray, spec: ConvSpec, threads: int = 1) -> np.ndarray:
    """Cross-correlate ``x`` with ``kernels`` via one GEMM; returns ``H_o x W_o x M``."""
    x = _check_input(x, spec)
    kmat = kernel_matrix(kernels, spec)
    cols = im2col(x, spec)
    Ho, Wo = spec.output_extent(x.shape[0], "H"), spec.output_extent(x.shape[1], "W")
    out = matmul(kmat, cols, threads=threads)
    return np.ascontiguousarray(out.T.reshape(Ho, Wo, spec.M))


def conv2d_direct(x: np.ndarray, kernels: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Reference convolution without lowering: one shifted multiply-add per kernel tap.

    Used by the benchmark as the baseline and correctness cross-check.
    """
    x = _check_input(x, spec)
    kernel_matrix(kernels, spec)
    kernels = np.asarray(kernels)
    Ho, Wo = spec.output_extent(x.shape[0], "H"), spec.output_extent(x.shape[1], "W")
    xp = _pad(x, spec.P)
    s = spec.s
    out = np.zeros((Ho, Wo, spec.M), dtype=np.result_type(x, kernels))
    for a in range(spec.k):
        for b in range(spec.k):
            for c in range(spec.C):
                tap = xp[a : a + s * (Ho - 1) + 1 : s, b : b + s * (Wo - 1) + 1 : s, c]
                out += tap[:, :, None] * kernels[:, a, b, c]
    return out
