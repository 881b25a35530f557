"""Desk-scale self-supervised core: 3D convolution by lowering, losses, a tiny encoder-decoder.

Volumes are ``H x W x D x C``; kernels ``M x k x k x k x C``. The 3D patch
matrix has ``k^3 * C`` rows in (row, col, depth, channel) order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, DegenerateInputError, DimensionError, TrainingError
from .tensor import matmul


def _out_extent(n: int, k: int, stride: int, padding: int, axis: int) -> int:
    span = n + 2 * padding - k
    if span < 0:
        raise DimensionError(f"kernel {k} exceeds padded extent {n + 2 * padding} on axis {axis}")
    if span % stride:
        raise ConfigurationError(
            f"axis {axis}: (n + 2P - k) mod s = ({n} + {2 * padding} - {k}) mod {stride} = {span % stride}, must be 0"
        )
    return span // stride + 1


def _check_conv(x, kernels, stride, padding):
    x = np.asarray(x)
    kernels = np.asarray(kernels)
    if x.ndim != 4:
        raise DimensionError(f"expected H x W x D x C input, got shape {x.shape}")
    if kernels.ndim != 5 or not kernels.shape[1] == kernels.shape[2] == kernels.shape[3]:
        raise DimensionError(f"expected M x k x k x k x C kernels, got shape {kernels.shape}")
    if kernels.shape[4] != x.shape[3]:
        raise DimensionError(f"kernel channels {kernels.shape[4]} != input channels {x.shape[3]}")
    if stride < 1 or padding < 0:
        raise ConfigurationError(f"stride must be >= 1 and padding >= 0, got {stride}, {padding}")
    k = kernels.shape[1]
    out = tuple(_out_extent(n, k, stride, padding, ax) for ax, n in enumerate(x.shape[:3]))
    return x, kernels, out


def im2col3d(x: np.ndarray, k: int, stride: int = 1, padding: int = 0) -> np.ndarray:
    """``(k^3 * C) x (H_o * W_o * D_o)`` patch matrix of an ``H x W x D x C`` volume."""
    x = np.asarray(x)
    out = tuple(_out_extent(n, k, stride, padding, ax) for ax, n in enumerate(x.shape[:3]))
    if padding:
        x = np.pad(x, [(padding, padding)] * 3 + [(0, 0)])
    win = sliding_window_view(x, (k, k, k), axis=(0, 1, 2))[::stride, ::stride, ::stride]
    win = win.transpose(0, 1, 2, 4, 5, 6, 3)
    return np.ascontiguousarray(win.reshape(int(np.prod(out)), -1).T)


def col2im3d(cols: np.ndarray, shape: Sequence[int], k: int, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Scatter-add patch columns back into a volume of ``shape`` (adjoint of :func:`im2col3d`)."""
    H, W, D, C = shape
    out = tuple(_out_extent(n, k, stride, padding, ax) for ax, n in enumerate((H, W, D)))
    if cols.shape != (k**3 * C, int(np.prod(out))):
        raise DimensionError(f"cols shape {cols.shape} inconsistent with volume {tuple(shape)}, k={k}")
    patches = cols.T.reshape(*out, k, k, k, C)
    acc = np.zeros((H + 2 * padding, W + 2 * padding, D + 2 * padding, C), dtype=cols.dtype)
    s = stride
    for a in range(k):
        for b in range(k):
            for c in range(k):
                acc[
                    a : a + s * (out[0] - 1) + 1 : s,
                    b : b + s * (out[1] - 1) + 1 : s,
                    c : c + s * (out[2] - 1) + 1 : s,
                ] += patches[:, :, :, a, b, c, :]
    p = padding
    return acc[p : p + H, p : p + W, p : p + D]


def conv3d_forward(x, kernels, stride: int = 1, padding: int = 0, threads: int = 1) -> np.ndarray:
    """3D cross-correlation as ``K_hat @ im2col3d(x)``; returns ``H_o x W_o x D_o x M``."""
    x, kernels, out = _check_conv(x, kernels, stride, padding)
    M, k = kernels.shape[0], kernels.shape[1]
    y = matmul(kernels.reshape(M, -1), im2col3d(x, k, stride, padding), threads=threads)
    return np.ascontiguousarray(y.T.reshape(*out, M))


def conv3d_backward(grad_out, x, kernels, stride: int = 1, padding: int = 0):
    """Gradients of :func:`conv3d_forward` w.r.t. input and kernels.

    ``grad_input = col2im(K^T G)`` and ``grad_kernels = G cols^T`` where ``G``
    is ``grad_out`` laid out as ``M x (H_o W_o D_o)``.
    """
    x, kernels, out = _check_conv(x, kernels, stride, padding)
    M, k = kernels.shape[0], kernels.shape[1]
    grad_out = np.asarray(grad_out)
    if grad_out.shape != (*out, M):
        raise DimensionError(f"grad_out shape {grad_out.shape} does not match forward output {(*out, M)}")
    g = grad_out.reshape(-1, M).T
    cols = im2col3d(x, k, stride, padding)
    grad_kernels = matmul(g, cols.T).reshape(kernels.shape)
    grad_input = col2im3d(matmul(kernels.reshape(M, -1).T, g), x.shape, k, stride, padding)
    return grad_input, grad_kernels


def loss_reconstruction(pred, target):
    """Mean squared error and its gradient ``2 (pred - target) / N``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction shape {pred.shape} != target shape {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def loss_feature_compare(f1, f2):
    """``1 - cos(f1, f2)`` with gradients w.r.t. both vectors."""
    f1 = np.asarray(f1, dtype=np.float64).ravel()
    f2 = np.asarray(f2, dtype=np.float64).ravel()
    if f1.shape != f2.shape or f1.size < 2:
        raise DimensionError(f"feature vectors must have equal length >= 2, got {f1.size} and {f2.size}")
    n1, n2 = np.linalg.norm(f1), np.linalg.norm(f2)
    if n1 == 0 or n2 == 0:
        raise DegenerateInputError("feature comparison is undefined for a zero-norm vector")
    u1, u2 = f1 / n1, f2 / n2
    cos = float(u1 @ u2)
    g1 = -(u2 - cos * u1) / n1
    g2 = -(u1 - cos * u2) / n2
    return 1.0 - cos, g1, g2


# -- tiny encoder-decoder --------------------------------------------------------


@dataclass
class Conv3d:
    weight: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    def forward(self, x):
        return conv3d_forward(x, self.weight, self.stride, self.padding) + self.bias, x

    def backward(self, g, x):
        gx, gw = conv3d_backward(g, x, self.weight, self.stride, self.padding)
        return gx, (gw, g.reshape(-1, g.shape[-1]).sum(axis=0))

    def params(self):
        return [self.weight, self.bias]


class ReLU:
    def forward(self, x):
        return np.maximum(x, 0.0), x > 0

    def backward(self, g, mask):
        return g * mask, ()

    def params(self):
        return []


class Downsample:
    """2x2x2 average pooling."""

    def forward(self, x):
        H, W, D, C = x.shape
        if H % 2 or W % 2 or D % 2:
            raise DimensionError(f"downsample needs even spatial extents, got {x.shape[:3]}")
        return x.reshape(H // 2, 2, W // 2, 2, D // 2, 2, C).mean(axis=(1, 3, 5)), x.shape

    def backward(self, g, shape):
        up = g.repeat(2, axis=0).repeat(2, axis=1).repeat(2, axis=2)
        return up / 8.0, ()

    def params(self):
        return []


class Upsample:
    """Nearest-neighbour 2x upsampling."""

    def forward(self, x):
        return x.repeat(2, axis=0).repeat(2, axis=1).repeat(2, axis=2), None

    def backward(self, g, _):
        H, W, D, C = g.shape
        return g.reshape(H // 2, 2, W // 2, 2, D // 2, 2, C).sum(axis=(1, 3, 5)), ()

    def params(self):
        return []


@dataclass
class MiniNet:
    """Sequential 3D encoder-decoder.

    The output of layer ``feature_layer`` is globally average-pooled into the
    feature vector used for siamese comparison; the last layer's output is
    the reconstruction.
    """

    layers: list
    feature_layer: int
    seed: int = 0
    param_count: int = field(init=False)

    def __post_init__(self):
        self.param_count = sum(p.size for layer in self.layers for p in layer.params())

    @classmethod
    def build(cls, channels: Sequence[int] = (1, 4, 4), k: int = 3, seed: int = 0) -> "MiniNet":
        """conv-relu-down-conv-relu | up-conv, with uniform(+-1/sqrt(fan_in)) init."""
        rng = np.random.default_rng(seed)
        c_in, c_mid, c_feat = channels

        def conv(cin, cout):
            bound = 1.0 / np.sqrt(cin * k**3)
            w = rng.uniform(-bound, bound, (cout, k, k, k, cin))
            b = rng.uniform(-bound, bound, cout)
            return Conv3d(w, b, 1, k // 2)

        layers = [
            conv(c_in, c_mid),
            ReLU(),
            Downsample(),
            conv(c_mid, c_feat),
            ReLU(),
            Upsample(),
            conv(c_feat, c_in),
        ]
        return cls(layers=layers, feature_layer=4, seed=seed)

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, x):
        """Return ``(reconstruction, features, caches)``."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[..., None]
        caches, feats = [], None
        for i, layer in enumerate(self.layers):
            x, cache = layer.forward(x)
            caches.append(cache)
            if i == self.feature_layer:
                feats = x.reshape(-1, x.shape[-1]).mean(axis=0)
                feat_shape = x.shape
        caches.append(feat_shape)
        return x, feats, caches

    def backward(self, grad_recon, grad_feats, caches):
        """Parameter gradients (same order as :meth:`params`) and the input gradient."""
        feat_shape = caches[-1]
        g = grad_recon
        grads = []
        for i in range(len(self.layers) - 1, -1, -1):
            if i == self.feature_layer and grad_feats is not None:
                n = int(np.prod(feat_shape[:3]))
                g = g + np.broadcast_to(grad_feats / n, feat_shape)
            g, pg = self.layers[i].backward(g, caches[i])
            grads.append(list(pg))
        flat = [p for layer_grads in reversed(grads) for p in layer_grads]
        return flat, g


def pair_objective(net: MiniNet, pair, with_grad: bool = True):
    """Combined loss of one view pair: mean reconstruction MSE + (1 - cos) of features.

    ``pair`` is ``(v1, v2)`` (each view reconstructs itself) or
    ``(v1, v2, clean)`` (both views reconstruct ``clean``).
    """
    v1, v2 = pair[0], pair[1]
    t1, t2 = (pair[2], pair[2]) if len(pair) > 2 else (v1, v2)
    r1, f1, c1 = net.forward(v1)
    r2, f2, c2 = net.forward(v2)
    l1, g1 = loss_reconstruction(r1, np.reshape(t1, r1.shape))
    l2, g2 = loss_reconstruction(r2, np.reshape(t2, r2.shape))
    lf, gf1, gf2 = loss_feature_compare(f1, f2)
    loss = 0.5 * (l1 + l2) + lf
    if not with_grad:
        return loss, None
    p1, _ = net.backward(0.5 * g1, gf1, c1)
    p2, _ = net.backward(0.5 * g2, gf2, c2)
    return loss, [a + b for a, b in zip(p1, p2)]


def train_smoke(net: MiniNet, pairs, steps: int, lr: float) -> list[float]:
    """Plain gradient descent on the combined objective; returns ``steps + 1`` losses.

    Entry ``i`` is the mean loss over ``pairs`` before update ``i``; the last
    entry is the loss after the final update.
    """
    if steps < 0 or lr < 0:
        raise ConfigurationError(f"steps and lr must be non-negative, got {steps}, {lr}")
    params = net.params()
    history = []
    for step in range(steps + 1):
        want_grad = step < steps
        total, grads = 0.0, None
        try:
            for pair in pairs:
                loss, g = pair_objective(net, pair, with_grad=want_grad)
                total += loss
                if want_grad:
                    grads = g if grads is None else [a + b for a, b in zip(grads, g)]
        except DegenerateInputError as exc:
            raise TrainingError(f"degenerate features at step {step}: {exc}", step=step) from exc
        total /= len(pairs)
        if not np.isfinite(total):
            raise TrainingError(f"loss became non-finite at step {step}", step=step)
        history.append(total)
        if want_grad and lr:
            for p, g in zip(params, grads):
                p -= lr * g / len(pairs)
    return history
