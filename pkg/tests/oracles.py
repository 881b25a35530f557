"""Brute-force reference implementations used only by the tests.

Written with explicit Python loops and no shared code with the package.
"""

import numpy as np


def triple_loop_matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def direct_conv2d(x, w, P=0, s=1):
    """x: H x W x C, w: M x k x k x C -> H_o x W_o x M (cross-correlation, zero padding)."""
    H, W, C = x.shape
    M, k = w.shape[0], w.shape[1]
    Ho = (H + 2 * P - k) // s + 1
    Wo = (W + 2 * P - k) // s + 1
    out = np.zeros((Ho, Wo, M))
    for m in range(M):
        for i in range(Ho):
            for j in range(Wo):
                acc = 0.0
                for a in range(k):
                    for b in range(k):
                        r, c = i * s + a - P, j * s + b - P
                        if 0 <= r < H and 0 <= c < W:
                            for ch in range(C):
                                acc += x[r, c, ch] * w[m, a, b, ch]
                out[i, j, m] = acc
    return out


def direct_conv3d(x, w, P=0, s=1):
    """x: H x W x D x C, w: M x k x k x k x C."""
    dims = x.shape[:3]
    M, k = w.shape[0], w.shape[1]
    out_dims = [(n + 2 * P - k) // s + 1 for n in dims]
    out = np.zeros((*out_dims, M))
    for m in range(M):
        for o in np.ndindex(*out_dims):
            acc = 0.0
            for off in np.ndindex(k, k, k):
                pos = [o[t] * s + off[t] - P for t in range(3)]
                if all(0 <= pos[t] < dims[t] for t in range(3)):
                    acc += float(np.dot(x[pos[0], pos[1], pos[2], :], w[m, off[0], off[1], off[2], :]))
            out[(*o, m)] = acc
    return out


def enumerate_windows(img, k, s):
    """List of (i, j, flattened window) for every window position, row-major."""
    H, W = img.shape
    res = []
    for i, r in enumerate(range(0, H - k + 1, s)):
        for j, c in enumerate(range(0, W - k + 1, s)):
            res.append((i, j, [img[r + a, c + b] for a in range(k) for b in range(k)]))
    return res


def finite_difference(f, x, h=1e-5):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        orig = x[idx]
        x[idx] = orig + h
        up = f(x)
        x[idx] = orig - h
        down = f(x)
        x[idx] = orig
        g[idx] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    den = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if den == 0 else float(np.linalg.norm(a - b) / den)
