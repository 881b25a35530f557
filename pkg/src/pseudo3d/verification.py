"""Self-check suite run by ``p3d verify``.

Each check compares a fast path against a brute-force oracle on random small
instances. The oracles here are deliberately naive (explicit loops over
output positions) so they share no code with the lowered implementations.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .im2col import ConvSpec, col2im, conv2d_gemm, im2col
from .p3d import P3DConfig, from_pseudo3d, to_pseudo3d
from .ssl import conv3d_backward, conv3d_forward, loss_feature_compare, loss_reconstruction
from .tensor import matmul


@dataclass
class CheckResult:
    name: str
    passed: bool
    cases: int
    worst: float
    tolerance: float
    seconds: float = 0.0

    def row(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<32} cases={self.cases:<5} worst={self.worst:.3e} tol={self.tolerance:.0e} ({self.seconds:.2f}s)"


# -- naive oracles ---------------------------------------------------------------


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def naive_conv2d(x, w, P, s):
    """Direct 2D cross-correlation: ``x`` H x W x C, ``w`` M x k x k x C."""
    xp = np.pad(x, ((P, P), (P, P), (0, 0)))
    M, k = w.shape[0], w.shape[1]
    Ho = (xp.shape[0] - k) // s + 1
    Wo = (xp.shape[1] - k) // s + 1
    out = np.zeros((Ho, Wo, M))
    for i in range(Ho):
        for j in range(Wo):
            patch = xp[i * s : i * s + k, j * s : j * s + k, :]
            for m in range(M):
                out[i, j, m] = np.sum(patch * w[m])
    return out


def naive_conv3d(x, w, P, s):
    xp = np.pad(x, [(P, P)] * 3 + [(0, 0)])
    M, k = w.shape[0], w.shape[1]
    dims = [(n - k) // s + 1 for n in xp.shape[:3]]
    out = np.zeros((*dims, M))
    for idx in np.ndindex(*dims):
        i, j, l = (t * s for t in idx)
        patch = xp[i : i + k, j : j + k, l : l + k, :]
        for m in range(M):
            out[(*idx, m)] = np.sum(patch * w[m])
    return out


def naive_windows(img, k, s):
    """Brute-force enumeration of every window, one column per window."""
    H, W = img.shape
    cols = []
    for i in range(0, H - k + 1, s):
        for j in range(0, W - k + 1, s):
            cols.append([img[i + a, j + b] for a in range(k) for b in range(k)])
    return np.array(cols).T


def central_difference(f, x, h=1e-5):
    grad = np.zeros_like(x)
    for i in range(x.size):
        old = x.flat[i]
        x.flat[i] = old + h
        fp = f(x)
        x.flat[i] = old - h
        fm = f(x)
        x.flat[i] = old
        grad.flat[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic, numeric) -> float:
    """Norm-wise relative error; 0 when both vanish."""
    num = np.linalg.norm(np.ravel(analytic) - np.ravel(numeric))
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    return 0.0 if den == 0 else float(num / den)


# -- random instance generators ---------------------------------------------------


def random_conv2d_case(rng, max_extent=16, max_k=5, max_c=4):
    k = int(rng.integers(1, max_k + 1))
    s = int(rng.integers(1, 4))
    P = int(rng.integers(0, min(k, 3)))
    C = int(rng.integers(1, max_c + 1))
    M = int(rng.integers(1, max_c + 1))
    # Choose output counts, then back out compatible input extents.
    def extent():
        lo = max(1, k - 2 * P)
        for _ in range(100):
            n = int(rng.integers(lo, max_extent + 1))
            if (n + 2 * P - k) >= 0 and (n + 2 * P - k) % s == 0:
                return n
        return k
    return ConvSpec(k=k, C=C, M=M, P=P, s=s), extent(), extent()


def random_p3d_case(rng, ks=(1, 2, 3, 4, 5, 6, 7), strides=(1, 2, 3), max_grid=12, require_overlap=True):
    k = int(rng.choice(ks))
    choices = [s for s in strides if s <= k] if require_overlap else list(strides)
    s = int(rng.choice(choices))
    Ht, Wt = (int(n) for n in rng.integers(1, max_grid + 1, 2))
    return P3DConfig(k, s), (Ht - 1) * s + k, (Wt - 1) * s + k


# -- checks -----------------------------------------------------------------------


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    return wrapper


@_timed
def check_matmul(rng, n):
    worst = 0.0
    for _ in range(n):
        m, k, p = (int(v) for v in rng.integers(1, 13, 3))
        a, b = rng.standard_normal((m, k)), rng.standard_normal((k, p))
        worst = max(worst, float(np.max(np.abs(matmul(a, b) - naive_matmul(a, b)))))
    return CheckResult("matmul vs triple loop", worst <= 1e-12, n, worst, 1e-12)


@_timed
def check_shape_laws(rng, n):
    bad = 0
    for _ in range(n):
        spec, H, W = random_conv2d_case(rng, max_extent=64)
        x = np.zeros((H, W, spec.C))
        Hp = spec.k * spec.k * spec.C
        Wp = ((H + 2 * spec.P - spec.k) // spec.s + 1) * ((W + 2 * spec.P - spec.k) // spec.s + 1)
        bad += im2col(x, spec).shape != (Hp, Wp)
        cfg, H2, W2 = random_p3d_case(rng, require_overlap=False)
        expect = ((H2 - cfg.k) // cfg.s + 1, (W2 - cfg.k) // cfg.s + 1, cfg.k * cfg.k)
        bad += to_pseudo3d(np.zeros((H2, W2)), cfg).shape != expect
    return CheckResult("im2col / pseudo-3D shape laws", bad == 0, n, float(bad), 0.0)


@_timed
def check_p3d_im2col(rng, n):
    bad = 0
    for _ in range(n):
        cfg, H, W = random_p3d_case(rng, require_overlap=False)
        img = rng.standard_normal((H, W))
        vol = to_pseudo3d(img, cfg)
        flat = vol.reshape(-1, vol.shape[2]).T
        bad += not np.array_equal(flat, im2col(img[:, :, None], ConvSpec(k=cfg.k, s=cfg.s)))
        bad += not np.array_equal(flat, naive_windows(img, cfg.k, cfg.s))
    return CheckResult("pseudo-3D == reshaped im2col", bad == 0, n, float(bad), 0.0)


@_timed
def check_conv2d(rng, n):
    worst = 0.0
    for _ in range(n):
        spec, H, W = random_conv2d_case(rng)
        x = rng.standard_normal((H, W, spec.C))
        w = rng.standard_normal((spec.M, spec.k, spec.k, spec.C))
        diff = np.abs(conv2d_gemm(x, w, spec) - naive_conv2d(x, w, spec.P, spec.s))
        worst = max(worst, float(diff.max()))
    return CheckResult("conv2d_gemm vs direct", worst <= 1e-12, n, worst, 1e-12)


def random_conv3d_case(rng, max_extent=8, max_k=5, max_c=3):
    k = int(rng.integers(1, max_k + 1))
    s = int(rng.integers(1, 3))
    P = int(rng.integers(0, min(k, 2)))
    C, M = (int(v) for v in rng.integers(1, max_c + 1, 2))
    dims = []
    for _ in range(3):
        cands = [m for m in range(max(1, k - 2 * P), max_extent + 1) if (m + 2 * P - k) % s == 0]
        dims.append(int(rng.choice(cands)))
    return dims, C, M, k, s, P


@_timed
def check_conv3d(rng, n):
    worst = 0.0
    for _ in range(n):
        dims, C, M, k, s, P = random_conv3d_case(rng)
        x = rng.standard_normal((*dims, C))
        w = rng.standard_normal((M, k, k, k, C))
        diff = np.abs(conv3d_forward(x, w, s, P) - naive_conv3d(x, w, P, s))
        worst = max(worst, float(diff.max()))
    return CheckResult("conv3d_forward vs direct", worst <= 1e-12, n, worst, 1e-12)


@_timed
def check_adjoint(rng, n):
    worst = 0.0
    for _ in range(n):
        spec, H, W = random_conv2d_case(rng)
        x = rng.standard_normal((H, W, spec.C))
        cols = im2col(x, spec)
        y = rng.standard_normal(cols.shape)
        lhs = float(np.sum(cols * y))
        rhs = float(np.sum(x * col2im(y, H, W, spec)))
        worst = max(worst, abs(lhs - rhs))
    return CheckResult("im2col/col2im adjointness", worst <= 1e-12, n, worst, 1e-12)


@_timed
def check_round_trip(rng, n):
    bad = 0
    for _ in range(n):
        cfg, H, W = random_p3d_case(rng, ks=(1, 3, 5, 7))
        img = rng.standard_normal((H, W))
        bad += not np.array_equal(from_pseudo3d(to_pseudo3d(img, cfg), cfg, H, W), img)
    return CheckResult("pseudo-3D round trip", bad == 0, n, float(bad), 0.0)


@_timed
def check_conv3d_gradients(rng, n, tol=1e-5):
    worst = 0.0
    for _ in range(n):
        C = int(rng.integers(1, 3))
        M = int(rng.integers(1, 3))
        k = int(rng.choice([1, 2, 3]))
        s = 1
        P = int(rng.integers(0, 2)) if k > 1 else 0
        x = rng.standard_normal((5, 5, 5, C))
        w = rng.standard_normal((M, k, k, k, C))
        y = conv3d_forward(x, w, s, P)
        g = rng.standard_normal(y.shape)
        gx, gw = conv3d_backward(g, x, w, s, P)
        nx = central_difference(lambda z: float(np.sum(conv3d_forward(z, w, s, P) * g)), x.copy())
        nw = central_difference(lambda z: float(np.sum(conv3d_forward(x, z, s, P) * g)), w.copy())
        worst = max(worst, relative_error(gx, nx), relative_error(gw, nw))
    return CheckResult("conv3d_backward vs finite diff", worst <= tol, n, worst, tol)


@_timed
def check_loss_gradients(rng, n, tol=1e-5):
    worst = 0.0
    for _ in range(n):
        shape = tuple(int(v) for v in rng.integers(1, 6, 3))
        pred, target = rng.standard_normal(shape), rng.standard_normal(shape)
        _, g = loss_reconstruction(pred, target)
        num = central_difference(lambda z: loss_reconstruction(z, target)[0], pred.copy())
        worst = max(worst, relative_error(g, num))
        d = int(rng.integers(2, 17))
        f1, f2 = rng.standard_normal(d), rng.standard_normal(d)
        _, g1, g2 = loss_feature_compare(f1, f2)
        n1 = central_difference(lambda z: loss_feature_compare(z, f2)[0], f1.copy())
        n2 = central_difference(lambda z: loss_feature_compare(f1, z)[0], f2.copy())
        worst = max(worst, relative_error(g1, n1), relative_error(g2, n2))
    return CheckResult("loss gradients vs finite diff", worst <= tol, n, worst, tol)


def run_verify(n: int = 20, seed: int = 0) -> list[CheckResult]:
    """Run every check with ``n`` random instances each (gradient checks use ``n`` too)."""
    rng = np.random.default_rng(seed)
    checks = [
        check_matmul,
        check_shape_laws,
        check_p3d_im2col,
        check_conv2d,
        check_conv3d,
        check_adjoint,
        check_round_trip,
        check_conv3d_gradients,
        check_loss_gradients,
    ]
    return [check(rng, n) for check in checks]
