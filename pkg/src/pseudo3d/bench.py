"""Throughput benchmark: im2col+GEMM vs direct convolution, and the pseudo-3D transform.

Every case is cross-checked against its reference before any timing is
taken; a mismatch aborts the run.
"""

from __future__ import annotations

import hashlib
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, P3DError
from .im2col import ConvSpec, conv2d_direct, conv2d_gemm, im2col
from .p3d import P3DConfig, to_pseudo3d


class BenchmarkError(P3DError):
    reason = "benchmark"


@dataclass(frozen=True)
class BenchCase:
    op: str  # "conv2d" or "pseudo3d"
    shape: tuple[int, ...]
    k: int
    s: int = 1
    P: int = 0
    M: int = 1

    @property
    def label(self) -> str:
        dims = "x".join(map(str, self.shape))
        extra = f",M={self.M},P={self.P}" if self.op == "conv2d" else ""
        return f"{self.op} {dims} k={self.k},s={self.s}{extra}"


DEFAULT_CASES = (
    BenchCase("conv2d", (64, 64, 16), k=3, s=1, P=1, M=16),
    BenchCase("pseudo3d", (224, 224), k=5, s=1),
)


def _digest(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


def _time(fn, repetitions):
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return {"median_s": statistics.median(times), "min_s": min(times)}


def _pseudo3d_reference(img, cfg):
    # Reshaped im2col of the single-channel image: fibers as columns.
    cols = im2col(img[:, :, None], ConvSpec(k=cfg.k, s=cfg.s))
    Ht, Wt, Dt = cfg.volume_shape(*img.shape)
    return cols.T.reshape(Ht, Wt, Dt)


def run_case(case: BenchCase, repetitions: int, threads: int, rng) -> dict:
    if case.op == "conv2d":
        if len(case.shape) != 3:
            raise ConfigurationError(f"conv2d case needs an H x W x C shape, got {case.shape}")
        spec = ConvSpec(k=case.k, C=case.shape[2], M=case.M, P=case.P, s=case.s)
        x = rng.standard_normal(case.shape)
        w = rng.standard_normal((case.M, case.k, case.k, case.shape[2]))
        fast = conv2d_gemm(x, w, spec, threads=threads)
        ref = conv2d_direct(x, w, spec)
        diff = float(np.max(np.abs(fast - ref)))
        if diff > 1e-12:
            raise BenchmarkError(f"{case.label}: im2col+GEMM differs from direct convolution by {diff:.3e}")
        timings = {
            "conv2d_gemm": _time(lambda: conv2d_gemm(x, w, spec, threads=threads), repetitions),
            "conv2d_direct": _time(lambda: conv2d_direct(x, w, spec), repetitions),
        }
    elif case.op == "pseudo3d":
        if len(case.shape) != 2:
            raise ConfigurationError(f"pseudo3d case needs an H x W shape, got {case.shape}")
        cfg = P3DConfig(case.k, case.s)
        img = rng.standard_normal(case.shape)
        fast = to_pseudo3d(img, cfg)
        ref = _pseudo3d_reference(img, cfg)
        diff = float(np.max(np.abs(fast - ref)))
        if diff != 0.0:
            raise BenchmarkError(f"{case.label}: pseudo-3D transform differs from reshaped im2col by {diff:.3e}")
        timings = {
            "pseudo3d": _time(lambda: to_pseudo3d(img, cfg), repetitions),
            "im2col_reshape": _time(lambda: _pseudo3d_reference(img, cfg), repetitions),
        }
    else:
        raise ConfigurationError(f"unknown benchmark op {case.op!r}")
    return {
        "label": case.label,
        "op": case.op,
        "shape": list(case.shape),
        "config": {"k": case.k, "s": case.s, "P": case.P, "M": case.M},
        "output_shape": list(fast.shape),
        "max_abs_diff": diff,
        "checksum": _digest(fast),
        "timings": timings,
    }


def run_bench(cases=DEFAULT_CASES, repetitions: int = 3, threads: int = 1, seed: int = 0) -> dict:
    """Cross-check then time each case; one report entry per case."""
    if repetitions < 1:
        raise ConfigurationError(f"repetitions must be >= 1, got {repetitions}")
    rng = np.random.default_rng(seed)
    entries = [run_case(c, repetitions, threads, rng) for c in cases]
    return {"repetitions": repetitions, "threads": threads, "seed": seed, "entries": entries}
