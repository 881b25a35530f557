"""Seeded two-stage augmentation for volumes, plus the random crop/resize steps.

Global ops (flip, affine) change geometry; local ops (noise, blur, swap,
gamma) corrupt appearance. Every random draw comes from a generator keyed
on ``(seed, item_index, view, stage, salt)`` so results do not depend on
call order or threading.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, DataError, DimensionError
from .tensor import crop, resize_bilinear, resize_trilinear

CROP_SIZES_3D = ((64, 64, 32), (96, 96, 48), (112, 112, 56), (128, 128, 64))
VOLUME_SHAPE = (64, 64, 32)
IMAGE_SHAPE = (224, 224)

_STAGE_GLOBAL, _STAGE_LOCAL, _STAGE_CROP = 0, 1, 2


def _check_prob(name, p):
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"{name} must be in [0, 1], got {p}")


def _check_range(name, lo, hi, low=-math.inf, high=math.inf):
    if not (low <= lo <= hi <= high):
        raise ConfigurationError(f"{name} range ({lo}, {hi}) must satisfy {low} <= lo <= hi <= {high}")


@dataclass(frozen=True)
class Flip:
    probs: tuple[float, ...] = (0.5, 0.5, 0.5)

    def __post_init__(self):
        for p in self.probs:
            _check_prob("flip probability", p)


@dataclass(frozen=True)
class Affine:
    max_rotation: tuple[float, ...] = (10.0, 10.0, 10.0)
    max_scale: float = 0.1
    max_translation: float = 0.05

    def __post_init__(self):
        if any(r < 0 for r in self.max_rotation) or self.max_scale < 0 or self.max_translation < 0:
            raise ConfigurationError("affine bounds must be non-negative")
        if self.max_scale >= 1:
            raise ConfigurationError(f"max_scale must be < 1, got {self.max_scale}")
        _check_prob("max_translation", self.max_translation)


@dataclass(frozen=True)
class Noise:
    std: float = 0.02

    def __post_init__(self):
        if self.std < 0:
            raise ConfigurationError(f"noise std must be >= 0, got {self.std}")


@dataclass(frozen=True)
class GaussianBlur:
    sigma: tuple[float, float] = (0.5, 1.0)

    def __post_init__(self):
        if self.sigma[0] <= 0:
            raise ConfigurationError(f"blur sigma must be > 0, got {self.sigma}")
        _check_range("blur sigma", *self.sigma)


@dataclass(frozen=True)
class Swap:
    extent: tuple[int, ...] = (8, 8, 4)
    count: int = 4

    def __post_init__(self):
        if any(e < 1 for e in self.extent) or self.count < 0:
            raise ConfigurationError(f"swap extent must be >= 1 and count >= 0, got {self.extent}, {self.count}")


@dataclass(frozen=True)
class Gamma:
    gamma: tuple[float, float] = (0.7, 1.5)

    def __post_init__(self):
        _check_range("gamma", *self.gamma, low=0.25, high=4.0)


GLOBAL_OPS = {"flip": Flip, "affine": Affine}
LOCAL_OPS = {"noise": Noise, "gaussian_blur": GaussianBlur, "swap": Swap, "gamma": Gamma}
_OP_NAMES = {cls: name for name, cls in {**GLOBAL_OPS, **LOCAL_OPS}.items()}


@dataclass(frozen=True)
class AugmentSpec:
    """Declarative augmentation recipe.

    ``crop_fraction`` is the area-fraction range of the 2D random crop and
    ``crop_sizes`` the candidate 3D crop extents; both feed the crop steps
    that precede the two augmentation stages.
    """

    seed: int = 0
    global_ops: tuple = (Flip(), Affine())
    local_ops: tuple = (Noise(), GaussianBlur(), Swap(), Gamma())
    crop_fraction: tuple[float, float] = (0.6, 1.0)
    crop_sizes: tuple = CROP_SIZES_3D

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        for op in self.global_ops:
            if type(op) not in GLOBAL_OPS.values():
                raise ConfigurationError(f"{op!r} is not a global op")
        for op in self.local_ops:
            if type(op) not in LOCAL_OPS.values():
                raise ConfigurationError(f"{op!r} is not a local op")
        _check_range("crop_fraction", *self.crop_fraction, low=0.0, high=1.0)
        if self.crop_fraction[0] <= 0:
            raise ConfigurationError("crop_fraction lower bound must be > 0")
        if not self.crop_sizes:
            raise ConfigurationError("crop_sizes must not be empty")

    @classmethod
    def identity(cls, seed: int = 0) -> "AugmentSpec":
        """Recipe with no ops and no cropping: every stage is an exact identity."""
        return cls(seed=seed, global_ops=(), local_ops=(), crop_fraction=(1.0, 1.0))

    def to_dict(self) -> dict:
        return {
            "seed": int(self.seed),
            "global_ops": [{"op": _OP_NAMES[type(op)], **_listify(asdict(op))} for op in self.global_ops],
            "local_ops": [{"op": _OP_NAMES[type(op)], **_listify(asdict(op))} for op in self.local_ops],
            "crop_fraction": list(self.crop_fraction),
            "crop_sizes": [list(s) for s in self.crop_sizes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentSpec":
        unknown = set(d) - {"seed", "global_ops", "local_ops", "crop_fraction", "crop_sizes"}
        if unknown:
            raise ConfigurationError(f"unknown AugmentSpec keys: {sorted(unknown)}")
        kwargs = {}
        if "seed" in d:
            kwargs["seed"] = int(d["seed"])
        for key, table in (("global_ops", GLOBAL_OPS), ("local_ops", LOCAL_OPS)):
            if key in d:
                kwargs[key] = tuple(_op_from_dict(item, table) for item in d[key])
        if "crop_fraction" in d:
            kwargs["crop_fraction"] = tuple(float(x) for x in d["crop_fraction"])
        if "crop_sizes" in d:
            kwargs["crop_sizes"] = tuple(tuple(int(n) for n in s) for s in d["crop_sizes"])
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def load(cls, path) -> "AugmentSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON: {exc}") from exc


def _listify(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _op_from_dict(item: dict, table: dict):
    item = dict(item)
    name = item.pop("op", None)
    if name not in table:
        raise ConfigurationError(f"unknown op {name!r}; expected one of {sorted(table)}")
    cls = table[name]
    try:
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in item.items()})
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for {name}: {exc}") from exc


def stream(seed: int, item_index: int, view: int = 0, stage: int = 0, salt: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, item, view, stage) combination."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(salt), int(item_index), int(view), int(stage)]))


def _check_volume(v) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim != 3 or v.size == 0:
        raise DimensionError(f"augmentation expects a non-empty H x W x D volume, got shape {v.shape}")
    if not np.issubdtype(v.dtype, np.floating):
        v = v.astype(np.float64)
    return v


# -- global stage --------------------------------------------------------------


def _apply_flip(v, op: Flip, rng):
    if len(op.probs) != v.ndim:
        raise ConfigurationError(f"flip needs {v.ndim} axis probabilities, got {len(op.probs)}")
    draws = rng.random(v.ndim)
    axes = tuple(ax for ax, (u, p) in enumerate(zip(draws, op.probs)) if u < p)
    return np.flip(v, axis=axes).copy() if axes else v


def _rotation(angles_deg):
    ax, ay, az = np.deg2rad(angles_deg)
    rx = np.array([[1, 0, 0], [0, np.cos(ax), -np.sin(ax)], [0, np.sin(ax), np.cos(ax)]])
    ry = np.array([[np.cos(ay), 0, np.sin(ay)], [0, 1, 0], [-np.sin(ay), 0, np.cos(ay)]])
    rz = np.array([[np.cos(az), -np.sin(az), 0], [np.sin(az), np.cos(az), 0], [0, 0, 1]])
    return rz @ ry @ rx


def _apply_affine(v, op: Affine, rng):
    if len(op.max_rotation) != 3:
        raise ConfigurationError("affine max_rotation needs one bound per axis")
    angles = rng.uniform(-1.0, 1.0, 3) * np.asarray(op.max_rotation, dtype=float)
    scale = 1.0 + rng.uniform(-1.0, 1.0) * op.max_scale
    shift = rng.uniform(-1.0, 1.0, 3) * op.max_translation * np.asarray(v.shape)
    if not angles.any() and scale == 1.0 and not shift.any():
        return v
    # Output voxel o samples input at  R^-1 (o - c) / scale + c - shift.
    matrix = _rotation(angles).T / scale
    center = (np.asarray(v.shape) - 1) / 2.0
    offset = center - matrix @ center - shift
    out = ndimage.affine_transform(v, matrix, offset=offset, order=1, mode="constant", cval=0.0)
    return np.clip(out, 0.0, 1.0)


def augment_global(v, spec: AugmentSpec, item_index: int, view: int = 0, salt: int = 0) -> np.ndarray:
    """Flips then affine resampling (trilinear, zero border); shape is preserved."""
    out = _check_volume(v)
    rng = stream(spec.seed, item_index, view, _STAGE_GLOBAL, salt)
    for op in spec.global_ops:
        if isinstance(op, Flip):
            out = _apply_flip(out, op, rng)
        else:
            out = _apply_affine(out, op, rng)
    return out


# -- local stage ---------------------------------------------------------------


def _apply_noise(v, op: Noise, rng):
    noise = rng.standard_normal(v.shape)
    if op.std == 0:
        return v
    span = float(v.max() - v.min()) or 1.0
    return v + (op.std * span * noise).astype(v.dtype)


def _apply_blur(v, op: GaussianBlur, rng):
    sigma = rng.uniform(*op.sigma)
    return ndimage.gaussian_filter(v, sigma=sigma, mode="reflect", truncate=3.0)


def _boxes_overlap(a, b, extent):
    return all(abs(x - y) < e for x, y, e in zip(a, b, extent))


def _apply_swap(v, op: Swap, rng):
    extent = op.extent
    if len(extent) != v.ndim or any(e >= n for e, n in zip(extent, v.shape)):
        raise ConfigurationError(f"swap extent {extent} must be smaller than volume {v.shape} on every axis")
    out = v.copy()
    for _ in range(op.count):
        # Up to 16 attempts to find two disjoint boxes; give up on this swap otherwise.
        for _attempt in range(16):
            p = [int(rng.integers(0, n - e + 1)) for n, e in zip(v.shape, extent)]
            q = [int(rng.integers(0, n - e + 1)) for n, e in zip(v.shape, extent)]
            if not _boxes_overlap(p, q, extent):
                break
        else:
            continue
        sp = tuple(slice(o, o + e) for o, e in zip(p, extent))
        sq = tuple(slice(o, o + e) for o, e in zip(q, extent))
        tmp = out[sp].copy()
        out[sp] = out[sq]
        out[sq] = tmp
    return out


def _apply_gamma(v, op: Gamma, rng):
    g = rng.uniform(*op.gamma)
    if g == 1.0:
        return v
    return np.power(np.clip(v, 0.0, 1.0), g)


_LOCAL_IMPL = {Noise: _apply_noise, GaussianBlur: _apply_blur, Swap: _apply_swap, Gamma: _apply_gamma}


def augment_local(v, spec: AugmentSpec, item_index: int, view: int = 0, salt: int = 0) -> np.ndarray:
    """Noise, blur, swap and gamma in recipe order; result clamped to [0, 1]."""
    out = _check_volume(v)
    rng = stream(spec.seed, item_index, view, _STAGE_LOCAL, salt)
    for op in spec.local_ops:
        out = _LOCAL_IMPL[type(op)](out, op, rng)
    return np.clip(out, 0.0, 1.0)


def augment(v, spec: AugmentSpec, item_index: int, view: int = 0, salt: int = 0) -> np.ndarray:
    """Global then local stage."""
    return augment_local(augment_global(v, spec, item_index, view, salt), spec, item_index, view, salt)


# -- crops ---------------------------------------------------------------------


def random_crop_3d(
    v,
    rng: np.random.Generator,
    sizes: Sequence[Sequence[int]] = CROP_SIZES_3D,
    out_shape: Sequence[int] = VOLUME_SHAPE,
) -> np.ndarray:
    """Crop a randomly chosen size at a uniform origin, then resize to ``out_shape``.

    If the drawn size does not fit, the largest listed size that does is used;
    if none fits the volume is edge-padded up to the smallest listed size.
    """
    v = _check_volume(v)
    sizes = [tuple(int(n) for n in s) for s in sizes]
    if any(len(s) != 3 or min(s) < 1 for s in sizes):
        raise ConfigurationError(f"crop sizes must be positive 3-tuples, got {sizes}")
    size = sizes[int(rng.integers(len(sizes)))]

    def fits(s):
        return all(e <= n for e, n in zip(s, v.shape))

    if not fits(size):
        fitting = [s for s in sizes if fits(s)]
        if fitting:
            size = max(fitting, key=lambda s: int(np.prod(s)))
        else:
            size = min(sizes, key=lambda s: int(np.prod(s)))
            pad = [(0, max(0, e - n)) for e, n in zip(size, v.shape)]
            v = np.pad(v, pad, mode="edge")
    origin = [int(rng.integers(0, n - e + 1)) for n, e in zip(v.shape, size)]
    return resize_trilinear(crop(v, origin, size), out_shape)


def random_crop_resize_2d(
    img,
    rng: np.random.Generator,
    fraction: Sequence[float] = (0.6, 1.0),
    out_shape: Sequence[int] = IMAGE_SHAPE,
    min_extent: int = 64,
) -> np.ndarray:
    """Crop a random area fraction (same aspect ratio) and resize bilinearly to ``out_shape``."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise DimensionError(f"expected an H x W image, got shape {img.shape}")
    if min(img.shape) < min_extent:
        raise DataError(f"image {img.shape} is smaller than the {min_extent}x{min_extent} minimum")
    if not np.issubdtype(img.dtype, np.floating):
        img = img.astype(np.float64)
    H, W = img.shape
    f = rng.uniform(*fraction)
    side = math.sqrt(f)
    h = min(H, max(1, int(round(H * side))))
    w = min(W, max(1, int(round(W * side))))
    origin = (int(rng.integers(0, H - h + 1)), int(rng.integers(0, W - w + 1)))
    return resize_bilinear(crop(img, origin, (h, w)), out_shape)


def crop_stream(seed: int, item_index: int, salt: int = 0) -> np.random.Generator:
    return stream(seed, item_index, 0, _STAGE_CROP, salt)


__all__ = [
    "AugmentSpec",
    "Affine",
    "Flip",
    "Gamma",
    "GaussianBlur",
    "Noise",
    "Swap",
    "augment",
    "augment_global",
    "augment_local",
    "crop_stream",
    "random_crop_3d",
    "random_crop_resize_2d",
    "stream",
]
