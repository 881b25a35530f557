"""Readers and writers for the raw+header tensor format and 2D image files.

A tensor named ``foo`` is stored as ``foo.bin`` (little-endian scalars,
row-major) next to ``foo.json``::

    {"dtype": "f32" | "f64", "shape": [...], "layout": "row-major"}

Extra sidecar keys (for instance ``"modality"``) are preserved on read.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
IMAGE_SUFFIXES = (".pgm", ".png")
TENSOR_SUFFIXES = (".bin", ".json")


def tensor_stem(path) -> Path:
    """Strip a ``.bin``/``.json`` suffix, leaving the shared stem."""
    path = Path(path)
    if path.suffix in TENSOR_SUFFIXES:
        return path.with_suffix("")
    return path


def save_tensor(path, array, extra: dict | None = None) -> tuple[Path, Path]:
    arr = np.asarray(array)
    if arr.dtype == np.float32:
        tag = "f32"
    elif arr.dtype == np.float64:
        tag = "f64"
    else:
        raise DataError(f"unsupported dtype {arr.dtype}; use float32 or float64")
    stem = tensor_stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    bin_path = stem.with_name(stem.name + ".bin")
    json_path = stem.with_name(stem.name + ".json")
    header = dict(extra or {})
    header.update({"dtype": tag, "shape": [int(n) for n in arr.shape], "layout": "row-major"})
    bin_path.write_bytes(np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes())
    json_path.write_text(json.dumps(header, sort_keys=True) + "\n")
    return bin_path, json_path


def read_header(path) -> dict:
    stem = tensor_stem(path)
    json_path = stem.with_name(stem.name + ".json")
    try:
        header = json.loads(json_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read tensor header {json_path}: {exc}") from exc
    if header.get("dtype") not in _DTYPES:
        raise DataError(f"{json_path}: dtype must be f32 or f64, got {header.get('dtype')!r}")
    if header.get("layout", "row-major") != "row-major":
        raise DataError(f"{json_path}: only row-major layout is supported")
    shape = header.get("shape")
    if not isinstance(shape, list) or not shape or not all(isinstance(n, int) and n > 0 for n in shape):
        raise DataError(f"{json_path}: bad shape {shape!r}")
    return header


def load_tensor(path, with_header: bool = False):
    header = read_header(path)
    stem = tensor_stem(path)
    bin_path = stem.with_name(stem.name + ".bin")
    dtype = _DTYPES[header["dtype"]]
    try:
        raw = bin_path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read tensor data {bin_path}: {exc}") from exc
    expected = int(np.prod(header["shape"])) * dtype.itemsize
    if len(raw) != expected:
        raise DataError(f"{bin_path}: expected {expected} bytes for shape {header['shape']}, found {len(raw)}")
    arr = np.frombuffer(raw, dtype=dtype).reshape(header["shape"]).astype(dtype.newbyteorder("="))
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{bin_path}: contains non-finite values")
    return (arr, header) if with_header else arr


def load_image(path) -> np.ndarray:
    """Read an 8/16-bit grayscale PGM or PNG as a float64 ``H x W`` array of raw counts."""
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "I", "I;16", "I;16B", "I;16L"):
                im = im.convert("L")
            arr = np.asarray(im, dtype=np.float64)
    except (OSError, ValueError, UnidentifiedImageError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    if arr.ndim != 2:
        raise DataError(f"{path}: expected a single-channel image, got shape {arr.shape}")
    return arr


def save_pgm(path, counts, bits: int = 8) -> None:
    arr = np.asarray(counts)
    dtype = np.uint8 if bits == 8 else np.uint16
    Image.fromarray(np.clip(np.rint(arr), 0, 2**bits - 1).astype(dtype)).save(path, format="PPM")


def load_any(path):
    """Load an image or tensor file; returns ``(array, header)``."""
    path = Path(path)
    if path.suffix.lower() in IMAGE_SUFFIXES:
        return load_image(path), {"modality": "xray"}
    return load_tensor(path, with_header=True)
