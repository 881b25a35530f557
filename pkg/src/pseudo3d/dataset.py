"""Corpus scanning and deterministic joint batching of 2D and 3D samples.

2D images are cropped, resized to 224x224, passed through the pseudo-3D
transform and resized to the model shape; 3D volumes are randomly cropped and
resized to the same shape. Both then get two independent augmentations, so
every emitted sample is a pair of ``64 x 64 x 32`` views whatever its origin.
"""

from __future__ import annotations

import fnmatch
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import io
from .augment import AugmentSpec, augment, crop_stream, random_crop_3d, random_crop_resize_2d
from .errors import ConfigurationError, DataError, P3DError
from .p3d import MODEL_SHAPE, P3DConfig, pseudo3d_for_model

log = logging.getLogger(__name__)

MODALITIES = ("ct", "mri", "xray", "none")
CT_WINDOW = (-1000.0, 1000.0)


def normalize(x: np.ndarray, modality: str) -> np.ndarray:
    """Map raw intensities to [0, 1].

    CT uses a fixed [-1000, 1000] HU window; X-ray and MRI are min-max scaled
    per image; ``none`` only clips (data already normalised).
    """
    x = np.asarray(x, dtype=np.float64)
    if modality == "ct":
        lo, hi = CT_WINDOW
        return (np.clip(x, lo, hi) - lo) / (hi - lo)
    if modality in ("mri", "xray"):
        lo, hi = float(x.min()), float(x.max())
        if hi == lo:
            return np.zeros_like(x)
        return (x - lo) / (hi - lo)
    if modality == "none":
        return np.clip(x, 0.0, 1.0)
    raise ConfigurationError(f"unknown modality {modality!r}; expected one of {MODALITIES}")


@dataclass(frozen=True)
class Entry:
    path: str
    kind: str
    shape: tuple[int, ...]
    modality: str


@dataclass
class CorpusManifest:
    root: str
    entries: list[Entry] = field(default_factory=list)
    rejects: list[dict] = field(default_factory=list)

    @property
    def n2d(self) -> int:
        return sum(e.kind == "2d" for e in self.entries)

    @property
    def n3d(self) -> int:
        return sum(e.kind == "3d" for e in self.entries)

    def indices(self, kind: str) -> list[int]:
        return [i for i, e in enumerate(self.entries) if e.kind == kind]

    def resolve(self, entry: Entry) -> Path:
        return Path(self.root) / entry.path

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "counts": {"2d": self.n2d, "3d": self.n3d},
            "entries": [{**asdict(e), "shape": list(e.shape)} for e in self.entries],
            "rejects": self.rejects,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusManifest":
        entries = [Entry(e["path"], e["kind"], tuple(e["shape"]), e["modality"]) for e in d.get("entries", [])]
        return cls(root=d["root"], entries=entries, rejects=list(d.get("rejects", [])))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "CorpusManifest":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise DataError(f"cannot read manifest {path}: {exc}") from exc


def _modality_for(rel: str, kind: str, header: dict, rules: dict | None) -> str:
    for pattern, modality in (rules or {}).items():
        if fnmatch.fnmatch(rel, pattern):
            return modality
    return header.get("modality") or ("xray" if kind == "2d" else "mri")


def _probe(root: Path, rel: str, rules):
    arr, header = io.load_any(root / rel)
    if arr.ndim == 2:
        kind = "2d"
    elif arr.ndim == 3:
        kind = "3d"
    else:
        raise DataError(f"rank {arr.ndim} tensor is neither an image nor a volume")
    modality = _modality_for(rel, kind, header, rules)
    if modality not in MODALITIES:
        raise DataError(f"unknown modality {modality!r}")
    return Entry(rel, kind, tuple(int(n) for n in arr.shape), modality)


def scan_corpus(root, rules: dict | None = None, threads: int = 1) -> CorpusManifest:
    """Index every PGM/PNG image and raw+header tensor below ``root``.

    ``rules`` maps glob patterns (relative paths) to a modality. Unreadable
    files are collected in ``manifest.rejects`` instead of aborting the scan.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"corpus root {root} is not a readable directory")
    candidates = []
    for dirpath, _dirs, files in os.walk(root):
        for name in files:
            p = Path(dirpath) / name
            if p.suffix.lower() in io.IMAGE_SUFFIXES or p.suffix == ".json":
                candidates.append(p.relative_to(root).as_posix())
    candidates.sort()

    def probe(rel):
        try:
            return _probe(root, rel, rules), None
        except P3DError as exc:
            return None, {"path": rel, "reason": str(exc)}

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(probe, candidates))
    manifest = CorpusManifest(root=str(root))
    for entry, reject in results:
        if entry is not None:
            manifest.entries.append(entry)
        else:
            manifest.rejects.append(reject)
    return manifest


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int = 96
    mix_ratio: float = 0.5
    seed: int = 0
    epoch_length: int = 1

    def __post_init__(self):
        if self.batch_size < 1 or self.epoch_length < 1:
            raise ConfigurationError("batch_size and epoch_length must be >= 1")
        if not 0.0 <= self.mix_ratio <= 1.0:
            raise ConfigurationError(f"mix_ratio must be in [0, 1], got {self.mix_ratio}")

    @property
    def total(self) -> int:
        return self.batch_size * self.epoch_length

    def counts(self) -> tuple[int, int]:
        """(2D samples, 3D samples) per epoch; half-way cases round up."""
        n2d = int(np.floor(self.mix_ratio * self.total + 0.5))
        return n2d, self.total - n2d


@dataclass(frozen=True)
class SampleDescriptor:
    entry: int
    item_index: int
    kind: str
    resampled: bool = False


def _draw(indices: list[int], n: int, rng) -> tuple[list[int], list[bool]]:
    """Take ``n`` entries: a fresh permutation per pass, repeats flagged after the first pass."""
    picks, repeat = [], []
    pass_no = 0
    while len(picks) < n:
        perm = rng.permutation(len(indices))
        take = perm[: n - len(picks)]
        picks.extend(indices[i] for i in take)
        repeat.extend([pass_no > 0] * len(take))
        pass_no += 1
    return picks, repeat


def plan_epoch(manifest: CorpusManifest, plan: BatchPlan, epoch: int = 0) -> list[SampleDescriptor]:
    """Deterministic shuffled schedule of ``plan.total`` samples for one epoch."""
    n2d, n3d = plan.counts()
    idx2d, idx3d = manifest.indices("2d"), manifest.indices("3d")
    if n2d and not idx2d:
        raise ConfigurationError(f"plan needs {n2d} 2D samples but the corpus has no 2D entries")
    if n3d and not idx3d:
        raise ConfigurationError(f"plan needs {n3d} 3D samples but the corpus has no 3D entries")
    rng = np.random.default_rng(np.random.SeedSequence([int(plan.seed), int(epoch), 0x5C4ED]))
    picks2d, rep2d = _draw(idx2d, n2d, rng) if n2d else ([], [])
    picks3d, rep3d = _draw(idx3d, n3d, rng) if n3d else ([], [])
    if any(rep2d) or any(rep3d):
        log.info("epoch %d samples with replacement (2D repeats %d, 3D repeats %d)", epoch, sum(rep2d), sum(rep3d))
    kinds = rng.permutation(np.array(["2d"] * n2d + ["3d"] * n3d))
    it2d, it3d = iter(zip(picks2d, rep2d)), iter(zip(picks3d, rep3d))
    base = epoch * plan.total
    schedule = []
    for pos, kind in enumerate(kinds):
        entry, rep = next(it2d if kind == "2d" else it3d)
        schedule.append(SampleDescriptor(entry=entry, item_index=base + pos, kind=str(kind), resampled=rep))
    return schedule


def schedule_counts(schedule: list[SampleDescriptor]) -> dict:
    return {
        "2d": sum(d.kind == "2d" for d in schedule),
        "3d": sum(d.kind == "3d" for d in schedule),
        "resampled": sum(d.resampled for d in schedule),
    }


def load_entry(manifest: CorpusManifest, entry: Entry) -> np.ndarray:
    arr, _ = io.load_any(manifest.resolve(entry))
    if arr.shape != entry.shape:
        raise DataError(f"{entry.path}: shape {arr.shape} differs from manifest {entry.shape}")
    return normalize(arr, entry.modality)


def materialize(
    descriptor: SampleDescriptor,
    manifest: CorpusManifest,
    aug: AugmentSpec,
    p3d: P3DConfig = P3DConfig(),
    seed: int = 0,
    model_shape: Sequence[int] = MODEL_SHAPE,
) -> tuple[np.ndarray, np.ndarray]:
    """Load one scheduled sample and return its two augmented views.

    ``seed`` is the batch plan seed; together with the descriptor's
    ``item_index`` and the view number it determines all randomness.
    """
    if not 0 <= descriptor.entry < len(manifest.entries):
        raise DataError(f"descriptor entry {descriptor.entry} outside manifest of {len(manifest.entries)}")
    entry = manifest.entries[descriptor.entry]
    data = load_entry(manifest, entry)
    rng = crop_stream(aug.seed, descriptor.item_index, salt=seed)
    if entry.kind == "3d":
        base = random_crop_3d(data, rng, aug.crop_sizes, model_shape)
    else:
        image = random_crop_resize_2d(data, rng, aug.crop_fraction)
        base = pseudo3d_for_model(image, p3d, model_shape)
    return tuple(augment(base, aug, descriptor.item_index, view=v, salt=seed) for v in (0, 1))


def iter_batches(
    schedule: list[SampleDescriptor],
    manifest: CorpusManifest,
    aug: AugmentSpec,
    p3d: P3DConfig,
    plan: BatchPlan,
    threads: int = 1,
) -> Iterator[tuple[list[SampleDescriptor], np.ndarray, np.ndarray, list[dict]]]:
    """Materialise the schedule in order, ``plan.batch_size`` samples at a time.

    Samples that fail to load are skipped and reported; batch order always
    follows schedule order even when ``threads > 1``.
    """

    def work(desc):
        try:
            return materialize(desc, manifest, aug, p3d, seed=plan.seed), None
        except P3DError as exc:
            log.warning("rejecting sample %d (%s): %s", desc.item_index, manifest.entries[desc.entry].path, exc)
            return None, {"item_index": desc.item_index, "entry": desc.entry, "reason": str(exc)}

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for start in range(0, len(schedule), plan.batch_size):
            chunk = schedule[start : start + plan.batch_size]
            results = list(pool.map(work, chunk))
            kept = [d for d, (views, _) in zip(chunk, results) if views is not None]
            rejects = [r for _, r in results if r is not None]
            v0 = np.stack([views[0] for views, _ in results if views is not None]) if kept else None
            v1 = np.stack([views[1] for views, _ in results if views is not None]) if kept else None
            yield kept, v0, v1, rejects


def write_batches(
    manifest: CorpusManifest,
    plan: BatchPlan,
    aug: AugmentSpec,
    p3d: P3DConfig,
    out_dir,
    epoch: int = 0,
    threads: int = 1,
    dtype=np.float32,
) -> dict:
    """Write every batch of one epoch as raw+header tensors plus ``schedule.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    schedule = plan_epoch(manifest, plan, epoch)
    audit = {
        "plan": asdict(plan),
        "epoch": epoch,
        "augment": aug.to_dict(),
        "p3d": asdict(p3d),
        "counts": schedule_counts(schedule),
        "batches": [],
        "rejects": [],
    }
    for b, (kept, v0, v1, rejects) in enumerate(iter_batches(schedule, manifest, aug, p3d, plan, threads)):
        record = {"index": b, "samples": [asdict(d) for d in kept], "files": []}
        if kept:
            for view, arr in ((0, v0), (1, v1)):
                name = f"batch_{b:05d}_view{view}"
                io.save_tensor(out_dir / name, arr.astype(dtype))
                record["files"].append(name)
        audit["batches"].append(record)
        audit["rejects"].extend(rejects)
    (out_dir / "schedule.json").write_text(json.dumps(audit, sort_keys=True, indent=2) + "\n")
    return audit
