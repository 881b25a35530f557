"""Figures written next to the JSON reports. Uses the non-interactive Agg backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# Fixed metadata keeps repeated renders byte-identical.
_PNG_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def plot_benchmark(report: dict, path) -> None:
    """Grouped bar chart of median wall time per case and op (log scale)."""
    entries = report["entries"]
    labels = [e["label"] for e in entries]
    ops = sorted({op for e in entries for op in e["timings"]})
    width = 0.8 / max(1, len(ops))
    fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * len(entries) + 2), 3.6))
    x = np.arange(len(entries))
    for i, op in enumerate(ops):
        med = [e["timings"].get(op, {}).get("median_s", np.nan) for e in entries]
        ax.bar(x + (i - (len(ops) - 1) / 2) * width, med, width, label=op)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_yscale("log")
    ax.set_ylabel("median wall time [s]")
    ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    _save(fig, path)


def plot_slices(vol: np.ndarray, path, max_slices: int = 9, title: str | None = None) -> None:
    """Montage of evenly spaced depth slices of an ``H x W x D`` volume."""
    vol = np.asarray(vol)
    depth = vol.shape[2]
    picks = np.unique(np.linspace(0, depth - 1, min(depth, max_slices)).round().astype(int))
    cols = int(np.ceil(np.sqrt(len(picks))))
    rows = int(np.ceil(len(picks) / cols))
    fig, axes = plt.subplots(rows, cols, figsize=(2.0 * cols, 2.0 * rows), squeeze=False)
    lo, hi = float(vol.min()), float(vol.max())
    for ax in axes.flat:
        ax.axis("off")
    for ax, d in zip(axes.flat, picks):
        ax.imshow(vol[:, :, d], cmap="gray", vmin=lo, vmax=hi, interpolation="nearest")
        ax.set_title(f"depth {d}", fontsize=8)
    if title:
        fig.suptitle(title, fontsize=9)
    fig.tight_layout()
    _save(fig, path)
