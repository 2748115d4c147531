"""Static report figures written to image files (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .forest import Forest
from .mask import FeatureMask
from .pipeline import CurvePoint
from .raster import GrayImage
from .salience import SalienceMap
from .theory import GammaSamples


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=110, bbox_inches="tight")
    return path


def learning_curve_figure(points: Sequence[CurvePoint], path) -> Path:
    """Per-repeat errors as faint dots and the median error per size as a line."""
    sizes = np.array(sorted({p.size for p in points}))
    med = [np.median([p.error for p in points if p.size == s]) for s in sizes]
    fig = Figure(figsize=(5, 3.5))
    ax = fig.add_subplot()
    ax.scatter([p.size for p in points], [p.error for p in points], s=8, alpha=0.3, color="gray")
    ax.plot(sizes, med, marker="o", color="C0", label="median")
    ax.set_xlabel("training set size")
    ax.set_ylabel("test error")
    ax.set_ylim(bottom=0)
    ax.legend(frameon=False)
    return _save(fig, path)


def gamma_histogram(samples: GammaSamples, path) -> Path:
    fig = Figure(figsize=(5, 3.5))
    ax = fig.add_subplot()
    ax.hist(samples.samples, bins=30, color="C0", alpha=0.8)
    ax.axvline(1.0 / samples.parts, color="k", ls="--", lw=1, label=f"1/J = {1 / samples.parts:.3g}")
    ax.set_xlabel("ratio of separation")
    ax.set_ylabel("splits")
    ax.legend(frameon=False)
    return _save(fig, path)


def importance_matrix(forest: Forest, mask: FeatureMask, path, k: int | None = None) -> Path:
    """Gini importance laid out on the (a, b) level grid; unmasked cells blank."""
    g = mask.levels
    grid = np.full((g, g), np.nan)
    rows, cols = mask.index_arrays()
    grid[rows, cols] = forest.importances
    fig = Figure(figsize=(4.5, 4))
    ax = fig.add_subplot()
    im = ax.imshow(grid, origin="upper", extent=(0.5, g + 0.5, g + 0.5, 0.5), cmap="viridis")
    if k:
        top = np.argsort(-forest.importances, kind="stable")[:k]
        ax.scatter(cols[top] + 1, rows[top] + 1, s=10, facecolors="none", edgecolors="r", lw=0.8)
    ax.set_xlabel("level b")
    ax.set_ylabel("level a")
    ax.set_title(mask.relationship.name)
    fig.colorbar(im, ax=ax, shrink=0.8)
    return _save(fig, path)


def salience_figure(image: GrayImage, smap: SalienceMap, path) -> Path:
    """Image and flagged pixels side by side."""
    fig = Figure(figsize=(7, 3.5))
    a, b = fig.subplots(1, 2)
    a.imshow(image.pixels, cmap="gray", vmin=0, vmax=255)
    a.set_title("image")
    rgb = np.repeat(image.pixels[..., None], 3, axis=2).astype(np.float64) / 255.0
    rgb[smap.flags] = (1.0, 0.1, 0.1)
    b.imshow(rgb)
    b.set_title(f"{smap.count} flagged pixels")
    for ax in (a, b):
        ax.set_axis_off()
    return _save(fig, path)
