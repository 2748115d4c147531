"""Back-projection of important GLCM entries onto the pixels that realize them."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .forest import Forest, importance_ranking
from .glcm import SpatialRelationship, pair_views, offset_of
from .mask import FeatureMask
from .raster import GrayImage, QuantizedImage

log = logging.getLogger(__name__)

DEFAULT_TOP_K = 20


@dataclass(frozen=True, eq=False)
class SalienceMap:
    flags: np.ndarray  # (height, width) bool
    source_features: tuple[tuple[int, int], ...]

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    def positions(self) -> list[tuple[int, int]]:
        """Flagged (x, y) positions, 0-based, sorted by x then y."""
        ys, xs = np.nonzero(self.flags)
        order = np.lexsort((ys, xs))
        return [(int(xs[i]), int(ys[i])) for i in order]

    def to_text(self) -> str:
        return "".join(f"{x} {y}\n" for x, y in self.positions())

    def __eq__(self, other):
        return isinstance(other, SalienceMap) and np.array_equal(self.flags, other.flags)


def salient_pixels(
    image: QuantizedImage, rel: SpatialRelationship, features: Iterable[tuple[int, int]]
) -> SalienceMap:
    """Flag both endpoints of every pair (p, p + offset) whose levels match a listed (a, b)."""
    features = tuple((int(a), int(b)) for a, b in features)
    g = image.levels
    for a, b in features:
        if not (1 <= a <= g and 1 <= b <= g):
            raise ValueError(f"feature ({a}, {b}) outside [1, {g}]^2")
    h, w = image.pixels.shape
    flags = np.zeros((h, w), dtype=bool)
    dx, dy = offset_of(rel)
    src, dst = pair_views(image.pixels, dx, dy)
    if src is None or not features:
        return SalienceMap(flags, features)
    wanted = np.zeros(g * g, dtype=bool)
    wanted[[(a - 1) * g + (b - 1) for a, b in features]] = True
    hit = wanted[(src.astype(np.int64) - 1) * g + (dst - 1)]
    # the same slicing that produced src/dst places hits back onto the raster
    fs, ft = pair_views(flags, dx, dy)
    fs |= hit
    ft |= hit
    return SalienceMap(flags, features)


def top_features(forest: Forest, mask: FeatureMask, k: int = DEFAULT_TOP_K) -> list[tuple[int, int]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    if forest.n_features != len(mask):
        raise ValueError(f"forest uses {forest.n_features} features but the mask has {len(mask)}")
    if k > len(mask):
        log.warning("k=%d exceeds mask size %d; using all mask entries", k, len(mask))
        k = len(mask)
    ranked = importance_ranking(forest)[:k]
    return [mask.indices[i] for i, _ in ranked]


def top_salient(
    image: QuantizedImage, rel: SpatialRelationship, forest: Forest, mask: FeatureMask, k: int = DEFAULT_TOP_K
) -> SalienceMap:
    return salient_pixels(image, rel, top_features(forest, mask, k))


def render_overlay(image: GrayImage, smap: SalienceMap) -> GrayImage:
    """Copy of the image with flagged pixels painted white."""
    if image.pixels.shape != smap.flags.shape:
        raise ValueError("salience map and image dimensions differ")
    out = image.pixels.copy()
    out[smap.flags] = 255
    return GrayImage(out)


def precision(smap: SalienceMap, truth: np.ndarray) -> float:
    """Share of flagged pixels that fall inside a ground-truth mask."""
    n = smap.count
    return float((smap.flags & truth).sum() / n) if n else float("nan")


def union(maps: Sequence[SalienceMap]) -> SalienceMap:
    flags = np.zeros_like(maps[0].flags)
    feats: list = []
    for m in maps:
        flags |= m.flags
        feats.extend(m.source_features)
    return SalienceMap(flags, tuple(dict.fromkeys(feats)))
