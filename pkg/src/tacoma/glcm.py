"""Spatial relationships and directed gray-level co-occurrence matrices."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .raster import QuantizedImage

if TYPE_CHECKING:
    from .mask import FeatureMask

# (dx, dy): columns grow rightward, rows grow downward
UNIT_OFFSETS = {
    "e": (1, 0),
    "w": (-1, 0),
    "s": (0, 1),
    "n": (0, -1),
    "ne": (1, -1),
    "se": (1, 1),
    "nw": (-1, -1),
    "sw": (-1, 1),
}
OPPOSITE = {"e": "w", "w": "e", "s": "n", "n": "s", "ne": "sw", "sw": "ne", "se": "nw", "nw": "se"}
DIRECTIONS = tuple(UNIT_OFFSETS)

_REL_RE = re.compile(r"^(ne|se|nw|sw|n|s|e|w)([1-9][0-9]*)$")


@dataclass(frozen=True, order=True)
class SpatialRelationship:
    direction: str
    distance: int

    def __post_init__(self):
        if self.direction not in UNIT_OFFSETS:
            raise ValueError(f"unknown direction {self.direction!r}")
        if int(self.distance) < 1:
            raise ValueError("distance must be >= 1")

    @classmethod
    def parse(cls, text: str) -> "SpatialRelationship":
        """Parse compass notation such as ``"ne3"`` or ``"se1"``."""
        m = _REL_RE.match(text.strip().lower())
        if m is None:
            raise ValueError(f"cannot parse spatial relationship {text!r}")
        return cls(m.group(1), int(m.group(2)))

    @property
    def name(self) -> str:
        return f"{self.direction}{self.distance}"

    def opposite(self) -> "SpatialRelationship":
        return SpatialRelationship(OPPOSITE[self.direction], self.distance)

    def __str__(self):
        return self.name


def parse_relationships(text: str) -> list[SpatialRelationship]:
    return [SpatialRelationship.parse(t) for t in text.split(",") if t.strip()]


def offset_of(rel: SpatialRelationship) -> tuple[int, int]:
    ux, uy = UNIT_OFFSETS[rel.direction]
    return ux * rel.distance, uy * rel.distance


def pair_views(pixels: np.ndarray, dx: int, dy: int):
    """Source and target views covering every in-bounds pair (p, p + offset)."""
    h, w = pixels.shape
    if abs(dx) >= w or abs(dy) >= h:
        return None, None
    ys = slice(max(0, -dy), h - max(0, dy))
    xs = slice(max(0, -dx), w - max(0, dx))
    yt = slice(max(0, dy), h - max(0, -dy))
    xt = slice(max(0, dx), w - max(0, -dx))
    return pixels[ys, xs], pixels[yt, xt]


@dataclass(frozen=True, eq=False)
class Glcm:
    """Directed co-occurrence counts; ``counts[a-1, b-1]`` counts pairs (a -> b)."""

    counts: np.ndarray
    levels: int
    relationship: SpatialRelationship

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def normalized(self) -> np.ndarray:
        total = self.counts.sum()
        return self.counts / total if total else self.counts.astype(float)


def compute_glcm(image: QuantizedImage, rel: SpatialRelationship) -> Glcm:
    g = image.levels
    dx, dy = offset_of(rel)
    src, dst = pair_views(image.pixels, dx, dy)
    if src is None:
        counts = np.zeros((g, g), dtype=np.int64)
    else:
        code = (src.astype(np.int64) - 1) * g + (dst - 1)
        counts = np.bincount(code.ravel(), minlength=g * g).reshape(g, g)
    return Glcm(counts, g, rel)


def expected_pair_count(width: int, height: int, rel: SpatialRelationship) -> int:
    dx, dy = offset_of(rel)
    return max(width - abs(dx), 0) * max(height - abs(dy), 0)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    provenance: str


def apply_mask(glcm: Glcm, mask: "FeatureMask", normalize: bool = False) -> FeatureVector:
    """Keep the mask's entries, in row-major (a, b) order."""
    if mask.levels != glcm.levels:
        raise ValueError(f"mask has {mask.levels} levels, GLCM has {glcm.levels}")
    source = glcm.normalized() if normalize else glcm.counts
    rows, cols = mask.index_arrays()
    return FeatureVector(source[rows, cols], f"{mask.identity()}@{glcm.relationship.name}")


def extract_features(
    image: QuantizedImage,
    rels: Sequence[SpatialRelationship],
    masks: Sequence["FeatureMask"],
    normalize: bool = False,
) -> np.ndarray:
    """Concatenate masked GLCM features over ``rels`` (one mask per relationship)."""
    if len(rels) != len(masks):
        raise ValueError("need one mask per relationship")
    parts = [apply_mask(compute_glcm(image, r), m, normalize).values for r, m in zip(rels, masks)]
    return np.concatenate(parts) if parts else np.zeros(0)
