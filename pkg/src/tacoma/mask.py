"""Feature masks built from representative image patches.

Each patch contributes the GLCM entries whose counts exceed the patch's
median entry; the mask is the union over patches and is shared by every
training and scoring image.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .glcm import Glcm, SpatialRelationship, compute_glcm
from .raster import QuantizedImage

MASK_FORMAT = "tacoma-mask-v1"


@dataclass(frozen=True)
class FeatureMask:
    levels: int
    relationship: SpatialRelationship
    indices: tuple[tuple[int, int], ...]  # 1-based (a, b), row-major sorted
    patch_count: int = 1
    _arrays: tuple = field(default=None, repr=False, compare=False)
    _identity: str = field(default="", repr=False, compare=False)

    def __post_init__(self):
        idx = tuple(sorted({(int(a), int(b)) for a, b in self.indices}))
        for a, b in idx:
            if not (1 <= a <= self.levels and 1 <= b <= self.levels):
                raise ValueError(f"mask index ({a}, {b}) outside [1, {self.levels}]^2")
        object.__setattr__(self, "indices", idx)
        rows = np.fromiter((a - 1 for a, _ in idx), dtype=np.intp, count=len(idx))
        cols = np.fromiter((b - 1 for _, b in idx), dtype=np.intp, count=len(idx))
        object.__setattr__(self, "_arrays", (rows, cols))
        digest = hashlib.sha256(self.to_json().encode()).hexdigest()[:12]
        object.__setattr__(self, "_identity", digest)

    def __len__(self):
        return len(self.indices)

    def index_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """0-based (row, col) arrays in feature order."""
        return self._arrays

    def to_dict(self) -> dict:
        return {
            "format": MASK_FORMAT,
            "levels": self.levels,
            "relationship": self.relationship.name,
            "patch_count": self.patch_count,
            "indices": [list(ab) for ab in self.indices],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":")) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureMask":
        if doc.get("format", MASK_FORMAT) != MASK_FORMAT:
            raise ValueError(f"unsupported mask format {doc.get('format')!r}")
        return cls(
            levels=int(doc["levels"]),
            relationship=SpatialRelationship.parse(doc["relationship"]),
            indices=tuple(tuple(ab) for ab in doc["indices"]),
            patch_count=int(doc["patch_count"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "FeatureMask":
        return cls.from_dict(json.loads(text))

    def identity(self) -> str:
        return self._identity


def full_mask(levels: int, rel: SpatialRelationship) -> FeatureMask:
    """Identity mask keeping every one of the levels**2 entries."""
    pairs = tuple((a, b) for a in range(1, levels + 1) for b in range(1, levels + 1))
    return FeatureMask(levels, rel, pairs)


def entry_median(glcm: Glcm | np.ndarray) -> float:
    """Lower median over all entries, zeros included."""
    counts = glcm.counts if isinstance(glcm, Glcm) else np.asarray(glcm)
    flat = np.sort(counts, axis=None)
    if flat.size == 0:
        raise ValueError("empty matrix")
    return float(flat[(flat.size - 1) // 2])


def patch_index_set(patch_glcm: Glcm | np.ndarray) -> set[tuple[int, int]]:
    counts = patch_glcm.counts if isinstance(patch_glcm, Glcm) else np.asarray(patch_glcm)
    tau = entry_median(counts)
    rows, cols = np.nonzero(counts > tau)
    return {(int(a) + 1, int(b) + 1) for a, b in zip(rows, cols)}


def build_mask(patches: Sequence[QuantizedImage], rel: SpatialRelationship) -> FeatureMask:
    if len(patches) == 0:
        raise ValueError("at least one patch is required")
    levels = {p.levels for p in patches}
    if len(levels) != 1:
        raise ValueError(f"patches quantized to different level counts: {sorted(levels)}")
    (g,) = levels
    union: set[tuple[int, int]] = set()
    for patch in patches:
        union |= patch_index_set(compute_glcm(patch, rel))
    return FeatureMask(g, rel, tuple(union), patch_count=len(patches))


def union_masks(masks: Iterable[FeatureMask]) -> FeatureMask:
    masks = list(masks)
    first = masks[0]
    idx: set = set()
    for m in masks:
        if m.levels != first.levels or m.relationship != first.relationship:
            raise ValueError("can only union masks with equal levels and relationship")
        idx |= set(m.indices)
    return FeatureMask(first.levels, first.relationship, tuple(idx), sum(m.patch_count for m in masks))
