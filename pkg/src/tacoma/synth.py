"""Seeded synthetic textured-image corpus with ground-truth blob masks.

Class 0 images are pure background noise. Higher classes carry more and
darker filled discs ("stained nuclei"), so dark-dark co-occurrences carry
the class signal and the blob masks give a reference for salient pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .raster import GrayImage


@dataclass(frozen=True)
class SynthConfig:
    size: int = 128
    classes: int = 4
    per_class: tuple[int, ...] = (50, 50, 50, 50)
    # inclusive (min, max) blob counts per class
    blob_counts: tuple[tuple[int, int], ...] = ((0, 0), (3, 6), (7, 11), (12, 18))
    radius: tuple[int, int] = (3, 6)
    # mean gray value of blobs per class (lower is darker); class 0 has none
    darkness: tuple[float, ...] = (0.0, 140.0, 95.0, 50.0)
    darkness_sd: float = 8.0  # per-blob spread of the mean
    pixel_sd: float = 6.0  # within-blob pixel noise
    background: tuple[int, int] = (165, 250)  # uniform background range
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError("need at least two classes")
        for name in ("per_class", "blob_counts", "darkness"):
            if len(getattr(self, name)) != self.classes:
                raise ValueError(f"{name} needs one entry per class")
        if self.blob_counts[0] != (0, 0):
            raise ValueError("class 0 must have no blobs")
        lo, hi = self.radius
        if not 1 <= lo <= hi or 2 * hi + 1 >= self.size:
            raise ValueError("blob radius must be >= 1 and smaller than the image")
        for c in range(2, self.classes):
            if self.blob_counts[c][0] < self.blob_counts[c - 1][0] or self.darkness[c] >= self.darkness[c - 1]:
                raise ValueError("blob density and darkness must increase with class")
        if not 0 <= self.background[0] <= self.background[1] <= 255:
            raise ValueError("background range must lie in [0, 255]")

    @classmethod
    def with_per_class(cls, n: int, **kw) -> "SynthConfig":
        classes = kw.get("classes", 4)
        return cls(per_class=(n,) * classes, **kw)


@dataclass
class SynthCorpus:
    images: list[GrayImage]
    labels: np.ndarray
    blob_masks: list[np.ndarray]
    config: SynthConfig = field(repr=False)


def _image_rng(seed: int, label: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, label, index]))


def synth_image(config: SynthConfig, label: int, rng: np.random.Generator):
    """One image of class ``label``; returns (GrayImage, blob mask, blob centers)."""
    n = config.size
    lo, hi = config.background
    img = rng.integers(lo, hi + 1, size=(n, n)).astype(np.float64)
    mask = np.zeros((n, n), dtype=bool)
    kmin, kmax = config.blob_counts[label]
    count = int(rng.integers(kmin, kmax + 1))
    yy, xx = np.mgrid[0:n, 0:n]
    centers = []
    for _ in range(count):
        r = int(rng.integers(config.radius[0], config.radius[1] + 1))
        cx, cy = (int(v) for v in rng.integers(r, n - r, size=2))
        tone = rng.normal(config.darkness[label], config.darkness_sd)
        disc = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
        img[disc] = tone + rng.normal(0.0, config.pixel_sd, size=int(disc.sum()))
        mask |= disc
        centers.append((cx, cy, r))
    # keep blob pixels strictly darker than any background pixel
    img[mask] = np.minimum(img[mask], lo - 1)
    return GrayImage(np.clip(np.rint(img), 0, 255).astype(np.uint8)), mask, centers


def synth_corpus(config: SynthConfig = SynthConfig()) -> SynthCorpus:
    images, labels, masks = [], [], []
    for label, count in enumerate(config.per_class):
        for i in range(count):
            img, mask, _ = synth_image(config, label, _image_rng(config.seed, label, i))
            images.append(img)
            labels.append(label)
            masks.append(mask)
    return SynthCorpus(images, np.asarray(labels, dtype=np.int32), masks, config)


def synth_patches(config: SynthConfig = SynthConfig(), size: int = 32, per_class: int = 1) -> list[GrayImage]:
    """Representative stained patches, one per non-zero class by default.

    A patch is a small field densely packed with that class's blobs, the
    analogue of a region made up mostly of stained cells.
    """
    patches = []
    lo_r, hi_r = config.radius
    for label in range(1, config.classes):
        for i in range(per_class):
            rng = _image_rng(config.seed, label, 1_000_000 + i)
            lo, hi = config.background
            img = rng.integers(lo, hi + 1, size=(size, size)).astype(np.float64)
            yy, xx = np.mgrid[0:size, 0:size]
            covered = np.zeros((size, size), dtype=bool)
            while covered.mean() < 0.6:
                r = int(rng.integers(lo_r, hi_r + 1))
                cx, cy = (int(v) for v in rng.integers(0, size, size=2))
                disc = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
                tone = rng.normal(config.darkness[label], config.darkness_sd)
                img[disc] = tone + rng.normal(0.0, config.pixel_sd, size=int(disc.sum()))
                covered |= disc
            img[covered] = np.minimum(img[covered], lo - 1)
            patches.append(GrayImage(np.clip(np.rint(img), 0, 255).astype(np.uint8)))
    return patches
