"""End-to-end helpers: corpus feature extraction, learning curves and
paired supervised / semi-supervised experiments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cotrain import FeatureSplit, cotrain, sample_labeled, self_train
from .forest import Dataset, ForestParams, train_forest
from .glcm import SpatialRelationship, extract_features
from .mask import FeatureMask, build_mask
from .raster import GrayImage, quantize


def masks_from_patches(
    patches: Sequence[GrayImage], rels: Sequence[SpatialRelationship], levels: int
) -> list[FeatureMask]:
    q = [quantize(p, levels) for p in patches]
    return [build_mask(q, r) for r in rels]


def feature_blocks(masks: Sequence[FeatureMask]) -> list[tuple[int, int]]:
    bounds = np.cumsum([0] + [len(m) for m in masks])
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def corpus_features(
    images: Sequence[GrayImage],
    rels: Sequence[SpatialRelationship],
    masks: Sequence[FeatureMask],
    levels: int,
    normalize: bool = False,
) -> np.ndarray:
    for m in masks:
        if m.levels != levels:
            raise ValueError(f"mask built for {m.levels} levels, extraction uses {levels}")
    rows = [extract_features(quantize(img, levels), rels, masks, normalize) for img in images]
    return np.vstack(rows).astype(np.float64)


def train_test_split(n: int, test_fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    perm = rng.permutation(n)
    n_test = int(round(test_fraction * n))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


@dataclass
class CurvePoint:
    size: int
    repeat: int
    error: float


def learning_curve(
    data: Dataset,
    sizes: Sequence[int],
    repeats: int,
    params: ForestParams,
    seed: int,
    test_fraction: float = 0.2,
) -> list[CurvePoint]:
    """Test error of forests trained on growing subsets of an 80/20 split.

    Each repeat draws one split; every size is a class-covering subsample
    of that repeat's training part, so sizes are compared on equal terms.
    """
    points = []
    for r in range(repeats):
        rng = np.random.default_rng(np.random.SeedSequence([seed, r]))
        train, test = train_test_split(data.n, test_fraction, rng)
        test_set = data.subset(test)
        for size in sizes:
            if size > train.size:
                raise ValueError(f"training size {size} exceeds the {train.size} available rows")
            rows = train[sample_labeled(data.labels[train], size, rng)]
            fp = ForestParams(params.n_trees, params.mtry, int(rng.integers(2**31)))
            forest = train_forest(data.subset(rows), fp)
            err = float(np.mean(forest.predict(test_set.features) != test_set.labels))
            points.append(CurvePoint(int(size), r, err))
    return points


def median_errors(points: Sequence[CurvePoint]) -> dict[int, float]:
    sizes = sorted({p.size for p in points})
    return {s: float(np.median([p.error for p in points if p.size == s])) for s in sizes}


@dataclass
class PairedRun:
    supervised_error: float
    semi_error: float
    rounds: int


def paired_semi_supervised(
    data: Dataset,
    n_labeled: int,
    seed: int,
    params: ForestParams,
    split: FeatureSplit | None = None,
    m1: int = 2,
    m2: int = 2,
) -> PairedRun:
    """Supervised-on-n_labeled versus co-training (or self-training when ``split`` is None).

    Both learners use forests with the same ``params``.

    The remaining rows form the unlabeled pool; both errors are measured on
    that pool against its hidden labels.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    lab = sample_labeled(data.labels, n_labeled, rng)
    # pool order feeds margin tie-breaking, so it must not follow the class order
    unl = rng.permutation(np.setdiff1d(np.arange(data.n), lab))
    L0 = data.subset(lab)
    truth = data.labels[unl]
    U0 = data.features[unl]
    # the supervised baseline sees every feature, not just one view
    sup_params = ForestParams(params.n_trees, params.mtry, int(np.random.SeedSequence([seed, 1]).generate_state(1)[0]))
    sup = train_forest(L0, sup_params)
    sup_err = float(np.mean(sup.predict(U0) != truth))
    if split is None:
        res = self_train(L0, U0, params, m=m1 + m2, seed=seed)
    else:
        res = cotrain(L0, U0, split, params, m1, m2, seed=seed)
    return PairedRun(sup_err, res.error(truth), len(res.log))
