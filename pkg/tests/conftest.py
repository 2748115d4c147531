import numpy as np
import pytest

from tacoma.forest import Dataset
from tacoma.glcm import SpatialRelationship
from tacoma.pipeline import corpus_features, feature_blocks, masks_from_patches
from tacoma.raster import GrayImage, QuantizedImage
from tacoma.synth import SynthConfig, synth_corpus, synth_patches

LEVELS = 51


@pytest.fixture
def hand_image():
    """3x3 image with rows [1,2,3 / 2,3,3 / 3,1,2] over 3 levels."""
    return QuantizedImage(np.array([[1, 2, 3], [2, 3, 3], [3, 1, 2]]), 3)


@pytest.fixture(scope="session")
def small_corpus():
    cfg = SynthConfig.with_per_class(12, size=64)
    return synth_corpus(cfg), synth_patches(cfg)


@pytest.fixture(scope="session")
def corpus_two_views():
    """Default corpus as features over (NE,3) and (SE,1)."""
    cfg = SynthConfig()
    corpus = synth_corpus(cfg)
    rels = [SpatialRelationship("ne", 3), SpatialRelationship("se", 1)]
    masks = masks_from_patches(synth_patches(cfg), rels, LEVELS)
    X = corpus_features(corpus.images, rels, masks, LEVELS)
    return corpus, rels, masks, Dataset(X, corpus.labels, cfg.classes), feature_blocks(masks)


def random_gray(rng, h, w):
    return GrayImage(rng.integers(0, 256, size=(h, w)))
