"""Texture-based image scoring with GLCM features and random forests.

The modules follow the pipeline: ``raster`` (PGM images, quantization),
``glcm`` (co-occurrence matrices), ``mask`` (patch-driven feature masks),
``forest`` (random forests), ``salience`` (salient pixels), ``cotrain``
(semi-supervised learning), ``theory`` (separation of Gaussian mixtures)
and ``synth`` (a synthetic corpus with ground truth).
"""

from .forest import Dataset, Forest, ForestParams, train_forest
from .glcm import SpatialRelationship, compute_glcm, extract_features
from .mask import FeatureMask, build_mask
from .raster import GrayImage, load_pgm, quantize, read_pgm, save_pgm, write_pgm

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "FeatureMask",
    "Forest",
    "ForestParams",
    "GrayImage",
    "SpatialRelationship",
    "build_mask",
    "compute_glcm",
    "extract_features",
    "load_pgm",
    "quantize",
    "read_pgm",
    "save_pgm",
    "train_forest",
    "write_pgm",
]
