"""Quality-aware template matching.

Soft-ranking similarity scores over feature grids, best-window
localization, temperature calibration, and a small evaluation harness.
"""

from .calibration import CalibrationConfig, CalibrationResult, calibrate_alpha, simulate_discernibility
from .core import DEFAULT_ALPHA, QatmTensor, likelihoods, qatm_grad_alpha, qatm_grad_rho, quality_maps
from .features import (
    BadMagicError,
    DimensionOverflowError,
    FeatureFileError,
    FeatureMap,
    Image,
    TruncatedPayloadError,
    extract_raw_patches,
    load_feature_file,
    load_image,
    save_feature_file,
)
from .localize import MatchResult, Window, best_window, score_bupm, score_ncc, score_ssd
from .matching import METHODS, match_feature_maps, qatm_quality_maps
from .tensor_ops import cosine_similarity_tensor, grouped_max, grouped_softmax

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_ALPHA",
    "METHODS",
    "BadMagicError",
    "CalibrationConfig",
    "CalibrationResult",
    "DimensionOverflowError",
    "FeatureFileError",
    "FeatureMap",
    "Image",
    "MatchResult",
    "QatmTensor",
    "TruncatedPayloadError",
    "Window",
    "best_window",
    "calibrate_alpha",
    "cosine_similarity_tensor",
    "extract_raw_patches",
    "grouped_max",
    "grouped_softmax",
    "likelihoods",
    "load_feature_file",
    "load_image",
    "match_feature_maps",
    "qatm_grad_alpha",
    "qatm_grad_rho",
    "qatm_quality_maps",
    "quality_maps",
    "save_feature_file",
    "score_bupm",
    "score_ncc",
    "score_ssd",
    "simulate_discernibility",
    "__version__",
]
