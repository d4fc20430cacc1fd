"""Shortcut-removing stereo augmentations and colour-hint diagnostics."""

__version__ = "0.1.0"

from .core import DisparityMap, Histogram, StereoSample, bilinear_sample, to_grayscale
from .augment import (AugmentConfig, ChromaticParams, PatchSpec, apply_chromatic, asymmetric_chromatic_augment,
                      asymmetric_random_patching, build_training_sample, normalize_image, synchronized_random_crop)
from .analyze import color_discrepancy_map, dataset_report, discrepancy_report
from .metrics import EvalResult, d1_rate, epe_map
from .matcher import MatchConfig, census_match, sad_match, shortcut_susceptibility_experiment
from .datagen import Layer, SceneSpec, generate, generate_manifest_set

__all__ = [
    "AugmentConfig", "ChromaticParams", "DisparityMap", "EvalResult", "Histogram", "Layer", "MatchConfig",
    "PatchSpec", "SceneSpec", "StereoSample", "apply_chromatic", "asymmetric_chromatic_augment",
    "asymmetric_random_patching", "bilinear_sample", "build_training_sample", "census_match",
    "color_discrepancy_map", "d1_rate", "dataset_report", "discrepancy_report", "epe_map", "generate",
    "generate_manifest_set", "normalize_image", "sad_match", "shortcut_susceptibility_experiment",
    "synchronized_random_crop", "to_grayscale",
]
