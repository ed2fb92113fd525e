"""Synthetic stereo data, augmentation and file formats."""
from selfstereo.data.augment import AugmentationConfig, AugmentationStrategy, apply_augmentation, curriculum_ratio
from selfstereo.data.manifest import DatasetManifest, build_manifest, dump_sample, read_manifest, write_manifest
from selfstereo.data.pfm import read_pfm, write_pfm, write_pgm16
from selfstereo.data.synth import StereoSample, generate_sample

__all__ = [
    "AugmentationConfig",
    "AugmentationStrategy",
    "DatasetManifest",
    "StereoSample",
    "apply_augmentation",
    "build_manifest",
    "curriculum_ratio",
    "dump_sample",
    "generate_sample",
    "read_manifest",
    "read_pfm",
    "write_manifest",
    "write_pfm",
    "write_pgm16",
]
