"""Stereo network: feature streams, cost volumes and disparity regression."""
from selfstereo.model.config import FeatureStreams, ModelConfig
from selfstereo.model.cost_volume import (
    CostVolume,
    DisparityMap,
    ProbabilityVolume,
    aggregate_cost,
    build_cost_volume,
    regress_disparity,
    wta_disparity,
)
from selfstereo.model.fpn import FeaturePyramid, fpn_forward
from selfstereo.model.fusion import fuse_and_decode
from selfstereo.model.network import NetworkOutput, StereoNetwork, cascade_forward
from selfstereo.model.params import PARAM_LAYOUT_VERSION, ModelParams, constant_view, param_layout
from selfstereo.model.vit import mla_stack, toy_vit_forward

__all__ = [
    "PARAM_LAYOUT_VERSION",
    "CostVolume",
    "DisparityMap",
    "FeaturePyramid",
    "FeatureStreams",
    "ModelConfig",
    "ModelParams",
    "NetworkOutput",
    "ProbabilityVolume",
    "StereoNetwork",
    "aggregate_cost",
    "build_cost_volume",
    "cascade_forward",
    "constant_view",
    "fpn_forward",
    "fuse_and_decode",
    "mla_stack",
    "param_layout",
    "regress_disparity",
    "toy_vit_forward",
    "wta_disparity",
]
