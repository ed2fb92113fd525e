"""Network hyper-parameters."""
from __future__ import annotations

import math
from enum import Enum
from typing import Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from selfstereo.errors import ShapeError

STAGE_STRIDES: Tuple[int, ...] = (8, 4, 2)
PYRAMID_STRIDES: Tuple[int, ...] = (2, 4, 8)


class FeatureStreams(str, Enum):
    FPN = "fpn"
    VIT = "vit"
    BOTH = "both"


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    in_channels: int = Field(3, ge=1)
    d_max: int = Field(32, ge=2)
    encoder_channels: Tuple[int, int, int, int] = (16, 24, 32, 48)
    fpn_width: int = Field(32, ge=1)
    decoder_width: int = Field(32, ge=1)
    # output channels of the fused pyramid at strides 2, 4, 8
    feature_channels: Tuple[int, int, int] = (16, 32, 32)
    groups: int = Field(8, ge=1)
    patch: int = Field(8, ge=1)
    vit_width: int = Field(64, ge=1)
    vit_heads: int = Field(4, ge=1)
    vit_depth: int = Field(4, ge=1)
    vit_mlp_ratio: int = Field(2, ge=1)
    pos_grid: Tuple[int, int] = (8, 16)
    aggregation_channels: Tuple[int, ...] = (8, 8, 4)
    stages: int = Field(2, ge=1, le=3)
    cascade_radius: int = Field(4, ge=1)
    feature_streams: FeatureStreams = FeatureStreams.BOTH
    mla: bool = True
    # constant layer modulation instead of a learned weight per MLA block
    mla_beta: Optional[float] = None

    @model_validator(mode="after")
    def _check(self) -> "ModelConfig":
        for stride, channels in self.channels_by_stride().items():
            if channels % self.groups:
                raise ValueError(
                    f"feature channels {channels} at stride {stride} not divisible by {self.groups} groups"
                )
        if self.vit_width % self.vit_heads:
            raise ValueError(f"vit_width {self.vit_width} not divisible by {self.vit_heads} heads")
        if self.patch != 8:
            raise ValueError("the token grid is fused at stride 8; patch must be 8")
        return self

    @property
    def uses_fpn(self) -> bool:
        return self.feature_streams is not FeatureStreams.VIT

    @property
    def uses_vit(self) -> bool:
        return self.feature_streams is not FeatureStreams.FPN

    @property
    def uses_mla(self) -> bool:
        return self.uses_vit and self.mla

    def fusion_channels(self) -> int:
        """Channels entering each fusion lateral: pyramid features plus token features."""
        return (self.fpn_width if self.uses_fpn else 0) + (self.vit_width if self.uses_vit else 0)

    def channels_by_stride(self) -> Dict[int, int]:
        return dict(zip(PYRAMID_STRIDES, self.feature_channels))

    def stage_strides(self) -> Tuple[int, ...]:
        return STAGE_STRIDES[: self.stages]

    def stage_range(self, stride: int) -> int:
        """Number of disparity steps covering ``[0, d_max)`` at ``stride``."""
        return int(math.ceil(self.d_max / stride))

    def volume_channels(self, stride: int) -> int:
        return 2 * self.channels_by_stride()[stride] + self.groups

    def check_image(self, height: int, width: int) -> None:
        if height % 16 or width % 16:
            raise ShapeError(f"image size {height}x{width} must be divisible by 16")
        if self.d_max > width:
            raise ShapeError(f"d_max {self.d_max} exceeds image width {width}")
