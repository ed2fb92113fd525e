"""Convolutional pyramid stream."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping

from selfstereo.autodiff import nn, ops
from selfstereo.autodiff.tensor import Tensor
from selfstereo.errors import ShapeError
from selfstereo.model.config import PYRAMID_STRIDES

Params = Mapping[str, Tensor]


@dataclass
class FeaturePyramid:
    levels: Dict[int, Tensor]

    def __getitem__(self, stride: int) -> Tensor:
        return self.levels[stride]

    def strides(self) -> list[int]:
        return sorted(self.levels)

    def channels(self) -> Dict[int, int]:
        return {s: t.shape[0] for s, t in self.levels.items()}


def conv_block(x: Tensor, params: Params, name: str, pad: int = 1) -> Tensor:
    return nn.conv2d(x, params[f"{name}.weight"], params[f"{name}.bias"], pad=pad)


def upsample2(x: Tensor) -> Tensor:
    return nn.bilinear_resize(x, x.shape[-2] * 2, x.shape[-1] * 2)


def fpn_forward(image: Tensor, params: Params) -> FeaturePyramid:
    """Encoder to stride 16 with a top-down pass emitting strides 2, 4 and 8."""
    _, h, w = image.shape
    if h % 16 or w % 16:
        raise ShapeError(f"fpn_forward: image size {h}x{w} must be divisible by 16")

    encoded = []
    x = image
    for i in range(1, 5):
        x = nn.avg_pool2d(ops.leaky_relu(conv_block(x, params, f"fpn.enc{i}")), 2)
        encoded.append(x)

    top = conv_block(encoded[3], params, "fpn.lat4", pad=0)
    merged: Dict[int, Tensor] = {}
    for i, stride in zip((3, 2, 1), (8, 4, 2)):
        top = conv_block(encoded[i - 1], params, f"fpn.lat{i}", pad=0) + upsample2(top)
        merged[stride] = top

    return FeaturePyramid(
        {s: ops.leaky_relu(conv_block(merged[s], params, f"fpn.out{s}")) for s in PYRAMID_STRIDES}
    )
