"""Fuse aggregated tokens into the convolutional pyramid and decode it."""
from __future__ import annotations

from typing import Dict, List, Mapping, Optional

from selfstereo.autodiff import nn, ops
from selfstereo.autodiff.tensor import Tensor
from selfstereo.errors import ShapeError
from selfstereo.model.config import ModelConfig
from selfstereo.model.fpn import FeaturePyramid, conv_block, upsample2

Params = Mapping[str, Tensor]

TOKEN_STRIDE = 8


def _level_inputs(
    pyramid: Optional[FeaturePyramid], tokens: Optional[Tensor], stride: int
) -> List[Tensor]:
    if pyramid is not None:
        h, w = pyramid[stride].shape[1:]
    elif tokens is not None:
        scale = TOKEN_STRIDE // stride
        h, w = tokens.shape[1] * scale, tokens.shape[2] * scale
    else:
        raise ShapeError("fuse_and_decode: needs a pyramid, a token grid or both")
    inputs = [pyramid[stride]] if pyramid is not None else []
    if tokens is not None:
        inputs.append(nn.bilinear_resize(tokens, h, w))
    return inputs


def fuse_and_decode(
    pyramid: Optional[FeaturePyramid], tokens: Optional[Tensor], params: Params, cfg: ModelConfig
) -> FeaturePyramid:
    """Resize the ``[D,gh,gw]`` token grid to each level, concatenate and decode top-down.

    Either input may be missing when the config disables its stream; the
    laterals then see only the other one.
    """
    expected = cfg.fusion_channels()
    merged: Dict[int, Tensor] = {}
    top = None
    for stride in (8, 4, 2):
        inputs = _level_inputs(pyramid, tokens, stride)
        got = sum(t.shape[0] for t in inputs)
        if got != expected:
            raise ShapeError(f"fuse_and_decode: stride {stride} concatenates {got} channels, expected {expected}")
        fused = inputs[0] if len(inputs) == 1 else ops.concat(inputs, axis=0)
        lateral = conv_block(fused, params, f"fuse.lat{stride}", pad=0)
        top = lateral if top is None else lateral + upsample2(top)
        merged[stride] = top

    out = {s: conv_block(ops.leaky_relu(merged[s]), params, f"fuse.out{s}") for s in (2, 4, 8)}
    channels = cfg.channels_by_stride()
    for stride, t in out.items():
        if t.shape[0] != channels[stride]:
            raise ShapeError(
                f"fuse_and_decode: stride {stride} has {t.shape[0]} channels, config says {channels[stride]}"
            )
    return FeaturePyramid(out)
