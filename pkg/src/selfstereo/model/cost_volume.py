"""Cost volumes, aggregation into disparity distributions, and regression."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from selfstereo.autodiff import nn, ops
from selfstereo.autodiff.tensor import Tensor
from selfstereo.errors import ShapeError

Params = Mapping[str, Tensor]


@dataclass
class CostVolume:
    """``[2*N_c + G, D, H, W]`` with candidates ``offsets + d_min + k`` for ``k < D``."""

    values: Tensor
    d_min: int
    d_max: int
    stage: int
    offsets: np.ndarray

    @property
    def depth(self) -> int:
        return self.d_max - self.d_min


@dataclass
class ProbabilityVolume:
    values: Tensor
    d_min: int
    d_max: int
    offsets: np.ndarray

    def candidates(self) -> np.ndarray:
        k = np.arange(self.d_max - self.d_min, dtype=self.values.dtype)[:, None, None]
        return (self.offsets + self.d_min + k).astype(self.values.dtype)


@dataclass
class DisparityMap:
    values: Tensor
    stride: int = 1

    def full_resolution(self, height: int, width: int) -> Tensor:
        """Resize to ``height x width`` and rescale values to full-resolution pixels."""
        if self.stride == 1 and self.values.shape == (height, width):
            return self.values
        grid = ops.reshape(self.values, (1,) + self.values.shape)
        resized = nn.bilinear_resize(grid, height, width)
        return ops.reshape(resized, (height, width)) * float(self.stride)


def build_cost_volume(
    f_left: Tensor,
    f_right: Tensor,
    d_min: int,
    d_max: int,
    groups: int,
    *,
    offsets: Optional[np.ndarray] = None,
    stage: int = 0,
) -> CostVolume:
    """Concatenation plus group-wise correlation volume.

    For candidate ``d`` the concatenation block holds ``F_l(x) || F_r(x - d)`` and
    group ``g`` holds the mean over the group's channels of ``F_l * F_r(x - d)``.
    Right samples falling outside the image are zero, and so is the left half of
    the concatenation there.
    """
    if f_left.shape != f_right.shape or f_left.ndim != 3:
        raise ShapeError(f"build_cost_volume: feature shapes {f_left.shape} and {f_right.shape} differ")
    channels, h, w = f_left.shape
    if channels % groups:
        raise ShapeError(f"build_cost_volume: {channels} channels not divisible by {groups} groups")
    if d_max <= d_min:
        raise ValueError(f"build_cost_volume: empty range [{d_min}, {d_max})")
    if d_max > w:
        raise ValueError(f"build_cost_volume: d_max {d_max} exceeds width {w}")
    if offsets is None:
        offsets = np.zeros((h, w), dtype=np.int64)

    depth = d_max - d_min
    candidates = offsets[None] + d_min + np.arange(depth)[:, None, None]
    cols = np.arange(w)[None, None, :] - candidates
    shifted, valid = nn.gather_columns(f_right, cols)

    left = ops.reshape(f_left, (channels, 1, h, w)) * Tensor.wrap(valid[None].astype(f_left.dtype))
    product = ops.reshape(f_left, (channels, 1, h, w)) * shifted
    gwc = ops.mean(ops.reshape(product, (groups, channels // groups, depth, h, w)), axis=1)
    values = ops.concat([left, shifted, gwc], axis=0)
    return CostVolume(values, d_min, d_max, stage, np.asarray(offsets, dtype=np.int64))


def aggregate_cost(volume: CostVolume, params: Params, prefix: str) -> ProbabilityVolume:
    """3-D conv stack reducing the volume to one channel, then softmax over candidates."""
    x = volume.values
    index = 0
    while f"{prefix}.conv{index}.weight" in params:
        x = nn.conv3d(x, params[f"{prefix}.conv{index}.weight"], params[f"{prefix}.conv{index}.bias"], pad=1)
        if f"{prefix}.conv{index + 1}.weight" in params:
            x = ops.leaky_relu(x)
        index += 1
    if x.shape[0] != 1:
        raise ShapeError(f"aggregate_cost: stack {prefix} ends with {x.shape[0]} channels, expected 1")
    logits = ops.reshape(x, x.shape[1:])
    return ProbabilityVolume(nn.softmax_axis(logits, axis=0), volume.d_min, volume.d_max, volume.offsets)


def regress_disparity(prob: ProbabilityVolume, stride: int = 1) -> DisparityMap:
    """Expected candidate under the distribution."""
    weighted = prob.values * Tensor.wrap(prob.candidates())
    return DisparityMap(ops.sum(weighted, axis=0), stride)


def wta_disparity(f_left: np.ndarray | Tensor, f_right: np.ndarray | Tensor, d_max: int) -> DisparityMap:
    """Per-pixel argmax of the feature dot product; ties go to the smaller disparity."""
    fl = f_left.values if isinstance(f_left, Tensor) else np.asarray(f_left)
    fr = f_right.values if isinstance(f_right, Tensor) else np.asarray(f_right)
    if fl.shape != fr.shape:
        raise ShapeError(f"wta_disparity: feature shapes {fl.shape} and {fr.shape} differ")
    _, h, w = fl.shape
    scores = np.full((d_max, h, w), -np.inf)
    for d in range(min(d_max, w)):
        scores[d, :, d:] = (fl[:, :, d:] * fr[:, :, : w - d]).sum(axis=0)
    best = np.argmax(scores, axis=0).astype(fl.dtype)
    return DisparityMap(Tensor.wrap(best), 1)
