"""The full stereo network: dual-stream features, cascade volumes, regression."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Mapping, Optional, Tuple

import numpy as np

from selfstereo.autodiff import nn
from selfstereo.autodiff.tensor import Tensor, default_dtype, no_grad
from selfstereo.model.config import ModelConfig
from selfstereo.model.cost_volume import (
    DisparityMap,
    aggregate_cost,
    build_cost_volume,
    regress_disparity,
)
from selfstereo.model.fpn import FeaturePyramid, fpn_forward
from selfstereo.model.fusion import fuse_and_decode
from selfstereo.model.params import ModelParams
from selfstereo.model.vit import mla_stack, tokens_to_grid, toy_vit_forward

Params = Mapping[str, Tensor]


def as_image(image: np.ndarray | Tensor) -> Tensor:
    if isinstance(image, Tensor):
        return image
    return Tensor.wrap(np.asarray(image, dtype=default_dtype()))


def upsample_hypotheses(previous: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear x2 upsampling of a coarse map with values doubled to the finer stride."""
    h, w = previous.shape
    scale = height / h
    return scale * (nn.resize_matrix(h, height) @ previous.astype(np.float64) @ nn.resize_matrix(w, width).T)


def cascade_forward(
    pyr_left: FeaturePyramid, pyr_right: FeaturePyramid, params: Params, cfg: ModelConfig
) -> List[DisparityMap]:
    """Coarse-to-fine disparity maps, one per stage.

    Stage 0 searches every disparity at the coarsest stride. Each later stage
    searches ``2 * cascade_radius`` candidates per pixel centred on the previous
    stage's upsampled estimate, clamped into the valid range.
    """
    maps: List[DisparityMap] = []
    previous: Optional[DisparityMap] = None
    for stage, stride in enumerate(cfg.stage_strides()):
        f_left, f_right = pyr_left[stride], pyr_right[stride]
        _, h, w = f_left.shape
        full = min(cfg.stage_range(stride), w)
        if previous is None:
            volume = build_cost_volume(f_left, f_right, 0, full, cfg.groups, stage=stage)
        else:
            window = min(2 * cfg.cascade_radius, full)
            centre = upsample_hypotheses(previous.values.values, h, w)
            lo = np.clip(np.rint(centre).astype(np.int64) - cfg.cascade_radius, 0, full - window)
            volume = build_cost_volume(f_left, f_right, 0, window, cfg.groups, offsets=lo, stage=stage)
        previous = regress_disparity(aggregate_cost(volume, params, f"agg.s{stride}"), stride)
        maps.append(previous)
    return maps


@dataclass
class NetworkOutput:
    disparities: List[DisparityMap]
    features_left: FeaturePyramid
    features_right: FeaturePyramid

    @property
    def final(self) -> DisparityMap:
        return self.disparities[-1]


class StereoNetwork:
    """Parameters plus the forward passes used for training and inference."""

    def __init__(self, cfg: ModelConfig, params: Optional[ModelParams] = None, seed: int = 0) -> None:
        self.cfg = cfg
        self.params = params if params is not None else ModelParams.initialize(cfg, seed)

    def extract_features(
        self,
        left: np.ndarray | Tensor,
        right: np.ndarray | Tensor,
        params: Optional[Params] = None,
    ) -> Tuple[FeaturePyramid, FeaturePyramid]:
        """Fused pyramids of both views from the streams the config enables."""
        cfg = self.cfg
        p: Params = params if params is not None else self.params  # type: ignore[assignment]
        left_t, right_t = as_image(left), as_image(right)
        cfg.check_image(*left_t.shape[1:])

        fpn_left: Optional[FeaturePyramid] = None
        fpn_right: Optional[FeaturePyramid] = None
        if cfg.uses_fpn:
            fpn_left, fpn_right = fpn_forward(left_t, p), fpn_forward(right_t, p)

        tokens_left: Optional[Tensor] = None
        tokens_right: Optional[Tensor] = None
        if cfg.uses_vit:
            vit = dict(depth=cfg.vit_depth, heads=cfg.vit_heads, patch=cfg.patch)
            taps_left, grid = toy_vit_forward(left_t, p, **vit)
            taps_right, _ = toy_vit_forward(right_t, p, **vit)
            if cfg.uses_mla:
                agg_left, agg_right = mla_stack(taps_left, taps_right, p, heads=cfg.vit_heads, beta=cfg.mla_beta)
            else:
                # without MLA the views never attend to each other
                agg_left, agg_right = taps_left[-1], taps_right[-1]
            tokens_left, tokens_right = tokens_to_grid(agg_left, grid), tokens_to_grid(agg_right, grid)

        return (
            fuse_and_decode(fpn_left, tokens_left, p, cfg),
            fuse_and_decode(fpn_right, tokens_right, p, cfg),
        )

    def estimate(self, features_left: FeaturePyramid, features_right: FeaturePyramid) -> List[DisparityMap]:
        return cascade_forward(features_left, features_right, self.params, self.cfg)  # type: ignore[arg-type]

    def forward(self, left: np.ndarray | Tensor, right: np.ndarray | Tensor) -> NetworkOutput:
        features_left, features_right = self.extract_features(left, right)
        return NetworkOutput(self.estimate(features_left, features_right), features_left, features_right)

    def predict(self, left: np.ndarray | Tensor, right: np.ndarray | Tensor) -> np.ndarray:
        """Full-resolution disparity of the finest stage, without recording gradients."""
        with no_grad():
            out = self.forward(left, right)
            h, w = as_image(left).shape[1:]
            return np.array(out.final.full_resolution(h, w).values)

    def predict_stages(self, left: np.ndarray | Tensor, right: np.ndarray | Tensor) -> List[np.ndarray]:
        with no_grad():
            out = self.forward(left, right)
            h, w = as_image(left).shape[1:]
            return [np.array(m.full_resolution(h, w).values) for m in out.disparities]
