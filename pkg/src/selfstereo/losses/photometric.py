"""Reconstruction and edge-aware smoothness objectives of the standard branch."""
from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from selfstereo.autodiff import nn, ops
from selfstereo.autodiff.tensor import Tensor

DEFAULT_SSIM_WEIGHT = 0.85


def photometric_error(
    left: Tensor, right: Tensor, disparity: Tensor, ssim_weight: float = DEFAULT_SSIM_WEIGHT
) -> Tuple[Tensor, np.ndarray]:
    """Per-pixel ``[H,W]`` reconstruction error of ``left`` from the warped ``right`` view.

    Channels are averaged. The second value flags pixels whose source lies inside
    the right view.
    """
    left, right, disparity = ops.as_tensor(left), ops.as_tensor(right), ops.as_tensor(disparity)
    if left.shape != right.shape:
        raise ValueError(f"photometric_loss: view shapes differ, {left.shape} vs {right.shape}")
    warped, in_view = nn.warp_horizontal(right, disparity)
    dissimilarity = (1.0 - nn.ssim_map(left, warped)) * 0.5
    error = dissimilarity * ssim_weight + ops.abs(left - warped) * (1.0 - ssim_weight)
    return ops.mean(error, axis=0), in_view


def photometric_loss(
    left: Tensor,
    right: Tensor,
    disparity: Tensor,
    exclude: Optional[np.ndarray] = None,
    ssim_weight: float = DEFAULT_SSIM_WEIGHT,
) -> Tensor:
    """Mean reconstruction error over in-view pixels that ``exclude`` does not mark."""
    if not 0.0 <= ssim_weight <= 1.0:
        raise ValueError(f"ssim_weight must lie in [0, 1], got {ssim_weight}")
    error, in_view = photometric_error(left, right, disparity, ssim_weight)
    include = in_view if exclude is None else in_view & ~np.asarray(exclude, dtype=bool)
    count = int(include.sum())
    if count == 0:
        raise ValueError("photometric_loss: every pixel is excluded or out of view")
    return ops.sum(error * Tensor.wrap(include.astype(error.dtype))) / float(count)


def smoothness_loss(disparity: Tensor, image: Tensor) -> Tensor:
    """Disparity gradients penalised less where the image itself has an edge."""
    disparity, image = ops.as_tensor(disparity), ops.as_tensor(image)
    if disparity.shape != image.shape[1:]:
        raise ValueError(f"smoothness_loss: disparity {disparity.shape} vs image {image.shape}")
    grad_dx = ops.abs(disparity[:, 1:] - disparity[:, :-1])
    grad_dy = ops.abs(disparity[1:, :] - disparity[:-1, :])
    weight_x = ops.exp(-ops.mean(ops.abs(image[:, :, 1:] - image[:, :, :-1]), axis=0))
    weight_y = ops.exp(-ops.mean(ops.abs(image[:, 1:, :] - image[:, :-1, :]), axis=0))
    return ops.mean(grad_dx * weight_x) + ops.mean(grad_dy * weight_y)
