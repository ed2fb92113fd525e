"""Left-right validity mask and the cross-branch disparity agreement loss."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from selfstereo.autodiff import nn, ops
from selfstereo.autodiff.tensor import Tensor, no_grad
from selfstereo.errors import ShapeError
from selfstereo.utils.logging import get_logger

logger = get_logger(__name__)

DEFAULT_WARP_THRESHOLD = 3.0

PredictFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class ValidMask:
    values: np.ndarray
    tau_warp: float

    @property
    def fraction(self) -> float:
        return float(self.values.mean()) if self.values.size else 0.0

    def any(self) -> bool:
        return bool(self.values.any())


def warp_error(d_left: np.ndarray, d_right: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``|d_l(p) - d_r(p - d_l(p))|`` with linear interpolation, plus the in-view flags."""
    d_left = np.asarray(d_left)
    d_right = np.asarray(d_right, dtype=d_left.dtype)
    if d_left.shape != d_right.shape or d_left.ndim != 2:
        raise ShapeError(f"consistency_mask: disparity shapes {d_left.shape} and {d_right.shape} differ")
    with no_grad():
        sampled, in_view = nn.warp_horizontal(Tensor.wrap(d_right[None]), Tensor.wrap(d_left))
    return np.abs(d_left - sampled.values[0]), in_view


def consistency_mask(d_left: np.ndarray, d_right: np.ndarray, tau_warp: float = DEFAULT_WARP_THRESHOLD) -> ValidMask:
    """Pixels passing the left-right check; matches outside the right view fail it."""
    if tau_warp < 0:
        raise ValueError(f"tau_warp must be non-negative, got {tau_warp}")
    error, in_view = warp_error(d_left, d_right)
    return ValidMask(((error <= tau_warp) & in_view).astype(np.uint8), tau_warp)


def flip_views(left: np.ndarray, right: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mirror both ``[C,H,W]`` views and swap their roles, turning the right view into a left one."""
    return np.ascontiguousarray(right[..., ::-1]), np.ascontiguousarray(left[..., ::-1])


def lr_valid_mask(
    predict: PredictFn, left: np.ndarray, right: np.ndarray, tau_warp: float = DEFAULT_WARP_THRESHOLD
) -> ValidMask:
    """Left-right check where the right disparity comes from the mirrored, swapped pair."""
    left, right = np.asarray(left), np.asarray(right)
    with no_grad():
        d_left = np.asarray(predict(left, right))
        d_right = np.ascontiguousarray(np.asarray(predict(*flip_views(left, right)))[:, ::-1])
    return consistency_mask(d_left, d_right, tau_warp)


def disparity_diff_loss(d_aug: Tensor, d_std: Tensor | np.ndarray, mask: ValidMask) -> Tensor:
    """Smooth-L1 between the augmented prediction and the detached standard prediction on valid pixels."""
    d_aug = ops.as_tensor(d_aug)
    target = d_std.detach() if isinstance(d_std, Tensor) else Tensor.wrap(np.asarray(d_std, dtype=d_aug.dtype))
    if d_aug.shape != target.shape or mask.values.shape != d_aug.shape:
        raise ShapeError(
            f"disparity_diff_loss: shapes {d_aug.shape}, {target.shape} and mask {mask.values.shape} differ"
        )
    count = int(mask.values.sum())
    if count == 0:
        logger.warning("Valid mask is empty; disparity difference loss is zero this step")
        return ops.sum(d_aug * 0.0)
    weights = Tensor.wrap(mask.values.astype(d_aug.dtype))
    return ops.sum(ops.smooth_l1((d_aug - target) * weights) * weights) / float(count)
