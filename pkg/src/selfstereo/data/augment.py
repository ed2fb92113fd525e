"""Photometric and occlusion augmentation of the second training branch."""
from __future__ import annotations

import math
from enum import Enum
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from selfstereo.data.synth import StereoSample
from selfstereo.utils.logging import get_logger

logger = get_logger(__name__)

Range = Tuple[float, float]

MAX_OCCLUSION_RATIO = 0.25
DEFAULT_PEAK_RATIO = 0.15


class AugmentationStrategy(str, Enum):
    """How the augmented pair enters training."""

    NONE = "none"  # clean pair only
    VANILLA = "vanilla"  # augmented pair as the only input, photometric loss on it
    INTERMEDIATE = "intermediate"  # augmented pair as input, photometric loss on the clean pair
    DUAL = "dual"  # clean standard branch plus a separate augmented branch

    @property
    def dual_branch(self) -> bool:
        return self is AugmentationStrategy.DUAL


class AugmentationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    brightness_range: Range = (0.6, 1.4)
    contrast_range: Range = (0.6, 1.4)
    gamma_range: Range = (0.8, 1.2)
    gaussian_blur_sigma_range: Range = (0.0, 1.5)
    glass_blur_displacement: int = Field(2, ge=0)
    occlusion_ratio: float = Field(0.0, ge=0.0, le=MAX_OCCLUSION_RATIO)
    occlusion_patch: int = Field(8, ge=1)
    asymmetric: bool = True
    strategy: AugmentationStrategy = AugmentationStrategy.DUAL

    @field_validator("brightness_range", "contrast_range", "gamma_range", "gaussian_blur_sigma_range")
    @classmethod
    def _ordered(cls, value: Range) -> Range:
        lo, hi = value
        if lo > hi:
            raise ValueError(f"range ({lo}, {hi}) is empty")
        return value

    @model_validator(mode="after")
    def _positive_factors(self) -> "AugmentationConfig":
        for name in ("brightness_range", "contrast_range", "gamma_range"):
            if getattr(self, name)[0] <= 0:
                raise ValueError(f"{name} must stay positive, got {getattr(self, name)}")
        if self.gaussian_blur_sigma_range[0] < 0:
            raise ValueError("gaussian_blur_sigma_range must be non-negative")
        return self

    @classmethod
    def identity(cls) -> "AugmentationConfig":
        return cls(
            brightness_range=(1.0, 1.0),
            contrast_range=(1.0, 1.0),
            gamma_range=(1.0, 1.0),
            gaussian_blur_sigma_range=(0.0, 0.0),
            glass_blur_displacement=0,
            occlusion_ratio=0.0,
        )


def curriculum_ratio(step: int, total_steps: int, peak: float = DEFAULT_PEAK_RATIO) -> float:
    """Occlusion ratio ramping linearly from 0 to ``peak`` at half the run, flat after."""
    if total_steps <= 0:
        raise ValueError(f"total_steps must be positive, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return float(peak * min(1.0, 2.0 * step / total_steps))


def _draw(rng: np.random.Generator, bounds: Range) -> float:
    lo, hi = bounds
    value = float(rng.uniform(lo, hi))
    return lo if lo == hi else value


def _photometric(image: np.ndarray, brightness: float, contrast: float, gamma: float) -> np.ndarray:
    out = image
    if brightness != 1.0:
        out = out * brightness
    if contrast != 1.0:
        mean = out.mean()
        out = mean + (out - mean) * contrast
    if gamma != 1.0:
        out = np.clip(out, 0.0, 1.0) ** gamma
    return out


def _reflect(idx: np.ndarray, n: int) -> np.ndarray:
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.abs(idx) % period
    return np.where(idx > n - 1, period - idx, idx)


def _gaussian_matrix(n: int, sigma: float) -> np.ndarray:
    radius = max(1, int(math.ceil(3 * sigma)))
    offsets = np.arange(-radius, radius + 1)
    weights = np.exp(-0.5 * (offsets / sigma) ** 2)
    weights /= weights.sum()
    m = np.zeros((n, n))
    rows = np.arange(n)
    for off, w in zip(offsets, weights):
        np.add.at(m, (rows, _reflect(rows + off, n)), w)
    return m


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    _, h, w = image.shape
    return _gaussian_matrix(h, sigma) @ image @ _gaussian_matrix(w, sigma).T


def glass_blur(image: np.ndarray, displacement: int, rng: np.random.Generator) -> np.ndarray:
    """Random local pixel displacement followed by a 3x3 mean filter."""
    _, h, w = image.shape
    dy = rng.integers(-displacement, displacement + 1, size=(h, w))
    dx = rng.integers(-displacement, displacement + 1, size=(h, w))
    ys = np.clip(np.arange(h)[:, None] + dy, 0, h - 1)
    xs = np.clip(np.arange(w)[None, :] + dx, 0, w - 1)
    shuffled = image[:, ys, xs]
    padded = np.pad(shuffled, ((0, 0), (1, 1), (1, 1)), mode="edge")
    return sum(padded[:, i : i + h, j : j + w] for i in range(3) for j in range(3)) / 9.0


def paint_occlusions(
    image: np.ndarray, ratio: float, patch: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Paint uniform grey squares at random positions until ``ratio`` of pixels is covered."""
    _, h, w = image.shape
    mask = np.zeros((h, w), dtype=bool)
    if ratio <= 0:
        return image, mask
    side = min(patch, h, w)
    target = ratio * h * w
    out = image.copy()
    while mask.sum() < target:
        y0 = int(rng.integers(0, h - side + 1))
        x0 = int(rng.integers(0, w - side + 1))
        out[:, y0 : y0 + side, x0 : x0 + side] = rng.uniform(0.0, 1.0)
        mask[y0 : y0 + side, x0 : x0 + side] = True
    return out, mask


def apply_augmentation(sample: StereoSample, cfg: AugmentationConfig, rng_seed: int) -> StereoSample:
    """Build the augmented view pair; ground truth is carried over untouched."""
    rng = np.random.default_rng(rng_seed)
    brightness = _draw(rng, cfg.brightness_range)
    contrast = _draw(rng, cfg.contrast_range)
    gamma = _draw(rng, cfg.gamma_range)
    sigma = _draw(rng, cfg.gaussian_blur_sigma_range)

    dtype = sample.left.dtype
    left = sample.left.astype(np.float64)
    right = _photometric(sample.right.astype(np.float64), brightness, contrast, gamma)
    if not cfg.asymmetric:
        left = _photometric(left, brightness, contrast, gamma)

    if sigma > 0:
        left, right = gaussian_blur(left, sigma), gaussian_blur(right, sigma)
    if cfg.glass_blur_displacement > 0:
        left = glass_blur(left, cfg.glass_blur_displacement, rng)
        right = glass_blur(right, cfg.glass_blur_displacement, rng)

    left, mask = paint_occlusions(left, cfg.occlusion_ratio, cfg.occlusion_patch, rng)
    left = np.clip(left, 0.0, 1.0).astype(dtype)
    right = np.clip(right, 0.0, 1.0).astype(dtype)

    meta = {
        "brightness": brightness,
        "contrast": contrast,
        "gamma": gamma,
        "gaussian_sigma": sigma,
        "glass_displacement": float(cfg.glass_blur_displacement),
        "occlusion_ratio": float(cfg.occlusion_ratio),
        "occluded_fraction": float(mask.mean()),
    }
    logger.debug("Augmented sample %d with %s", sample.seed, meta)
    return sample.with_views(left, right, augmentation=meta, painted_mask=mask)
