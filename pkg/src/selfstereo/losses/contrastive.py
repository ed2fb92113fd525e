"""Pixel-wise contrastive objective between the standard and augmented branches.

Anchors (queries) come from the standard branch. Positives and in-image
negatives come from the augmented branch's key features, and further negatives
are drawn from a memory queue of earlier keys.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from selfstereo.autodiff import ops
from selfstereo.autodiff.tensor import Tensor
from selfstereo.errors import ShapeError

UNIT_NORM_TOLERANCE = 1e-4


class ContrastiveConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    negatives: int = Field(60, ge=1)
    queue_draw: int = Field(512, ge=0)
    queue_capacity: int = Field(8192, ge=1)
    enqueue_per_image: int = Field(128, ge=0)
    temperature: float = Field(0.07, gt=0.0)
    anchor_count: int = Field(256, ge=1)
    positive_jitter: int = Field(1, ge=0)
    negative_window: int = Field(50, ge=1)
    exclusion_radius: int = Field(2, ge=0)

    @model_validator(mode="after")
    def _window_leaves_room(self) -> "ContrastiveConfig":
        if self.negative_window <= 2 * self.exclusion_radius + 1:
            raise ValueError(
                f"negative_window {self.negative_window} is swallowed by exclusion radius {self.exclusion_radius}"
            )
        return self


@dataclass
class PairIndices:
    """Pixel coordinates ``(y, x)`` of anchors ``[A,2]``, positives ``[A,2]`` and negatives ``[A,N,2]``."""

    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray


def sample_pairs(
    f_std: np.ndarray | Tensor, f_aug: np.ndarray | Tensor, rng_seed: int, cfg: ContrastiveConfig
) -> PairIndices:
    """Draw anchors, jittered positives and windowed negatives on a ``[C,H,W]`` grid."""
    if tuple(f_std.shape) != tuple(f_aug.shape):
        raise ShapeError(f"sample_pairs: feature shapes differ, {f_std.shape} vs {f_aug.shape}")
    _, h, w = f_std.shape
    rng = np.random.default_rng(rng_seed)

    anchors = np.stack([rng.integers(0, h, cfg.anchor_count), rng.integers(0, w, cfg.anchor_count)], axis=1)
    jitter = rng.integers(-cfg.positive_jitter, cfg.positive_jitter + 1, size=anchors.shape)
    positives = np.clip(anchors + jitter, 0, [h - 1, w - 1])

    half = cfg.negative_window // 2
    negatives = np.empty((cfg.anchor_count, cfg.negatives, 2), dtype=np.int64)
    for i, ((ay, ax), (py, px)) in enumerate(zip(anchors, positives)):
        ys, xs = np.meshgrid(
            np.arange(max(ay - half, 0), min(ay - half + cfg.negative_window, h)),
            np.arange(max(ax - half, 0), min(ax - half + cfg.negative_window, w)),
            indexing="ij",
        )
        keep = np.maximum(np.abs(ys - py), np.abs(xs - px)) > cfg.exclusion_radius
        candidates = np.stack([ys[keep], xs[keep]], axis=1)
        if len(candidates) == 0:
            raise ValueError(f"sample_pairs: no negatives outside radius {cfg.exclusion_radius} on a {h}x{w} grid")
        pick = rng.choice(len(candidates), cfg.negatives, replace=len(candidates) < cfg.negatives)
        negatives[i] = candidates[pick]
    return PairIndices(anchors, positives, negatives)


def gather_vectors(features: Tensor, coords: np.ndarray) -> Tensor:
    """Feature vectors ``[..., C]`` at ``(y, x)`` coordinates ``[..., 2]``."""
    c, h, w = features.shape
    flat = ops.transpose(ops.reshape(features, (c, h * w)), (1, 0))
    return ops.take(flat, coords[..., 0] * w + coords[..., 1], axis=0)


def _check_unit(name: str, vectors: np.ndarray) -> None:
    if vectors.size == 0:
        return
    norms = np.linalg.norm(vectors, axis=-1)
    worst = float(np.abs(norms - 1.0).max())
    if worst > UNIT_NORM_TOLERANCE:
        raise ValueError(f"infonce_loss: {name} are not unit vectors (norm off by {worst:.3g})")


def infonce_loss(
    anchors: Tensor,
    positives: Tensor,
    negatives: Tensor,
    queue_keys: np.ndarray,
    temperature: float,
) -> Tensor:
    """InfoNCE over ``[A,C]`` anchors with ``[A,C]`` positives, ``[A,N,C]`` negatives and ``[K,C]`` queue keys.

    The positive logit sits in the denominator and the temperature scales every
    logit. Keys never receive gradients.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    anchors = ops.as_tensor(anchors)
    positives = ops.as_tensor(positives).detach()
    negatives = ops.as_tensor(negatives).detach()
    queue_keys = np.asarray(queue_keys, dtype=anchors.dtype).reshape(-1, anchors.shape[-1])
    for name, vectors in (
        ("anchors", anchors.values),
        ("positives", positives.values),
        ("negatives", negatives.values),
        ("queue keys", queue_keys),
    ):
        _check_unit(name, vectors)

    count, dim = anchors.shape
    positive = ops.sum(anchors * positives, axis=-1)
    logits = [ops.reshape(positive, (count, 1)), ops.sum(ops.reshape(anchors, (count, 1, dim)) * negatives, axis=-1)]
    if len(queue_keys):
        logits.append(anchors @ Tensor.wrap(np.ascontiguousarray(queue_keys.T)))
    scaled = ops.concat(logits, axis=1) * (1.0 / temperature)
    return ops.mean(ops.logsumexp(scaled, axis=1) - positive * (1.0 / temperature))


def contrastive_loss(
    query_features: Tensor,
    key_features: Tensor,
    queue_keys: np.ndarray,
    rng_seed: int,
    cfg: ContrastiveConfig,
) -> Tensor:
    """Sample pairs on ``[C,H,W]`` maps, normalise the vectors and score them."""
    pairs = sample_pairs(query_features, key_features, rng_seed, cfg)
    anchors = ops.l2_normalize(gather_vectors(query_features, pairs.anchors), axis=-1)
    keys = key_features.detach()
    positives = ops.l2_normalize(gather_vectors(keys, pairs.positives), axis=-1)
    negatives = ops.l2_normalize(gather_vectors(keys, pairs.negatives), axis=-1)
    return infonce_loss(anchors, positives, negatives, queue_keys, cfg.temperature)
