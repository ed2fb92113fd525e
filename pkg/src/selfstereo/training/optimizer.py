"""AdamW with decoupled weight decay and global-norm gradient clipping."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

from selfstereo.errors import ShapeError
from selfstereo.model.params import ModelParams
from selfstereo.utils.logging import get_logger

logger = get_logger(__name__)


@dataclass
class AdamState:
    """First/second moments per parameter block, in ``ModelParams`` order."""

    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0
    skipped_blocks: int = 0
    last_skipped: Tuple[str, ...] = field(default_factory=tuple)

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamState":
        m = {name: np.zeros_like(t.values) for name, t in params.items()}
        v = {name: np.zeros_like(t.values) for name, t in params.items()}
        return cls(m=m, v=v)

    def check(self, params: ModelParams) -> None:
        if self.step < 0:
            raise ValueError(f"optimizer step must be >= 0, got {self.step}")
        for name, t in params.items():
            if name not in self.m or name not in self.v:
                raise KeyError(f"optimizer state missing block {name!r}")
            if self.m[name].shape != t.shape or self.v[name].shape != t.shape:
                raise ShapeError(f"optimizer moments for {name!r} do not match shape {t.shape}")


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.square(g, dtype=np.float64)))
    return math.sqrt(total)


def clip_grad_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> Tuple[Dict[str, np.ndarray], float]:
    """Scale all gradients by a common factor so their joint L2 norm is at most ``max_norm``.

    Returns the (possibly scaled) gradients and the norm before clipping.
    ``max_norm`` of 0 disables clipping. Non-finite norms pass through unscaled
    so the optimizer can reject the offending blocks.
    """
    if max_norm < 0:
        raise ValueError(f"max_norm must be >= 0, got {max_norm}")
    norm = global_norm(grads)
    if max_norm == 0 or not math.isfinite(norm) or norm <= max_norm:
        return dict(grads), norm
    scale = max_norm / (norm + 1e-12)
    return {name: (g * scale).astype(g.dtype) for name, g in grads.items()}, norm


def adamw_step(
    params: ModelParams,
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    weight_decay: float = 1e-2,
    eps: float = 1e-8,
) -> AdamState:
    """Apply one AdamW update in place.

    Blocks without a gradient are treated as zero gradient. A block whose
    gradient holds NaN or inf is left untouched, moments included.
    """
    if lr < 0:
        raise ValueError(f"learning rate must be >= 0, got {lr}")
    state.check(params)
    state.step += 1
    bias1 = 1.0 - beta1**state.step
    bias2 = 1.0 - beta2**state.step

    skipped = []
    for name, t in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(t.values)
        elif g.shape != t.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter has {t.shape}")
        if not np.all(np.isfinite(g)):
            skipped.append(name)
            continue
        dtype = t.values.dtype
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        update = (m / bias1) / (np.sqrt(v / bias2) + eps)
        t.values *= dtype.type(1.0 - lr * weight_decay)
        t.values -= (lr * update).astype(dtype)

    state.last_skipped = tuple(skipped)
    if skipped:
        state.skipped_blocks += len(skipped)
        logger.warning(
            "AdamW skipped %d non-finite gradient block(s) at step %d: %s",
            len(skipped),
            state.step,
            ", ".join(skipped[:5]),
        )
    return state
