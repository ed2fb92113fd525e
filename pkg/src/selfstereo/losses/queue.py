"""Ring buffer of past key vectors used as extra negatives."""
from __future__ import annotations

from typing import Optional

import numpy as np

from selfstereo.autodiff.tensor import Tensor, default_dtype
from selfstereo.errors import ShapeError
from selfstereo.utils.logging import get_logger

logger = get_logger(__name__)

UNIT_NORM_TOLERANCE = 1e-4


class MemoryQueue:
    """Fixed-capacity FIFO of unit vectors; the oldest entries are overwritten first."""

    def __init__(self, capacity: int, dim: int, dtype: Optional[type] = None) -> None:
        if capacity < 1 or dim < 1:
            raise ValueError(f"MemoryQueue needs positive capacity and dim, got {capacity}, {dim}")
        self.capacity = capacity
        self.dim = dim
        self.buffer = np.zeros((capacity, dim), dtype=dtype or default_dtype())
        self.cursor = 0
        self.fill = 0

    def enqueue(self, keys: np.ndarray) -> None:
        keys = np.asarray(keys, dtype=self.buffer.dtype).reshape(-1, self.dim)
        if not len(keys):
            return
        norms = np.linalg.norm(keys, axis=1)
        if np.abs(norms - 1.0).max() > UNIT_NORM_TOLERANCE:
            raise ValueError("MemoryQueue.enqueue: keys must be L2-normalized")
        if len(keys) > self.capacity:
            keys = keys[-self.capacity :]
        slots = (self.cursor + np.arange(len(keys))) % self.capacity
        self.buffer[slots] = keys
        self.cursor = int((self.cursor + len(keys)) % self.capacity)
        self.fill = min(self.capacity, self.fill + len(keys))

    def draw(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Up to ``count`` distinct stored vectors, uniformly chosen."""
        n = min(count, self.fill)
        if n == 0:
            return np.zeros((0, self.dim), dtype=self.buffer.dtype)
        return self.buffer[rng.choice(self.fill, n, replace=False)].copy()

    def contents(self) -> np.ndarray:
        return self.buffer[: self.fill]

    def restore(self, buffer: np.ndarray, cursor: int, fill: int) -> None:
        if buffer.shape != self.buffer.shape:
            raise ShapeError(f"MemoryQueue.restore: buffer {buffer.shape} vs {self.buffer.shape}")
        if not 0 <= fill <= self.capacity or not 0 <= cursor < self.capacity:
            raise ValueError(f"MemoryQueue.restore: cursor {cursor} / fill {fill} out of range")
        self.buffer = np.array(buffer, dtype=self.buffer.dtype)
        self.cursor = cursor
        self.fill = fill


def normalized_vectors(features: np.ndarray | Tensor) -> np.ndarray:
    """``[C,H,W]`` map to ``[H*W, C]`` unit rows."""
    values = features.values if isinstance(features, Tensor) else np.asarray(features)
    c = values.shape[0]
    rows = values.reshape(c, -1).T
    return rows / np.maximum(np.linalg.norm(rows, axis=1, keepdims=True), 1e-12)


def queue_update(
    queue: MemoryQueue, key_features: np.ndarray | Tensor, rng: np.random.Generator, count: int
) -> MemoryQueue:
    """Enqueue ``count`` uniformly chosen, normalized key vectors of one feature map."""
    rows = normalized_vectors(key_features)
    if rows.shape[1] != queue.dim:
        raise ShapeError(f"queue_update: features have {rows.shape[1]} channels, queue holds {queue.dim}")
    pick = rng.choice(len(rows), min(count, len(rows)), replace=False)
    queue.enqueue(rows[pick])
    logger.debug("Queue holds %d/%d keys", queue.fill, queue.capacity)
    return queue
