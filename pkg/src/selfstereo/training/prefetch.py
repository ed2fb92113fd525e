"""Bounded producer/consumer buffer that builds step batches ahead of the optimizer."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional

from selfstereo.data.synth import StereoSample
from selfstereo.utils.logging import get_logger

logger = get_logger(__name__)


class BatchStatus(str, Enum):
    pending = "pending"
    ready = "ready"
    consumed = "consumed"
    failed = "failed"


@dataclass
class StepBatch:
    step: int
    standard: List[StereoSample]
    augmented: List[StereoSample]
    occlusion_ratio: float
    seeds: List[int] = field(default_factory=list)


class BatchBuffer:
    """Lock-protected map of step -> batch holding at most ``capacity`` unconsumed batches."""

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError(f"BatchBuffer capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._cond = threading.Condition()
        self._ready: Dict[int, StepBatch] = {}
        self._errors: Dict[int, BaseException] = {}
        self._status: Dict[int, BatchStatus] = {}
        self._closed = False

    def mark_pending(self, step: int) -> None:
        with self._cond:
            self._status.setdefault(step, BatchStatus.pending)

    def put(self, step: int, batch: StepBatch) -> bool:
        """Store a batch, blocking while the buffer is full. False once the buffer is closed."""
        with self._cond:
            while len(self._ready) >= self.capacity and not self._closed:
                self._cond.wait()
            if self._closed:
                return False
            self._ready[step] = batch
            self._status[step] = BatchStatus.ready
            self._cond.notify_all()
            return True

    def mark_failed(self, step: int, exc: BaseException) -> None:
        with self._cond:
            self._errors[step] = exc
            self._status[step] = BatchStatus.failed
            self._cond.notify_all()

    def take(self, step: int, timeout: Optional[float] = None) -> StepBatch:
        with self._cond:
            ok = self._cond.wait_for(
                lambda: step in self._ready or step in self._errors or self._closed, timeout=timeout
            )
            if step in self._errors:
                raise self._errors[step]
            if not ok or step not in self._ready:
                raise RuntimeError(f"batch for step {step} is not available")
            batch = self._ready.pop(step)
            self._status[step] = BatchStatus.consumed
            self._cond.notify_all()
            return batch

    def get_status(self, step: int) -> Optional[BatchStatus]:
        with self._cond:
            return self._status.get(step)

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()


class BatchPrefetcher:
    """Runs ``make_batch(step)`` for ``start..stop-1`` on a background thread.

    Batches are pure functions of their step, so prefetch depth never changes
    what the consumer sees. ``depth=0`` builds each batch on demand.
    """

    def __init__(self, make_batch: Callable[[int], StepBatch], start: int, stop: int, depth: int = 2) -> None:
        if depth < 0:
            raise ValueError(f"prefetch depth must be >= 0, got {depth}")
        self.make_batch = make_batch
        self.start = start
        self.stop = stop
        self.depth = depth
        self.buffer: Optional[BatchBuffer] = BatchBuffer(depth) if depth else None
        self._thread: Optional[threading.Thread] = None

    def _produce(self) -> None:
        assert self.buffer is not None
        for step in range(self.start, self.stop):
            self.buffer.mark_pending(step)
            try:
                batch = self.make_batch(step)
            except Exception as exc:
                logger.error("Batch generation failed at step %d: %s", step, exc)
                self.buffer.mark_failed(step, exc)
                return
            if not self.buffer.put(step, batch):
                return

    def __enter__(self) -> "BatchPrefetcher":
        if self.buffer is not None and self._thread is None:
            self._thread = threading.Thread(target=self._produce, name="batch-prefetch", daemon=True)
            self._thread.start()
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def get(self, step: int) -> StepBatch:
        if not self.start <= step < self.stop:
            raise IndexError(f"step {step} outside prefetch range [{self.start}, {self.stop})")
        if self.buffer is None:
            return self.make_batch(step)
        if self._thread is None:
            self.__enter__()
        return self.buffer.take(step)

    def close(self) -> None:
        if self.buffer is not None:
            self.buffer.close()
        if self._thread is not None:
            self._thread.join()
            self._thread = None
