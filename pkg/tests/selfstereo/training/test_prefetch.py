import threading

import pytest

from selfstereo.training import BatchPrefetcher, BatchStatus, StepBatch
from selfstereo.training.prefetch import BatchBuffer


def _batch(step):
    return StepBatch(step=step, standard=[], augmented=[], occlusion_ratio=step / 10.0, seeds=[step])


def test_buffer_lifecycle():
    buffer = BatchBuffer(capacity=2)
    buffer.mark_pending(0)
    assert buffer.get_status(0) == BatchStatus.pending

    assert buffer.put(0, _batch(0))
    assert buffer.get_status(0) == BatchStatus.ready

    assert buffer.take(0).seeds == [0]
    assert buffer.get_status(0) == BatchStatus.consumed
    assert buffer.get_status(5) is None


def test_buffer_failure_is_raised_to_consumer():
    buffer = BatchBuffer(capacity=1)
    buffer.mark_failed(3, ValueError("boom"))
    assert buffer.get_status(3) == BatchStatus.failed
    with pytest.raises(ValueError, match="boom"):
        buffer.take(3)


def test_buffer_put_blocks_when_full():
    buffer = BatchBuffer(capacity=1)
    buffer.put(0, _batch(0))
    stored = threading.Event()

    def producer():
        buffer.put(1, _batch(1))
        stored.set()

    thread = threading.Thread(target=producer, daemon=True)
    thread.start()
    assert not stored.wait(0.05)
    buffer.take(0)
    assert stored.wait(2.0)
    assert buffer.take(1).step == 1
    thread.join(2.0)


def test_closed_buffer_refuses_batches():
    buffer = BatchBuffer(capacity=1)
    buffer.close()
    assert buffer.put(0, _batch(0)) is False
    with pytest.raises(RuntimeError):
        buffer.take(0)


@pytest.mark.parametrize("depth", [0, 1, 3])
def test_prefetcher_yields_steps_in_order(depth):
    calls = []

    def make(step):
        calls.append(step)
        return _batch(step)

    with BatchPrefetcher(make, start=2, stop=7, depth=depth) as prefetcher:
        got = [prefetcher.get(step) for step in range(2, 7)]
    assert [b.step for b in got] == [2, 3, 4, 5, 6]
    assert [b.occlusion_ratio for b in got] == [0.2, 0.3, 0.4, 0.5, 0.6]
    assert sorted(calls) == [2, 3, 4, 5, 6]


def test_prefetcher_propagates_generation_errors():
    def make(step):
        if step == 1:
            raise OSError("disk gone")
        return _batch(step)

    with BatchPrefetcher(make, start=0, stop=3, depth=2) as prefetcher:
        assert prefetcher.get(0).step == 0
        with pytest.raises(OSError, match="disk gone"):
            prefetcher.get(1)


def test_prefetcher_rejects_out_of_range_steps():
    with BatchPrefetcher(_batch, start=0, stop=2, depth=0) as prefetcher:
        with pytest.raises(IndexError):
            prefetcher.get(2)
    with pytest.raises(ValueError):
        BatchPrefetcher(_batch, 0, 1, depth=-1)


def test_early_close_stops_producer():
    with BatchPrefetcher(_batch, start=0, stop=1000, depth=2) as prefetcher:
        prefetcher.get(0)
    assert prefetcher._thread is None
