import struct

import numpy as np
import pytest

from selfstereo.errors import (
    BadMagicError,
    DigestMismatchError,
    TruncatedCheckpointError,
    VersionMismatchError,
)
from selfstereo.losses import MemoryQueue, MomentumState
from selfstereo.training import AdamState, Checkpoint, TrainConfig, Trainer, load_checkpoint, save_checkpoint
from selfstereo.training.checkpoint import MAGIC, decode_checkpoint, encode_checkpoint


def _checkpoint(dtype=np.float32, config_json='{"seed":0}'):
    rng = np.random.default_rng(0)
    params = {
        "fpn.enc1.weight": rng.normal(size=(4, 3, 3, 3)).astype(dtype),
        "fpn.enc1.bias": rng.normal(size=(4,)).astype(dtype),
        "agg.s8.conv0.weight": rng.normal(size=(2, 3, 3, 3, 3)).astype(dtype),
        "mla.block1.beta": np.ones((1,), dtype=dtype),
    }
    momentum = MomentumState({k: v * 0.5 for k, v in params.items() if not k.startswith("agg.")}, 0.99)
    adam = AdamState(
        m={k: rng.normal(size=v.shape).astype(dtype) for k, v in params.items()},
        v={k: rng.uniform(size=v.shape).astype(dtype) for k, v in params.items()},
        step=17,
        skipped_blocks=2,
    )
    queue = MemoryQueue(capacity=6, dim=4, dtype=dtype)
    keys = rng.normal(size=(4, 4))
    queue.enqueue(keys / np.linalg.norm(keys, axis=1, keepdims=True))
    return Checkpoint(step=42, config_json=config_json, params=params, momentum=momentum, adam=adam, queue=queue)


def _assert_same(a: Checkpoint, b: Checkpoint) -> None:
    assert a.step == b.step
    assert a.config_json == b.config_json
    assert list(a.params) == list(b.params)
    for name in a.params:
        assert a.params[name].dtype == b.params[name].dtype
        np.testing.assert_array_equal(a.params[name], b.params[name])
        np.testing.assert_array_equal(a.adam.m[name], b.adam.m[name])
        np.testing.assert_array_equal(a.adam.v[name], b.adam.v[name])
    assert a.momentum.momentum == b.momentum.momentum
    for name in a.momentum.params:
        np.testing.assert_array_equal(a.momentum.params[name], b.momentum.params[name])
    assert (a.adam.step, a.adam.skipped_blocks) == (b.adam.step, b.adam.skipped_blocks)
    assert (a.queue.capacity, a.queue.dim, a.queue.cursor, a.queue.fill) == (
        b.queue.capacity,
        b.queue.dim,
        b.queue.cursor,
        b.queue.fill,
    )
    np.testing.assert_array_equal(a.queue.buffer, b.queue.buffer)


class TestRoundtrip:
    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_all_arrays_survive(self, tmp_path, dtype):
        original = _checkpoint(dtype)
        path = save_checkpoint(tmp_path / "run" / "final.ckpt", original)
        _assert_same(original, load_checkpoint(path))

    def test_header_layout(self):
        data = encode_checkpoint(_checkpoint())
        magic, version, step = struct.unpack_from("<4sIQ", data)
        assert magic == MAGIC == b"SSMF"
        assert version == 1
        assert step == 42

    def test_encoding_is_deterministic(self):
        assert encode_checkpoint(_checkpoint()) == encode_checkpoint(_checkpoint())

    def test_no_temp_file_left_behind(self, tmp_path):
        save_checkpoint(tmp_path / "a.ckpt", _checkpoint())
        assert [p.name for p in tmp_path.iterdir()] == ["a.ckpt"]


class TestCorruption:
    def test_bad_magic(self):
        data = bytearray(encode_checkpoint(_checkpoint()))
        data[:4] = b"PF\n "
        with pytest.raises(BadMagicError):
            decode_checkpoint(bytes(data))

    def test_version_mismatch(self):
        data = bytearray(encode_checkpoint(_checkpoint()))
        data[4:8] = struct.pack("<I", 99)
        with pytest.raises(VersionMismatchError):
            decode_checkpoint(bytes(data))

    @pytest.mark.parametrize("keep", [2, 20, 60, -1])
    def test_truncation(self, keep):
        data = encode_checkpoint(_checkpoint())
        with pytest.raises(TruncatedCheckpointError):
            decode_checkpoint(data[:keep])

    def test_flipped_payload_byte(self):
        data = bytearray(encode_checkpoint(_checkpoint()))
        data[-10] ^= 0x01
        with pytest.raises(DigestMismatchError):
            decode_checkpoint(bytes(data))

    def test_edited_config(self):
        data = encode_checkpoint(_checkpoint(config_json='{"seed":0}'))
        with pytest.raises(DigestMismatchError):
            decode_checkpoint(data.replace(b'{"seed":0}', b'{"seed":1}'))

    def test_errors_are_distinct(self):
        kinds = {BadMagicError, VersionMismatchError, TruncatedCheckpointError, DigestMismatchError}
        assert len(kinds) == 4
        for a in kinds:
            for b in kinds - {a}:
                assert not issubclass(a, b)


TINY_MODEL = {
    "encoder_channels": (4, 4, 8, 8),
    "fpn_width": 8,
    "decoder_width": 8,
    "feature_channels": (8, 8, 8),
    "groups": 4,
    "vit_width": 16,
    "vit_heads": 2,
    "vit_depth": 1,
    "aggregation_channels": (4,),
}


def test_checkpoint_from_other_channel_config_is_rejected(tmp_path):
    cfg = TrainConfig(
        height=32,
        width=64,
        d_max=16,
        total_steps=1,
        model=TINY_MODEL,
        contrastive={"queue_capacity": 16},
    )
    path = save_checkpoint(tmp_path / "a.ckpt", Trainer(cfg).to_checkpoint())
    assert load_checkpoint(path, expected_config=cfg.canonical_json()).step == 0

    wider = cfg.model_copy(update={"model": cfg.model.model_copy(update={"feature_channels": (8, 16, 16)})})
    with pytest.raises(DigestMismatchError):
        load_checkpoint(path, expected_config=wider.canonical_json())


def test_element_width_follows_precision():
    narrow, wide = _checkpoint(np.float32), _checkpoint(np.float64)
    stored = (
        sum(v.size for v in wide.params.values())
        + sum(v.size for v in wide.momentum.params.values())
        + sum(v.size for v in wide.adam.m.values())
        + sum(v.size for v in wide.adam.v.values())
        + wide.queue.buffer.size
    )
    assert len(encode_checkpoint(wide)) - len(encode_checkpoint(narrow)) == 4 * stored
    decoded = decode_checkpoint(encode_checkpoint(wide))
    assert all(v.dtype == np.float64 for v in decoded.params.values())
    assert decoded.queue.buffer.dtype == np.float64
