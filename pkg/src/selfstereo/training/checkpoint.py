"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"SSMF" | u32 version | u64 step | 32-byte SHA-256 digest
    u32 config length | canonical config JSON
    u64 payload length | payload

The digest covers the config JSON followed by the payload. The payload is
the parameter blocks in ``ModelParams`` order, then the key-encoder copy,
the AdamW moments and the memory queue. A block is a u16-prefixed name,
u8 rank, u32 dims, a u8 element size (4 or 8) and the raw values.

Blocks keep the run's precision: 32-bit runs store 4-byte elements and
64-bit runs store 8-byte ones, which load back as float64.
"""
from __future__ import annotations

import hashlib
import io
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Dict, Optional, Tuple

import numpy as np

from selfstereo.errors import (
    BadMagicError,
    CheckpointError,
    DigestMismatchError,
    TruncatedCheckpointError,
    VersionMismatchError,
)
from selfstereo.losses.momentum import MomentumState
from selfstereo.losses.queue import MemoryQueue
from selfstereo.training.optimizer import AdamState
from selfstereo.utils.filesystem import atomic_write_bytes
from selfstereo.utils.logging import get_logger

logger = get_logger(__name__)

MAGIC = b"SSMF"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQ32s")
_ELEMENT_TYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


@dataclass
class Checkpoint:
    step: int
    config_json: str
    params: Dict[str, np.ndarray]
    momentum: MomentumState
    adam: AdamState
    queue: MemoryQueue


def config_digest(config_json: str, payload: bytes) -> bytes:
    h = hashlib.sha256()
    h.update(config_json.encode("utf-8"))
    h.update(payload)
    return h.digest()


def _write_block(out: BinaryIO, name: str, values: np.ndarray) -> None:
    values = np.asarray(values)
    if values.dtype.itemsize not in _ELEMENT_TYPES or values.dtype.kind != "f":
        raise CheckpointError(f"block {name!r}: unsupported dtype {values.dtype}")
    encoded = name.encode("utf-8")
    out.write(struct.pack("<H", len(encoded)))
    out.write(encoded)
    out.write(struct.pack("<B", values.ndim))
    out.write(struct.pack(f"<{values.ndim}I", *values.shape))
    out.write(struct.pack("<B", values.dtype.itemsize))
    out.write(np.ascontiguousarray(values, dtype=_ELEMENT_TYPES[values.dtype.itemsize]).tobytes())


def _write_blocks(out: BinaryIO, blocks: Dict[str, np.ndarray]) -> None:
    out.write(struct.pack("<I", len(blocks)))
    for name, values in blocks.items():
        _write_block(out, name, values)


def encode_payload(cp: Checkpoint) -> bytes:
    out = io.BytesIO()
    _write_blocks(out, cp.params)

    out.write(struct.pack("<d", cp.momentum.momentum))
    _write_blocks(out, cp.momentum.params)

    out.write(struct.pack("<QQ", cp.adam.step, cp.adam.skipped_blocks))
    _write_blocks(out, cp.adam.m)
    _write_blocks(out, cp.adam.v)

    q = cp.queue
    out.write(struct.pack("<IIII", q.capacity, q.dim, q.cursor, q.fill))
    _write_block(out, "queue", q.buffer)
    return out.getvalue()


def encode_checkpoint(cp: Checkpoint) -> bytes:
    payload = encode_payload(cp)
    config = cp.config_json.encode("utf-8")
    digest = config_digest(cp.config_json, payload)
    return b"".join(
        (
            _HEADER.pack(MAGIC, FORMAT_VERSION, cp.step, digest),
            struct.pack("<I", len(config)),
            config,
            struct.pack("<Q", len(payload)),
            payload,
        )
    )


def save_checkpoint(path: str | os.PathLike[str], cp: Checkpoint) -> str:
    target = atomic_write_bytes(path, encode_checkpoint(cp))
    logger.info("Saved checkpoint at step %d to %s", cp.step, target)
    return target


class _Reader:
    def __init__(self, data: bytes, source: str) -> None:
        self.data = data
        self.offset = 0
        self.source = source

    def take(self, count: int) -> bytes:
        end = self.offset + count
        if end > len(self.data):
            raise TruncatedCheckpointError(
                f"{self.source}: needs {end} bytes, only {len(self.data)} present"
            )
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def block(self) -> Tuple[str, np.ndarray]:
        (name_len,) = self.unpack("<H")
        name = self.take(name_len).decode("utf-8")
        (ndim,) = self.unpack("<B")
        shape = self.unpack(f"<{ndim}I") if ndim else ()
        (itemsize,) = self.unpack("<B")
        if itemsize not in _ELEMENT_TYPES:
            raise CheckpointError(f"{self.source}: block {name!r} has element size {itemsize}")
        dtype = _ELEMENT_TYPES[itemsize]
        count = int(np.prod(shape)) if shape else 1
        raw = self.take(count * itemsize)
        values = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
        return name, values

    def blocks(self) -> Dict[str, np.ndarray]:
        (count,) = self.unpack("<I")
        result: Dict[str, np.ndarray] = {}
        for _ in range(count):
            name, values = self.block()
            result[name] = values
        return result


def decode_checkpoint(
    data: bytes, *, expected_config: Optional[str] = None, source: str = "<bytes>"
) -> Checkpoint:
    """Parse checkpoint bytes, checking magic, version, length and digest in that order."""
    head = data[:4]
    if head != MAGIC:
        if len(head) < 4 and MAGIC.startswith(head):
            raise TruncatedCheckpointError(f"{source}: only {len(data)} bytes")
        raise BadMagicError(f"{source}: not a checkpoint (magic {data[:4]!r})")
    reader = _Reader(data, source)
    _, version, step, digest = reader.unpack(_HEADER.format)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{source}: format version {version}, expected {FORMAT_VERSION}")
    (config_len,) = reader.unpack("<I")
    config_json = reader.take(config_len).decode("utf-8")
    (payload_len,) = reader.unpack("<Q")
    payload = reader.take(payload_len)

    if config_digest(config_json, payload) != digest:
        raise DigestMismatchError(f"{source}: payload digest does not match header")
    if expected_config is not None and config_digest(expected_config, payload) != digest:
        raise DigestMismatchError(f"{source}: checkpoint was written under a different config")

    body = _Reader(payload, source)
    params = body.blocks()
    (momentum,) = body.unpack("<d")
    momentum_params = body.blocks()
    adam_step, skipped = body.unpack("<QQ")
    m = body.blocks()
    v = body.blocks()
    capacity, dim, cursor, fill = body.unpack("<IIII")
    _, buffer = body.block()

    queue = MemoryQueue(capacity, dim, dtype=buffer.dtype.type)
    queue.restore(buffer, cursor, fill)
    return Checkpoint(
        step=step,
        config_json=config_json,
        params=params,
        momentum=MomentumState(momentum_params, momentum),
        adam=AdamState(m=m, v=v, step=adam_step, skipped_blocks=skipped),
        queue=queue,
    )


def load_checkpoint(path: str | os.PathLike[str], expected_config: Optional[str] = None) -> Checkpoint:
    source = Path(path)
    try:
        data = source.read_bytes()
    except OSError as exc:
        raise OSError(f"Failed to read checkpoint {source}: {exc}") from exc
    cp = decode_checkpoint(data, expected_config=expected_config, source=str(source))
    logger.debug("Loaded checkpoint %s at step %d", source, cp.step)
    return cp
