"""PFM float maps and 16-bit binary PGM export."""
from __future__ import annotations

import os
import re
from pathlib import Path

import numpy as np

from selfstereo.errors import PfmHeaderError, PfmScaleError, PfmTruncatedError, ShapeError
from selfstereo.utils.filesystem import atomic_write_bytes

_HEADER = re.compile(rb"\A(PF|Pf)\s+(\d+)\s+(\d+)\s+(\S+)\s")
PGM_MAXVAL = 65535


def read_pfm(data: bytes) -> np.ndarray:
    """Decode PFM bytes into ``[H,W]`` (``Pf``) or ``[3,H,W]`` (``PF``) float32."""
    match = _HEADER.match(data)
    if match is None:
        raise PfmHeaderError(f"malformed PFM header: {data[:32]!r}")
    kind, width, height, scale_text = match.groups()
    width, height = int(width), int(height)
    if width < 1 or height < 1:
        raise PfmHeaderError(f"PFM dimensions must be positive, got {width}x{height}")
    try:
        scale = float(scale_text)
    except ValueError as exc:
        raise PfmHeaderError(f"PFM scale is not a number: {scale_text!r}") from exc
    if scale == 0 or not np.isfinite(scale):
        raise PfmScaleError(f"PFM scale must be finite and nonzero, got {scale_text.decode(errors='replace')}")

    channels = 3 if kind == b"PF" else 1
    count = width * height * channels
    available = (len(data) - match.end()) // 4
    if available < count:
        raise PfmTruncatedError(f"PFM payload holds {available} floats, header needs {count}")
    endian = "<" if scale < 0 else ">"
    raster = np.frombuffer(data, dtype=f"{endian}f4", count=count, offset=match.end())
    image = np.flipud(raster.reshape(height, width, channels)).astype(np.float32)
    if channels == 1:
        return np.ascontiguousarray(image[:, :, 0])
    return np.ascontiguousarray(image.transpose(2, 0, 1))


def write_pfm(image: np.ndarray) -> bytes:
    """Encode ``[H,W]`` or ``[3,H,W]`` as little-endian PFM (scale -1.0)."""
    arr = np.asarray(image)
    if arr.ndim == 2:
        kind, hwc = "Pf", arr[:, :, None]
    elif arr.ndim == 3 and arr.shape[0] == 3:
        kind, hwc = "PF", arr.transpose(1, 2, 0)
    else:
        raise ShapeError(f"PFM stores [H,W] or [3,H,W] arrays, got shape {arr.shape}")
    height, width = hwc.shape[:2]
    header = f"{kind}\n{width} {height}\n-1.0\n".encode("ascii")
    return header + np.flipud(hwc).astype("<f4").tobytes()


def write_pgm16(disparity: np.ndarray, scale: float) -> bytes:
    """Binary 16-bit PGM of ``round(clip(map * scale, 0, 65535))``, big-endian samples."""
    if scale <= 0:
        raise ValueError(f"PGM scale must be positive, got {scale}")
    arr = np.asarray(disparity, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"PGM export needs an [H,W] map, got shape {arr.shape}")
    height, width = arr.shape
    values = np.rint(np.clip(np.nan_to_num(arr * scale), 0, PGM_MAXVAL)).astype(">u2")
    return f"P5\n{width} {height}\n{PGM_MAXVAL}\n".encode("ascii") + values.tobytes()


def load_pfm(path: str | os.PathLike[str]) -> np.ndarray:
    p = Path(path)
    try:
        data = p.read_bytes()
    except OSError as exc:
        raise OSError(f"Cannot read PFM file {p}: {exc}") from exc
    return read_pfm(data)


def save_pfm(path: str | os.PathLike[str], image: np.ndarray) -> str:
    return atomic_write_bytes(path, write_pfm(image))


def save_pgm16(path: str | os.PathLike[str], disparity: np.ndarray, scale: float) -> str:
    return atomic_write_bytes(path, write_pgm16(disparity, scale))
