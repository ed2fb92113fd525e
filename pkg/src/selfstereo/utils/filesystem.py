"""Filesystem utilities."""
import csv
import os
from pathlib import Path
from typing import Iterable, Mapping, Sequence


def ensure_output_dir(output_dir: str | os.PathLike[str]) -> str:
    """Ensure output directory exists.

    Args:
        output_dir: Path to output directory

    Returns:
        Absolute path to output directory
    """
    path = Path(output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return str(path.resolve())


def atomic_write_bytes(path: str | os.PathLike[str], payload: bytes) -> str:
    """Write bytes through a sibling temp file so readers never see a partial file."""
    target = Path(path)
    ensure_output_dir(target.parent)
    tmp = target.with_name(target.name + ".tmp")
    try:
        with open(tmp, "wb") as f:
            f.write(payload)
        os.replace(tmp, target)
    except OSError as exc:
        raise OSError(f"Failed to write {target}: {exc}") from exc
    return str(target)


def write_csv(
    path: str | os.PathLike[str],
    header: Sequence[str],
    rows: Iterable[Mapping[str, object]],
    *,
    append: bool = False,
) -> str:
    """Write dict rows under a fixed header; in append mode the header is written once."""
    target = Path(path)
    ensure_output_dir(target.parent)
    write_header = not (append and target.exists() and target.stat().st_size > 0)
    with open(target, "a" if append else "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(header))
        if write_header:
            writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return str(target)
