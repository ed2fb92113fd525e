"""Plain-text ``key = value`` files with dotted nested keys.

A ``#`` opens a comment at the start of a line or after whitespace; elsewhere
it is part of the value (``tag = run#3``).
"""
from __future__ import annotations

import re
from pathlib import Path
from typing import Any, Dict, Mapping

from selfstereo.errors import ConfigError

_COMMENT = re.compile(r"(?:^|\s)#")


def parse_keyvalue(text: str, *, source: str = "<string>") -> Dict[str, Any]:
    """Parse ``key = value`` lines into a nested dict.

    Comments follow the module rules, dotted keys nest (``contrastive.tau = 0.07``) and a
    value containing commas becomes a list of stripped strings. Values stay
    strings; the pydantic models coerce them.
    """
    result: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _COMMENT.split(raw, 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        parsed: Any = [v.strip() for v in value.split(",") if v.strip()] if "," in value else value

        node = result
        parts = key.split(".")
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"{source}:{lineno}: {part!r} is both a value and a section")
            node = child
        if isinstance(node.get(parts[-1]), dict):
            raise ConfigError(f"{source}:{lineno}: {key!r} is both a value and a section")
        node[parts[-1]] = parsed
    return result


def load_keyvalue(path: str | Path) -> Dict[str, Any]:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"Cannot read config file {p}: {exc}") from exc
    return parse_keyvalue(text, source=str(p))


def dump_keyvalue(data: Mapping[str, Any], prefix: str = "") -> str:
    """Inverse of :func:`parse_keyvalue` for dicts of scalars, sequences and dicts."""
    lines: list[str] = []
    for key, value in data.items():
        full = f"{prefix}{key}"
        if isinstance(value, Mapping):
            lines.append(dump_keyvalue(value, prefix=f"{full}.").rstrip("\n"))
        elif isinstance(value, (list, tuple)):
            joined = ", ".join(str(v) for v in value)
            # trailing comma keeps one-element and empty lists as lists
            lines.append(f"{full} = {joined}" if len(value) > 1 else f"{full} = {joined},")
        elif value is None:
            continue
        else:
            lines.append(f"{full} = {value}")
    return "\n".join(line for line in lines if line) + "\n"


def merge_overrides(base: Dict[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """Recursively merge ``overrides`` into a copy of ``base``; dotted keys are allowed."""
    merged: Dict[str, Any] = {k: (dict(v) if isinstance(v, dict) else v) for k, v in base.items()}
    for key, value in overrides.items():
        if value is None:
            continue
        parts = key.split(".")
        node = merged
        for part in parts[:-1]:
            child = node.get(part)
            child = dict(child) if isinstance(child, dict) else {}
            node[part] = child
            node = child
        if isinstance(value, Mapping) and isinstance(node.get(parts[-1]), dict):
            node[parts[-1]] = merge_overrides(node[parts[-1]], value)
        else:
            node[parts[-1]] = value
    return merged
