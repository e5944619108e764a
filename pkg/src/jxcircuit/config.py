"""Flat ``key = value`` experiment configs (a TOML-compatible subset).

One assignment per line; values are JSON-typed scalars or arrays
(strings double-quoted, booleans lowercase); ``#`` starts a full-line
comment.  Units are the package conventions: phases in radians, sigma_k
dimensionless.
"""

from __future__ import annotations

import json
from pathlib import Path

__all__ = ["parse_config_text", "load_config"]


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not sep or not key or not value:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError as exc:
            raise ValueError(
                f"{source}:{lineno}: cannot parse value {value!r} "
                "(use JSON-style scalars or lists)"
            ) from exc
    return out


def load_config(path) -> dict:
    return parse_config_text(Path(path).read_text(), source=str(path))
