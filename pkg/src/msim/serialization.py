"""Canonical wire serialization.

Self-describing, field-name-tagged byte format (UTF-8 JSON with sorted keys).
Only plain data crosses the wire: None, bool, int, float, str, list, and
dicts with string keys. Anything else fails fast with SerializationError at
dispatch time, so payload problems surface during local development instead
of on a remote deployment.
"""

from __future__ import annotations

import json
from typing import Any

from .errors import SerializationError

_SCALARS = (type(None), bool, int, float, str)


def _check(value: Any, path: str) -> None:
    if isinstance(value, _SCALARS):
        return
    if isinstance(value, list):
        for i, item in enumerate(value):
            _check(item, f"{path}[{i}]")
        return
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise SerializationError(
                    f"non-string dict key at {path}: {key!r}"
                )
            _check(item, f"{path}.{key}")
        return
    raise SerializationError(
        f"no serialization rule for {type(value).__name__} at {path}"
    )


def encode(value: Any) -> bytes:
    _check(value, "$")
    return json.dumps(value, sort_keys=True, separators=(",", ":")).encode("utf-8")


def decode(data: bytes) -> Any:
    try:
        return json.loads(data.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise SerializationError(str(exc)) from exc


def roundtrip(value: Any) -> Any:
    """Force a value through the canonical encoding, as a network would."""
    return decode(encode(value))
