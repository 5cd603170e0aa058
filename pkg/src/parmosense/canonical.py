"""Canonical document serialization shared by every wire and file format.

Canonical form: JSON, UTF-8, keys sorted lexicographically, no insignificant
whitespace. Byte-stable so golden tests and state digests can compare exact
bytes.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any


def dumps(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def dump_bytes(value: Any) -> bytes:
    return dumps(value).encode("utf-8")


def loads(text: str | bytes) -> Any:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return json.loads(text)


def digest(value: Any) -> str:
    """Hex SHA-256 of the canonical serialization."""
    return hashlib.sha256(dump_bytes(value)).hexdigest()
