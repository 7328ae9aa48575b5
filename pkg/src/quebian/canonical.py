"""Canonical JSON encoding and hashing.

Every hash in the system is computed over canonical bytes: object keys
sorted by UTF-8 byte order, no insignificant whitespace, UTF-8 output,
base-10 integers. Floats are rejected outright so that no NaN/rounding
ambiguity can ever reach a digest.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

HASH_SIZE = 32
ZERO_HASH = b"\x00" * HASH_SIZE


class CanonicalEncodingError(ValueError):
    """Raised when a document contains something we refuse to encode."""


def _check(value: Any, path: str) -> None:
    if value is None or isinstance(value, (str, bool)):
        return
    if isinstance(value, int):
        return
    if isinstance(value, float):
        raise CanonicalEncodingError(f"float at {path} is not canonically encodable")
    if isinstance(value, dict):
        for k, v in value.items():
            if not isinstance(k, str):
                raise CanonicalEncodingError(f"non-string key {k!r} at {path}")
            _check(v, f"{path}.{k}")
        return
    if isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            _check(v, f"{path}[{i}]")
        return
    raise CanonicalEncodingError(f"unsupported type {type(value).__name__} at {path}")


def canonical_encode(document: Any) -> bytes:
    """Encode a document (maps/lists/str/int/bool/None) to canonical bytes.

    Key order is UTF-8 byte order, which for Python strings equals code
    point order, so json's sort_keys gives the right answer.
    """
    _check(document, "$")
    text = json.dumps(
        document, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    )
    return text.encode("utf-8")


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def hash_document(document: Any) -> bytes:
    """SHA-256 over the canonical encoding of a document."""
    return sha256(canonical_encode(document))


def to_hex(digest: bytes) -> str:
    if len(digest) != HASH_SIZE:
        raise ValueError(f"expected {HASH_SIZE}-byte digest, got {len(digest)}")
    return digest.hex()


def from_hex(text: str) -> bytes:
    raw = bytes.fromhex(text)
    if len(raw) != HASH_SIZE:
        raise ValueError(f"expected {HASH_SIZE}-byte digest, got {len(raw)}")
    return raw
