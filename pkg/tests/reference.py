"""Throwaway reference implementations used as independent oracles.

Nothing here imports the canonical encoder under test; encoding is done
with hand-rolled string building so a bug in the main path cannot hide.
"""

import hashlib


def _escape(text):
    out = []
    for ch in text:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif ch == "\r":
            out.append("\\r")
        elif ch == "\b":
            out.append("\\b")
        elif ch == "\f":
            out.append("\\f")
        elif ord(ch) < 0x20:
            out.append("\\u%04x" % ord(ch))
        else:
            out.append(ch)
    return '"' + "".join(out) + '"'


def reference_encode(value):
    """Independent canonical JSON: sorted keys, no whitespace, UTF-8."""
    if value is None:
        return b"null"
    if value is True:
        return b"true"
    if value is False:
        return b"false"
    if isinstance(value, int):
        return str(value).encode()
    if isinstance(value, str):
        return _escape(value).encode("utf-8")
    if isinstance(value, (list, tuple)):
        return b"[" + b",".join(reference_encode(v) for v in value) + b"]"
    if isinstance(value, dict):
        # sort by UTF-8 bytes of the key, the byte-order rule itself
        items = sorted(value.items(), key=lambda kv: kv[0].encode("utf-8"))
        return (
            b"{"
            + b",".join(
                _escape(k).encode("utf-8") + b":" + reference_encode(v)
                for k, v in items
            )
            + b"}"
        )
    raise TypeError(f"reference encoder got {type(value).__name__}")


def reference_sha256_hex(data):
    return hashlib.sha256(data).hexdigest()
