"""Append-only hash-chained block store with a versioned world state.

Persistence is one append-only file of length-prefixed canonical-JSON
frames. Each frame carries the block document plus a digest over the
whole document; the digest is what makes validation flags and the tip
header tamper-evident (chain linkage alone only covers interior
headers, and the tx root only covers transaction bytes).

World state keeps the full per-key version history so that reads,
historical reads and replay checks are all served from one structure.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .canonical import (
    ZERO_HASH,
    canonical_encode,
    from_hex,
    hash_document,
    sha256,
    to_hex,
)

EMPTY_TX_ROOT = sha256(b"")


class LedgerError(Exception):
    """Base class for ledger failures."""


class ChainLinkageError(LedgerError):
    """Block does not extend the current tip (height gap or prevHash mismatch)."""


class LedgerIOError(LedgerError):
    """The backing store cannot be read or written (distinct from tampering)."""


@dataclass(frozen=True, order=True)
class Version:
    """(height, txIndex) of the transaction that wrote a key."""

    height: int
    tx_index: int

    def to_doc(self) -> dict:
        return {"height": self.height, "txIndex": self.tx_index}

    @classmethod
    def from_doc(cls, doc: dict) -> "Version":
        return cls(height=doc["height"], tx_index=doc["txIndex"])


@dataclass(frozen=True)
class BlockHeader:
    height: int
    prev_hash: bytes
    tx_root: bytes
    timestamp: int

    def to_doc(self) -> dict:
        return {
            "height": self.height,
            "prevHash": to_hex(self.prev_hash),
            "txRoot": to_hex(self.tx_root),
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "BlockHeader":
        return cls(
            height=doc["height"],
            prev_hash=from_hex(doc["prevHash"]),
            tx_root=from_hex(doc["txRoot"]),
            timestamp=doc["timestamp"],
        )


def hash_block(header: BlockHeader) -> bytes:
    """SHA-256 over the canonical encoding of the header. Pure."""
    return hash_document(header.to_doc())


def tx_root(tx_hashes: Iterable[bytes]) -> bytes:
    """Flat digest over the concatenated tx hashes, in block order."""
    return sha256(b"".join(tx_hashes))


@dataclass(frozen=True)
class Block:
    """A committed unit: header, ordered tx documents, per-tx validation flags."""

    header: BlockHeader
    txs: tuple  # tx documents (dicts), already canonical-shaped
    validation: tuple  # ValidationCode strings, positional with txs

    def __post_init__(self):
        if len(self.txs) != len(self.validation):
            raise LedgerError("validation flags must match txs positionally")

    def to_doc(self) -> dict:
        return {
            "header": self.header.to_doc(),
            "txs": list(self.txs),
            "validation": list(self.validation),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Block":
        return cls(
            header=BlockHeader.from_doc(doc["header"]),
            txs=tuple(doc["txs"]),
            validation=tuple(doc["validation"]),
        )


def genesis_block() -> Block:
    header = BlockHeader(
        height=0, prev_hash=ZERO_HASH, tx_root=EMPTY_TX_ROOT, timestamp=0
    )
    return Block(header=header, txs=(), validation=())


def tx_hash(tx_doc: dict) -> bytes:
    return hash_document(tx_doc)


def block_writes(block: Block) -> Iterator[tuple[str, bytes, Version]]:
    """Yield (key, value bytes, version) for every VALID tx write, in order."""
    from .txflow import VALID  # local import: txflow depends on this module

    for index, (tx, code) in enumerate(zip(block.txs, block.validation)):
        if code != VALID:
            continue
        version = Version(height=block.header.height, tx_index=index)
        for write in tx["rwset"]["writes"]:
            yield write["key"], canonical_encode(write["value"]), version


class WorldState:
    """Versioned key-value store; full history kept per key.

    Single committer, concurrent readers. Entries lists are append-only,
    so a reader that pins a height sees a consistent snapshot.
    """

    def __init__(self):
        self._entries: dict[str, list[tuple[bytes, Version]]] = {}
        self._height = -1
        self._lock = threading.Lock()

    @property
    def height(self) -> int:
        return self._height

    def apply_block(self, block: Block) -> None:
        with self._lock:
            for key, value, version in block_writes(block):
                self._entries.setdefault(key, []).append((value, version))
            self._height = block.header.height

    def get(self, key: str) -> tuple[bytes, Version] | None:
        """Current committed value and version, or None if absent."""
        history = self._entries.get(key)
        if not history:
            return None
        return history[-1]

    def history(self, key: str) -> list[tuple[bytes, Version]]:
        """All committed versions of a key, oldest first."""
        return list(self._entries.get(key, ()))

    def scan(self, prefix: str) -> list[tuple[str, bytes, Version]]:
        """All current entries whose key starts with prefix, sorted by key."""
        out = []
        for key in sorted(self._entries):
            if key.startswith(prefix):
                value, version = self._entries[key][-1]
                out.append((key, value, version))
        return out

    def snapshot(self) -> "StateSnapshot":
        with self._lock:
            return StateSnapshot(self, self._height)

    def entries_equal(self, other: "WorldState") -> bool:
        mine = {k: v[-1] for k, v in self._entries.items() if v}
        theirs = {k: v[-1] for k, v in other._entries.items() if v}
        return mine == theirs


class StateSnapshot:
    """Read-only view of the world state pinned at a committed height."""

    def __init__(self, state: WorldState, height: int):
        self._state = state
        self.height = height

    def get(self, key: str) -> tuple[bytes, Version] | None:
        for value, version in reversed(self._state._entries.get(key, ())):
            if version.height <= self.height:
                return value, version
        return None

    def scan(self, prefix: str) -> list[tuple[str, bytes, Version]]:
        out = []
        for key in sorted(self._state._entries):
            if not key.startswith(prefix):
                continue
            pinned = self.get(key)
            if pinned is not None:
                out.append((key, pinned[0], pinned[1]))
        return out


@dataclass
class VerifyResult:
    ok: bool
    first_bad_height: int | None = None
    reason: str = ""


def _frame_bytes(block: Block) -> bytes:
    block_doc = block.to_doc()
    frame = {"block": block_doc, "digest": to_hex(hash_document(block_doc))}
    payload = canonical_encode(frame)
    return str(len(payload)).encode("ascii") + b"\n" + payload + b"\n"


def _parse_frames(data: bytes) -> Iterator[tuple[int, dict | None]]:
    """Yield (frame_index, frame_doc) pairs; frame_doc is None on a broken frame.

    Any framing damage is reported as a bad frame at that index, never as
    an I/O error: the bytes were readable, they just fail verification.
    """
    import json

    offset = 0
    index = 0
    while offset < len(data):
        newline = data.find(b"\n", offset)
        if newline < 0:
            yield index, None
            return
        try:
            length = int(data[offset:newline].decode("ascii"))
            if length < 0:
                raise ValueError
        except (ValueError, UnicodeDecodeError):
            yield index, None
            return
        start = newline + 1
        end = start + length
        if end + 1 > len(data) or data[end : end + 1] != b"\n":
            yield index, None
            return
        try:
            doc = json.loads(data[start:end].decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            yield index, None
            return
        if not isinstance(doc, dict):
            yield index, None
            return
        yield index, doc
        offset = end + 1
        index += 1


def _check_frame(height: int, doc: dict, prev_header: BlockHeader | None) -> str:
    """Return "" if the frame is a well-linked block at this height, else a reason."""
    if set(doc) != {"block", "digest"}:
        return "malformed frame"
    block_doc = doc["block"]
    try:
        recomputed = to_hex(hash_document(block_doc))
    except Exception:
        return "unhashable block document"
    if recomputed != doc["digest"]:
        return "block digest mismatch"
    try:
        block = Block.from_doc(block_doc)
    except Exception:
        return "malformed block document"
    header = block.header
    if header.height != height:
        return "height out of sequence"
    if height == 0:
        if header.prev_hash != ZERO_HASH:
            return "genesis prevHash not zero"
    elif prev_header is None or header.prev_hash != hash_block(prev_header):
        return "prevHash does not match parent header"
    if header.tx_root != tx_root(tx_hash(tx) for tx in block.txs):
        return "txRoot mismatch"
    return ""


def verify_chain_bytes(data: bytes) -> VerifyResult:
    prev_header: BlockHeader | None = None
    height = -1
    for height, doc in _parse_frames(data):
        if doc is None:
            return VerifyResult(False, height, "unparseable frame")
        reason = _check_frame(height, doc, prev_header)
        if reason:
            return VerifyResult(False, height, reason)
        prev_header = BlockHeader.from_doc(doc["block"]["header"])
    return VerifyResult(True)


def verify_chain_file(path: str | Path) -> VerifyResult:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise LedgerIOError(str(exc)) from exc
    return verify_chain_bytes(data)


class LedgerStore:
    """The append-only block store. Opening an empty store commits genesis.

    With a path, every block is flushed to the file as a frame; without
    one the store is purely in-memory (simulator replicas).
    """

    def __init__(self, path: str | Path | None = None):
        self._path = Path(path) if path is not None else None
        self._blocks: list[Block] = []
        self.state = WorldState()
        self._lock = threading.RLock()
        self._load()

    def _load(self) -> None:
        if self._path is not None and self._path.exists():
            try:
                data = self._path.read_bytes()
            except OSError as exc:
                raise LedgerIOError(str(exc)) from exc
            if data:
                self._replay(data)
                return
        self._append(genesis_block())

    def _replay(self, data: bytes) -> None:
        prev_header: BlockHeader | None = None
        for height, doc in _parse_frames(data):
            if doc is None:
                raise LedgerError(f"corrupt ledger file at height {height}")
            reason = _check_frame(height, doc, prev_header)
            if reason:
                raise LedgerError(f"corrupt ledger file at height {height}: {reason}")
            block = Block.from_doc(doc["block"])
            self._blocks.append(block)
            self.state.apply_block(block)
            prev_header = block.header

    @property
    def height(self) -> int:
        with self._lock:
            return len(self._blocks) - 1

    def tip_header(self) -> BlockHeader:
        with self._lock:
            return self._blocks[-1].header

    def block(self, height: int) -> Block:
        with self._lock:
            if not 0 <= height < len(self._blocks):
                raise LedgerError(f"no block at height {height}")
            return self._blocks[height]

    def blocks(self) -> list[Block]:
        with self._lock:
            return list(self._blocks)

    def _append(self, block: Block) -> None:
        self._blocks.append(block)
        self.state.apply_block(block)
        if self._path is not None:
            try:
                with open(self._path, "ab") as fh:
                    fh.write(_frame_bytes(block))
                    fh.flush()
            except OSError as exc:
                raise LedgerIOError(str(exc)) from exc

    def append_block(self, block: Block) -> int:
        """Append a pre-validated block; returns the new chain height."""
        with self._lock:
            tip = self._blocks[-1].header
            if block.header.height != tip.height + 1:
                raise ChainLinkageError(
                    f"expected height {tip.height + 1}, got {block.header.height}"
                )
            if block.header.prev_hash != hash_block(tip):
                raise ChainLinkageError("prevHash does not match current tip")
            expected_root = tx_root(tx_hash(tx) for tx in block.txs)
            if block.header.tx_root != expected_root:
                raise ChainLinkageError("txRoot does not match block transactions")
            self._append(block)
            return block.header.height

    def read_state(self, key: str) -> tuple[bytes, Version] | None:
        return self.state.get(key)

    def read_history(self, key: str) -> list[tuple[bytes, Version]]:
        return self.state.history(key)

    def serialize(self) -> bytes:
        """The full ledger in file format (also used by in-memory stores)."""
        with self._lock:
            return b"".join(_frame_bytes(b) for b in self._blocks)

    def verify(self) -> VerifyResult:
        return verify_chain_bytes(self.serialize())
