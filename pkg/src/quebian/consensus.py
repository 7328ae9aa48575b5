"""Pluggable ordering: a solo sequencer and normal-case PBFT.

Both engines turn submitted endorsed transactions into a totally ordered,
gap-free stream of batches. The solo sequencer is a single logical
crash-fault orderer (the desk-scale stand-in for a Kafka-backed service).
PBFT implements the three-phase normal case for n >= 3f+1 replicas with
2f+1 quorums; view change is out of scope, so a faulty primary shows up
as a liveness timeout, never as divergence.

Replica messages are authenticated with per-sender HMAC-SHA256 session
keys rather than public-key signatures; the protocol's classic normal-case
optimization, and fast enough to simulate thousands of batches.
"""

from __future__ import annotations

import hmac
import hashlib
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .canonical import canonical_encode, hash_document

PRE_PREPARE = "PRE_PREPARE"
PREPARE = "PREPARE"
COMMIT = "COMMIT"

SILENT = "SILENT"
EQUIVOCATE = "EQUIVOCATE"


class ConfigurationError(ValueError):
    pass


def quorum_size(n: int, f: int) -> int:
    """2f+1, defined only when n >= 3f+1."""
    if f < 0 or n < 3 * f + 1:
        raise ConfigurationError(f"n={n} cannot tolerate f={f} (need n >= 3f+1)")
    return 2 * f + 1


@dataclass(frozen=True)
class BatchPolicy:
    max_txs: int = 10
    max_wait_ms: int = 50

    def __post_init__(self):
        if self.max_txs < 1 or self.max_wait_ms < 0:
            raise ConfigurationError("batch policy requires max_txs >= 1, max_wait_ms >= 0")


@dataclass(frozen=True)
class OrderedBatch:
    seq: int  # 1-based, consecutive
    txs: tuple  # EndorsedTransaction, FIFO by arrival at the ordering node
    timestamp: int  # orderer clock at cut; becomes the block timestamp

    def to_doc(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "txs": [tx.to_doc() for tx in self.txs],
        }

    def digest_hex(self) -> str:
        return hash_document(self.to_doc()).hex()


def cut_batch(pool: deque, policy: BatchPolicy) -> list:
    """Remove and return up to max_txs transactions in FIFO order."""
    batch = []
    while pool and len(batch) < policy.max_txs:
        batch.append(pool.popleft())
    return batch


class _Pool:
    """FIFO pending pool with system-wide txId dedup."""

    def __init__(self):
        self.pending: deque = deque()
        self.seen: set[str] = set()
        self.oldest_arrival: int | None = None

    def add(self, tx, now_ms: int) -> bool:
        if tx.tx_id in self.seen:
            return False
        self.seen.add(tx.tx_id)
        if not self.pending:
            self.oldest_arrival = now_ms
        self.pending.append(tx)
        return True

    def take(self, policy: BatchPolicy, now_ms: int) -> list:
        batch = cut_batch(self.pending, policy)
        self.oldest_arrival = now_ms if self.pending else None
        return batch


class SoloSequencer:
    """Single-node ordering: dedup, FIFO, cut on size or timeout."""

    engine_id = "solo"

    def __init__(self, policy: BatchPolicy, deliver: Callable[[OrderedBatch], None]):
        self.policy = policy
        self._deliver = deliver
        self._pool = _Pool()
        self._next_seq = 1

    def submit(self, tx, now_ms: int = 0) -> bool:
        """Add to the pending pool; False if the txId was already submitted."""
        if not self._pool.add(tx, now_ms):
            return False
        if len(self._pool.pending) >= self.policy.max_txs:
            self._cut(now_ms)
        return True

    def tick(self, now_ms: int) -> None:
        """Timeout path: cut a partial batch once the oldest tx has waited."""
        if (
            self._pool.pending
            and self._pool.oldest_arrival is not None
            and now_ms - self._pool.oldest_arrival >= self.policy.max_wait_ms
        ):
            self._cut(now_ms)

    def flush(self, now_ms: int = 0) -> None:
        while self._pool.pending:
            self._cut(now_ms)

    def pending_count(self) -> int:
        return len(self._pool.pending)

    def _cut(self, now_ms: int) -> None:
        txs = self._pool.take(self.policy, now_ms)
        if not txs:
            return
        batch = OrderedBatch(seq=self._next_seq, txs=tuple(txs), timestamp=now_ms)
        self._next_seq += 1
        self._deliver(batch)


@dataclass(frozen=True)
class PbftMessage:
    kind: str
    view: int
    seq: int
    batch_digest: str
    sender_id: int
    signature: str
    batch_doc: dict | None = None  # PRE_PREPARE carries the batch body

    def signed_doc(self) -> dict:
        return {
            "batchDigest": self.batch_digest,
            "kind": self.kind,
            "senderId": self.sender_id,
            "seq": self.seq,
            "view": self.view,
        }


def replica_auth_key(cluster_secret: bytes, replica_id: int) -> bytes:
    return hashlib.sha256(cluster_secret + replica_id.to_bytes(4, "big")).digest()


def sign_message(auth_key: bytes, doc: dict) -> str:
    return hmac.new(auth_key, canonical_encode(doc), hashlib.sha256).hexdigest()


class PbftReplica:
    """Normal-case PBFT state machine for one replica (view fixed at 0).

    Message handlers return the list of outbound messages; the caller owns
    transport. A replica is *prepared* for (view, seq, digest) once it logs
    the matching PRE_PREPARE plus 2f PREPAREs from distinct replicas (its
    own counts; the pre-preparing primary never sends one), i.e. 2f+1
    participants including itself. Committed-local needs 2f+1 COMMITs
    including its own. Delivery is strictly in seq order with no gaps.
    """

    def __init__(
        self,
        replica_id: int,
        n: int,
        f: int,
        policy: BatchPolicy,
        deliver: Callable[[OrderedBatch], None],
        cluster_secret: bytes = b"quebian-pbft",
        view: int = 0,
    ):
        quorum_size(n, f)  # validates the configuration
        self.replica_id = replica_id
        self.n = n
        self.f = f
        self.view = view
        self.policy = policy
        self._deliver = deliver
        self._auth_keys = [replica_auth_key(cluster_secret, i) for i in range(n)]
        self._pool = _Pool()
        self._next_seq = 1
        self._pre_prepares: dict[int, PbftMessage] = {}
        self._prepares: dict[tuple[int, str], set[int]] = {}
        self._commits: dict[tuple[int, str], set[int]] = {}
        self._commit_sent: set[int] = set()
        self._committed: dict[int, OrderedBatch] = {}
        self._delivered_seq = 0
        self.equivocations_detected = 0

    @property
    def primary_id(self) -> int:
        return self.view % self.n

    @property
    def is_primary(self) -> bool:
        return self.replica_id == self.primary_id

    def _sign(self, doc: dict) -> str:
        return sign_message(self._auth_keys[self.replica_id], doc)

    def _authentic(self, msg: PbftMessage) -> bool:
        if not 0 <= msg.sender_id < self.n:
            return False
        expected = sign_message(self._auth_keys[msg.sender_id], msg.signed_doc())
        return hmac.compare_digest(expected, msg.signature)

    def _make(self, kind: str, seq: int, digest: str, batch_doc=None) -> PbftMessage:
        unsigned = {
            "batchDigest": digest,
            "kind": kind,
            "senderId": self.replica_id,
            "seq": seq,
            "view": self.view,
        }
        return PbftMessage(
            kind=kind,
            view=self.view,
            seq=seq,
            batch_digest=digest,
            sender_id=self.replica_id,
            signature=self._sign(unsigned),
            batch_doc=batch_doc,
        )

    # -- ordering input (primary only) --------------------------------------

    def submit(self, tx, now_ms: int = 0) -> tuple[bool, list[PbftMessage]]:
        """Primary-side client submission. Returns (accepted, outbound)."""
        if not self.is_primary:
            return False, []
        if not self._pool.add(tx, now_ms):
            return False, []
        if len(self._pool.pending) >= self.policy.max_txs:
            return True, self._cut(now_ms)
        return True, []

    def tick(self, now_ms: int) -> list[PbftMessage]:
        if (
            self.is_primary
            and self._pool.pending
            and self._pool.oldest_arrival is not None
            and now_ms - self._pool.oldest_arrival >= self.policy.max_wait_ms
        ):
            return self._cut(now_ms)
        return []

    def pending_count(self) -> int:
        return len(self._pool.pending)

    def _cut(self, now_ms: int) -> list[PbftMessage]:
        txs = self._pool.take(self.policy, now_ms)
        if not txs:
            return []
        batch = OrderedBatch(seq=self._next_seq, txs=tuple(txs), timestamp=now_ms)
        self._next_seq += 1
        doc = batch.to_doc()
        digest = batch.digest_hex()
        msg = self._make(PRE_PREPARE, batch.seq, digest, batch_doc=doc)
        # primary logs its own pre-prepare; it sends no PREPARE
        self._pre_prepares[batch.seq] = msg
        return [msg]

    # -- protocol handlers ---------------------------------------------------

    def on_preprepare(self, msg: PbftMessage) -> list[PbftMessage]:
        """Accept from the view's primary, bind seq->digest, answer PREPARE."""
        if msg.kind != PRE_PREPARE or msg.view != self.view:
            return []
        if msg.sender_id != self.primary_id or not self._authentic(msg):
            return []
        if msg.batch_doc is None or hash_document(msg.batch_doc).hex() != msg.batch_digest:
            return []
        bound = self._pre_prepares.get(msg.seq)
        if bound is not None:
            if bound.batch_digest != msg.batch_digest:
                self.equivocations_detected += 1
            return []
        self._pre_prepares[msg.seq] = msg
        out = []
        if not self.is_primary:
            prepare = self._make(PREPARE, msg.seq, msg.batch_digest)
            self._prepares.setdefault((msg.seq, msg.batch_digest), set()).add(
                self.replica_id
            )
            out.append(prepare)
        out.extend(self._advance(msg.seq, msg.batch_digest))
        return out

    def on_prepare(self, msg: PbftMessage) -> list[PbftMessage]:
        if msg.kind != PREPARE or msg.view != self.view:
            return []
        if msg.sender_id == self.primary_id or not self._authentic(msg):
            return []
        self._prepares.setdefault((msg.seq, msg.batch_digest), set()).add(msg.sender_id)
        return self._advance(msg.seq, msg.batch_digest)

    def on_commit(self, msg: PbftMessage) -> list[PbftMessage]:
        if msg.kind != COMMIT or msg.view != self.view:
            return []
        if not self._authentic(msg):
            return []
        self._commits.setdefault((msg.seq, msg.batch_digest), set()).add(msg.sender_id)
        return self._advance(msg.seq, msg.batch_digest)

    def on_message(self, msg: PbftMessage) -> list[PbftMessage]:
        handler = {
            PRE_PREPARE: self.on_preprepare,
            PREPARE: self.on_prepare,
            COMMIT: self.on_commit,
        }.get(msg.kind)
        return handler(msg) if handler else []

    # -- predicates ----------------------------------------------------------

    def _is_prepared(self, seq: int, digest: str) -> bool:
        bound = self._pre_prepares.get(seq)
        if bound is None or bound.batch_digest != digest:
            return False
        return len(self._prepares.get((seq, digest), ())) >= 2 * self.f

    def _advance(self, seq: int, digest: str) -> list[PbftMessage]:
        """Re-evaluate prepared/committed after any log change."""
        out = []
        if self._is_prepared(seq, digest) and seq not in self._commit_sent:
            self._commit_sent.add(seq)
            commit = self._make(COMMIT, seq, digest)
            self._commits.setdefault((seq, digest), set()).add(self.replica_id)
            out.append(commit)
        if (
            seq > self._delivered_seq
            and seq not in self._committed
            and self._is_prepared(seq, digest)
            and len(self._commits.get((seq, digest), ())) >= 2 * self.f + 1
        ):
            batch_doc = self._pre_prepares[seq].batch_doc
            from .txflow import EndorsedTransaction  # cycle-free local import

            self._committed[seq] = OrderedBatch(
                seq=batch_doc["seq"],
                txs=tuple(
                    EndorsedTransaction.from_doc(doc) for doc in batch_doc["txs"]
                ),
                timestamp=batch_doc["timestamp"],
            )
            self._drain()
        return out

    def _drain(self) -> None:
        while self._delivered_seq + 1 in self._committed:
            self._delivered_seq += 1
            self._deliver(self._committed.pop(self._delivered_seq))
