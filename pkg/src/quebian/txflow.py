"""Execute-order-validate transaction pipeline.

Endorsement speculatively executes a chaincode function against a
committed snapshot and records the read/write set. After ordering,
validation assigns exactly one code per transaction with fixed
precedence (BAD_SIGNATURE, then ENDORSEMENT_POLICY_FAILURE, then
MVCC_CONFLICT, then VALID) and the committer applies VALID writes.

Chaincode runs in-process as registered pure functions over a snapshot;
reads never observe uncommitted writes, not even the transaction's own.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Callable

from . import keys
from .canonical import canonical_encode, hash_document, to_hex
from .ledger import (
    Block,
    BlockHeader,
    LedgerStore,
    Version,
    hash_block,
    tx_hash,
    tx_root,
)

VALID = "VALID"
MVCC_CONFLICT = "MVCC_CONFLICT"
ENDORSEMENT_POLICY_FAILURE = "ENDORSEMENT_POLICY_FAILURE"
BAD_SIGNATURE = "BAD_SIGNATURE"
BAD_FUNCTION = "BAD_FUNCTION"

VALIDATION_CODES = (
    VALID,
    MVCC_CONFLICT,
    ENDORSEMENT_POLICY_FAILURE,
    BAD_SIGNATURE,
    BAD_FUNCTION,
)

DID_KEY_PREFIX = "iam/did/"
REGISTER_DID_FUNCTION = "iam.register_did"


class ChaincodeError(Exception):
    """Domain-level rejection raised by a chaincode function.

    code is a short machine tag: auth | consent | not-found | duplicate |
    bad-request.
    """

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


class EndorsementRefused(Exception):
    """Proposal rejected at endorsement time; it is never ordered."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


@dataclass(frozen=True)
class TxProposal:
    tx_id: str
    function: str
    args: tuple
    submitter_did: str
    client_signature: str

    def signing_doc(self) -> dict:
        return {
            "args": list(self.args),
            "function": self.function,
            "submitterDid": self.submitter_did,
            "txId": self.tx_id,
        }

    def to_doc(self) -> dict:
        doc = self.signing_doc()
        doc["clientSignature"] = self.client_signature
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "TxProposal":
        return cls(
            tx_id=doc["txId"],
            function=doc["function"],
            args=tuple(doc["args"]),
            submitter_did=doc["submitterDid"],
            client_signature=doc["clientSignature"],
        )


def make_proposal(
    tx_id: str,
    function: str,
    payload: dict,
    submitter_did: str,
    signer: keys.SigningKey,
) -> TxProposal:
    """Build a proposal whose single argument is the canonical payload JSON."""
    args = (canonical_encode(payload).decode("utf-8"),)
    unsigned = {
        "args": list(args),
        "function": function,
        "submitterDid": submitter_did,
        "txId": tx_id,
    }
    signature = signer.sign_hex(canonical_encode(unsigned))
    return TxProposal(
        tx_id=tx_id,
        function=function,
        args=args,
        submitter_did=submitter_did,
        client_signature=signature,
    )


def proposal_payload(proposal: TxProposal) -> dict:
    try:
        payload = json.loads(proposal.args[0])
    except (IndexError, ValueError) as exc:
        raise ChaincodeError("bad-request", f"undecodable payload: {exc}") from exc
    if not isinstance(payload, dict):
        raise ChaincodeError("bad-request", "payload must be a JSON object")
    return payload


@dataclass(frozen=True)
class ReadWriteSet:
    reads: tuple  # ((key, Version | None), ...) sorted by key
    writes: tuple  # ((key, value document), ...) sorted by key

    def to_doc(self) -> dict:
        return {
            "reads": [
                {"key": k, "version": v.to_doc() if v is not None else None}
                for k, v in self.reads
            ],
            "writes": [{"key": k, "value": value} for k, value in self.writes],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ReadWriteSet":
        reads = tuple(
            (
                r["key"],
                Version.from_doc(r["version"]) if r["version"] is not None else None,
            )
            for r in doc["reads"]
        )
        writes = tuple((w["key"], w["value"]) for w in doc["writes"])
        return cls(reads=reads, writes=writes)

    def digest(self) -> bytes:
        return hash_document(self.to_doc())


@dataclass(frozen=True)
class Endorsement:
    endorser_id: str
    rwset_digest: str  # hex
    signature: str  # hex, over the raw digest bytes

    def to_doc(self) -> dict:
        return {
            "endorserId": self.endorser_id,
            "rwsetDigest": self.rwset_digest,
            "signature": self.signature,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Endorsement":
        return cls(
            endorser_id=doc["endorserId"],
            rwset_digest=doc["rwsetDigest"],
            signature=doc["signature"],
        )


@dataclass(frozen=True)
class EndorsedTransaction:
    proposal: TxProposal
    rwset: ReadWriteSet
    endorsements: tuple

    @property
    def tx_id(self) -> str:
        return self.proposal.tx_id

    def to_doc(self) -> dict:
        return {
            "proposal": self.proposal.to_doc(),
            "rwset": self.rwset.to_doc(),
            "endorsements": [e.to_doc() for e in self.endorsements],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "EndorsedTransaction":
        return cls(
            proposal=TxProposal.from_doc(doc["proposal"]),
            rwset=ReadWriteSet.from_doc(doc["rwset"]),
            endorsements=tuple(
                Endorsement.from_doc(e) for e in doc["endorsements"]
            ),
        )


@dataclass(frozen=True)
class EndorsementPolicy:
    k: int
    endorsers: tuple

    def __post_init__(self):
        if not 1 <= self.k <= len(self.endorsers):
            raise ValueError("policy requires 1 <= k <= len(endorsers)")


class ChaincodeContext:
    """Snapshot view handed to chaincode; records every read and write.

    get() always reads the committed snapshot: a transaction does not see
    its own writes. Duplicate reads of a key are recorded once; duplicate
    writes keep the last value.
    """

    def __init__(self, snapshot, submitter_did: str = ""):
        self._snapshot = snapshot
        self.submitter_did = submitter_did
        self._reads: dict[str, Version | None] = {}
        self._writes: dict[str, dict] = {}

    def get(self, key: str) -> dict | None:
        found = self._snapshot.get(key)
        if key not in self._reads:
            self._reads[key] = found[1] if found is not None else None
        if found is None:
            return None
        return json.loads(found[0].decode("utf-8"))

    def put(self, key: str, value: dict) -> None:
        canonical_encode(value)  # fail fast on unencodable documents
        self._writes[key] = value

    def range(self, prefix: str) -> list[tuple[str, dict]]:
        """Committed entries under a prefix; each returned key is a recorded read."""
        out = []
        for key, value, version in self._snapshot.scan(prefix):
            if key not in self._reads:
                self._reads[key] = version
            out.append((key, json.loads(value.decode("utf-8"))))
        return out

    def rwset(self) -> ReadWriteSet:
        return ReadWriteSet(
            reads=tuple(sorted(self._reads.items())),
            writes=tuple(sorted(self._writes.items())),
        )


ChaincodeFunction = Callable[[ChaincodeContext, dict], None]


class ChaincodeRegistry:
    """Function-name to chaincode-function table. Append-only by design:
    nothing here can remove or rewrite committed data."""

    def __init__(self):
        self._functions: dict[str, ChaincodeFunction] = {}

    def register(self, name: str, fn: ChaincodeFunction) -> None:
        if name in self._functions:
            raise ValueError(f"chaincode function {name} already registered")
        self._functions[name] = fn

    def get(self, name: str) -> ChaincodeFunction | None:
        return self._functions.get(name)

    def names(self) -> list[str]:
        return sorted(self._functions)


def _did_record(view_get, did: str) -> dict | None:
    found = view_get(DID_KEY_PREFIX + did)
    if found is None:
        return None
    return json.loads(found[0].decode("utf-8"))


def resolve_client_key(view_get, proposal: TxProposal) -> str | None:
    """Public key hex for the proposal's submitter.

    A registered DID always wins. An unregistered DID may only submit its
    own iam.register_did, verified against the key being registered
    (self-certifying bootstrap).
    """
    record = _did_record(view_get, proposal.submitter_did)
    if record is not None:
        return record.get("verificationKey")
    if proposal.function == REGISTER_DID_FUNCTION:
        try:
            payload = proposal_payload(proposal)
        except ChaincodeError:
            return None
        if payload.get("did") == proposal.submitter_did:
            key = payload.get("verificationKey")
            return key if isinstance(key, str) else None
    return None


def verify_client_signature(view_get, proposal: TxProposal) -> bool:
    key = resolve_client_key(view_get, proposal)
    if key is None:
        return False
    return keys.verify(
        key, canonical_encode(proposal.signing_doc()), proposal.client_signature
    )


def endorse(
    proposal: TxProposal,
    snapshot,
    registry: ChaincodeRegistry,
    endorser_id: str,
    endorser_key: keys.SigningKey,
) -> tuple[ReadWriteSet, Endorsement]:
    """Execute the proposal read-only against the snapshot and sign the rwset.

    Raises EndorsementRefused on a bad client signature, unknown function
    or chaincode rejection; a refused proposal is never ordered.
    """
    if not verify_client_signature(snapshot.get, proposal):
        raise EndorsementRefused("auth", "client signature does not verify")
    fn = registry.get(proposal.function)
    if fn is None:
        raise EndorsementRefused(
            BAD_FUNCTION, f"unknown chaincode function {proposal.function!r}"
        )
    ctx = ChaincodeContext(snapshot, submitter_did=proposal.submitter_did)
    try:
        fn(ctx, proposal_payload(proposal))
    except ChaincodeError as exc:
        raise EndorsementRefused(exc.code, exc.message) from exc
    rwset = ctx.rwset()
    digest = rwset.digest()
    endorsement = Endorsement(
        endorser_id=endorser_id,
        rwset_digest=to_hex(digest),
        signature=endorser_key.sign_hex(digest),
    )
    return rwset, endorsement


def check_endorsement_policy(
    tx: EndorsedTransaction, policy: EndorsementPolicy, view_get
) -> bool:
    """k distinct authorized endorsers, valid signatures, digests all equal
    to the transaction's recomputed rwset digest."""
    expected = to_hex(tx.rwset.digest())
    satisfied: set[str] = set()
    for endorsement in tx.endorsements:
        if endorsement.endorser_id not in policy.endorsers:
            continue
        if endorsement.rwset_digest != expected:
            return False
        record = _did_record(view_get, endorsement.endorser_id)
        if record is None:
            continue
        if not keys.verify(
            record.get("verificationKey", ""),
            bytes.fromhex(expected),
            endorsement.signature,
        ):
            return False
        satisfied.add(endorsement.endorser_id)
    return len(satisfied) >= policy.k


class _OverlayView:
    """Committed state plus the writes of earlier VALID txs in this block."""

    def __init__(self, state, height: int):
        self._state = state
        self._height = height
        self._pending: dict[str, tuple[bytes, Version]] = {}

    def get(self, key: str) -> tuple[bytes, Version] | None:
        if key in self._pending:
            return self._pending[key]
        return self._state.get(key)

    def current_version(self, key: str) -> Version | None:
        found = self.get(key)
        return found[1] if found is not None else None

    def apply(self, tx: EndorsedTransaction, tx_index: int) -> None:
        version = Version(height=self._height, tx_index=tx_index)
        for key, value in tx.rwset.writes:
            self._pending[key] = (canonical_encode(value), version)


def validate_block(
    txs: list[EndorsedTransaction],
    committed_state,
    policy: EndorsementPolicy | None,
    height: int,
) -> list[str]:
    """Assign one ValidationCode per transaction, in consensus order.

    policy=None skips the endorsement-policy check; that path exists only
    for the bootstrap block that registers the node identities.
    """
    overlay = _OverlayView(committed_state, height)
    codes = []
    for index, tx in enumerate(txs):
        code = VALID
        if not verify_client_signature(overlay.get, tx.proposal):
            code = BAD_SIGNATURE
        elif policy is not None and not check_endorsement_policy(
            tx, policy, overlay.get
        ):
            code = ENDORSEMENT_POLICY_FAILURE
        else:
            for key, seen_version in tx.rwset.reads:
                if overlay.current_version(key) != seen_version:
                    code = MVCC_CONFLICT
                    break
        codes.append(code)
        if code == VALID:
            overlay.apply(tx, index)
    return codes


class Committer:
    """Serial block builder: validates in consensus order, links the block
    onto the ledger and emits one commit event per block."""

    def __init__(
        self,
        store: LedgerStore,
        policy: EndorsementPolicy | None = None,
        clock: Callable[[], int] | None = None,
    ):
        self.store = store
        self.policy = policy
        self._clock = clock
        self._subscribers: list[Callable[[dict], None]] = []
        self._lock = threading.Lock()
        self.events: list[dict] = []

    def subscribe(self, callback: Callable[[dict], None]) -> None:
        self._subscribers.append(callback)

    def _now_ms(self) -> int:
        if self._clock is not None:
            return int(self._clock())
        import time

        return int(time.time() * 1000)

    def commit(
        self,
        txs: list[EndorsedTransaction],
        timestamp: int | None = None,
        policy_override: EndorsementPolicy | None = None,
        bootstrap: bool = False,
    ) -> Block | None:
        """Validate and append one block; empty batches are never committed."""
        if not txs:
            return None
        with self._lock:
            policy = None if bootstrap else (policy_override or self.policy)
            height = self.store.height + 1
            codes = validate_block(txs, self.store.state, policy, height)
            tx_docs = tuple(tx.to_doc() for tx in txs)
            header = BlockHeader(
                height=height,
                prev_hash=hash_block(self.store.tip_header()),
                tx_root=tx_root(tx_hash(doc) for doc in tx_docs),
                timestamp=timestamp if timestamp is not None else self._now_ms(),
            )
            block = Block(header=header, txs=tx_docs, validation=tuple(codes))
            self.store.append_block(block)
        event = {
            "height": height,
            "txIds": [tx.tx_id for tx in txs],
            "codes": codes,
        }
        self.events.append(event)
        for callback in self._subscribers:
            callback(event)
        return block

    def event_lines(self) -> list[str]:
        """Commit events as canonical-JSON lines (the external event stream)."""
        return [canonical_encode(ev).decode("utf-8") for ev in self.events]
