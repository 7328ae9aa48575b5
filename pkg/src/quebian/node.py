"""Single-process node: ledger, chaincode, endorsers, solo ordering.

This is the live wiring used by the HTTP gateway and the CLI. Write
submissions run the full pipeline (endorse, order, validate, commit)
in-process; with batch_max_txs=1 a submission commits synchronously,
larger batches are cut by size or by the background ticker.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

from . import ehr, identity
from .consensus import BatchPolicy, OrderedBatch, SoloSequencer
from .keys import SigningKey
from .ledger import LedgerStore, VerifyResult, verify_chain_file
from .txflow import (
    VALID,
    ChaincodeRegistry,
    Committer,
    EndorsedTransaction,
    EndorsementPolicy,
    EndorsementRefused,
    TxProposal,
    endorse,
    make_proposal,
)

LEDGER_FILENAME = "ledger.qbl"
KEYS_FILENAME = "node-keys.json"


class OrderingTimeout(Exception):
    """The transaction was accepted for ordering but did not commit in time."""

    def __init__(self, tx_id: str):
        super().__init__(f"transaction {tx_id} not committed before timeout")
        self.tx_id = tx_id


@dataclass(frozen=True)
class NodeConfig:
    data_dir: str | None = None  # None: in-memory node
    endorser_count: int = 2
    policy_k: int = 1
    batch_max_txs: int = 1
    batch_wait_ms: int = 50
    commit_timeout_s: float = 10.0


@dataclass(frozen=True)
class CommitOutcome:
    tx_id: str
    height: int
    code: str


def _now_ms() -> int:
    return int(time.time() * 1000)


class Node:
    def __init__(self, config: NodeConfig = NodeConfig()):
        self.config = config
        data_dir = Path(config.data_dir) if config.data_dir else None
        if data_dir is not None:
            data_dir.mkdir(parents=True, exist_ok=True)
        self._keys = self._load_or_create_keys(data_dir)
        self.client_did = self._keys["client"]["did"]
        self.client_key = SigningKey.from_seed_hex(self._keys["client"]["seed"])
        self.endorsers = [
            (entry["did"], SigningKey.from_seed_hex(entry["seed"]))
            for entry in self._keys["endorsers"]
        ]
        self.registry = ChaincodeRegistry()
        identity.register_chaincode(self.registry)
        ehr.register_chaincode(self.registry)
        self.policy = EndorsementPolicy(
            k=min(config.policy_k, len(self.endorsers)),
            endorsers=tuple(did for did, _ in self.endorsers),
        )
        self.store = LedgerStore(data_dir / LEDGER_FILENAME if data_dir else None)
        self.committer = Committer(self.store, self.policy)
        self.orderer = SoloSequencer(
            BatchPolicy(config.batch_max_txs, config.batch_wait_ms), self._deliver
        )
        self._lock = threading.Lock()
        self._commit_cv = threading.Condition()
        self._results: dict[str, CommitOutcome] = {}
        self._ticker: threading.Thread | None = None
        self._stopping = False
        if self.store.height == 0:
            self._bootstrap()

    # -- identity material ----------------------------------------------------

    def _load_or_create_keys(self, data_dir: Path | None) -> dict:
        path = data_dir / KEYS_FILENAME if data_dir else None
        if path is not None and path.exists():
            return json.loads(path.read_text())
        keys = {
            "client": {"did": f"did:qb:{uuid.uuid4()}", "seed": SigningKey().seed_hex},
            "endorsers": [
                {"did": f"did:qb:{uuid.uuid4()}", "seed": SigningKey().seed_hex}
                for _ in range(self.config.endorser_count)
            ],
        }
        if path is not None:
            path.write_text(json.dumps(keys, indent=2))
        return keys

    def _bootstrap(self) -> None:
        """Height-1 config block: the node's own identities, self-certified."""
        txs = []
        actors = [(self.client_did, self.client_key, identity.ROLE_VERIFIER)] + [
            (did, key, identity.ROLE_ENDORSER) for did, key in self.endorsers
        ]
        snapshot = self.store.state.snapshot()
        for did, key, role in actors:
            proposal = make_proposal(
                f"bootstrap-{uuid.uuid4()}",
                "iam.register_did",
                {"did": did, "verificationKey": key.public_hex, "role": role},
                did,
                key,
            )
            endorser_did, endorser_key = self.endorsers[0]
            rwset, endo = endorse(
                proposal, snapshot, self.registry, endorser_did, endorser_key
            )
            txs.append(
                EndorsedTransaction(proposal=proposal, rwset=rwset, endorsements=(endo,))
            )
        block = self.committer.commit(txs, bootstrap=True)
        assert block is not None and set(block.validation) == {VALID}

    # -- pipeline -------------------------------------------------------------

    def _deliver(self, batch: OrderedBatch) -> None:
        block = self.committer.commit(list(batch.txs), timestamp=batch.timestamp)
        if block is None:
            return
        with self._commit_cv:
            for tx_doc, code in zip(block.txs, block.validation):
                tx_id = tx_doc["proposal"]["txId"]
                self._results[tx_id] = CommitOutcome(
                    tx_id=tx_id, height=block.header.height, code=code
                )
            self._commit_cv.notify_all()

    def endorse_proposal(self, proposal: TxProposal) -> EndorsedTransaction:
        """Run the proposal on this node's endorsers against committed state."""
        snapshot = self.store.state.snapshot()
        needed = self.endorsers[: self.policy.k]
        rwset = None
        endorsements = []
        for endorser_did, endorser_key in needed:
            rws, endo = endorse(
                proposal, snapshot, self.registry, endorser_did, endorser_key
            )
            rwset = rws if rwset is None else rwset
            endorsements.append(endo)
        return EndorsedTransaction(
            proposal=proposal, rwset=rwset, endorsements=tuple(endorsements)
        )

    def submit(self, proposal: TxProposal) -> CommitOutcome:
        """Endorse, order and wait for commitment. Raises EndorsementRefused
        on rejection at simulation time, OrderingTimeout if no commit lands."""
        tx = self.endorse_proposal(proposal)
        with self._lock:
            self.orderer.submit(tx, _now_ms())
        deadline = time.time() + self.config.commit_timeout_s
        with self._commit_cv:
            while proposal.tx_id not in self._results:
                remaining = deadline - time.time()
                if remaining <= 0:
                    raise OrderingTimeout(proposal.tx_id)
                self._commit_cv.wait(timeout=min(remaining, 0.05))
        return self._results[proposal.tx_id]

    def submit_function(self, function: str, payload: dict) -> CommitOutcome:
        """Build a node-client-signed proposal and drive it to commitment."""
        proposal = make_proposal(
            f"tx-{uuid.uuid4()}", function, payload, self.client_did, self.client_key
        )
        return self.submit(proposal)

    # -- background batching ---------------------------------------------------

    def start(self) -> None:
        if self._ticker is not None or self.config.batch_max_txs <= 1:
            return
        self._stopping = False

        def loop():
            interval = max(self.config.batch_wait_ms / 4000.0, 0.005)
            while not self._stopping:
                with self._lock:
                    self.orderer.tick(_now_ms())
                time.sleep(interval)

        self._ticker = threading.Thread(target=loop, daemon=True)
        self._ticker.start()

    def stop(self) -> None:
        self._stopping = True
        if self._ticker is not None:
            self._ticker.join(timeout=1)
            self._ticker = None

    # -- reads ------------------------------------------------------------------

    def resolver(self):
        return identity.state_resolver(self.store.state)

    def query_records(self, patient_id=None, symptom_id=None) -> list[dict]:
        if patient_id is not None:
            return ehr.query_by_patient(self.store.state, patient_id)
        if symptom_id is not None:
            return ehr.query_by_symptom(self.store.state, symptom_id)
        raise ValueError("query needs patientId or symptomId")

    def verify(self) -> VerifyResult:
        return self.store.verify()

    def metrics(self) -> dict:
        events = self.committer.events
        codes = [code for event in events for code in event["codes"]]
        return {
            "height": self.store.height,
            "committedTxs": len(codes),
            "validTxs": codes.count(VALID),
            "invalidTxs": len(codes) - codes.count(VALID),
            "pendingTxs": self.orderer.pending_count(),
            "chaincodeFunctions": self.registry.names(),
        }


def verify_ledger_path(path: str | Path) -> VerifyResult:
    return verify_chain_file(path)
