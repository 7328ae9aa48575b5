"""Deterministic in-process multi-node simulation.

Logically concurrent nodes (client, endorser fleet, ordering service,
committing peers) are scheduled on a single-threaded virtual-time event
loop: identical seed and config give a byte-identical transcript. The
harness measures TPS, submit-to-commit latency and conflict rates, runs
byzantine-fault scenarios against PBFT, and compares the
execute-order-validate pipeline against a serial order-execute baseline.

All randomness flows through seeded streams (network, workload keys,
identifiers), so changing one knob, e.g. the conflict rate, never
perturbs the draws of the others.
"""

from __future__ import annotations

import dataclasses
import hashlib
import heapq
import itertools
import math
import random
from dataclasses import dataclass, field

from . import ehr, identity
from .canonical import canonical_encode, hash_document
from .consensus import (
    EQUIVOCATE,
    PRE_PREPARE,
    SILENT,
    BatchPolicy,
    OrderedBatch,
    PbftReplica,
    SoloSequencer,
    quorum_size,
)
from .keys import SigningKey
from .ledger import Block, BlockHeader, LedgerStore, hash_block, tx_hash, tx_root
from .txflow import (
    MVCC_CONFLICT,
    VALID,
    ChaincodeRegistry,
    Committer,
    EndorsedTransaction,
    EndorsementPolicy,
    EndorsementRefused,
    ReadWriteSet,
    endorse,
    make_proposal,
)

MAX_SUBMIT_ATTEMPTS = 3  # bounded client retry on lossy links


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    endorsers: int = 4
    policy_k: int = 1
    orderer: str = "solo"  # "solo" | "pbft"
    n: int = 4
    f: int = 1
    batch_max_txs: int = 10
    batch_wait_ms: int = 50
    latency_ms_range: tuple = (1, 5)
    drop_rate: float = 0.0
    byzantine: dict = field(default_factory=dict)  # replica id -> SILENT | EQUIVOCATE
    exec_cost_ms: int = 5
    arrival_interval_ms: int = 1
    client_window: int = 25
    liveness_factor: int = 1000

    def validate(self) -> None:
        if self.orderer not in ("solo", "pbft"):
            raise SimulationError(f"unknown orderer {self.orderer!r}")
        if self.orderer == "pbft":
            try:
                quorum_size(self.n, self.f)
            except Exception as exc:
                raise SimulationError(str(exc)) from exc
            for replica, behavior in self.byzantine.items():
                if not 0 <= int(replica) < self.n:
                    raise SimulationError(f"byzantine target {replica} out of range")
                if behavior not in (SILENT, EQUIVOCATE):
                    raise SimulationError(f"unknown byzantine behavior {behavior!r}")
        if not 0 <= self.drop_rate < 1:
            raise SimulationError("dropRate must be in [0, 1)")
        lo, hi = self.latency_ms_range
        if lo < 0 or hi < lo:
            raise SimulationError("latencyMsRange must be 0 <= min <= max")
        if self.endorsers < 1 or self.exec_cost_ms < 0 or self.client_window < 1:
            raise SimulationError("bad endorser/exec/window configuration")

    def to_doc(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["latency_ms_range"] = list(self.latency_ms_range)
        doc["byzantine"] = {str(k): v for k, v in self.byzantine.items()}
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "SimConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs = {k: v for k, v in doc.items() if k in known}
        if "latency_ms_range" in kwargs:
            kwargs["latency_ms_range"] = tuple(kwargs["latency_ms_range"])
        if "byzantine" in kwargs:
            kwargs["byzantine"] = {int(k): v for k, v in kwargs["byzantine"].items()}
        return cls(**kwargs)


@dataclass(frozen=True)
class Workload:
    tx_count: int = 100
    key_count: int = 10
    conflict_rate: float = 0.0

    def validate(self) -> None:
        if self.tx_count < 0 or self.key_count < 1:
            raise SimulationError("workload needs tx_count >= 0 and key_count >= 1")
        if not 0 <= self.conflict_rate <= 1:
            raise SimulationError("conflict_rate must be in [0, 1]")

    def to_doc(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_doc(cls, doc: dict) -> "Workload":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in doc.items() if k in known})


@dataclass
class Metrics:
    tps: float = 0.0
    latency_ms: dict = field(default_factory=dict)  # p50 / p95 / p99
    invalid_rate: float = 0.0
    equivocations_detected: int = 0
    valid_count: int = 0
    committed_count: int = 0
    duration_ms: int = 0
    outcome: str = "completed"  # completed | liveness_timeout | empty
    safety: str = "ok"  # ok | divergence | out-of-model

    def to_doc(self) -> dict:
        return dataclasses.asdict(self)


def percentile(samples: list, q: float) -> int:
    """Nearest-rank percentile; 0 for an empty sample set."""
    if not samples:
        return 0
    ordered = sorted(samples)
    rank = max(1, math.ceil(q * len(ordered)))
    return ordered[rank - 1]


def sim_key(seed: int, label: str) -> SigningKey:
    return SigningKey(hashlib.sha256(f"sim:{seed}:{label}".encode()).digest())


class EventLoop:
    def __init__(self):
        self._queue = []
        self._counter = itertools.count()
        self.now = 0

    def schedule(self, delay_ms: int, fn) -> None:
        heapq.heappush(self._queue, (self.now + delay_ms, next(self._counter), fn))

    def run(self, horizon_fn=None, max_events: int = 5_000_000) -> None:
        """Process events in time order; stop once the next event lies past
        the (progress-extended) liveness horizon."""
        processed = 0
        while self._queue:
            if horizon_fn is not None and self._queue[0][0] > horizon_fn():
                break
            when, _, fn = heapq.heappop(self._queue)
            self.now = max(self.now, when)
            fn()
            processed += 1
            if processed > max_events:
                raise SimulationError("event budget exhausted; runaway schedule")


# ---------------------------------------------------------------------------
# fixture environment shared by every node


@dataclass
class Actor:
    did: str
    key: SigningKey
    credential: dict | None = None


class Environment:
    """Deterministic actors plus the setup blocks every peer replays."""

    def __init__(self, config: SimConfig, workload: Workload):
        self.config = config
        self.workload = workload
        seed = config.seed
        self.registry = ChaincodeRegistry()
        identity.register_chaincode(self.registry)
        ehr.register_chaincode(self.registry)
        self.client = Actor("did:qb:sim-client", sim_key(seed, "client"))
        self.endorser_actors = [
            Actor(f"did:qb:sim-endorser-{i}", sim_key(seed, f"end{i}"))
            for i in range(config.endorsers)
        ]
        self.policy = EndorsementPolicy(
            k=min(config.policy_k, config.endorsers),
            endorsers=tuple(a.did for a in self.endorser_actors),
        )
        self.issuer = Actor("did:qb:sim-issuer", sim_key(seed, "issuer"))
        self.doctor = Actor("did:qb:sim-doctor", sim_key(seed, "doctor"))
        self.patient_ids = [f"P{i:03d}" for i in range(workload.key_count)]
        self.patients = {
            pid: Actor(f"did:qb:sim-patient-{pid}", sim_key(seed, f"pat-{pid}"))
            for pid in self.patient_ids
        }
        self._tx_counter = itertools.count()
        self.rng_ids = random.Random((seed << 2) ^ 0x1D5)
        self.setup_blocks: list[tuple[list, bool]] = []  # (txs, bootstrap)
        self._build_setup()

    def next_tx_id(self) -> str:
        return f"sim-tx-{next(self._tx_counter):06d}"

    def _proposal(self, function, payload, actor):
        return make_proposal(self.next_tx_id(), function, payload, actor.did, actor.key)

    def _endorse_against(self, store: LedgerStore, proposal) -> EndorsedTransaction:
        snapshot = store.state.snapshot()
        actor = self.endorser_actors[0]
        rwset, endo = endorse(proposal, snapshot, self.registry, actor.did, actor.key)
        return EndorsedTransaction(proposal=proposal, rwset=rwset, endorsements=(endo,))

    def _build_setup(self) -> None:
        """Register every identity and grant every consent, one conflict-free
        block at a time, against a scratch store; peers replay the result."""
        scratch = LedgerStore()
        committer = Committer(scratch, None, clock=lambda: 0)

        def commit(proposals, bootstrap=False):
            txs = [self._endorse_against(scratch, p) for p in proposals]
            block = committer.commit(txs, timestamp=0, bootstrap=bootstrap)
            assert set(block.validation) == {VALID}, block.validation
            self.setup_blocks.append((txs, bootstrap))

        def did(actor, role):
            return self._proposal(
                "iam.register_did",
                {"did": actor.did, "verificationKey": actor.key.public_hex, "role": role},
                actor,
            )

        commit(
            [did(self.client, "VERIFIER")]
            + [did(a, "ENDORSER") for a in self.endorser_actors],
            bootstrap=True,
        )
        commit([did(self.issuer, "ISSUER")])
        commit(
            [
                self._proposal(
                    "iam.publish_schema",
                    {
                        "issuerDid": self.issuer.did,
                        "schemaId": sid,
                        "name": sid,
                        "version": "1.0",
                        "attrNames": attrs,
                    },
                    self.issuer,
                )
                for sid, attrs in [
                    ("MD-License", ["name", "licenseNo", "hospitalId"]),
                    ("Patient-Card", ["name", "patientRef", "hospitalId"]),
                ]
            ]
        )
        commit(
            [
                self._proposal(
                    "iam.publish_cred_def",
                    {
                        "credDefId": f"cd-{sid}",
                        "issuerDid": self.issuer.did,
                        "schemaId": sid,
                    },
                    self.issuer,
                )
                for sid in ("MD-License", "Patient-Card")
            ]
        )
        commit(
            [
                self._proposal(
                    "ehr.register_hospital",
                    {
                        "hospitalId": "H001",
                        "address": "1 Sim Way",
                        "phone": "555-0199",
                        "departments": ["general"],
                    },
                    self.client,
                )
            ]
        )
        commit([did(self.doctor, "HOLDER")])
        commit(
            [
                self._proposal(
                    "ehr.register_doctor",
                    {
                        "doctorId": "D01",
                        "did": self.doctor.did,
                        "hospitalId": "H001",
                        "demographics": {"name": "Dr. Sim"},
                    },
                    self.client,
                )
            ]
        )
        commit([did(a, "HOLDER") for a in self.patients.values()])

        resolver = identity.state_resolver(scratch.state)
        self.doctor.credential = identity.issue_credential(
            self.issuer.key,
            "cd-MD-License",
            self.doctor.did,
            {"name": "Dr. Sim", "licenseNo": "L-SIM", "hospitalId": "H001"},
            resolver,
            cred_id="cred-sim-doctor",
            rng=self.rng_ids,
        )
        # patient registrations and consent grants each touch a shared
        # document (hospital roster, doctor roster): one per block
        for pid in self.patient_ids:
            commit(
                [
                    self._proposal(
                        "ehr.register_patient",
                        {
                            "patientId": pid,
                            "did": self.patients[pid].did,
                            "hospitalId": "H001",
                            "demographics": {},
                        },
                        self.client,
                    )
                ]
            )
        for pid in self.patient_ids:
            actor = self.patients[pid]
            actor.credential = identity.issue_credential(
                self.issuer.key,
                "cd-Patient-Card",
                actor.did,
                {"name": pid, "patientRef": pid, "hospitalId": "H001"},
                resolver,
                cred_id=f"cred-sim-{pid}",
                rng=self.rng_ids,
            )
            commit(
                [
                    self._proposal(
                        "ehr.grant_consent",
                        {
                            "patientId": pid,
                            "doctorId": "D01",
                            "presentation": identity.create_presentation(
                                actor.credential,
                                [],  # possession-only: nothing to disclose on-ledger
                                identity.new_nonce(self.rng_ids),
                                actor.key,
                            ),
                        },
                        self.client,
                    )
                ]
            )

    def replay_setup(self, committer: Committer) -> None:
        for txs, bootstrap in self.setup_blocks:
            committer.commit(txs, timestamp=0, bootstrap=bootstrap)

    def key_sequence(self) -> list[str]:
        """Patient per transaction; conflict_rate is the probability that a
        transaction reuses the previous key, otherwise strict round-robin.
        Round-robin spacing (key_count) exceeds the client window, so a
        zero-rate workload cannot produce MVCC conflicts."""
        rng = random.Random((self.config.seed << 2) ^ 0x2B7)
        keys: list[str] = []
        pointer = 0
        for i in range(self.workload.tx_count):
            if i > 0 and rng.random() < self.workload.conflict_rate:
                keys.append(keys[-1])
            else:
                keys.append(self.patient_ids[pointer % len(self.patient_ids)])
                pointer += 1
        return keys

    def append_payloads(self) -> list[dict]:
        payloads = []
        for i, pid in enumerate(self.key_sequence()):
            payloads.append(
                {
                    "recordId": f"R{i:06d}",
                    "patientId": pid,
                    "doctorId": "D01",
                    "hospitalId": "H001",
                    "symptomIds": [f"S{i:06d}"],
                    "note": f"visit {i}",
                    "presentation": identity.create_presentation(
                        self.doctor.credential,
                        [],
                        identity.new_nonce(self.rng_ids),
                        self.doctor.key,
                    ),
                }
            )
        return payloads


# ---------------------------------------------------------------------------
# the execute-order-validate pipeline simulation


class Peer:
    """A committing node with its own ledger copy."""

    def __init__(self, env: Environment, loop: EventLoop):
        self.store = LedgerStore()
        self.committer = Committer(self.store, env.policy, clock=lambda: loop.now)
        env.replay_setup(self.committer)


class Simulation:
    def __init__(
        self, config: SimConfig, workload: Workload, env: Environment | None = None
    ):
        config.validate()
        workload.validate()
        self.config = config
        self.workload = workload
        self.env = env or Environment(config, workload)
        self.loop = EventLoop()
        self.rng_net = random.Random((config.seed << 2) ^ 0x3C9)
        self.transcript: list[dict] = []
        self.submit_time: dict[str, int] = {}
        self.commit_time: dict[str, int] = {}
        self.codes: dict[str, str] = {}
        self._endorser_busy = [0] * config.endorsers
        self._collected: dict[str, list] = {}
        self._attempts: dict[str, int] = {}
        self._payloads: list[dict] = []
        self._proposals: dict[str, object] = {}
        self._next_payload = 0
        self._next_release = 0
        self._in_flight: set[str] = set()
        self._gave_up: set[str] = set()
        self._tick_armed = False
        self._last_progress = 0
        # FIFO commits + a window no wider than the key rotation means a
        # zero-conflict-rate workload can never produce an MVCC conflict
        self._window = min(config.client_window, workload.key_count)

        if config.orderer == "solo":
            self.peers = [Peer(self.env, self.loop)]
            self.engine = SoloSequencer(
                BatchPolicy(config.batch_max_txs, config.batch_wait_ms),
                self._on_solo_batch,
            )
            self.replicas: list[PbftReplica] = []
            self.honest_peers = [0]
        else:
            self.peers = [Peer(self.env, self.loop) for _ in range(config.n)]
            self.replicas = [
                PbftReplica(
                    i,
                    config.n,
                    config.f,
                    BatchPolicy(config.batch_max_txs, config.batch_wait_ms),
                    deliver=self._peer_deliver(i),
                    cluster_secret=f"sim-{config.seed}".encode(),
                )
                for i in range(config.n)
            ]
            self.honest_peers = [i for i in range(config.n) if i not in config.byzantine]
        self.metrics_peer = self.honest_peers[0]
        self.peers[self.metrics_peer].committer.subscribe(self._on_commit_event)

    # -- plumbing ------------------------------------------------------------

    def log(self, ev: str, **fields) -> None:
        entry = {"t": self.loop.now, "ev": ev}
        entry.update(fields)
        self.transcript.append(entry)

    def latency(self) -> int:
        lo, hi = self.config.latency_ms_range
        return self.rng_net.randint(lo, hi)

    def dropped(self) -> bool:
        return self.config.drop_rate > 0 and self.rng_net.random() < self.config.drop_rate

    def endorse_state(self) -> LedgerStore:
        """Endorsers run against the anchor peer's committed state (the solo
        peer, or the state colocated with the primary under PBFT)."""
        return self.peers[0].store

    def _retry_interval(self) -> int:
        lo, hi = self.config.latency_ms_range
        return 5 * (4 * hi + self.config.exec_cost_ms + self.config.batch_wait_ms + 1)

    # -- client --------------------------------------------------------------

    def _submit_next(self) -> None:
        while (
            self._next_payload < len(self._payloads)
            and len(self._in_flight) < self._window
        ):
            index = self._next_payload
            self._next_payload += 1
            proposal = make_proposal(
                f"sim-append-{index:06d}",
                "ehr.append_record",
                self._payloads[index],
                self.env.client.did,
                self.env.client.key,
            )
            self._proposals[proposal.tx_id] = proposal
            self._in_flight.add(proposal.tx_id)
            release = max(self.loop.now, self._next_release)
            self._next_release = release + self.config.arrival_interval_ms
            self.loop.schedule(
                release - self.loop.now, lambda p=proposal, i=index: self._submit(p, i)
            )

    def _submit(self, proposal, index: int) -> None:
        if proposal.tx_id not in self.submit_time:
            self.submit_time[proposal.tx_id] = self.loop.now
            self.log("submit", txId=proposal.tx_id)
        self._attempts[proposal.tx_id] = self._attempts.get(proposal.tx_id, 0) + 1
        k = max(1, self.env.policy.k)
        chosen = [(index * k + j) % self.config.endorsers for j in range(k)]
        self._collected[proposal.tx_id] = []
        for endorser_index in chosen:
            self._send_to_endorser(proposal, endorser_index, expected=len(chosen))
        if self.config.drop_rate > 0:
            self.loop.schedule(
                self._retry_interval(), lambda: self._maybe_retry(proposal, index)
            )

    def _maybe_retry(self, proposal, index: int) -> None:
        if proposal.tx_id in self.commit_time or proposal.tx_id in self._gave_up:
            return
        if self._attempts[proposal.tx_id] >= MAX_SUBMIT_ATTEMPTS:
            self._gave_up.add(proposal.tx_id)
            self._in_flight.discard(proposal.tx_id)
            self.log("gave_up", txId=proposal.tx_id)
            self._submit_next()
            return
        self.log("retry", txId=proposal.tx_id, attempt=self._attempts[proposal.tx_id])
        self._submit(proposal, index)

    def _send_to_endorser(self, proposal, endorser_index: int, expected: int) -> None:
        if self.dropped():
            self.log("drop", kind="proposal", txId=proposal.tx_id)
            return
        arrival = self.latency()

        def arrive():
            start = max(self.loop.now, self._endorser_busy[endorser_index])
            finish = start + self.config.exec_cost_ms
            self._endorser_busy[endorser_index] = finish
            self.loop.schedule(
                finish - self.loop.now,
                lambda: self._endorse(proposal, endorser_index, expected),
            )

        self.loop.schedule(arrival, arrive)

    def _endorse(self, proposal, endorser_index: int, expected: int) -> None:
        actor = self.env.endorser_actors[endorser_index]
        snapshot = self.endorse_state().state.snapshot()
        try:
            rwset, endo = endorse(
                proposal, snapshot, self.env.registry, actor.did, actor.key
            )
        except EndorsementRefused as refusal:
            self.log("endorse_refused", txId=proposal.tx_id, code=refusal.code)
            self._gave_up.add(proposal.tx_id)
            self._in_flight.discard(proposal.tx_id)
            self._submit_next()
            return
        self.log("endorsed", txId=proposal.tx_id, endorser=endorser_index)
        if self.dropped():
            self.log("drop", kind="endorsement", txId=proposal.tx_id)
            return

        def back_at_client():
            bucket = self._collected.get(proposal.tx_id)
            if bucket is None:
                return
            bucket.append((rwset, endo))
            if len(bucket) == expected:
                del self._collected[proposal.tx_id]
                tx = EndorsedTransaction(
                    proposal=proposal,
                    rwset=bucket[0][0],
                    endorsements=tuple(e for _, e in bucket),
                )
                self._send_to_orderer(tx)

        self.loop.schedule(self.latency(), back_at_client)

    # -- ordering ------------------------------------------------------------

    def _send_to_orderer(self, tx) -> None:
        if self.dropped():
            self.log("drop", kind="submission", txId=tx.tx_id)
            return
        delay = self.latency()

        def deliver():
            self.log("ordered", txId=tx.tx_id)
            if self.config.orderer == "solo":
                self.engine.submit(tx, self.loop.now)
            else:
                _, out = self.replicas[0].submit(tx, self.loop.now)
                self._broadcast(0, out)
            self._arm_tick()

        self.loop.schedule(delay, deliver)

    def _pending_deadline(self) -> int | None:
        if self.config.orderer == "solo":
            oldest = self.engine._pool.oldest_arrival
        else:
            oldest = self.replicas[0]._pool.oldest_arrival
        if oldest is None:
            return None
        return oldest + self.config.batch_wait_ms

    def _arm_tick(self) -> None:
        if self._tick_armed:
            return
        deadline = self._pending_deadline()
        if deadline is None:
            return
        self._tick_armed = True

        def tick():
            self._tick_armed = False
            if self.config.orderer == "solo":
                self.engine.tick(self.loop.now)
            else:
                out = self.replicas[0].tick(self.loop.now)
                self._broadcast(0, out)
            self._arm_tick()

        self.loop.schedule(max(0, deadline - self.loop.now), tick)

    def _on_solo_batch(self, batch: OrderedBatch) -> None:
        self.log("batch", seq=batch.seq, size=len(batch.txs))
        self.loop.schedule(self.latency(), lambda: self._commit_batch(0, batch))

    # -- pbft transport ------------------------------------------------------

    def _broadcast(self, sender: int, messages) -> None:
        behavior = self.config.byzantine.get(sender)
        if behavior == SILENT:
            return
        for msg in messages:
            if behavior == EQUIVOCATE and msg.kind == PRE_PREPARE:
                self._broadcast_equivocation(sender, msg)
                continue
            self.log(
                "send",
                src=sender,
                kind=msg.kind,
                seq=msg.seq,
                digest=msg.batch_digest[:12],
            )
            for target in range(self.config.n):
                if target != sender:
                    self._unicast(sender, target, msg)

    def _broadcast_equivocation(self, sender: int, msg) -> None:
        """Split the cluster between two conflicting batches, then cross-send
        so every honest replica observes the equivocation."""
        alt_doc = dict(msg.batch_doc)
        alt_doc["timestamp"] = alt_doc["timestamp"] + 1
        alt = self.replicas[sender]._make(
            PRE_PREPARE, msg.seq, hash_document(alt_doc).hex(), alt_doc
        )
        self.log("equivocate", src=sender, seq=msg.seq)
        half = self.config.n // 2
        for target in range(self.config.n):
            if target == sender:
                continue
            first, second = (msg, alt) if target < half else (alt, msg)
            self._unicast(sender, target, first)
            self._unicast(sender, target, second, extra_delay=1)

    def _unicast(self, sender: int, target: int, msg, extra_delay: int = 0) -> None:
        if self.config.byzantine.get(target) == SILENT:
            return
        if self.dropped():
            self.log("drop", kind=msg.kind, src=sender, dst=target)
            return
        delay = self.latency() + extra_delay

        def deliver():
            out = self.replicas[target].on_message(msg)
            self._broadcast(target, out)

        self.loop.schedule(delay, deliver)

    def _peer_deliver(self, replica_id: int):
        return lambda batch: self._commit_batch(replica_id, batch)

    # -- commit --------------------------------------------------------------

    def _commit_batch(self, peer_index: int, batch: OrderedBatch) -> None:
        block = self.peers[peer_index].committer.commit(
            list(batch.txs), timestamp=batch.timestamp
        )
        self._last_progress = self.loop.now
        if peer_index == self.metrics_peer and block is not None:
            self.log(
                "commit",
                height=block.header.height,
                codes=list(block.validation),
                txIds=[tx["proposal"]["txId"] for tx in block.txs],
            )

    def _on_commit_event(self, event: dict) -> None:
        for tx_id, code in zip(event["txIds"], event["codes"]):
            if tx_id in self.submit_time and tx_id not in self.commit_time:
                self.commit_time[tx_id] = self.loop.now
                self.codes[tx_id] = code
                self._in_flight.discard(tx_id)
        self._submit_next()

    # -- run loop ------------------------------------------------------------

    def run(self) -> Metrics:
        self._payloads = self.env.append_payloads()
        if self._payloads:
            self.loop.schedule(0, self._submit_next)
        # liveness rule: stop once no commit has happened for
        # liveness_factor * max latency of virtual time
        _, lat_max = self.config.latency_ms_range
        window = self.config.liveness_factor * max(1, lat_max)
        self.loop.run(horizon_fn=lambda: self._last_progress + window)
        return self._metrics()

    def _metrics(self) -> Metrics:
        metrics = Metrics()
        metrics.safety = self._safety()
        if self.workload.tx_count == 0:
            metrics.outcome = "empty"
            return metrics
        committed = [tx for tx in self.submit_time if tx in self.commit_time]
        metrics.committed_count = len(committed)
        metrics.valid_count = sum(1 for tx in committed if self.codes[tx] == VALID)
        mvcc = sum(1 for tx in committed if self.codes[tx] == MVCC_CONFLICT)
        metrics.invalid_rate = mvcc / len(committed) if committed else 0.0
        latencies = [self.commit_time[tx] - self.submit_time[tx] for tx in committed]
        metrics.latency_ms = {
            "p50": percentile(latencies, 0.50),
            "p95": percentile(latencies, 0.95),
            "p99": percentile(latencies, 0.99),
        }
        if committed:
            metrics.duration_ms = max(self.commit_time[tx] for tx in committed)
            if metrics.duration_ms > 0:
                metrics.tps = metrics.valid_count / (metrics.duration_ms / 1000.0)
        if len(committed) < len(self._payloads):
            metrics.outcome = "liveness_timeout"
        if self.replicas:
            metrics.equivocations_detected = sum(
                self.replicas[i].equivocations_detected for i in self.honest_peers
            )
        return metrics

    def _safety(self) -> str:
        if self.config.orderer == "pbft" and len(self.config.byzantine) > self.config.f:
            return "out-of-model"
        dumps = [self.peers[i].store.serialize() for i in self.honest_peers]
        shortest = min(len(d) for d in dumps)
        for dump in dumps:
            if dump[:shortest] != dumps[0][:shortest]:
                return "divergence"
        return "ok"

    def honest_ledgers_identical(self) -> bool:
        dumps = [self.peers[i].store.serialize() for i in self.honest_peers]
        return all(d == dumps[0] for d in dumps)

    def transcript_lines(self) -> list[str]:
        return [canonical_encode(entry).decode("utf-8") for entry in self.transcript]


def run_scenario(config: SimConfig, workload: Workload) -> tuple[Metrics, list[dict]]:
    """Drive submit -> endorse -> order -> validate -> commit to completion
    (or liveness timeout, reported in the metrics, never raised)."""
    sim = Simulation(config, workload)
    metrics = sim.run()
    return metrics, sim.transcript


def inject_fault(config: SimConfig, fault: dict) -> SimConfig:
    """Pure config transformer for fault scenarios."""
    if "byzantine" in fault:
        spec = fault["byzantine"]
        replica = int(spec["replica"])
        behavior = spec["behavior"]
        if not 0 <= replica < config.n:
            raise SimulationError(f"no replica {replica} in an n={config.n} cluster")
        if behavior not in (SILENT, EQUIVOCATE):
            raise SimulationError(f"unknown byzantine behavior {behavior!r}")
        byzantine = dict(config.byzantine)
        byzantine[replica] = behavior
        return dataclasses.replace(config, byzantine=byzantine)
    if "dropRate" in fault:
        rate = float(fault["dropRate"])
        if not 0 <= rate < 1:
            raise SimulationError("dropRate must be in [0, 1)")
        return dataclasses.replace(config, drop_rate=rate)
    raise SimulationError(f"unknown fault {sorted(fault)!r}")


# ---------------------------------------------------------------------------
# serial order-execute baseline and the paradigm comparison


def _append_raw_block(store: LedgerStore, tx_docs: list, codes: list, timestamp: int):
    tip = store.tip_header()
    header = BlockHeader(
        height=tip.height + 1,
        prev_hash=hash_block(tip),
        tx_root=tx_root(tx_hash(doc) for doc in tx_docs),
        timestamp=timestamp,
    )
    block = Block(header=header, txs=tuple(tx_docs), validation=tuple(codes))
    store.append_block(block)
    return block


class BaselineSimulation:
    """Order-execute: transactions are ordered first, then executed one at a
    time by a single executor against fresh state; there is no conflict
    concept, only chaincode acceptance."""

    def __init__(
        self, config: SimConfig, workload: Workload, env: Environment | None = None
    ):
        config.validate()
        workload.validate()
        self.config = config
        self.workload = workload
        self.env = env or Environment(config, workload)
        self.loop = EventLoop()
        self.rng_net = random.Random((config.seed << 2) ^ 0x3C9)
        self.peer = Peer(self.env, self.loop)
        self.engine = SoloSequencer(
            BatchPolicy(config.batch_max_txs, config.batch_wait_ms), self._on_batch
        )
        self.submit_time: dict[str, int] = {}
        self.commit_time: dict[str, int] = {}
        self.valid: set[str] = set()
        self._busy = 0
        self._tick_armed = False

    def latency(self) -> int:
        lo, hi = self.config.latency_ms_range
        return self.rng_net.randint(lo, hi)

    def run(self) -> Metrics:
        payloads = self.env.append_payloads()
        for index, payload in enumerate(payloads):
            proposal = make_proposal(
                f"base-append-{index:06d}",
                "ehr.append_record",
                payload,
                self.env.client.did,
                self.env.client.key,
            )
            at = index * self.config.arrival_interval_ms

            def submit(p=proposal):
                self.submit_time[p.tx_id] = self.loop.now
                delay = self.latency()

                def deliver():
                    self.engine.submit(p, self.loop.now)
                    self._arm_tick()

                self.loop.schedule(delay, deliver)

            self.loop.schedule(at, submit)
        self.loop.run()
        return self._metrics(len(payloads))

    def _arm_tick(self) -> None:
        if self._tick_armed:
            return
        oldest = self.engine._pool.oldest_arrival
        if oldest is None:
            return
        self._tick_armed = True

        def tick():
            self._tick_armed = False
            self.engine.tick(self.loop.now)
            self._arm_tick()

        self.loop.schedule(
            max(0, oldest + self.config.batch_wait_ms - self.loop.now), tick
        )

    def _on_batch(self, batch) -> None:
        results = []

        def execute(proposal):
            snapshot = self.peer.store.state.snapshot()
            actor = self.env.endorser_actors[0]
            try:
                rwset, endo = endorse(
                    proposal, snapshot, self.env.registry, actor.did, actor.key
                )
                endorsements, code = (endo,), VALID
            except EndorsementRefused:
                rwset, endorsements, code = ReadWriteSet((), ()), (), MVCC_CONFLICT
            results.append(
                (
                    EndorsedTransaction(
                        proposal=proposal, rwset=rwset, endorsements=endorsements
                    ),
                    code,
                )
            )
            if len(results) == len(batch.txs):
                docs = [tx.to_doc() for tx, _ in results]
                codes = [code for _, code in results]
                _append_raw_block(self.peer.store, docs, codes, self.loop.now)
                for tx, code in results:
                    self.commit_time[tx.tx_id] = self.loop.now
                    if code == VALID:
                        self.valid.add(tx.tx_id)

        for proposal in batch.txs:
            start = max(self.loop.now, self._busy)
            finish = start + self.config.exec_cost_ms
            self._busy = finish
            self.loop.schedule(finish - self.loop.now, lambda p=proposal: execute(p))

    def _metrics(self, total: int) -> Metrics:
        metrics = Metrics()
        if total == 0:
            metrics.outcome = "empty"
            return metrics
        committed = list(self.commit_time)
        metrics.committed_count = len(committed)
        metrics.valid_count = len(self.valid)
        latencies = [self.commit_time[t] - self.submit_time[t] for t in committed]
        metrics.latency_ms = {
            "p50": percentile(latencies, 0.50),
            "p95": percentile(latencies, 0.95),
            "p99": percentile(latencies, 0.99),
        }
        if committed:
            metrics.duration_ms = max(self.commit_time.values())
            if metrics.duration_ms > 0:
                metrics.tps = metrics.valid_count / (metrics.duration_ms / 1000.0)
        if len(committed) < total:
            metrics.outcome = "liveness_timeout"
        return metrics


def compare_paradigms(config: SimConfig, workload: Workload) -> dict:
    """Same workload and seed through both arms; the baseline executes
    serially after ordering, the pipeline endorses in parallel."""
    pipeline_metrics, _ = run_scenario(config, workload)
    baseline_metrics = BaselineSimulation(config, workload).run()
    if workload.tx_count == 0:
        outcome = {"outcome": "empty", "tpsRatio": None}
    else:
        ratio = (
            pipeline_metrics.tps / baseline_metrics.tps
            if baseline_metrics.tps > 0
            else None
        )
        outcome = {"outcome": "completed", "tpsRatio": ratio}
    outcome["pipeline"] = pipeline_metrics.to_doc()
    outcome["baseline"] = baseline_metrics.to_doc()
    return outcome
