"""Serial re-execution oracle for MVCC validation.

Independent of the block validator: it re-runs every chaincode function
one at a time against live oracle state and accepts a transaction iff the
reads it observes match the endorsed read set (and signatures/policy
check out, re-verified from scratch here). Versions are assigned the same
way blocks assign them, so final states are directly comparable.
"""

from __future__ import annotations

import json

from quebian import keys
from quebian.canonical import canonical_encode, hash_document
from quebian.ledger import Version


class _OracleSnapshot:
    """Minimal read-recording view over the oracle's live entries."""

    def __init__(self, entries):
        self._entries = entries
        self.reads = {}
        self.writes = {}

    def get_doc(self, key):
        found = self._entries.get(key)
        if key not in self.reads:
            self.reads[key] = found[1] if found else None
        return json.loads(found[0].decode()) if found else None

    # chaincode context protocol
    def get(self, key):
        return self.get_doc(key)

    def put(self, key, value):
        self.writes[key] = value

    def range(self, prefix):
        out = []
        for key in sorted(self._entries):
            if key.startswith(prefix):
                out.append((key, self.get_doc(key)))
        return out


class _CtxShim:
    """Quacks like ChaincodeContext for re-execution."""

    def __init__(self, snapshot, submitter_did):
        self._snap = snapshot
        self.submitter_did = submitter_did

    def get(self, key):
        return self._snap.get(key)

    def put(self, key, value):
        self._snap.put(key, value)

    def range(self, prefix):
        return self._snap.range(prefix)


def _resolve_submitter_key(entries, proposal):
    found = entries.get(f"iam/did/{proposal.submitter_did}")
    if found is not None:
        return json.loads(found[0].decode()).get("verificationKey")
    if proposal.function == "iam.register_did":
        payload = json.loads(proposal.args[0])
        if payload.get("did") == proposal.submitter_did:
            return payload.get("verificationKey")
    return None


def _signature_ok(entries, proposal):
    key = _resolve_submitter_key(entries, proposal)
    if key is None:
        return False
    return keys.verify(
        key, canonical_encode(proposal.signing_doc()), proposal.client_signature
    )


def _policy_ok(entries, tx, policy):
    if policy is None:
        return True
    expected = hash_document(tx.rwset.to_doc()).hex()
    good = set()
    for endo in tx.endorsements:
        if endo.endorser_id not in policy.endorsers or endo.rwset_digest != expected:
            continue
        found = entries.get(f"iam/did/{endo.endorser_id}")
        if found is None:
            continue
        pub = json.loads(found[0].decode()).get("verificationKey")
        if keys.verify(pub, bytes.fromhex(expected), endo.signature):
            good.add(endo.endorser_id)
    return len(good) >= policy.k


class SerialOracle:
    """Replays ordered blocks transaction-by-transaction."""

    def __init__(self, registry):
        self.registry = registry
        self.entries = {}  # key -> (canonical bytes, Version)
        self.codes = []

    def replay_block(self, txs, height, policy):
        block_codes = []
        for index, tx in enumerate(txs):
            code = self._replay_tx(tx, height, index, policy)
            block_codes.append(code)
        self.codes.append(block_codes)
        return block_codes

    def _replay_tx(self, tx, height, index, policy):
        if not _signature_ok(self.entries, tx.proposal):
            return "BAD_SIGNATURE"
        if not _policy_ok(self.entries, tx, policy):
            return "ENDORSEMENT_POLICY_FAILURE"
        snapshot = _OracleSnapshot(self.entries)
        fn = self.registry.get(tx.proposal.function)
        assert fn is not None, "oracle replaying an unregistered function"
        try:
            fn(_CtxShim(snapshot, tx.proposal.submitter_did), json.loads(tx.proposal.args[0]))
        except Exception:
            # live-state execution rejected a tx that endorsed cleanly
            # earlier: its reads necessarily changed
            return "MVCC_CONFLICT"
        observed = tuple(sorted(snapshot.reads.items()))
        if observed != tx.rwset.reads:
            return "MVCC_CONFLICT"
        replayed_writes = tuple(sorted(snapshot.writes.items()))
        assert replayed_writes == tx.rwset.writes, (
            "chaincode is nondeterministic: same reads, different writes"
        )
        version = Version(height=height, tx_index=index)
        for key, value in replayed_writes:
            self.entries[key] = (canonical_encode(value), version)
        return "VALID"

    def state_entries(self):
        return dict(self.entries)


def replay_ledger(store, registry, policies_by_height):
    """Re-derive every block's codes and the final state from genesis.

    policies_by_height maps height -> EndorsementPolicy (None for the
    bootstrap block). Returns (codes per block, entries).
    """
    from quebian.txflow import EndorsedTransaction

    oracle = SerialOracle(registry)
    all_codes = {}
    for block in store.blocks():
        height = block.header.height
        if height == 0:
            continue
        txs = [EndorsedTransaction.from_doc(doc) for doc in block.txs]
        policy = policies_by_height(height)
        all_codes[height] = oracle.replay_block(txs, height, policy)
    return all_codes, oracle.state_entries()


def states_match(oracle_entries, world_state):
    """Byte-level comparison of the oracle state vs a WorldState."""
    live = {}
    for key in list(world_state._entries):
        found = world_state.get(key)
        if found is not None:
            live[key] = found
    return {k: (v, ver) for k, (v, ver) in oracle_entries.items()} == live
