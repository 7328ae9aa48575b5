import random

import pytest

from quebian import identity
from quebian.keys import SigningKey
from quebian.ledger import LedgerStore
from quebian.txflow import (
    BAD_FUNCTION,
    BAD_SIGNATURE,
    ENDORSEMENT_POLICY_FAILURE,
    MVCC_CONFLICT,
    VALID,
    Committer,
    EndorsedTransaction,
    Endorsement,
    EndorsementPolicy,
    EndorsementRefused,
    check_endorsement_policy,
    endorse,
    validate_block,
)

from .harness import ChainHarness, seeded_key
from .serial_oracle import SerialOracle, replay_ledger, states_match


class TestEndorse:
    def test_append_rwset_reads_patient_and_writes_record(self, ehr_chain):
        chain, fx = ehr_chain
        payload = chain.append_record_payload(fx, "R100", "P001", ["S42"])
        tx = chain.endorse_tx(chain.propose("ehr.append_record", payload))
        read_keys = [k for k, _ in tx.rwset.reads]
        write_keys = [k for k, _ in tx.rwset.writes]
        assert "ehr/patient/P001" in read_keys
        patient_version = dict(tx.rwset.reads)["ehr/patient/P001"]
        committed = chain.store.read_state("ehr/patient/P001")
        assert patient_version == committed[1]
        assert "ehr/record/R100" in write_keys
        assert "ehr/idx/patient/P001/R100" in write_keys
        assert "ehr/idx/symptom/S42/R100" in write_keys

    def test_bad_client_signature_rejected(self, ehr_chain):
        chain, fx = ehr_chain
        good = chain.propose("ehr.register_hospital", {"hospitalId": "H009"})
        forged = good.__class__(
            tx_id=good.tx_id,
            function=good.function,
            args=good.args,
            submitter_did=good.submitter_did,
            client_signature="ab" * 64,
        )
        with pytest.raises(EndorsementRefused) as err:
            chain.endorse_tx(forged)
        assert err.value.code == "auth"

    def test_three_endorsers_same_digest(self, ehr_chain):
        chain, fx = ehr_chain
        payload = chain.append_record_payload(fx, "R101", "P001", ["S1"])
        proposal = chain.propose("ehr.append_record", payload)
        snapshot = chain.store.state.snapshot()
        digests = set()
        for actor in chain.endorsers:
            rwset, endo = endorse(
                proposal, snapshot, chain.registry, actor.did, actor.key
            )
            digests.add(endo.rwset_digest)
            assert endo.rwset_digest == rwset.digest().hex()
        assert len(digests) == 1

    def test_unknown_function_is_bad_function(self, chain):
        proposal = chain.propose("ehr.delete_everything", {})
        with pytest.raises(EndorsementRefused) as err:
            chain.endorse_tx(proposal)
        assert err.value.code == BAD_FUNCTION

    def test_chaincode_rejection_surfaces_its_error(self, ehr_chain):
        chain, fx = ehr_chain
        payload = chain.append_record_payload(fx, "R102", "P999", ["S1"])
        with pytest.raises(EndorsementRefused) as err:
            chain.endorse_tx(chain.propose("ehr.append_record", payload))
        assert err.value.code == "not-found"

    def test_endorsement_does_not_mutate_state(self, ehr_chain):
        chain, fx = ehr_chain
        height_before = chain.store.height
        payload = chain.append_record_payload(fx, "R103", "P001", ["S1"])
        chain.endorse_tx(chain.propose("ehr.append_record", payload))
        assert chain.store.height == height_before
        assert chain.store.read_state("ehr/record/R103") is None


class TestEndorsementPolicy:
    def test_k_of_n_pass_and_fail(self, ehr_chain):
        chain, fx = ehr_chain
        payload = chain.append_record_payload(fx, "R110", "P001", ["S1"])
        proposal = chain.propose("ehr.append_record", payload)
        full = chain.endorse_tx(proposal, endorsers=chain.endorsers[:2])
        view = chain.store.state.get
        assert check_endorsement_policy(full, chain.policy, view)
        one = EndorsedTransaction(
            proposal=full.proposal,
            rwset=full.rwset,
            endorsements=full.endorsements[:1],
        )
        assert not check_endorsement_policy(one, chain.policy, view)

    def test_digest_mismatch_fails(self, ehr_chain):
        chain, fx = ehr_chain
        payload = chain.append_record_payload(fx, "R111", "P001", ["S1"])
        tx = chain.endorse_tx(chain.propose("ehr.append_record", payload))
        bad = Endorsement(
            endorser_id=tx.endorsements[1].endorser_id,
            rwset_digest="00" * 32,
            signature=tx.endorsements[1].signature,
        )
        mangled = EndorsedTransaction(
            proposal=tx.proposal,
            rwset=tx.rwset,
            endorsements=(tx.endorsements[0], bad),
        )
        assert not check_endorsement_policy(
            mangled, chain.policy, chain.store.state.get
        )

    def test_unauthorized_endorser_does_not_count(self, ehr_chain):
        chain, fx = ehr_chain
        outsider = seeded_key("outsider")
        payload = chain.append_record_payload(fx, "R112", "P001", ["S1"])
        proposal = chain.propose("ehr.append_record", payload)
        snapshot = chain.store.state.snapshot()
        rwset, _ = endorse(
            proposal, snapshot, chain.registry, chain.endorsers[0].did, chain.endorsers[0].key
        )
        digest = rwset.digest()
        endorsements = (
            Endorsement(
                endorser_id=chain.endorsers[0].did,
                rwset_digest=digest.hex(),
                signature=chain.endorsers[0].key.sign_hex(digest),
            ),
            Endorsement(
                endorser_id="did:qb:not-authorized",
                rwset_digest=digest.hex(),
                signature=outsider.sign_hex(digest),
            ),
        )
        tx = EndorsedTransaction(proposal=proposal, rwset=rwset, endorsements=endorsements)
        assert not check_endorsement_policy(tx, chain.policy, chain.store.state.get)

    def test_duplicate_endorser_counts_once(self, ehr_chain):
        chain, fx = ehr_chain
        payload = chain.append_record_payload(fx, "R113", "P001", ["S1"])
        proposal = chain.propose("ehr.append_record", payload)
        tx = chain.endorse_tx(proposal, endorsers=[chain.endorsers[0], chain.endorsers[0]])
        assert not check_endorsement_policy(tx, chain.policy, chain.store.state.get)


class TestValidateBlock:
    def test_same_key_pair_conflicts(self, ehr_chain):
        chain, fx = ehr_chain
        snapshot = chain.store.state.snapshot()
        tx1 = chain.endorse_tx(
            chain.propose(
                "ehr.append_record",
                chain.append_record_payload(fx, "R120", "P001", ["Sa"]),
            ),
            snapshot=snapshot,
        )
        tx2 = chain.endorse_tx(
            chain.propose(
                "ehr.append_record",
                chain.append_record_payload(fx, "R121", "P001", ["Sb"]),
            ),
            snapshot=snapshot,
        )
        codes = validate_block(
            [tx1, tx2], chain.store.state, chain.policy, chain.store.height + 1
        )
        assert codes == [VALID, MVCC_CONFLICT]
        # independent oracle agrees
        oracle = SerialOracle(chain.registry)
        oracle.entries = {
            k: chain.store.state.get(k) for k in chain.store.state._entries
        }
        assert oracle.replay_block([tx1, tx2], chain.store.height + 1, chain.policy) == codes

    def test_disjoint_keys_both_valid(self, ehr_chain):
        chain, fx = ehr_chain
        snapshot = chain.store.state.snapshot()
        tx1 = chain.endorse_tx(
            chain.propose(
                "ehr.append_record",
                chain.append_record_payload(fx, "R122", "P001", ["Sa"]),
            ),
            snapshot=snapshot,
        )
        tx2 = chain.endorse_tx(
            chain.propose(
                "ehr.append_record",
                chain.append_record_payload(fx, "R123", "P002", ["Sb"]),
            ),
            snapshot=snapshot,
        )
        codes = validate_block(
            [tx1, tx2], chain.store.state, chain.policy, chain.store.height + 1
        )
        assert codes == [VALID, VALID]

    def test_policy_failure_precedes_mvcc(self, ehr_chain):
        chain, fx = ehr_chain
        snapshot = chain.store.state.snapshot()
        tx1 = chain.endorse_tx(
            chain.propose(
                "ehr.append_record",
                chain.append_record_payload(fx, "R124", "P001", ["Sa"]),
            ),
            snapshot=snapshot,
        )
        under = chain.endorse_tx(
            chain.propose(
                "ehr.append_record",
                chain.append_record_payload(fx, "R125", "P001", ["Sb"]),
            ),
            snapshot=snapshot,
            endorsers=chain.endorsers[:1],
        )
        codes = validate_block(
            [tx1, under], chain.store.state, chain.policy, chain.store.height + 1
        )
        assert codes == [VALID, ENDORSEMENT_POLICY_FAILURE]

    def test_bad_signature_precedes_everything(self, ehr_chain):
        chain, fx = ehr_chain
        tx = chain.endorse_tx(
            chain.propose(
                "ehr.append_record",
                chain.append_record_payload(fx, "R126", "P001", ["Sa"]),
            ),
            endorsers=chain.endorsers[:1],  # would also fail policy
        )
        forged_proposal = tx.proposal.__class__(
            tx_id=tx.proposal.tx_id,
            function=tx.proposal.function,
            args=tx.proposal.args,
            submitter_did=tx.proposal.submitter_did,
            client_signature="cd" * 64,
        )
        forged = EndorsedTransaction(
            proposal=forged_proposal, rwset=tx.rwset, endorsements=tx.endorsements
        )
        codes = validate_block(
            [forged], chain.store.state, chain.policy, chain.store.height + 1
        )
        assert codes == [BAD_SIGNATURE]


class TestCommit:
    def test_valid_writes_applied_invalid_skipped(self, ehr_chain):
        chain, fx = ehr_chain
        snapshot = chain.store.state.snapshot()
        txs = [
            chain.endorse_tx(
                chain.propose(
                    "ehr.append_record",
                    chain.append_record_payload(fx, rid, pid, [f"S-{rid}"]),
                ),
                snapshot=snapshot,
            )
            for rid, pid in [("R130", "P001"), ("R131", "P001"), ("R132", "P002")]
        ]
        block = chain.committer.commit(txs)
        assert list(block.validation) == [VALID, MVCC_CONFLICT, VALID]
        assert chain.store.read_state("ehr/record/R130") is not None
        assert chain.store.read_state("ehr/record/R131") is None
        assert chain.store.read_state("ehr/record/R132") is not None

    def test_empty_batch_not_committed(self, chain):
        before = chain.store.height
        assert chain.committer.commit([]) is None
        assert chain.store.height == before

    def test_commit_event_stream(self, ehr_chain):
        chain, fx = ehr_chain
        events_seen = []
        chain.committer.subscribe(events_seen.append)
        code, block = chain.submit_one(
            "ehr.append_record",
            chain.append_record_payload(fx, "R140", "P002", ["S9"]),
        )
        assert code == VALID
        event = events_seen[-1]
        assert event["height"] == block.header.height
        assert event["codes"] == [VALID]
        line = chain.committer.event_lines()[-1]
        assert line.startswith('{"codes":["VALID"]')

    def test_restart_replay_identical(self, tmp_path):
        chain = ChainHarness(path=tmp_path / "ledger.qbl", label="restart")
        fx = chain.setup_ehr(patient_count=1)
        for i in range(5):
            code, _ = chain.submit_one(
                "ehr.append_record",
                chain.append_record_payload(fx, f"R15{i}", "P001", [f"S{i}"]),
            )
            assert code == VALID
        reopened = LedgerStore(tmp_path / "ledger.qbl")
        assert reopened.state.entries_equal(chain.store.state)
        assert reopened.verify().ok


class TestOracleEquivalence:
    def test_random_workload_matches_serial_oracle(self):
        chain = ChainHarness(label="oracle")
        fx = chain.setup_ehr(patient_count=8)
        rng = random.Random(7)
        patients = sorted(fx.patients)
        record_counter = 0
        for _ in range(25):  # 25 blocks of up to 8 txs
            snapshot = chain.store.state.snapshot()
            txs = []
            for _ in range(rng.randint(1, 8)):
                pid = rng.choice(patients)
                record_counter += 1
                payload = chain.append_record_payload(
                    fx, f"RW{record_counter:04d}", pid, [f"S{record_counter}"]
                )
                txs.append(
                    chain.endorse_tx(
                        chain.propose("ehr.append_record", payload), snapshot=snapshot
                    )
                )
            chain.committer.commit(txs)

        # every block after the bootstrap used the default policy
        def policy_for(height):
            return None if height == 1 else chain.policy

        codes, entries = replay_ledger(chain.store, chain.registry, policy_for)
        for block in chain.store.blocks():
            if block.header.height == 0:
                continue
            assert list(block.validation) == codes[block.header.height], (
                f"divergence at height {block.header.height}"
            )
        assert states_match(entries, chain.store.state)
