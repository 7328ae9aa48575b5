import random

import pytest

from quebian.consensus import (
    COMMIT,
    PRE_PREPARE,
    PREPARE,
    BatchPolicy,
    ConfigurationError,
    OrderedBatch,
    PbftReplica,
    SoloSequencer,
    quorum_size,
)
from quebian.txflow import EndorsedTransaction, ReadWriteSet, TxProposal


def dummy_tx(tx_id):
    return EndorsedTransaction(
        proposal=TxProposal(
            tx_id=tx_id,
            function="noop",
            args=("{}",),
            submitter_did="did:qb:nobody",
            client_signature="00",
        ),
        rwset=ReadWriteSet(reads=(), writes=()),
        endorsements=(),
    )


class TestQuorum:
    def test_n4_f1(self):
        assert quorum_size(4, 1) == 3

    def test_n7_f2(self):
        assert quorum_size(7, 2) == 5

    def test_n3_f1_invalid(self):
        with pytest.raises(ConfigurationError):
            quorum_size(3, 1)


class TestSoloSequencer:
    def make(self, max_txs=4, max_wait_ms=50):
        batches = []
        solo = SoloSequencer(BatchPolicy(max_txs, max_wait_ms), batches.append)
        return solo, batches

    def test_batches_of_4_4_2_last_by_timeout(self):
        solo, batches = self.make(max_txs=4, max_wait_ms=50)
        for i in range(10):
            assert solo.submit(dummy_tx(f"t{i}"), now_ms=i)
        assert [len(b.txs) for b in batches] == [4, 4]
        solo.tick(now_ms=30)  # oldest pending arrived at t=8, not old enough
        assert len(batches) == 2
        solo.tick(now_ms=58)  # 58 - 8 >= 50
        assert [len(b.txs) for b in batches] == [4, 4, 2]

    def test_fifo_order(self):
        solo, batches = self.make(max_txs=3)
        for tid in ("a", "b", "c"):
            solo.submit(dummy_tx(tid), now_ms=0)
        assert [tx.tx_id for tx in batches[0].txs] == ["a", "b", "c"]

    def test_empty_pool_timeout_cuts_nothing(self):
        solo, batches = self.make()
        solo.tick(now_ms=10_000)
        assert batches == []

    def test_duplicate_tx_id_rejected(self):
        solo, batches = self.make()
        assert solo.submit(dummy_tx("dup"), 0)
        assert not solo.submit(dummy_tx("dup"), 1)
        solo.flush(now_ms=2)
        assert sum(len(b.txs) for b in batches) == 1

    def test_pool_of_5_max_2_cuts_first_two(self):
        solo, batches = self.make(max_txs=2)
        for i in range(5):
            solo.submit(dummy_tx(f"t{i}"), now_ms=0)
        assert [tx.tx_id for tx in batches[0].txs] == ["t0", "t1"]

    def test_seqs_consecutive(self):
        solo, batches = self.make(max_txs=1)
        for i in range(5):
            solo.submit(dummy_tx(f"t{i}"), now_ms=i)
        assert [b.seq for b in batches] == [1, 2, 3, 4, 5]


def make_cluster(n=4, f=1, max_txs=2):
    delivered = {i: [] for i in range(n)}
    replicas = [
        PbftReplica(i, n, f, BatchPolicy(max_txs, 50), delivered[i].append)
        for i in range(n)
    ]
    return replicas, delivered


def pump(replicas, outbox, order=None, drop_from=()):
    """Deliver (sender, msg) pairs to every other replica until quiet."""
    queue = list(outbox)
    while queue:
        if order is not None:
            order.shuffle(queue)
        sender, msg = queue.pop(0)
        if sender in drop_from:
            continue
        for replica in replicas:
            if replica.replica_id == sender:
                continue
            for reply in replica.on_message(msg):
                queue.append((replica.replica_id, reply))


class TestPbftProtocol:
    def test_preprepare_from_primary_triggers_prepare(self):
        replicas, _ = make_cluster()
        _, out = replicas[0].submit(dummy_tx("a"), 0)
        _, out2 = replicas[0].submit(dummy_tx("b"), 0)
        preprepare = out2[0]
        assert preprepare.kind == PRE_PREPARE
        replies = replicas[1].on_message(preprepare)
        assert [m.kind for m in replies] == [PREPARE]

    def test_preprepare_from_non_primary_ignored(self):
        replicas, _ = make_cluster()
        replicas[1]._next_seq = 1
        fake = replicas[1]._make(PRE_PREPARE, 1, "00" * 32, batch_doc={"seq": 1, "timestamp": 0, "txs": []})
        assert replicas[2].on_message(fake) == []

    def test_equivocating_preprepare_flagged(self):
        replicas, _ = make_cluster()
        batch_a = OrderedBatch(seq=1, txs=(dummy_tx("a"),), timestamp=0)
        batch_b = OrderedBatch(seq=1, txs=(dummy_tx("b"),), timestamp=0)
        msg_a = replicas[0]._make(PRE_PREPARE, 1, batch_a.digest_hex(), batch_a.to_doc())
        msg_b = replicas[0]._make(PRE_PREPARE, 1, batch_b.digest_hex(), batch_b.to_doc())
        replicas[1].on_message(msg_a)
        assert replicas[1].equivocations_detected == 0
        assert replicas[1].on_message(msg_b) == []
        assert replicas[1].equivocations_detected == 1

    def test_prepared_after_preprepare_plus_2f_prepares(self):
        replicas, _ = make_cluster()
        batch = OrderedBatch(seq=1, txs=(dummy_tx("a"),), timestamp=0)
        digest = batch.digest_hex()
        preprepare = replicas[0]._make(PRE_PREPARE, 1, digest, batch.to_doc())
        r1 = replicas[1]
        out = r1.on_message(preprepare)  # r1's own prepare counts
        assert [m.kind for m in out] == [PREPARE]
        prepare_r2 = replicas[2]._make(PREPARE, 1, digest)
        out = r1.on_message(prepare_r2)
        assert [m.kind for m in out] == [COMMIT]

    def test_duplicate_prepare_counted_once(self):
        replicas, _ = make_cluster()
        batch = OrderedBatch(seq=1, txs=(dummy_tx("a"),), timestamp=0)
        digest = batch.digest_hex()
        r3 = replicas[3]
        prepare = replicas[2]._make(PREPARE, 1, digest)
        r3.on_message(prepare)
        r3.on_message(prepare)
        assert len(r3._prepares[(1, digest)]) == 1

    def test_prepares_without_preprepare_held(self):
        replicas, delivered = make_cluster()
        batch = OrderedBatch(seq=1, txs=(dummy_tx("a"),), timestamp=0)
        digest = batch.digest_hex()
        r3 = replicas[3]
        assert r3.on_message(replicas[1]._make(PREPARE, 1, digest)) == []
        assert r3.on_message(replicas[2]._make(PREPARE, 1, digest)) == []
        # pre-prepare arrives late: now prepared, COMMIT goes out
        preprepare = replicas[0]._make(PRE_PREPARE, 1, digest, batch.to_doc())
        out = r3.on_message(preprepare)
        assert COMMIT in [m.kind for m in out]

    def test_commit_quorum_before_prepared_held(self):
        replicas, delivered = make_cluster()
        batch = OrderedBatch(seq=1, txs=(dummy_tx("a"),), timestamp=0)
        digest = batch.digest_hex()
        r3 = replicas[3]
        for sender in (0, 1, 2):
            assert r3.on_message(replicas[sender]._make(COMMIT, 1, digest)) == []
        assert delivered[3] == []  # commit quorum exists, but not prepared yet
        r3.on_message(replicas[0]._make(PRE_PREPARE, 1, digest, batch.to_doc()))
        r3.on_message(replicas[1]._make(PREPARE, 1, digest))
        r3.on_message(replicas[2]._make(PREPARE, 1, digest))
        assert [b.seq for b in delivered[3]] == [1]

    def test_gap_free_delivery(self):
        replicas, delivered = make_cluster()
        batches = [
            OrderedBatch(seq=s, txs=(dummy_tx(f"t{s}"),), timestamp=0) for s in (1, 2)
        ]
        r3 = replicas[3]
        # fully commit seq 2 first: it must wait for seq 1
        for batch in reversed(batches):
            digest = batch.digest_hex()
            r3.on_message(replicas[0]._make(PRE_PREPARE, batch.seq, digest, batch.to_doc()))
            r3.on_message(replicas[1]._make(PREPARE, batch.seq, digest))
            r3.on_message(replicas[2]._make(PREPARE, batch.seq, digest))
            if batch.seq == 2:
                assert delivered[3] == []
            for sender in (0, 1):
                r3.on_message(replicas[sender]._make(COMMIT, batch.seq, digest))
            if batch.seq == 2:
                assert delivered[3] == []  # held: seq 1 not yet delivered
        assert [b.seq for b in delivered[3]] == [1, 2]

    def test_bad_mac_ignored(self):
        replicas, _ = make_cluster()
        batch = OrderedBatch(seq=1, txs=(dummy_tx("a"),), timestamp=0)
        msg = replicas[0]._make(PRE_PREPARE, 1, batch.digest_hex(), batch.to_doc())
        forged = msg.__class__(
            kind=msg.kind,
            view=msg.view,
            seq=msg.seq,
            batch_digest=msg.batch_digest,
            sender_id=msg.sender_id,
            signature="00" * 32,
            batch_doc=msg.batch_doc,
        )
        assert replicas[1].on_message(forged) == []


class TestPbftEndToEnd:
    def test_all_replicas_deliver_identically(self):
        replicas, delivered = make_cluster(max_txs=2)
        outbox = []
        for i in range(6):
            _, out = replicas[0].submit(dummy_tx(f"t{i}"), now_ms=i)
            outbox.extend((0, m) for m in out)
        pump(replicas, outbox)
        sequences = {
            rid: [(b.seq, b.digest_hex()) for b in batches]
            for rid, batches in delivered.items()
        }
        assert sequences[0] == sequences[1] == sequences[2] == sequences[3]
        assert [s for s, _ in sequences[0]] == [1, 2, 3]

    def test_silent_replica_does_not_stop_progress(self):
        replicas, delivered = make_cluster(max_txs=2)
        outbox = []
        for i in range(4):
            _, out = replicas[0].submit(dummy_tx(f"t{i}"), now_ms=i)
            outbox.extend((0, m) for m in out)
        pump(replicas, outbox, drop_from={3})
        for rid in (0, 1, 2):
            assert [b.seq for b in delivered[rid]] == [1, 2]

    @pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
    def test_random_delivery_schedules_total_order(self, seed):
        rng = random.Random(seed)
        replicas, delivered = make_cluster(max_txs=3)
        outbox = []
        for i in range(9):
            _, out = replicas[0].submit(dummy_tx(f"t{i}"), now_ms=i)
            outbox.extend((0, m) for m in out)
        pump(replicas, outbox, order=rng)
        reference = [(b.seq, b.digest_hex()) for b in delivered[0]]
        seqs = [s for s, _ in reference]
        assert seqs == sorted(seqs) == list(range(1, len(seqs) + 1))
        tx_ids = [tx.tx_id for b in delivered[0] for tx in b.txs]
        assert len(tx_ids) == len(set(tx_ids)) == 9
        for rid in (1, 2, 3):
            assert [(b.seq, b.digest_hex()) for b in delivered[rid]] == reference
