import dataclasses

import pytest

from quebian.netsim import (
    BaselineSimulation,
    Environment,
    Metrics,
    SimConfig,
    Simulation,
    SimulationError,
    Workload,
    compare_paradigms,
    inject_fault,
    percentile,
    run_scenario,
)

from .serial_oracle import replay_ledger, states_match

FAST = dict(latency_ms_range=(1, 3), batch_max_txs=5, batch_wait_ms=20)


def run_sim(config, workload):
    sim = Simulation(config, workload)
    metrics = sim.run()
    return sim, metrics


class TestDeterminism:
    def test_identical_seed_identical_transcript_and_metrics(self):
        config = SimConfig(seed=11, **FAST)
        workload = Workload(tx_count=60, key_count=8, conflict_rate=0.3)
        sim1, m1 = run_sim(config, workload)
        sim2, m2 = run_sim(config, workload)
        assert sim1.transcript_lines() == sim2.transcript_lines()
        assert m1.to_doc() == m2.to_doc()

    def test_different_seed_different_transcript(self):
        workload = Workload(tx_count=40, key_count=8)
        sim1, _ = run_sim(SimConfig(seed=1, **FAST), workload)
        sim2, _ = run_sim(SimConfig(seed=2, **FAST), workload)
        assert sim1.transcript_lines() != sim2.transcript_lines()

    def test_pbft_run_deterministic(self):
        config = SimConfig(seed=5, orderer="pbft", n=4, f=1, **FAST)
        workload = Workload(tx_count=30, key_count=6)
        sim1, _ = run_sim(config, workload)
        sim2, _ = run_sim(config, workload)
        assert sim1.transcript_lines() == sim2.transcript_lines()


class TestSoloScenario:
    def test_zero_conflict_rate_zero_invalid(self):
        metrics, _ = run_scenario(
            SimConfig(seed=3, **FAST), Workload(tx_count=120, key_count=30)
        )
        assert metrics.outcome == "completed"
        assert metrics.invalid_rate == 0.0
        assert metrics.valid_count == 120

    def test_conflicts_appear_at_high_rate(self):
        metrics, _ = run_scenario(
            SimConfig(seed=3, **FAST),
            Workload(tx_count=120, key_count=30, conflict_rate=0.9),
        )
        assert metrics.invalid_rate > 0.1
        assert metrics.committed_count == 120

    def test_conflict_monotonicity(self):
        rates = [0.0, 0.25, 0.5, 0.75, 1.0]
        invalid = []
        for rate in rates:
            metrics, _ = run_scenario(
                SimConfig(seed=9, **FAST),
                Workload(tx_count=100, key_count=20, conflict_rate=rate),
            )
            invalid.append(metrics.invalid_rate)
        assert invalid == sorted(invalid), invalid

    def test_ledger_matches_serial_oracle(self):
        config = SimConfig(seed=17, **FAST)
        workload = Workload(tx_count=80, key_count=10, conflict_rate=0.5)
        sim, metrics = run_sim(config, workload)
        store = sim.peers[sim.metrics_peer].store
        codes, entries = replay_ledger(
            store, sim.env.registry, lambda h: None if h == 1 else sim.env.policy
        )
        for block in store.blocks():
            if block.header.height == 0:
                continue
            assert list(block.validation) == codes[block.header.height]
        assert states_match(entries, store.state)
        assert store.verify().ok

    def test_empty_workload_reported_empty(self):
        metrics, _ = run_scenario(SimConfig(seed=1, **FAST), Workload(tx_count=0))
        assert metrics.outcome == "empty"
        assert metrics.tps == 0.0

    def test_latency_percentiles_ordered(self):
        metrics, _ = run_scenario(
            SimConfig(seed=4, **FAST), Workload(tx_count=50, key_count=10)
        )
        p = metrics.latency_ms
        assert p["p50"] <= p["p95"] <= p["p99"]
        assert metrics.duration_ms > 0
        # tps * duration == valid count within rounding
        assert abs(metrics.tps * metrics.duration_ms / 1000 - metrics.valid_count) < 1e-6


class TestPbftScenario:
    def test_fault_free_all_replicas_identical(self):
        config = SimConfig(seed=21, orderer="pbft", n=4, f=1, **FAST)
        sim, metrics = run_sim(config, Workload(tx_count=40, key_count=10))
        assert metrics.outcome == "completed"
        assert metrics.safety == "ok"
        assert sim.honest_ledgers_identical()
        for peer in sim.peers:
            assert peer.store.verify().ok

    def test_silent_replica_progress_and_identical_honest_ledgers(self):
        config = SimConfig(
            seed=22, orderer="pbft", n=4, f=1, byzantine={3: "SILENT"}, **FAST
        )
        sim, metrics = run_sim(config, Workload(tx_count=40, key_count=10))
        assert metrics.outcome == "completed"
        assert metrics.safety == "ok"
        assert sim.honest_ledgers_identical()

    def test_equivocating_primary_no_divergence(self):
        config = SimConfig(
            seed=23, orderer="pbft", n=4, f=1, byzantine={0: "EQUIVOCATE"}, **FAST
        )
        sim, metrics = run_sim(config, Workload(tx_count=20, key_count=5))
        assert metrics.outcome == "liveness_timeout"
        assert metrics.safety == "ok"  # prefix-consistent, never divergent
        assert metrics.equivocations_detected >= 1

    def test_beyond_f_labeled_out_of_model(self):
        config = SimConfig(
            seed=24,
            orderer="pbft",
            n=4,
            f=1,
            byzantine={2: "SILENT", 3: "SILENT"},
            **FAST,
        )
        _, metrics = run_sim(config, Workload(tx_count=10, key_count=5))
        assert metrics.safety == "out-of-model"

    def test_engine_interchangeability(self):
        workload = Workload(tx_count=60, key_count=30)
        solo_sim, solo_metrics = run_sim(SimConfig(seed=30, **FAST), workload)
        pbft_sim, pbft_metrics = run_sim(
            SimConfig(seed=30, orderer="pbft", n=4, f=1, **FAST), workload
        )
        solo_valid = {t for t, c in solo_sim.codes.items() if c == "VALID"}
        pbft_valid = {t for t, c in pbft_sim.codes.items() if c == "VALID"}
        assert {t.split("-")[-1] for t in solo_valid} == {
            t.split("-")[-1] for t in pbft_valid
        }
        assert solo_sim.peers[0].store.verify().ok
        assert pbft_sim.peers[pbft_sim.metrics_peer].store.verify().ok


class TestFaultInjection:
    def test_add_silent_replica(self):
        config = SimConfig(orderer="pbft", n=4, f=1)
        faulted = inject_fault(config, {"byzantine": {"replica": 2, "behavior": "SILENT"}})
        assert faulted.byzantine == {2: "SILENT"}
        assert config.byzantine == {}  # pure

    def test_unknown_target_rejected(self):
        config = SimConfig(orderer="pbft", n=4, f=1)
        with pytest.raises(SimulationError):
            inject_fault(config, {"byzantine": {"replica": 9, "behavior": "SILENT"}})

    def test_drop_rate_fault(self):
        faulted = inject_fault(SimConfig(), {"dropRate": 0.5})
        assert faulted.drop_rate == 0.5
        with pytest.raises(SimulationError):
            inject_fault(SimConfig(), {"dropRate": 1.5})

    def test_heavy_drop_terminates_with_timeout(self):
        config = SimConfig(seed=31, drop_rate=0.9, liveness_factor=200, **FAST)
        metrics, _ = run_scenario(config, Workload(tx_count=12, key_count=6))
        assert metrics.outcome in ("completed", "liveness_timeout")
        # the point: the run terminated and reported an outcome


class TestParadigmComparison:
    def test_pipeline_beats_serial_baseline(self):
        config = SimConfig(seed=40, endorsers=4, policy_k=1, exec_cost_ms=5, **FAST)
        outcome = compare_paradigms(config, Workload(tx_count=150, key_count=30))
        assert outcome["tpsRatio"] is not None
        assert outcome["tpsRatio"] >= 2.0, outcome["tpsRatio"]

    def test_full_conflict_pipeline_not_better(self):
        config = SimConfig(seed=41, endorsers=4, policy_k=1, exec_cost_ms=5, **FAST)
        outcome = compare_paradigms(
            config, Workload(tx_count=100, key_count=20, conflict_rate=1.0)
        )
        assert outcome["pipeline"]["valid_count"] <= outcome["baseline"]["valid_count"]

    def test_empty_workload(self):
        outcome = compare_paradigms(SimConfig(seed=1, **FAST), Workload(tx_count=0))
        assert outcome["outcome"] == "empty"
        assert outcome["tpsRatio"] is None


class TestConfigPlumbing:
    def test_config_doc_roundtrip(self):
        config = SimConfig(
            seed=7, orderer="pbft", n=7, f=2, byzantine={1: "SILENT"},
            latency_ms_range=(2, 9),
        )
        assert SimConfig.from_doc(config.to_doc()) == config

    def test_workload_doc_roundtrip(self):
        workload = Workload(tx_count=5, key_count=2, conflict_rate=0.25)
        assert Workload.from_doc(workload.to_doc()) == workload

    def test_invalid_configs_rejected(self):
        with pytest.raises(SimulationError):
            SimConfig(orderer="pbft", n=3, f=1).validate()
        with pytest.raises(SimulationError):
            SimConfig(orderer="raft").validate()
        with pytest.raises(SimulationError):
            SimConfig(drop_rate=1.0).validate()
        with pytest.raises(SimulationError):
            Workload(conflict_rate=2.0).validate()

    def test_percentile_nearest_rank(self):
        assert percentile([], 0.5) == 0
        assert percentile([10], 0.99) == 10
        assert percentile(list(range(1, 101)), 0.50) == 50
        assert percentile(list(range(1, 101)), 0.95) == 95
