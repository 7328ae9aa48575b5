import json

import pytest

from quebian.cli import main
from quebian.ledger import LedgerStore

from .test_ledger import append_kv


@pytest.fixture
def data(tmp_path):
    return tmp_path


def run(argv):
    return main([str(a) for a in argv])


class TestLedgerVerify:
    def test_ok_exit_0(self, tmp_path, capsys):
        path = tmp_path / "ledger.qbl"
        store = LedgerStore(path)
        for h in range(1, 4):
            append_kv(store, h)
        assert run(["ledger", "verify", "--path", path]) == 0
        assert "ok" in capsys.readouterr().out

    def test_tamper_exit_1_prints_height(self, tmp_path, capsys):
        path = tmp_path / "ledger.qbl"
        store = LedgerStore(path)
        for h in range(1, 4):
            append_kv(store, h)
        data = bytearray(path.read_bytes())
        pos = data.find(b'"k/2/0"')
        data[pos + 2] ^= 0x01
        path.write_bytes(bytes(data))
        assert run(["ledger", "verify", "--path", path]) == 1
        assert "2" in capsys.readouterr().out

    def test_missing_file_exit_2(self, tmp_path):
        assert run(["ledger", "verify", "--path", tmp_path / "nope.qbl"]) == 2

    def test_unknown_subcommand_exit_2(self):
        with pytest.raises(SystemExit) as exit_info:
            run(["frobnicate"])
        assert exit_info.value.code == 2


class TestFullCliFlow:
    def test_end_to_end(self, tmp_path, capsys):
        data = tmp_path / "node-data"
        issuer_wallet = tmp_path / "issuer.key.json"
        doctor_wallet = tmp_path / "doctor.key.json"
        patient_wallet = tmp_path / "patient.key.json"
        doctor_cred = tmp_path / "doctor.cred.json"
        patient_cred = tmp_path / "patient.cred.json"
        pres_file = tmp_path / "doctor.pres.json"

        def ok(argv):
            code = run(argv + ["--data", data])
            assert code == 0, f"{argv} -> {code}: {capsys.readouterr()}"

        ok(["iam", "register-did", "--wallet", issuer_wallet, "--role", "ISSUER"])
        ok(["iam", "register-did", "--wallet", doctor_wallet, "--role", "HOLDER"])
        ok(["iam", "register-did", "--wallet", patient_wallet, "--role", "HOLDER"])
        capsys.readouterr()

        ok(
            ["iam", "publish-schema", "--wallet", issuer_wallet,
             "--schema-id", "MD-License", "--attrs", "name,licenseNo,hospitalId"]
        )
        ok(
            ["iam", "publish-schema", "--wallet", issuer_wallet,
             "--schema-id", "Patient-Card", "--attrs", "name,patientRef,hospitalId"]
        )
        ok(
            ["iam", "publish-creddef", "--wallet", issuer_wallet,
             "--creddef-id", "cd-MD-License", "--schema-id", "MD-License"]
        )
        ok(
            ["iam", "publish-creddef", "--wallet", issuer_wallet,
             "--creddef-id", "cd-Patient-Card", "--schema-id", "Patient-Card"]
        )

        doctor_did = json.loads(doctor_wallet.read_text())["did"]
        patient_did = json.loads(patient_wallet.read_text())["did"]
        ok(["ehr", "register", "hospital", "--id", "H001", "--address", "1 Way"])
        ok(["ehr", "register", "doctor", "--id", "D01", "--did", doctor_did,
            "--hospital", "H001"])
        ok(["ehr", "register", "patient", "--id", "P001", "--did", patient_did,
            "--hospital", "H001"])

        ok(
            ["iam", "issue", "--wallet", issuer_wallet, "--creddef-id", "cd-MD-License",
             "--holder-did", doctor_did, "--attr", "name=Dr. C", "--attr", "licenseNo=L-9",
             "--attr", "hospitalId=H001", "--out", doctor_cred]
        )
        ok(
            ["iam", "issue", "--wallet", issuer_wallet, "--creddef-id", "cd-Patient-Card",
             "--holder-did", patient_did, "--attr", "name=Pat", "--attr", "patientRef=P001",
             "--attr", "hospitalId=H001", "--out", patient_cred]
        )

        # consent must exist before a record can be appended
        append_args = ["ehr", "append", "--record-id", "R-CLI-1", "--patient", "P001",
                       "--doctor", "D01", "--hospital", "H001", "--symptoms", "S1,S2",
                       "--cred", doctor_cred, "--wallet", doctor_wallet]
        capsys.readouterr()
        assert run([str(a) for a in append_args] + ["--data", str(data)]) == 1
        assert "consent" in capsys.readouterr().err

        ok(["ehr", "consent", "grant", "--patient", "P001", "--doctor", "D01",
            "--cred", patient_cred, "--wallet", patient_wallet])
        ok(append_args)
        capsys.readouterr()

        ok(["ehr", "query", "--patient", "P001", "--json"])
        out = json.loads(capsys.readouterr().out)
        assert [r["recordId"] for r in out["records"]] == ["R-CLI-1"]

        # presentation round trip and revocation through the CLI
        ok(["iam", "present", "--cred", doctor_cred, "--wallet", doctor_wallet,
            "--disclose", "licenseNo", "--out", pres_file])
        ok(["iam", "verify", "--pres", pres_file])
        capsys.readouterr()

        tampered = json.loads(pres_file.read_text())
        tampered["disclosed"]["licenseNo"]["value"] = "L-0"
        pres_file.write_text(json.dumps(tampered))
        assert run(["iam", "verify", "--pres", str(pres_file), "--data", str(data)]) == 1

        cred_id = json.loads(doctor_cred.read_text())["credId"]
        ok(["iam", "revoke", "--wallet", issuer_wallet, "--creddef-id", "cd-MD-License",
            "--cred-id", cred_id])
        ok(["iam", "present", "--cred", doctor_cred, "--wallet", doctor_wallet,
            "--disclose", "licenseNo", "--out", pres_file])
        capsys.readouterr()
        assert run(["iam", "verify", "--pres", str(pres_file), "--data", str(data)]) == 1
        assert "revoked" in capsys.readouterr().out

        # the ledger file the CLI built verifies clean
        ledger = data / "ledger.qbl"
        assert run(["ledger", "verify", "--path", ledger]) == 0

    def test_cli_query_matches_http(self, tmp_path):
        """CLI and HTTP read paths return byte-identical record lists."""
        from fastapi.testclient import TestClient

        from quebian.gateway import create_app
        from quebian.node import Node, NodeConfig

        from .test_gateway import Gateway

        gateway = Gateway()
        gateway.provision()
        gateway.grant_consent()
        assert gateway.post("/records", gateway.record_payload("R-EQ-1")).status_code == 201
        http_records = gateway.client.get(
            "/records", params={"patientId": "P001"}
        ).json()["records"]
        cli_records = gateway.node.query_records(patient_id="P001")
        assert http_records == cli_records


class TestScenarioCli:
    def test_run_writes_metrics(self, tmp_path, capsys):
        out = tmp_path / "metrics.json"
        config = tmp_path / "sim.json"
        config.write_text(
            json.dumps(
                {
                    "config": {"seed": 5, "latency_ms_range": [1, 3], "batch_max_txs": 5},
                    "workload": {"tx_count": 20, "key_count": 5},
                }
            )
        )
        assert run(["scenario", "run", "--config", config, "--out", out]) == 0
        written = json.loads(out.read_text())
        assert written["metrics"]["valid_count"] == 20
        assert written["metrics"]["outcome"] == "completed"

    def test_compare_mode(self, tmp_path, capsys):
        assert (
            run(["scenario", "run", "--compare", "--txs", "30", "--keys", "10",
                 "--seed", "2", "--json"])
            == 0
        )
        out = json.loads(capsys.readouterr().out)
        assert out["tpsRatio"] is not None

    def test_transcript_written(self, tmp_path):
        transcript = tmp_path / "events.jsonl"
        assert (
            run(["scenario", "run", "--txs", "10", "--keys", "4", "--seed", "3",
                 "--transcript", transcript])
            == 0
        )
        lines = transcript.read_text().strip().split("\n")
        assert all(json.loads(line)["ev"] for line in lines)

    def test_bad_config_exit_2(self, tmp_path):
        config = tmp_path / "sim.json"
        config.write_text(json.dumps({"config": {"orderer": "raft"}}))
        assert run(["scenario", "run", "--config", config]) == 2
