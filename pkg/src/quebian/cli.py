"""quebian command line: node, ledger, IAM flows, EHR operations, scenarios.

Exit codes: 0 success, 1 domain rejection (chaincode refusal, failed
verification, tampered ledger), 2 usage or I/O problems.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import uuid
from pathlib import Path

from . import identity, netsim
from .canonical import canonical_encode
from .keys import SigningKey
from .ledger import LedgerIOError, verify_chain_file
from .node import Node, NodeConfig, OrderingTimeout
from .txflow import EndorsementRefused, make_proposal

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_USAGE = 2


class CliError(Exception):
    def __init__(self, message: str, exit_code: int = EXIT_REJECTED):
        super().__init__(message)
        self.exit_code = exit_code


def emit(args, doc: dict, text: str | None = None) -> None:
    if getattr(args, "json", False) or text is None:
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        print(text)


def data_dir(args) -> str:
    return args.data or os.environ.get("QUEBIAN_CONFIG", "./quebian-data")


def open_node(args) -> Node:
    return Node(NodeConfig(data_dir=data_dir(args)))


def load_wallet(path: str) -> tuple[str, SigningKey]:
    try:
        doc = json.loads(Path(path).read_text())
        return doc["did"], SigningKey.from_seed_hex(doc["seed"])
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read wallet {path}: {exc}", EXIT_USAGE) from exc


def write_json(path: str, doc: dict) -> None:
    try:
        Path(path).write_text(canonical_encode(doc).decode("utf-8") + "\n")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_USAGE) from exc


def read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_USAGE) from exc


def submit_as(node: Node, function: str, payload: dict, wallet=None):
    try:
        if wallet is None:
            return node.submit_function(function, payload)
        did, key = wallet
        proposal = make_proposal(f"tx-{uuid.uuid4()}", function, payload, did, key)
        return node.submit(proposal)
    except EndorsementRefused as refusal:
        raise CliError(f"rejected ({refusal.code}): {refusal.message}") from refusal
    except OrderingTimeout as timeout:
        raise CliError(f"timeout: {timeout}") from timeout


def outcome_doc(outcome) -> dict:
    return {"txId": outcome.tx_id, "height": outcome.height, "code": outcome.code}


def check_committed(args, outcome) -> None:
    emit(args, outcome_doc(outcome), f"committed at height {outcome.height} ({outcome.code})")
    if outcome.code != "VALID":
        raise CliError(f"transaction invalidated: {outcome.code}")


# -- node ----------------------------------------------------------------------


def cmd_node_start(args) -> int:
    from .gateway import serve

    node = Node(
        NodeConfig(
            data_dir=data_dir(args),
            batch_max_txs=args.batch_max,
            batch_wait_ms=args.batch_wait_ms,
        )
    )
    port = args.port or int(os.environ.get("QUEBIAN_PORT", "8468"))
    print(f"quebian node on http://{args.host}:{port} (data: {data_dir(args)})")
    serve(node, host=args.host, port=port)
    return EXIT_OK


# -- ledger ----------------------------------------------------------------------


def cmd_ledger_verify(args) -> int:
    try:
        result = verify_chain_file(args.path)
    except LedgerIOError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    doc = {"ok": result.ok, "firstBadHeight": result.first_bad_height, "reason": result.reason}
    if result.ok:
        emit(args, doc, "ok")
        return EXIT_OK
    emit(args, doc, f"tampered: first bad height {result.first_bad_height} ({result.reason})")
    return EXIT_REJECTED


# -- iam ----------------------------------------------------------------------


def cmd_iam_register_did(args) -> int:
    node = open_node(args)
    if args.wallet:
        did = args.did or f"did:qb:{uuid.uuid4()}"
        key = SigningKey()
        write_json(args.wallet, {"did": did, "seed": key.seed_hex})
        payload = {"did": did, "verificationKey": key.public_hex, "role": args.role}
        outcome = submit_as(node, "iam.register_did", payload, wallet=(did, key))
    else:
        if not args.did or not args.key:
            raise CliError("provide --wallet OUT.json, or both --did and --key", EXIT_USAGE)
        payload = {"did": args.did, "verificationKey": args.key, "role": args.role}
        outcome = submit_as(node, "iam.register_did", payload)
    emit(
        args,
        {**outcome_doc(outcome), "did": payload["did"]},
        f"registered {payload['did']} at height {outcome.height}",
    )
    return EXIT_OK


def cmd_iam_publish_schema(args) -> int:
    node = open_node(args)
    wallet = load_wallet(args.wallet)
    payload = {
        "issuerDid": wallet[0],
        "schemaId": args.schema_id,
        "name": args.name or args.schema_id,
        "version": args.version,
        "attrNames": args.attrs.split(","),
    }
    check_committed(args, submit_as(node, "iam.publish_schema", payload, wallet=wallet))
    return EXIT_OK


def cmd_iam_publish_creddef(args) -> int:
    node = open_node(args)
    wallet = load_wallet(args.wallet)
    payload = {
        "credDefId": args.creddef_id,
        "issuerDid": wallet[0],
        "schemaId": args.schema_id,
    }
    check_committed(args, submit_as(node, "iam.publish_cred_def", payload, wallet=wallet))
    return EXIT_OK


def cmd_iam_issue(args) -> int:
    node = open_node(args)
    _, issuer_key = load_wallet(args.wallet)
    attrs = {}
    for pair in args.attr:
        if "=" not in pair:
            raise CliError(f"--attr expects name=value, got {pair!r}", EXIT_USAGE)
        name, value = pair.split("=", 1)
        attrs[name] = value
    try:
        credential = identity.issue_credential(
            issuer_key,
            args.creddef_id,
            args.holder_did,
            attrs,
            node.resolver(),
            cred_id=args.cred_id,
        )
    except identity.IdentityError as exc:
        raise CliError(f"issuance failed ({exc.code}): {exc.message}") from exc
    write_json(args.out, credential)
    emit(
        args,
        {"credId": credential["credId"], "out": args.out},
        f"issued {credential['credId']} -> {args.out}",
    )
    return EXIT_OK


def cmd_iam_present(args) -> int:
    credential = read_json(args.cred)
    _, holder_key = load_wallet(args.wallet)
    nonce = args.nonce or identity.new_nonce()
    disclose = [a for a in args.disclose.split(",") if a] if args.disclose else []
    try:
        presentation = identity.create_presentation(credential, disclose, nonce, holder_key)
    except identity.IdentityError as exc:
        raise CliError(f"presentation failed ({exc.code}): {exc.message}") from exc
    write_json(args.out, presentation)
    emit(
        args,
        {"out": args.out, "nonce": nonce, "disclosed": disclose},
        f"presentation -> {args.out}",
    )
    return EXIT_OK


def cmd_iam_verify(args) -> int:
    node = open_node(args)
    presentation = read_json(args.pres)
    result = identity.verify_presentation(presentation, node.resolver())
    emit(
        args,
        {"accepted": result.accepted, "reason": result.reason},
        "accepted" if result.accepted else f"rejected: {result.reason}",
    )
    return EXIT_OK if result.accepted else EXIT_REJECTED


def cmd_iam_revoke(args) -> int:
    node = open_node(args)
    wallet = load_wallet(args.wallet)
    payload = {"credDefId": args.creddef_id, "credId": args.cred_id}
    check_committed(args, submit_as(node, "iam.revoke_credential", payload, wallet=wallet))
    return EXIT_OK


# -- ehr ----------------------------------------------------------------------


def cmd_ehr_register(args) -> int:
    node = open_node(args)
    if args.entity == "hospital":
        payload = {
            "hospitalId": args.id,
            "address": args.address,
            "phone": args.phone,
            "departments": args.departments.split(",") if args.departments else [],
        }
        function = "ehr.register_hospital"
    else:
        if not args.did or not args.hospital:
            raise CliError("--did and --hospital are required", EXIT_USAGE)
        id_field = "doctorId" if args.entity == "doctor" else "patientId"
        payload = {
            id_field: args.id,
            "did": args.did,
            "hospitalId": args.hospital,
            "demographics": json.loads(args.demographics) if args.demographics else {},
        }
        function = f"ehr.register_{args.entity}"
    check_committed(args, submit_as(node, function, payload))
    return EXIT_OK


def _possession_presentation(args) -> dict:
    """Empty disclosure: holder binding without putting values on-ledger."""
    credential = read_json(args.cred)
    _, holder_key = load_wallet(args.wallet)
    return identity.create_presentation(credential, [], identity.new_nonce(), holder_key)


def cmd_ehr_append(args) -> int:
    node = open_node(args)
    payload = {
        "recordId": args.record_id or f"R-{uuid.uuid4()}",
        "patientId": args.patient,
        "doctorId": args.doctor,
        "hospitalId": args.hospital,
        "symptomIds": args.symptoms.split(","),
        "symptomNames": json.loads(args.symptom_names) if args.symptom_names else {},
        "note": args.note,
        "presentation": _possession_presentation(args),
    }
    check_committed(args, submit_as(node, "ehr.append_record", payload))
    return EXIT_OK


def cmd_ehr_consent(args) -> int:
    node = open_node(args)
    payload = {
        "patientId": args.patient,
        "doctorId": args.doctor,
        "presentation": _possession_presentation(args),
    }
    function = "ehr.grant_consent" if args.action == "grant" else "ehr.revoke_consent"
    check_committed(args, submit_as(node, function, payload))
    return EXIT_OK


def cmd_ehr_query(args) -> int:
    node = open_node(args)
    if (args.patient is None) == (args.symptom is None):
        raise CliError("query by exactly one of --patient / --symptom", EXIT_USAGE)
    records = node.query_records(patient_id=args.patient, symptom_id=args.symptom)
    emit(
        args,
        {"records": records, "total": len(records)},
        "\n".join(
            f"{r['recordId']}  patient={r['patientId']} doctor={r['doctorId']} "
            f"symptoms={','.join(r['symptomIds'])} height={r['createdAt']['height']}"
            for r in records
        )
        or "(no records)",
    )
    return EXIT_OK


# -- scenario ----------------------------------------------------------------------


def cmd_scenario_run(args) -> int:
    doc = read_json(args.config) if args.config else {}
    config_doc = doc.get("config", doc)
    workload_doc = doc.get("workload", doc.get("workload", {}))
    overrides = {
        "seed": args.seed,
        "orderer": args.orderer,
        "n": args.n,
        "f": args.f,
        "batch_max_txs": args.batch_max,
        "batch_wait_ms": args.batch_wait_ms,
    }
    for key, value in overrides.items():
        if value is not None:
            config_doc[key] = value
    workload_overrides = {
        "tx_count": args.txs,
        "key_count": args.keys,
        "conflict_rate": args.conflict_rate,
    }
    for key, value in workload_overrides.items():
        if value is not None:
            workload_doc[key] = value
    try:
        config = netsim.SimConfig.from_doc(config_doc)
        workload = netsim.Workload.from_doc(workload_doc)
        config.validate()
        workload.validate()
    except (netsim.SimulationError, TypeError) as exc:
        raise CliError(f"bad scenario config: {exc}", EXIT_USAGE) from exc

    if args.compare:
        result = netsim.compare_paradigms(config, workload)
        out_doc = result
        summary = (
            f"pipeline {result['pipeline']['tps']:.1f} tps vs "
            f"baseline {result['baseline']['tps']:.1f} tps "
            f"(ratio {result['tpsRatio'] if result['tpsRatio'] is None else round(result['tpsRatio'], 2)})"
        )
    else:
        sim = netsim.Simulation(config, workload)
        metrics = sim.run()
        out_doc = {
            "config": config.to_doc(),
            "workload": workload.to_doc(),
            "metrics": metrics.to_doc(),
        }
        if args.transcript:
            Path(args.transcript).write_text("\n".join(sim.transcript_lines()) + "\n")
        summary = (
            f"{metrics.outcome}: {metrics.valid_count} valid / "
            f"{metrics.committed_count} committed, {metrics.tps:.1f} tps, "
            f"safety={metrics.safety}"
        )
    if args.out:
        Path(args.out).write_text(json.dumps(out_doc, indent=2, sort_keys=True) + "\n")
    emit(args, out_doc, summary)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quebian",
        description="desk-scale permissioned ledger for electronic medical records",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--data", help="node data directory (default $QUEBIAN_CONFIG or ./quebian-data)")
        p.add_argument("--json", action="store_true", help="machine-readable output")

    node_p = sub.add_parser("node", help="run a node")
    node_sub = node_p.add_subparsers(dest="node_command", required=True)
    start = node_sub.add_parser("start", help="serve the HTTP gateway")
    add_common(start)
    start.add_argument("--host", default="127.0.0.1")
    start.add_argument("--port", type=int, default=None)
    start.add_argument("--batch-max", type=int, default=1)
    start.add_argument("--batch-wait-ms", type=int, default=50)
    start.set_defaults(fn=cmd_node_start)

    ledger_p = sub.add_parser("ledger", help="ledger inspection")
    ledger_sub = ledger_p.add_subparsers(dest="ledger_command", required=True)
    verify = ledger_sub.add_parser("verify", help="verify a ledger file")
    verify.add_argument("--path", required=True)
    verify.add_argument("--json", action="store_true")
    verify.set_defaults(fn=cmd_ledger_verify)

    iam = sub.add_parser("iam", help="identity flows")
    iam_sub = iam.add_subparsers(dest="iam_command", required=True)

    p = iam_sub.add_parser("register-did", help="register a DID on the ledger")
    add_common(p)
    p.add_argument("--wallet", help="write a fresh keypair wallet here and self-register")
    p.add_argument("--did")
    p.add_argument("--key", help="verification key hex when registering a foreign DID")
    p.add_argument("--role", required=True, choices=list(identity.ROLES))
    p.set_defaults(fn=cmd_iam_register_did)

    p = iam_sub.add_parser("publish-schema")
    add_common(p)
    p.add_argument("--wallet", required=True, help="issuer wallet file")
    p.add_argument("--schema-id", required=True)
    p.add_argument("--name")
    p.add_argument("--version", default="1.0")
    p.add_argument("--attrs", required=True, help="comma-separated attribute names")
    p.set_defaults(fn=cmd_iam_publish_schema)

    p = iam_sub.add_parser("publish-creddef")
    add_common(p)
    p.add_argument("--wallet", required=True)
    p.add_argument("--creddef-id", required=True)
    p.add_argument("--schema-id", required=True)
    p.set_defaults(fn=cmd_iam_publish_creddef)

    p = iam_sub.add_parser("issue", help="issue a credential (off-ledger)")
    add_common(p)
    p.add_argument("--wallet", required=True, help="issuer wallet file")
    p.add_argument("--creddef-id", required=True)
    p.add_argument("--holder-did", required=True)
    p.add_argument("--attr", action="append", default=[], help="name=value, repeatable")
    p.add_argument("--cred-id")
    p.add_argument("--out", required=True, help="credential file (*.cred.json)")
    p.set_defaults(fn=cmd_iam_issue)

    p = iam_sub.add_parser("present", help="build a selective-disclosure presentation")
    add_common(p)  # --data accepted for uniformity; presenting is offline
    p.add_argument("--cred", required=True)
    p.add_argument("--wallet", required=True, help="holder wallet file")
    p.add_argument("--disclose", default="", help="comma-separated attribute names")
    p.add_argument("--nonce", help="verifier-chosen nonce hex (random if omitted)")
    p.add_argument("--out", required=True, help="presentation file (*.pres.json)")
    p.set_defaults(fn=cmd_iam_present)

    p = iam_sub.add_parser("verify", help="verify a presentation against the ledger")
    add_common(p)
    p.add_argument("--pres", required=True)
    p.set_defaults(fn=cmd_iam_verify)

    p = iam_sub.add_parser("revoke")
    add_common(p)
    p.add_argument("--wallet", required=True)
    p.add_argument("--creddef-id", required=True)
    p.add_argument("--cred-id", required=True)
    p.set_defaults(fn=cmd_iam_revoke)

    ehr_p = sub.add_parser("ehr", help="EHR application")
    ehr_sub = ehr_p.add_subparsers(dest="ehr_command", required=True)

    p = ehr_sub.add_parser("register")
    add_common(p)
    p.add_argument("entity", choices=["hospital", "doctor", "patient"])
    p.add_argument("--id", required=True)
    p.add_argument("--address", default="")
    p.add_argument("--phone", default="")
    p.add_argument("--departments", default="")
    p.add_argument("--did")
    p.add_argument("--hospital")
    p.add_argument("--demographics", help="JSON object")
    p.set_defaults(fn=cmd_ehr_register)

    p = ehr_sub.add_parser("append", help="append a medical record (doctor)")
    add_common(p)
    p.add_argument("--record-id")
    p.add_argument("--patient", required=True)
    p.add_argument("--doctor", required=True)
    p.add_argument("--hospital", required=True)
    p.add_argument("--symptoms", required=True, help="comma-separated symptom ids")
    p.add_argument("--symptom-names", help="JSON map id->name")
    p.add_argument("--note", default="")
    p.add_argument("--cred", required=True, help="doctor credential file")
    p.add_argument("--wallet", required=True, help="doctor wallet file")
    p.set_defaults(fn=cmd_ehr_append)

    p = ehr_sub.add_parser("consent", help="grant or revoke consent (patient)")
    add_common(p)
    p.add_argument("action", choices=["grant", "revoke"])
    p.add_argument("--patient", required=True)
    p.add_argument("--doctor", required=True)
    p.add_argument("--cred", required=True, help="patient credential file")
    p.add_argument("--wallet", required=True, help="patient wallet file")
    p.set_defaults(fn=cmd_ehr_consent)

    p = ehr_sub.add_parser("query")
    add_common(p)
    p.add_argument("--patient")
    p.add_argument("--symptom")
    p.set_defaults(fn=cmd_ehr_query)

    scenario = sub.add_parser("scenario", help="deterministic network simulation")
    scenario_sub = scenario.add_subparsers(dest="scenario_command", required=True)
    p = scenario_sub.add_parser("run")
    p.add_argument("--json", action="store_true")
    p.add_argument("--config", help="scenario JSON ({config:…, workload:…})")
    p.add_argument("--out", help="metrics JSON output path")
    p.add_argument("--transcript", help="write the canonical-JSON event transcript here")
    p.add_argument("--compare", action="store_true", help="pipeline vs serial baseline")
    p.add_argument("--seed", type=int)
    p.add_argument("--orderer", choices=["solo", "pbft"])
    p.add_argument("--n", type=int)
    p.add_argument("--f", type=int)
    p.add_argument("--batch-max", type=int)
    p.add_argument("--batch-wait-ms", type=int)
    p.add_argument("--txs", type=int)
    p.add_argument("--keys", type=int)
    p.add_argument("--conflict-rate", type=float)
    p.set_defaults(fn=cmd_scenario_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
