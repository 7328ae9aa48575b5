"""HTTP gateway: thin JSON surface over the node.

Write endpoints authenticate users by the Presentation attached to the
request body (the node's own client identity signs the proposals);
queries are local reads of committed state. Every non-2xx response body
is exactly one ApiError: {"code", "message", "txId"?}.
"""

from __future__ import annotations

import secrets
import threading
import uuid

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse

from . import identity
from .ledger import hash_block
from .node import Node, OrderingTimeout
from .txflow import (
    VALID,
    MVCC_CONFLICT,
    ENDORSEMENT_POLICY_FAILURE,
    BAD_SIGNATURE,
    EndorsementRefused,
    TxProposal,
)

# chaincode rejection tag -> (HTTP status, ApiError code)
ERROR_MAP = {
    "auth": (403, "AUTH_FAILED"),
    "consent": (403, "CONSENT_MISSING"),
    "not-found": (404, "NOT_FOUND"),
    "duplicate": (409, "CONFLICT"),
    "bad-request": (400, "BAD_REQUEST"),
    "BAD_FUNCTION": (400, "BAD_REQUEST"),
}

COMMIT_CODE_MAP = {
    MVCC_CONFLICT: (409, "CONFLICT"),
    ENDORSEMENT_POLICY_FAILURE: (403, "AUTH_FAILED"),
    BAD_SIGNATURE: (403, "AUTH_FAILED"),
}


def api_error(status: int, code: str, message: str, tx_id: str | None = None):
    body = {"code": code, "message": message}
    if tx_id is not None:
        body["txId"] = tx_id
    return JSONResponse(status_code=status, content=body)


class NonceRegistry:
    """Verifier-side replay defense: a nonce is good for one verification."""

    def __init__(self):
        self._used: set[str] = set()
        self._lock = threading.Lock()

    def mint(self) -> str:
        return secrets.token_bytes(identity.NONCE_SIZE).hex()

    def spend(self, nonce: str) -> bool:
        """False if the nonce was already used in this session."""
        if not isinstance(nonce, str) or not nonce:
            return False
        with self._lock:
            if nonce in self._used:
                return False
            self._used.add(nonce)
            return True


def create_app(node: Node) -> FastAPI:
    app = FastAPI(title="quebian gateway", version="0.1.0")
    app.state.node = node
    nonces = NonceRegistry()

    def run_write(function: str, payload: dict):
        """Submit through the pipeline and map the outcome onto HTTP."""
        try:
            outcome = node.submit_function(function, payload)
        except EndorsementRefused as refusal:
            status, code = ERROR_MAP.get(refusal.code, (400, "BAD_REQUEST"))
            return api_error(status, code, refusal.message)
        except OrderingTimeout as timeout:
            return api_error(504, "TIMEOUT", str(timeout), tx_id=timeout.tx_id)
        if outcome.code != VALID:
            status, code = COMMIT_CODE_MAP.get(outcome.code, (409, "CONFLICT"))
            return api_error(
                status, code, f"transaction invalidated: {outcome.code}",
                tx_id=outcome.tx_id,
            )
        return JSONResponse(
            status_code=201,
            content={"txId": outcome.tx_id, "height": outcome.height, "code": outcome.code},
        )

    def spend_presentation_nonce(payload: dict):
        presentation = payload.get("presentation")
        if not isinstance(presentation, dict):
            return api_error(403, "AUTH_FAILED", "presentation required")
        if not nonces.spend(presentation.get("nonce", "")):
            return api_error(403, "AUTH_FAILED", "presentation nonce already used")
        return None

    # -- EHR writes -----------------------------------------------------------

    @app.post("/hospitals")
    def register_hospital(payload: dict = Body(...)):
        return run_write("ehr.register_hospital", payload)

    @app.post("/doctors")
    def register_doctor(payload: dict = Body(...)):
        return run_write("ehr.register_doctor", payload)

    @app.post("/patients")
    def register_patient(payload: dict = Body(...)):
        return run_write("ehr.register_patient", payload)

    @app.post("/records")
    def append_record(payload: dict = Body(...)):
        rejected = spend_presentation_nonce(payload)
        if rejected is not None:
            return rejected
        payload.setdefault("recordId", f"R-{uuid.uuid4()}")
        return run_write("ehr.append_record", payload)

    @app.post("/consents/grant")
    def grant_consent(payload: dict = Body(...)):
        rejected = spend_presentation_nonce(payload)
        if rejected is not None:
            return rejected
        return run_write("ehr.grant_consent", payload)

    @app.post("/consents/revoke")
    def revoke_consent(payload: dict = Body(...)):
        rejected = spend_presentation_nonce(payload)
        if rejected is not None:
            return rejected
        return run_write("ehr.revoke_consent", payload)

    # -- EHR queries ----------------------------------------------------------

    @app.get("/records")
    def get_records(patientId: str | None = None, symptomId: str | None = None,
                    limit: int = 1000, offset: int = 0):
        if (patientId is None) == (symptomId is None):
            return api_error(400, "BAD_REQUEST", "query by exactly one of patientId, symptomId")
        records = node.query_records(patient_id=patientId, symptom_id=symptomId)
        return {"records": records[offset : offset + limit], "total": len(records)}

    # -- IAM ------------------------------------------------------------------

    @app.post("/iam/dids")
    def register_did(payload: dict = Body(...)):
        return run_write("iam.register_did", payload)

    def run_signed_proposal(expected_function: str, payload: dict):
        """Issuer-signed operations arrive as complete signed proposals so
        issuer keys never leave their wallets."""
        doc = payload.get("proposal")
        if not isinstance(doc, dict):
            return api_error(400, "BAD_REQUEST", "body must carry a signed proposal")
        try:
            proposal = TxProposal.from_doc(doc)
        except (KeyError, TypeError) as exc:
            return api_error(400, "BAD_REQUEST", f"malformed proposal: {exc}")
        if proposal.function != expected_function:
            return api_error(
                400, "BAD_REQUEST", f"endpoint only accepts {expected_function}"
            )
        try:
            outcome = node.submit(proposal)
        except EndorsementRefused as refusal:
            status, code = ERROR_MAP.get(refusal.code, (400, "BAD_REQUEST"))
            return api_error(status, code, refusal.message)
        except OrderingTimeout as timeout:
            return api_error(504, "TIMEOUT", str(timeout), tx_id=timeout.tx_id)
        if outcome.code != VALID:
            status, code = COMMIT_CODE_MAP.get(outcome.code, (409, "CONFLICT"))
            return api_error(status, code, f"transaction invalidated: {outcome.code}",
                             tx_id=outcome.tx_id)
        return JSONResponse(
            status_code=201,
            content={"txId": outcome.tx_id, "height": outcome.height, "code": outcome.code},
        )

    @app.post("/iam/schemas")
    def publish_schema(payload: dict = Body(...)):
        return run_signed_proposal("iam.publish_schema", payload)

    @app.post("/iam/creddefs")
    def publish_cred_def(payload: dict = Body(...)):
        return run_signed_proposal("iam.publish_cred_def", payload)

    @app.post("/iam/revocations")
    def revoke_credential(payload: dict = Body(...)):
        return run_signed_proposal("iam.revoke_credential", payload)

    @app.get("/iam/nonce")
    def mint_nonce():
        return {"nonce": nonces.mint()}

    @app.post("/iam/verify")
    def verify_presentation(payload: dict = Body(...)):
        presentation = payload.get("presentation", payload)
        if not isinstance(presentation, dict):
            return api_error(400, "BAD_REQUEST", "presentation must be an object")
        if not nonces.spend(presentation.get("nonce", "")):
            return {"accepted": False, "reason": "nonce-replayed"}
        result = identity.verify_presentation(presentation, node.resolver())
        body = {"accepted": result.accepted, "reason": result.reason}
        if result.accepted:
            body["disclosed"] = presentation.get("disclosed", {})
        return body

    # -- ledger ---------------------------------------------------------------

    @app.get("/ledger/blocks/{height}")
    def get_block(height: int):
        try:
            block = node.store.block(height)
        except Exception:
            return api_error(404, "NOT_FOUND", f"no block at height {height}")
        return {
            "block": block.to_doc(),
            "headerHash": hash_block(block.header).hex(),
            "tip": node.store.height,
        }

    @app.get("/ledger/verify")
    def verify_ledger():
        result = node.verify()
        return {
            "ok": result.ok,
            "firstBadHeight": result.first_bad_height,
            "reason": result.reason,
        }

    @app.get("/metrics")
    def metrics():
        return node.metrics()

    @app.exception_handler(Exception)
    async def unhandled(request: Request, exc: Exception):
        return api_error(400, "BAD_REQUEST", str(exc))

    return app


def serve(node: Node, host: str = "127.0.0.1", port: int = 8468) -> None:
    import uvicorn

    node.start()
    try:
        uvicorn.run(create_app(node), host=host, port=port, log_level="warning")
    finally:
        node.stop()
