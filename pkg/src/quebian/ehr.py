"""EHR application chaincode: hospitals, doctors, patients, append-only
medical records and consent-gated access.

Appending a record is the only write path for clinical data; there is no
update or delete function in the table. Writers authenticate with a
credential presentation verified against the same ledger the transaction
reads, so a concurrent revocation invalidates the transaction via MVCC.
"""

from __future__ import annotations

import json

from . import identity
from .ledger import Version
from .txflow import ChaincodeContext, ChaincodeError, ChaincodeRegistry


def hospital_key(hospital_id: str) -> str:
    return f"ehr/hospital/{hospital_id}"


def doctor_key(doctor_id: str) -> str:
    return f"ehr/doctor/{doctor_id}"


def patient_key(patient_id: str) -> str:
    return f"ehr/patient/{patient_id}"


def record_key(record_id: str) -> str:
    return f"ehr/record/{record_id}"


def consent_key(patient_id: str, doctor_id: str) -> str:
    return f"ehr/consent/{patient_id}/{doctor_id}"


def patient_index_key(patient_id: str, record_id: str) -> str:
    return f"ehr/idx/patient/{patient_id}/{record_id}"


def symptom_index_key(symptom_id: str, record_id: str) -> str:
    return f"ehr/idx/symptom/{symptom_id}/{record_id}"


def _require_id(payload: dict, field: str) -> str:
    value = payload.get(field)
    if not value or not isinstance(value, str) or "/" in value:
        raise ChaincodeError("bad-request", f"{field} must be a non-empty id without '/'")
    return value


def _register_hospital(ctx: ChaincodeContext, payload: dict) -> None:
    hospital_id = _require_id(payload, "hospitalId")
    if ctx.get(hospital_key(hospital_id)) is not None:
        raise ChaincodeError("duplicate", f"hospital {hospital_id} already registered")
    departments = payload.get("departments", [])
    if not isinstance(departments, list) or not all(
        isinstance(d, str) for d in departments
    ):
        raise ChaincodeError("bad-request", "departments must be a list of strings")
    ctx.put(
        hospital_key(hospital_id),
        {
            "hospitalId": hospital_id,
            "address": payload.get("address", ""),
            "phone": payload.get("phone", ""),
            "departments": departments,
            "doctorIds": [],
            "patientIds": [],
        },
    )


def _hospital_for(ctx: ChaincodeContext, payload: dict) -> dict:
    hospital_id = _require_id(payload, "hospitalId")
    hospital = ctx.get(hospital_key(hospital_id))
    if hospital is None:
        raise ChaincodeError("not-found", f"hospital {hospital_id} not registered")
    return hospital


def _require_did(ctx: ChaincodeContext, did: str) -> dict:
    record = ctx.get(identity.did_key(did or ""))
    if record is None:
        raise ChaincodeError("not-found", f"did {did!r} not registered")
    return record


def _register_doctor(ctx: ChaincodeContext, payload: dict) -> None:
    doctor_id = _require_id(payload, "doctorId")
    if ctx.get(doctor_key(doctor_id)) is not None:
        raise ChaincodeError("duplicate", f"doctor {doctor_id} already registered")
    _require_did(ctx, payload.get("did"))
    hospital = _hospital_for(ctx, payload)
    ctx.put(
        doctor_key(doctor_id),
        {
            "doctorId": doctor_id,
            "did": payload["did"],
            "demographics": payload.get("demographics", {}),
            "patientIds": [],
        },
    )
    # membership update rides in the same transaction
    hospital["doctorIds"] = hospital["doctorIds"] + [doctor_id]
    ctx.put(hospital_key(hospital["hospitalId"]), hospital)


def _register_patient(ctx: ChaincodeContext, payload: dict) -> None:
    patient_id = _require_id(payload, "patientId")
    if ctx.get(patient_key(patient_id)) is not None:
        raise ChaincodeError("duplicate", f"patient {patient_id} already registered")
    _require_did(ctx, payload.get("did"))
    hospital = _hospital_for(ctx, payload)
    ctx.put(
        patient_key(patient_id),
        {
            "patientId": patient_id,
            "did": payload["did"],
            "demographics": payload.get("demographics", {}),
            "symptomIds": [],
            "symptomNames": {},
        },
    )
    hospital["patientIds"] = hospital["patientIds"] + [patient_id]
    ctx.put(hospital_key(hospital["hospitalId"]), hospital)


def _verified_presentation(ctx: ChaincodeContext, payload: dict) -> dict:
    presentation = payload.get("presentation")
    if not isinstance(presentation, dict):
        raise ChaincodeError("auth", "presentation required")
    result = identity.verify_presentation(presentation, ctx.get)
    if not result:
        raise ChaincodeError("auth", f"presentation rejected: {result.reason}")
    return presentation


def _append_record(ctx: ChaincodeContext, payload: dict) -> None:
    record_id = _require_id(payload, "recordId")
    patient_id = _require_id(payload, "patientId")
    doctor_id = _require_id(payload, "doctorId")

    presentation = _verified_presentation(ctx, payload)
    doctor = ctx.get(doctor_key(doctor_id))
    if doctor is None:
        raise ChaincodeError("not-found", f"doctor {doctor_id} not registered")
    if presentation["holderDid"] != doctor["did"]:
        raise ChaincodeError("auth", "presentation is not bound to this doctor")

    patient = ctx.get(patient_key(patient_id))
    if patient is None:
        raise ChaincodeError("not-found", f"patient {patient_id} not registered")
    _hospital_for(ctx, payload)

    consent = ctx.get(consent_key(patient_id, doctor_id))
    if consent is None or consent["status"] != "ACTIVE":
        raise ChaincodeError("consent", f"no active consent for {doctor_id} on {patient_id}")

    if ctx.get(record_key(record_id)) is not None:
        raise ChaincodeError("duplicate", f"record {record_id} already exists")

    symptom_ids = payload.get("symptomIds")
    if (
        not isinstance(symptom_ids, list)
        or not symptom_ids
        or not all(isinstance(s, str) and s and "/" not in s for s in symptom_ids)
    ):
        raise ChaincodeError("bad-request", "symptomIds must be a non-empty list of ids")
    symptom_names = payload.get("symptomNames", {})
    if not isinstance(symptom_names, dict):
        raise ChaincodeError("bad-request", "symptomNames must be a map")

    record = {
        "recordId": record_id,
        "patientId": patient_id,
        "doctorId": doctor_id,
        "hospitalId": payload["hospitalId"],
        "symptomIds": list(symptom_ids),
        "note": str(payload.get("note", "")),
    }
    ctx.put(record_key(record_id), record)
    ctx.put(patient_index_key(patient_id, record_id), {"recordId": record_id})
    for symptom_id in dict.fromkeys(symptom_ids):
        ctx.put(symptom_index_key(symptom_id, record_id), {"recordId": record_id})

    unseen = [s for s in dict.fromkeys(symptom_ids) if s not in patient["symptomIds"]]
    names = {
        s: symptom_names[s]
        for s in symptom_ids
        if s in symptom_names and s not in patient["symptomNames"]
    }
    if unseen or names:
        patient["symptomIds"] = patient["symptomIds"] + unseen
        patient["symptomNames"] = {**patient["symptomNames"], **names}
        ctx.put(patient_key(patient_id), patient)


def _patient_bound_presentation(ctx: ChaincodeContext, payload: dict) -> dict:
    patient_id = _require_id(payload, "patientId")
    presentation = _verified_presentation(ctx, payload)
    patient = ctx.get(patient_key(patient_id))
    if patient is None:
        raise ChaincodeError("not-found", f"patient {patient_id} not registered")
    if presentation["holderDid"] != patient["did"]:
        raise ChaincodeError("auth", "presentation is not bound to this patient")
    return patient


def _grant_consent(ctx: ChaincodeContext, payload: dict) -> None:
    patient = _patient_bound_presentation(ctx, payload)
    patient_id = patient["patientId"]
    doctor_id = _require_id(payload, "doctorId")
    doctor = ctx.get(doctor_key(doctor_id))
    if doctor is None:
        raise ChaincodeError("not-found", f"doctor {doctor_id} not registered")
    consent = ctx.get(consent_key(patient_id, doctor_id))
    if consent is not None and consent["status"] == "ACTIVE":
        raise ChaincodeError("duplicate", "consent already active")
    ctx.put(
        consent_key(patient_id, doctor_id),
        {"patientId": patient_id, "doctorId": doctor_id, "status": "ACTIVE"},
    )
    if patient_id not in doctor["patientIds"]:
        doctor["patientIds"] = doctor["patientIds"] + [patient_id]
        ctx.put(doctor_key(doctor_id), doctor)


def _revoke_consent(ctx: ChaincodeContext, payload: dict) -> None:
    patient = _patient_bound_presentation(ctx, payload)
    patient_id = patient["patientId"]
    doctor_id = _require_id(payload, "doctorId")
    consent = ctx.get(consent_key(patient_id, doctor_id))
    if consent is None:
        raise ChaincodeError("not-found", "no consent exists for this doctor")
    if consent["status"] != "ACTIVE":
        raise ChaincodeError("duplicate", "consent already revoked")
    ctx.put(
        consent_key(patient_id, doctor_id),
        {"patientId": patient_id, "doctorId": doctor_id, "status": "REVOKED"},
    )


def register_chaincode(registry: ChaincodeRegistry) -> None:
    registry.register("ehr.register_hospital", _register_hospital)
    registry.register("ehr.register_doctor", _register_doctor)
    registry.register("ehr.register_patient", _register_patient)
    registry.register("ehr.append_record", _append_record)
    registry.register("ehr.grant_consent", _grant_consent)
    registry.register("ehr.revoke_consent", _revoke_consent)


# ---------------------------------------------------------------------------
# field queries: local reads over committed state, no consensus round


def _record_with_version(state, record_id: str) -> tuple[dict, Version] | None:
    found = state.get(record_key(record_id))
    if found is None:
        return None
    record = json.loads(found[0].decode("utf-8"))
    record["createdAt"] = found[1].to_doc()
    return record, found[1]


def _query_index(state, prefix: str) -> list[dict]:
    hits = []
    for key, value, _version in state.scan(prefix):
        record_id = json.loads(value.decode("utf-8"))["recordId"]
        found = _record_with_version(state, record_id)
        if found is not None:
            hits.append(found)
    hits.sort(key=lambda pair: pair[1])
    return [record for record, _ in hits]


def query_by_patient(state, patient_id: str) -> list[dict]:
    """All committed records for a patient, in commit (version) order."""
    return _query_index(state, f"ehr/idx/patient/{patient_id}/")


def query_by_symptom(state, symptom_id: str) -> list[dict]:
    """All committed records mentioning a symptom, in commit (version) order."""
    return _query_index(state, f"ehr/idx/symptom/{symptom_id}/")
