"""Self-sovereign identity: DIDs, schemas and credential definitions live
on-ledger; credentials stay off-ledger with their holders.

Selective disclosure uses per-attribute salted digests:

    digest[attr] = SHA-256(attr || 0x00 || salt || 0x00 || value)

so a presentation can reveal any subset of attributes while the issuer
signature over the full digest bundle still verifies. No attribute value
or salt ever appears in a transaction or block.
"""

from __future__ import annotations

import json
import secrets
import uuid
from dataclasses import dataclass
from typing import Callable

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PublicKey

from . import keys
from .canonical import canonical_encode, sha256
from .txflow import ChaincodeContext, ChaincodeError, ChaincodeRegistry

ROLE_ISSUER = "ISSUER"
ROLE_HOLDER = "HOLDER"
ROLE_VERIFIER = "VERIFIER"
ROLE_ENDORSER = "ENDORSER"
ROLE_ORDERER = "ORDERER"
ROLES = (ROLE_ISSUER, ROLE_HOLDER, ROLE_VERIFIER, ROLE_ENDORSER, ROLE_ORDERER)

SALT_SIZE = 16
NONCE_SIZE = 16


class IdentityError(Exception):
    """Off-ledger identity operation failure (issuance, presentation)."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


def new_did() -> str:
    return f"did:qb:{uuid.uuid4()}"


def new_nonce(rng=None) -> str:
    if rng is not None:
        return bytes(rng.getrandbits(8) for _ in range(NONCE_SIZE)).hex()
    return secrets.token_bytes(NONCE_SIZE).hex()


def did_key(did: str) -> str:
    return f"iam/did/{did}"


def schema_key(schema_id: str) -> str:
    return f"iam/schema/{schema_id}"


def cred_def_key(cred_def_id: str) -> str:
    return f"iam/creddef/{cred_def_id}"


def revocation_key(cred_def_id: str) -> str:
    return f"iam/revocation/{cred_def_id}"


def attribute_digest(attr: str, salt: bytes, value: str) -> str:
    return sha256(attr.encode() + b"\x00" + salt + b"\x00" + value.encode()).hex()


def credential_signing_doc(
    cred_id: str, cred_def_id: str, holder_did: str, digests: dict
) -> dict:
    return {
        "credDefId": cred_def_id,
        "credId": cred_id,
        "digests": dict(sorted(digests.items())),
        "holderDid": holder_did,
    }


def presentation_signing_doc(cred_id: str, nonce: str, disclosed_names) -> dict:
    return {
        "credId": cred_id,
        "disclosedAttrNames": sorted(disclosed_names),
        "nonce": nonce,
    }


# ---------------------------------------------------------------------------
# chaincode functions (on-ledger writes run through txflow endorsement)


def _register_did(ctx: ChaincodeContext, payload: dict) -> None:
    did = payload.get("did")
    key_hex = payload.get("verificationKey")
    role = payload.get("role")
    if not isinstance(did, str) or not did.startswith("did:qb:"):
        raise ChaincodeError("bad-request", "did must look like did:qb:<uuid>")
    if role not in ROLES:
        raise ChaincodeError("bad-request", f"unknown role {role!r}")
    try:
        Ed25519PublicKey.from_public_bytes(bytes.fromhex(key_hex))
    except (TypeError, ValueError):
        raise ChaincodeError("bad-request", "verificationKey is not a valid Ed25519 key")
    if ctx.get(did_key(did)) is not None:
        raise ChaincodeError("duplicate", f"did {did} already registered")
    ctx.put(did_key(did), {"did": did, "verificationKey": key_hex, "role": role})


def _require_issuer(ctx: ChaincodeContext, issuer_did: str) -> dict:
    record = ctx.get(did_key(issuer_did))
    if record is None:
        raise ChaincodeError("not-found", f"issuer {issuer_did} not registered")
    if record["role"] != ROLE_ISSUER:
        raise ChaincodeError("auth", f"{issuer_did} is not an ISSUER")
    return record


def _publish_schema(ctx: ChaincodeContext, payload: dict) -> None:
    issuer_did = payload.get("issuerDid")
    if issuer_did != ctx.submitter_did:
        raise ChaincodeError("auth", "schema must be published by its issuer")
    _require_issuer(ctx, issuer_did)
    schema_id = payload.get("schemaId")
    attr_names = payload.get("attrNames")
    if not schema_id or not isinstance(schema_id, str):
        raise ChaincodeError("bad-request", "schemaId required")
    if (
        not isinstance(attr_names, list)
        or not attr_names
        or len(set(attr_names)) != len(attr_names)
        or not all(isinstance(a, str) for a in attr_names)
    ):
        raise ChaincodeError("bad-request", "attrNames must be non-empty and unique")
    if ctx.get(schema_key(schema_id)) is not None:
        raise ChaincodeError("duplicate", f"schema {schema_id} already published")
    ctx.put(
        schema_key(schema_id),
        {
            "schemaId": schema_id,
            "name": payload.get("name", schema_id),
            "version": payload.get("version", "1.0"),
            "attrNames": list(attr_names),
        },
    )


def _publish_cred_def(ctx: ChaincodeContext, payload: dict) -> None:
    issuer_did = payload.get("issuerDid")
    if issuer_did != ctx.submitter_did:
        raise ChaincodeError("auth", "credDef must be published by its issuer")
    _require_issuer(ctx, issuer_did)
    cred_def_id = payload.get("credDefId")
    schema_id = payload.get("schemaId")
    if not cred_def_id or not isinstance(cred_def_id, str):
        raise ChaincodeError("bad-request", "credDefId required")
    if ctx.get(schema_key(schema_id)) is None:
        raise ChaincodeError("not-found", f"schema {schema_id} not on ledger")
    if ctx.get(cred_def_key(cred_def_id)) is not None:
        raise ChaincodeError("duplicate", f"credDef {cred_def_id} already published")
    ctx.put(
        cred_def_key(cred_def_id),
        {"credDefId": cred_def_id, "issuerDid": issuer_did, "schemaId": schema_id},
    )
    # registry exists from day one so verifications always read a real key
    ctx.put(revocation_key(cred_def_id), {"credDefId": cred_def_id, "revokedCredIds": []})


def _revoke_credential(ctx: ChaincodeContext, payload: dict) -> None:
    cred_def_id = payload.get("credDefId")
    cred_id = payload.get("credId")
    cred_def = ctx.get(cred_def_key(cred_def_id))
    if cred_def is None:
        raise ChaincodeError("not-found", f"credDef {cred_def_id} not on ledger")
    if cred_def["issuerDid"] != ctx.submitter_did:
        raise ChaincodeError("auth", "only the credDef's issuer may revoke")
    registry = ctx.get(revocation_key(cred_def_id))
    revoked = set(registry["revokedCredIds"])
    revoked.add(cred_id)
    ctx.put(
        revocation_key(cred_def_id),
        {"credDefId": cred_def_id, "revokedCredIds": sorted(revoked)},
    )


def register_chaincode(registry: ChaincodeRegistry) -> None:
    registry.register("iam.register_did", _register_did)
    registry.register("iam.publish_schema", _publish_schema)
    registry.register("iam.publish_cred_def", _publish_cred_def)
    registry.register("iam.revoke_credential", _revoke_credential)


# ---------------------------------------------------------------------------
# off-ledger credential lifecycle

Resolver = Callable[[str], dict | None]


def state_resolver(state) -> Resolver:
    """Adapt a WorldState/StateSnapshot .get to a document resolver."""

    def resolve(key: str) -> dict | None:
        found = state.get(key)
        if found is None:
            return None
        return json.loads(found[0].decode("utf-8"))

    return resolve


def issue_credential(
    issuer_key: keys.SigningKey,
    cred_def_id: str,
    holder_did: str,
    attrs: dict,
    resolve: Resolver,
    cred_id: str | None = None,
    rng=None,
) -> dict:
    """Create a credential, returned off-line to the holder. Writes nothing."""
    cred_def = resolve(cred_def_key(cred_def_id))
    if cred_def is None:
        raise IdentityError("not-found", f"credDef {cred_def_id} not on ledger")
    schema = resolve(schema_key(cred_def["schemaId"]))
    if schema is None:
        raise IdentityError("not-found", f"schema {cred_def['schemaId']} not on ledger")
    if set(attrs) != set(schema["attrNames"]):
        raise IdentityError(
            "attr-mismatch",
            f"attrs must be exactly {sorted(schema['attrNames'])}",
        )
    issuer_record = resolve(did_key(cred_def["issuerDid"]))
    if issuer_record is None or issuer_record["verificationKey"] != issuer_key.public_hex:
        raise IdentityError("auth", "issuer key does not match the on-ledger issuer DID")
    if cred_id is None:
        cred_id = f"cred:{uuid.uuid4()}"
    if rng is not None:
        salts = {
            attr: bytes(rng.getrandbits(8) for _ in range(SALT_SIZE)) for attr in attrs
        }
    else:
        salts = {attr: secrets.token_bytes(SALT_SIZE) for attr in attrs}
    digests = {
        attr: attribute_digest(attr, salts[attr], str(value))
        for attr, value in attrs.items()
    }
    signature = issuer_key.sign_hex(
        canonical_encode(credential_signing_doc(cred_id, cred_def_id, holder_did, digests))
    )
    return {
        "credId": cred_id,
        "credDefId": cred_def_id,
        "holderDid": holder_did,
        "attrs": {attr: str(value) for attr, value in attrs.items()},
        "salts": {attr: salt.hex() for attr, salt in salts.items()},
        "issuerSignature": signature,
    }


def create_presentation(
    credential: dict,
    disclosed_attr_names,
    nonce: str,
    holder_key: keys.SigningKey,
) -> dict:
    """Selective disclosure: values and salts only for the disclosed subset,
    digests for everything, both signatures."""
    attrs = credential["attrs"]
    unknown = set(disclosed_attr_names) - set(attrs)
    if unknown:
        raise IdentityError("unknown-attr", f"not in credential: {sorted(unknown)}")
    digests = {
        attr: attribute_digest(attr, bytes.fromhex(credential["salts"][attr]), value)
        for attr, value in attrs.items()
    }
    disclosed = {
        attr: {"value": attrs[attr], "salt": credential["salts"][attr]}
        for attr in disclosed_attr_names
    }
    holder_signature = holder_key.sign_hex(
        canonical_encode(
            presentation_signing_doc(credential["credId"], nonce, disclosed_attr_names)
        )
    )
    return {
        "credId": credential["credId"],
        "credDefId": credential["credDefId"],
        "holderDid": credential["holderDid"],
        "disclosed": disclosed,
        "digests": digests,
        "issuerSignature": credential["issuerSignature"],
        "nonce": nonce,
        "holderSignature": holder_signature,
    }


@dataclass(frozen=True)
class VerificationResult:
    accepted: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.accepted


def verify_presentation(presentation: dict, resolve: Resolver) -> VerificationResult:
    """Authenticate a presentation against on-ledger material only."""
    required = {
        "credId",
        "credDefId",
        "holderDid",
        "disclosed",
        "digests",
        "issuerSignature",
        "nonce",
        "holderSignature",
    }
    if not isinstance(presentation, dict) or not required <= set(presentation):
        return VerificationResult(False, "malformed")

    cred_def = resolve(cred_def_key(presentation["credDefId"]))
    if cred_def is None:
        return VerificationResult(False, "creddef-not-found")
    schema = resolve(schema_key(cred_def["schemaId"]))
    if schema is None:
        return VerificationResult(False, "schema-not-found")
    issuer = resolve(did_key(cred_def["issuerDid"]))
    if issuer is None:
        return VerificationResult(False, "issuer-not-found")

    digests = presentation["digests"]
    if not isinstance(digests, dict) or set(digests) != set(schema["attrNames"]):
        return VerificationResult(False, "digest-set-mismatch")
    signing_doc = credential_signing_doc(
        presentation["credId"],
        presentation["credDefId"],
        presentation["holderDid"],
        digests,
    )
    if not keys.verify(
        issuer["verificationKey"],
        canonical_encode(signing_doc),
        presentation["issuerSignature"],
    ):
        return VerificationResult(False, "bad-issuer-signature")

    disclosed = presentation["disclosed"]
    if not isinstance(disclosed, dict) or not set(disclosed) <= set(digests):
        return VerificationResult(False, "undisclosable-attr")
    for attr, pair in disclosed.items():
        try:
            recomputed = attribute_digest(
                attr, bytes.fromhex(pair["salt"]), pair["value"]
            )
        except (KeyError, TypeError, ValueError):
            return VerificationResult(False, "digest-mismatch")
        if recomputed != digests[attr]:
            return VerificationResult(False, "digest-mismatch")

    holder = resolve(did_key(presentation["holderDid"]))
    if holder is None:
        return VerificationResult(False, "holder-not-found")
    holder_doc = presentation_signing_doc(
        presentation["credId"], presentation["nonce"], sorted(disclosed)
    )
    if not keys.verify(
        holder["verificationKey"],
        canonical_encode(holder_doc),
        presentation["holderSignature"],
    ):
        return VerificationResult(False, "bad-holder-signature")

    registry = resolve(revocation_key(presentation["credDefId"]))
    if registry is not None and presentation["credId"] in registry["revokedCredIds"]:
        return VerificationResult(False, "revoked")

    return VerificationResult(True, "")
