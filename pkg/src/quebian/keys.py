"""Ed25519 signing for clients, endorsers, issuers and holders.

One primitive everywhere. Public keys travel as 32-byte lowercase hex;
signatures as 64-byte hex. Verification is cached because the same
transaction gets re-verified on every replica.
"""

from __future__ import annotations

import secrets
from functools import lru_cache

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)


class SigningKey:
    """An Ed25519 private key with a stable hex identity."""

    def __init__(self, seed: bytes | None = None):
        if seed is None:
            seed = secrets.token_bytes(32)
        if len(seed) != 32:
            raise ValueError("Ed25519 seed must be 32 bytes")
        self._seed = seed
        self._key = Ed25519PrivateKey.from_private_bytes(seed)
        self.public_hex = self._key.public_key().public_bytes_raw().hex()

    @property
    def seed_hex(self) -> str:
        return self._seed.hex()

    @classmethod
    def from_seed_hex(cls, seed_hex: str) -> "SigningKey":
        return cls(bytes.fromhex(seed_hex))

    def sign(self, message: bytes) -> bytes:
        return self._key.sign(message)

    def sign_hex(self, message: bytes) -> str:
        return self.sign(message).hex()


@lru_cache(maxsize=4096)
def _public_key(public_hex: str) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(bytes.fromhex(public_hex))


@lru_cache(maxsize=65536)
def _verify_cached(public_hex: str, message: bytes, signature: bytes) -> bool:
    try:
        _public_key(public_hex).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


def verify(public_hex: str, message: bytes, signature_hex: str) -> bool:
    """True iff signature_hex is a valid Ed25519 signature over message."""
    try:
        signature = bytes.fromhex(signature_hex)
    except ValueError:
        return False
    if len(signature) != 64:
        return False
    try:
        _public_key(public_hex)
    except ValueError:
        return False
    return _verify_cached(public_hex, message, signature)
