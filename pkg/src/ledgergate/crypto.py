"""Key material, signing, and verification.

Two interchangeable signature schemes are supported; the active one is fixed
network-wide in the genesis configuration:

* ``rsa-sha256`` -- 2048-bit RSA with PKCS#1 v1.5 padding over SHA-256
  (the default).
* ``ed25519``    -- Ed25519 over the SHA-256 digest of the message.

Both are deterministic: signing the same bytes with the same private key
always produces the same signature, which keeps mined blocks and persisted
chains byte-stable.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature, UnsupportedAlgorithm
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ed25519, padding, rsa

RSA_SHA256 = "rsa-sha256"
ED25519 = "ed25519"
SCHEMES = (RSA_SHA256, ED25519)

ENTITY_ID_HEX_CHARS = 32


class CryptoError(Exception):
    pass


@dataclass(frozen=True)
class KeyPair:
    scheme: str
    private: object = field(repr=False)
    public_pem: str

    @property
    def entity_id(self) -> str:
        return entity_id_for_public_pem(self.public_pem)

    def private_pem(self) -> bytes:
        return self.private.private_bytes(
            encoding=serialization.Encoding.PEM,
            format=serialization.PrivateFormat.PKCS8,
            encryption_algorithm=serialization.NoEncryption(),
        )


def entity_id_for_public_pem(public_pem: str | bytes) -> str:
    """Digest of the public key file contents, truncated to 32 hex chars.

    Computable externally with any SHA-256 tool over the .pem file.
    """
    if isinstance(public_pem, str):
        public_pem = public_pem.encode("ascii")
    return hashlib.sha256(public_pem).hexdigest()[:ENTITY_ID_HEX_CHARS]


def _public_pem_of(private) -> str:
    return private.public_key().public_bytes(
        encoding=serialization.Encoding.PEM,
        format=serialization.PublicFormat.SubjectPublicKeyInfo,
    ).decode("ascii")


def generate_keypair(scheme: str = RSA_SHA256, rsa_bits: int = 2048) -> KeyPair:
    if scheme == RSA_SHA256:
        private = rsa.generate_private_key(public_exponent=65537, key_size=rsa_bits)
    elif scheme == ED25519:
        private = ed25519.Ed25519PrivateKey.generate()
    else:
        raise CryptoError(f"unknown signature scheme: {scheme!r}")
    return KeyPair(scheme=scheme, private=private, public_pem=_public_pem_of(private))


def ed25519_from_seed(seed: bytes) -> KeyPair:
    """Deterministic Ed25519 key pair derived from arbitrary seed bytes.

    Used by the simulator so that entity keys, signatures, and therefore
    whole traces are reproducible from a scenario seed.
    """
    raw = hashlib.sha256(seed).digest()
    private = ed25519.Ed25519PrivateKey.from_private_bytes(raw)
    return KeyPair(scheme=ED25519, private=private, public_pem=_public_pem_of(private))


def load_private_pem(data: bytes) -> KeyPair:
    """Load a private key PEM, inferring the scheme from the key type."""
    try:
        private = serialization.load_pem_private_key(data, password=None)
    except (ValueError, UnsupportedAlgorithm) as exc:
        raise CryptoError(f"cannot load private key: {exc}") from exc
    if isinstance(private, rsa.RSAPrivateKey):
        scheme = RSA_SHA256
    elif isinstance(private, ed25519.Ed25519PrivateKey):
        scheme = ED25519
    else:
        raise CryptoError(f"unsupported private key type: {type(private).__name__}")
    return KeyPair(scheme=scheme, private=private, public_pem=_public_pem_of(private))


def sign(key: KeyPair, message: bytes) -> bytes:
    if key.scheme == RSA_SHA256:
        return key.private.sign(message, padding.PKCS1v15(), hashes.SHA256())
    if key.scheme == ED25519:
        return key.private.sign(hashlib.sha256(message).digest())
    raise CryptoError(f"unknown signature scheme: {key.scheme!r}")


def verify(scheme: str, public_pem: str, message: bytes, signature: bytes) -> bool:
    try:
        public = serialization.load_pem_public_key(public_pem.encode("ascii"))
    except (ValueError, UnsupportedAlgorithm):
        return False
    try:
        if scheme == RSA_SHA256:
            if not isinstance(public, rsa.RSAPublicKey):
                return False
            public.verify(signature, message, padding.PKCS1v15(), hashes.SHA256())
        elif scheme == ED25519:
            if not isinstance(public, ed25519.Ed25519PublicKey):
                return False
            public.verify(signature, hashlib.sha256(message).digest())
        else:
            raise CryptoError(f"unknown signature scheme: {scheme!r}")
    except InvalidSignature:
        return False
    return True
