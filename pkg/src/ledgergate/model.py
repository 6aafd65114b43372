"""Domain types, canonical encoding, and transaction signatures.

The canonical encoding defined here is the single byte representation used
for hashing and signing. Display JSON (API responses, logs) is a separate
concern and may be pretty-printed freely; equality and signatures are always
judged on canonical bytes.

Canonical form rules:

* objects serialize with field names in lexicographic order,
* arrays keep insertion order,
* integers render as decimal ASCII, strings as UTF-8 (not ASCII-escaped),
* no insignificant whitespace,
* floats, NaN, bytes, and non-string keys are unrepresentable and raise
  ``EncodingError`` (code ENCODE_UNREPRESENTABLE).
"""
from __future__ import annotations

import enum
import hashlib
import json
import re
import secrets
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Optional

from . import crypto

ID_PATTERN = re.compile(r"^[A-Za-z0-9._~-]{1,64}$")

ENCODE_UNREPRESENTABLE = "ENCODE_UNREPRESENTABLE"
UNKNOWN_ENTITY = "UNKNOWN_ENTITY"


class LedgergateError(Exception):
    """Base error; ``code`` is a stable machine-readable name."""

    code = "ERROR"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class EncodingError(LedgergateError):
    code = ENCODE_UNREPRESENTABLE


class UnknownEntityError(LedgergateError):
    code = UNKNOWN_ENTITY


class Role(str, enum.Enum):
    DATA_KEEPER = "DATA_KEEPER"
    THIRD_PARTY = "THIRD_PARTY"
    CONSORTIUM_NODE = "CONSORTIUM_NODE"


class TxKind(str, enum.Enum):
    RECORD_OP = "RECORD_OP"
    POLICY_OP = "POLICY_OP"
    INDIVIDUAL_AUTH = "INDIVIDUAL_AUTH"


class PermissionLevel(enum.IntEnum):
    """Ordered access levels; a policy at WRITE satisfies a READ query."""

    NONE = 0
    READ = 1
    WRITE = 2

    @classmethod
    def parse(cls, name: str) -> "PermissionLevel":
        try:
            return cls[name]
        except KeyError:
            raise ValueError(f"unknown permission level: {name!r}") from None


class AgreementRule(str, enum.Enum):
    ANY = "ANY"
    MAJORITY = "MAJORITY"
    ALL = "ALL"


def required_grants(rule: AgreementRule | str, keeper_count: int) -> int:
    """Number of live GRANT votes a policy needs under ``rule``."""
    if keeper_count < 1:
        raise ValueError("a record needs at least one keeper")
    rule = AgreementRule(rule)
    if rule is AgreementRule.ANY:
        return 1
    if rule is AgreementRule.MAJORITY:
        return keeper_count // 2 + 1
    return keeper_count


class RecordStatus(str, enum.Enum):
    ACTIVE = "ACTIVE"
    REMOVED = "REMOVED"


class PolicyStatus(str, enum.Enum):
    PENDING = "PENDING"
    GRANTED = "GRANTED"
    DENIED = "DENIED"
    REVOKED = "REVOKED"


@dataclass(frozen=True)
class Entity:
    id: str
    role: Role
    public_key: str  # PEM, SubjectPublicKeyInfo

    def to_wire(self) -> dict:
        return {"id": self.id, "role": self.role.value, "publicKey": self.public_key}

    @staticmethod
    def from_wire(d: Mapping) -> "Entity":
        return Entity(id=d["id"], role=Role(d["role"]), public_key=d["publicKey"])


@dataclass(frozen=True)
class Record:
    id: str
    keepers: frozenset
    agreement: AgreementRule
    location: str
    status: RecordStatus = RecordStatus.ACTIVE


@dataclass(frozen=True)
class Policy:
    request_id: str
    party: str
    record: str
    level: PermissionLevel
    status: PolicyStatus
    expiry: Optional[int] = None


def valid_id(value: str) -> bool:
    return isinstance(value, str) and bool(ID_PATTERN.match(value))


def new_tx_id() -> str:
    return secrets.token_hex(16)


def vote_tx_id(request_id: str, keeper: str) -> str:
    """TxId shared by a keeper's vote and a later revocation of it.

    One (request, keeper) instantiation is one logical item; its grant and
    revocation are two states of that item, recorded under one id.
    """
    return hashlib.sha256(f"auth:{request_id}:{keeper}".encode("utf-8")).hexdigest()[:32]


def _canonical_fragments(value: Any, out: list) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, int):  # bool handled above
        out.append(str(int(value)))
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=False))
    elif isinstance(value, float):
        raise EncodingError(f"floats are not representable in canonical form: {value!r}")
    elif isinstance(value, Mapping):
        keys = list(value.keys())
        for k in keys:
            if not isinstance(k, str):
                raise EncodingError(f"non-string object key: {k!r}")
        out.append("{")
        for i, k in enumerate(sorted(keys)):
            if i:
                out.append(",")
            out.append(json.dumps(k, ensure_ascii=False))
            out.append(":")
            _canonical_fragments(value[k], out)
        out.append("}")
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _canonical_fragments(item, out)
        out.append("]")
    else:
        to_wire = getattr(value, "to_wire", None)
        if callable(to_wire):
            _canonical_fragments(to_wire(), out)
        else:
            raise EncodingError(f"unrepresentable value of type {type(value).__name__}")


def canonical_encode(value: Any) -> bytes:
    """Deterministic byte encoding used as the hashing and signing preimage."""
    out: list = []
    _canonical_fragments(value, out)
    return "".join(out).encode("utf-8")


def signing_preimage(payload: Mapping, state_tag: str, timestamp: int, tx_id: str) -> bytes:
    if not isinstance(timestamp, int) or isinstance(timestamp, bool):
        raise EncodingError(f"timestamp must be an integer, got {timestamp!r}")
    return canonical_encode(
        {"payload": payload, "stateTag": state_tag, "timestamp": timestamp, "txId": tx_id}
    )


@dataclass(frozen=True)
class Transaction:
    tx_id: str
    kind: TxKind
    state_tag: str
    payload: Mapping
    author: str
    timestamp: int
    signature: bytes

    def signing_preimage(self) -> bytes:
        return signing_preimage(self.payload, self.state_tag, self.timestamp, self.tx_id)

    @property
    def dedup_key(self) -> tuple:
        return (self.tx_id, self.state_tag)

    def to_wire(self) -> dict:
        return {
            "txId": self.tx_id,
            "kind": self.kind.value,
            "stateTag": self.state_tag,
            "payload": dict(self.payload),
            "author": self.author,
            "timestamp": self.timestamp,
            "signature": self.signature.hex(),
        }

    @staticmethod
    def from_wire(d: Mapping) -> "Transaction":
        return Transaction(
            tx_id=d["txId"],
            kind=TxKind(d["kind"]),
            state_tag=d["stateTag"],
            payload=dict(d["payload"]),
            author=d["author"],
            timestamp=int(d["timestamp"]),
            signature=bytes.fromhex(d["signature"]),
        )


def make_transaction(
    kind: TxKind,
    state_tag: str,
    payload: Mapping,
    author: str,
    timestamp: int,
    key: crypto.KeyPair,
    tx_id: str | None = None,
) -> Transaction:
    """Build and sign a transaction; the signature covers the canonical
    encoding of (payload, stateTag, timestamp, txId)."""
    if tx_id is None:
        tx_id = new_tx_id()
    sig = crypto.sign(key, signing_preimage(payload, state_tag, timestamp, tx_id))
    return Transaction(
        tx_id=tx_id,
        kind=TxKind(kind),
        state_tag=state_tag,
        payload=dict(payload),
        author=author,
        timestamp=timestamp,
        signature=sig,
    )


EntityLookup = Callable[[str], Optional[Entity]]


def verify_transaction_signature(tx: Transaction, lookup: EntityLookup, scheme: str) -> bool:
    """True iff ``tx.signature`` verifies under the author's registered key.

    Raises :class:`UnknownEntityError` when the author is not registered.
    """
    entity = lookup(tx.author)
    if entity is None:
        raise UnknownEntityError(f"author not registered: {tx.author!r}")
    return crypto.verify(scheme, entity.public_key, tx.signing_preimage(), tx.signature)
