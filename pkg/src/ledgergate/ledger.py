"""Blocks, proof-of-work, chain validation, and the append-only store.

Hash preimage (field order is part of the protocol):

    "{index}:{timestamp}:{previousHash}:" + canonical(data) + ":{nonce}"

hashed with SHA-256; a block meets difficulty D when its digest has at
least D leading zero *bits* (not hex digits). The nonce search starts at 0
and increments by 1, so for a fixed (prev, data, timestamp, key, D) the
mined block is identical across runs, and the attempt count is nonce + 1.

``digitalSign`` covers canonical(data) only and must verify under a
consortium member key for every mined block. The genesis block carries an
empty signature and is validated by equality against the genesis block
recomputed from the shared configuration — signing it would require key
material inside the config and break "deterministic given config".
"""
from __future__ import annotations

import hashlib
import os
import struct
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

from . import crypto
from .model import (
    Entity,
    LedgergateError,
    Transaction,
    TxKind,
    canonical_encode,
)

GENESIS_PREVIOUS_HASH = "0" * 64
DEFAULT_DIFFICULTY = 16
MAX_DIFFICULTY = 32

# validation reason codes
BAD_INDEX = "BAD_INDEX"
BAD_PREV_HASH = "BAD_PREV_HASH"
HASH_MISMATCH = "HASH_MISMATCH"
LOW_DIFFICULTY = "LOW_DIFFICULTY"
NOT_MEMBER = "NOT_MEMBER"
BAD_TX_SIGNATURE = "BAD_TX_SIGNATURE"
TX_KIND_MISMATCH = "TX_KIND_MISMATCH"
DUPLICATE_TX = "DUPLICATE_TX"
BAD_GENESIS = "BAD_GENESIS"
GLOBAL_DUPLICATE_TX = "GLOBAL_DUPLICATE_TX"
CORRUPT_STORE = "CORRUPT_STORE"

_KIND_LIST = {
    TxKind.RECORD_OP: "records",
    TxKind.POLICY_OP: "policies",
    TxKind.INDIVIDUAL_AUTH: "individualAuths",
}


class InvalidBlockError(LedgergateError):
    pass


class CorruptStoreError(LedgergateError):
    code = CORRUPT_STORE


class MiningAborted(Exception):
    """The in-progress proof-of-work attempt was interrupted (a competing
    block arrived at the same height)."""


@dataclass(frozen=True)
class BlockData:
    records: tuple = ()
    policies: tuple = ()
    individual_auths: tuple = ()

    def all_transactions(self) -> tuple:
        """Fold order: records, then policies, then individual auths."""
        return self.records + self.policies + self.individual_auths

    def is_empty(self) -> bool:
        return not (self.records or self.policies or self.individual_auths)

    def to_wire(self) -> dict:
        return {
            "records": [t.to_wire() for t in self.records],
            "policies": [t.to_wire() for t in self.policies],
            "individualAuths": [t.to_wire() for t in self.individual_auths],
        }

    @staticmethod
    def from_wire(d: Mapping) -> "BlockData":
        return BlockData(
            records=tuple(Transaction.from_wire(t) for t in d["records"]),
            policies=tuple(Transaction.from_wire(t) for t in d["policies"]),
            individual_auths=tuple(Transaction.from_wire(t) for t in d["individualAuths"]),
        )

    @staticmethod
    def for_transactions(txs: Iterable[Transaction]) -> "BlockData":
        """Sort transactions into their kind's sub-list, keeping order."""
        buckets = {"records": [], "policies": [], "individualAuths": []}
        for tx in txs:
            buckets[_KIND_LIST[tx.kind]].append(tx)
        return BlockData(
            records=tuple(buckets["records"]),
            policies=tuple(buckets["policies"]),
            individual_auths=tuple(buckets["individualAuths"]),
        )


@dataclass(frozen=True)
class Block:
    index: int
    timestamp: int
    previous_hash: str
    digital_sign: bytes
    data: BlockData
    nonce: int
    hash: str

    def to_wire(self) -> dict:
        return {
            "index": self.index,
            "timestamp": self.timestamp,
            "previousHash": self.previous_hash,
            "digitalSign": self.digital_sign.hex(),
            "data": self.data.to_wire(),
            "nonce": self.nonce,
            "hash": self.hash,
        }

    @staticmethod
    def from_wire(d: Mapping) -> "Block":
        return Block(
            index=int(d["index"]),
            timestamp=int(d["timestamp"]),
            previous_hash=d["previousHash"],
            digital_sign=bytes.fromhex(d["digitalSign"]),
            data=BlockData.from_wire(d["data"]),
            nonce=int(d["nonce"]),
            hash=d["hash"],
        )


def hash_preimage(index: int, timestamp: int, previous_hash: str,
                  data_bytes: bytes, nonce: int) -> bytes:
    return (f"{index}:{timestamp}:{previous_hash}:".encode("utf-8")
            + data_bytes + f":{nonce}".encode("ascii"))


def block_hash(index: int, timestamp: int, previous_hash: str,
               data_bytes: bytes, nonce: int) -> str:
    return hashlib.sha256(
        hash_preimage(index, timestamp, previous_hash, data_bytes, nonce)
    ).hexdigest()


def leading_zero_bits(hex_digest: str) -> int:
    value = int(hex_digest, 16)
    if value == 0:
        return 256
    return 256 - value.bit_length()


def meets_difficulty(hex_digest: str, difficulty: int) -> bool:
    return leading_zero_bits(hex_digest) >= difficulty


@dataclass(frozen=True)
class GenesisConfig:
    """Shared network configuration; every field is consensus-relevant.

    ``members`` maps consortium node EntityIds to their public key PEMs —
    membership is fixed here and only these keys may sign mined blocks.
    ``entities`` pre-registers keepers and third parties.
    """

    members: Mapping[str, str]
    difficulty: int = DEFAULT_DIFFICULTY
    scheme: str = crypto.RSA_SHA256
    created_at: int = 0
    entities: tuple = ()

    def __post_init__(self):
        if not (0 <= self.difficulty <= MAX_DIFFICULTY):
            raise ValueError(f"difficulty must be in 0..{MAX_DIFFICULTY}")
        if self.scheme not in crypto.SCHEMES:
            raise ValueError(f"unknown signature scheme: {self.scheme!r}")
        if not self.members:
            raise ValueError("a consortium needs at least one member")

    def to_dict(self) -> dict:
        return {
            "createdAt": self.created_at,
            "difficulty": self.difficulty,
            "scheme": self.scheme,
            "members": dict(self.members),
            "entities": [e.to_wire() for e in self.entities],
        }

    @staticmethod
    def from_dict(d: Mapping) -> "GenesisConfig":
        return GenesisConfig(
            members=dict(d["members"]),
            difficulty=int(d.get("difficulty", DEFAULT_DIFFICULTY)),
            scheme=d.get("scheme", crypto.RSA_SHA256),
            created_at=int(d.get("createdAt", 0)),
            entities=tuple(Entity.from_wire(e) for e in d.get("entities", ())),
        )

    def base_registry(self) -> dict:
        from .snapshot import base_snapshot

        return dict(base_snapshot(self.entities, self.members).entities)


_genesis_cache: dict = {}


def make_genesis(config: GenesisConfig) -> Block:
    """Deterministic genesis block: same config, same block, on every node."""
    key = canonical_encode(config.to_dict())
    cached = _genesis_cache.get(key)
    if cached is not None:
        return cached
    data = BlockData()
    data_bytes = canonical_encode(data)
    nonce = 0
    while True:
        h = block_hash(0, config.created_at, GENESIS_PREVIOUS_HASH, data_bytes, nonce)
        if meets_difficulty(h, config.difficulty):
            break
        nonce += 1
    block = Block(
        index=0,
        timestamp=config.created_at,
        previous_hash=GENESIS_PREVIOUS_HASH,
        digital_sign=b"",
        data=data,
        nonce=nonce,
        hash=h,
    )
    _genesis_cache[key] = block
    return block


def _check_data(data: BlockData, scheme: str, registry: Mapping[str, Entity]) -> Optional[str]:
    """Structural transaction checks: kind placement, signatures, per-block
    txId uniqueness. The registry evolves through in-block REGISTER entries
    (records fold first, so later transactions may be authored by an entity
    registered earlier in the same block)."""
    live = dict(registry)
    for list_name, txs in (("records", data.records), ("policies", data.policies),
                           ("individualAuths", data.individual_auths)):
        for tx in txs:
            if _KIND_LIST[tx.kind] != list_name:
                return TX_KIND_MISMATCH
            author = live.get(tx.author)
            if author is None:
                return BAD_TX_SIGNATURE
            if not crypto.verify(scheme, author.public_key, tx.signing_preimage(), tx.signature):
                return BAD_TX_SIGNATURE
            if tx.kind is TxKind.RECORD_OP and tx.state_tag == "REGISTER":
                entity = tx.payload.get("entity")
                if isinstance(entity, Mapping) and isinstance(entity.get("id"), str):
                    live.setdefault(entity["id"], Entity.from_wire(entity))

    seen_ids = set()
    for tx in data.all_transactions():
        # one state of one logical item per block: txIds may not repeat at all
        if tx.tx_id in seen_ids:
            return DUPLICATE_TX
        seen_ids.add(tx.tx_id)
    return None


def validate_block(block: Block, prev: Block, config: GenesisConfig,
                   registry: Mapping[str, Entity]) -> tuple[bool, Optional[str]]:
    """Structural validity of ``block`` on top of ``prev``.

    Check order (the reason reported is the first failure): index linkage,
    previous-hash linkage, recomputed hash equality, difficulty bound,
    miner signature membership, per-transaction checks, txId uniqueness.
    """
    if block.index != prev.index + 1:
        return False, BAD_INDEX
    if block.previous_hash != prev.hash:
        return False, BAD_PREV_HASH
    data_bytes = canonical_encode(block.data)
    recomputed = block_hash(block.index, block.timestamp, block.previous_hash,
                            data_bytes, block.nonce)
    if recomputed != block.hash:
        return False, HASH_MISMATCH
    if not meets_difficulty(block.hash, config.difficulty):
        return False, LOW_DIFFICULTY
    if not any(
        crypto.verify(config.scheme, pem, data_bytes, block.digital_sign)
        for pem in config.members.values()
    ):
        return False, NOT_MEMBER
    reason = _check_data(block.data, config.scheme, registry)
    if reason is not None:
        return False, reason
    return True, None


def validate_chain(blocks: Sequence[Block], config: GenesisConfig
                   ) -> tuple[bool, Optional[int], Optional[str]]:
    """Whole-chain validity: genesis equality, pairwise block validity, and
    global (txId, stateTag) uniqueness. Returns (ok, firstBadIndex, reason).
    """
    if not blocks or blocks[0] != make_genesis(config):
        return False, 0, BAD_GENESIS
    registry = config.base_registry()
    seen: set = set()
    for i in range(1, len(blocks)):
        ok, reason = validate_block(blocks[i], blocks[i - 1], config, registry)
        if not ok:
            return False, i, reason
        for tx in blocks[i].data.all_transactions():
            if tx.dedup_key in seen:
                return False, i, GLOBAL_DUPLICATE_TX
            seen.add(tx.dedup_key)
            if tx.kind is TxKind.RECORD_OP and tx.state_tag == "REGISTER":
                entity = tx.payload.get("entity")
                if isinstance(entity, Mapping) and isinstance(entity.get("id"), str):
                    registry.setdefault(entity["id"], Entity.from_wire(entity))
    return True, None, None


def mine_block(
    prev: Block,
    data: BlockData,
    key: crypto.KeyPair,
    config: GenesisConfig,
    timestamp: int,
    registry: Mapping[str, Entity],
    tx_check: Optional[Callable[[BlockData], None]] = None,
    abort: Optional[Callable[[], bool]] = None,
) -> Block:
    """Proof-of-work over ``data`` on top of ``prev``.

    Raises InvalidBlockError if the miner key is not a consortium member's
    or the data fails structural checks; raises MiningAborted if ``abort()``
    turns true mid-search (checked every 256 nonces).
    """
    if key.public_pem not in set(config.members.values()):
        raise InvalidBlockError("miner key does not belong to a consortium member",
                                code=NOT_MEMBER)
    reason = _check_data(data, config.scheme, registry)
    if reason is not None:
        raise InvalidBlockError(f"refusing to mine invalid data: {reason}", code=reason)
    if tx_check is not None:
        tx_check(data)

    data_bytes = canonical_encode(data)
    index = prev.index + 1
    nonce = 0
    while True:
        h = block_hash(index, timestamp, prev.hash, data_bytes, nonce)
        if meets_difficulty(h, config.difficulty):
            break
        nonce += 1
        if abort is not None and nonce % 256 == 0 and abort():
            raise MiningAborted()
    return Block(
        index=index,
        timestamp=timestamp,
        previous_hash=prev.hash,
        digital_sign=crypto.sign(key, data_bytes),
        data=data,
        nonce=nonce,
        hash=h,
    )


class BlockStore:
    """Append-only block file: 4-byte big-endian length + canonical block
    encoding, one frame per block, fsynced on append."""

    def __init__(self, path: str):
        self.path = path

    def exists(self) -> bool:
        return os.path.exists(self.path)

    def append(self, block: Block) -> None:
        frame = canonical_encode(block)
        with open(self.path, "ab") as f:
            f.write(struct.pack(">I", len(frame)))
            f.write(frame)
            f.flush()
            os.fsync(f.fileno())

    def load(self) -> list:
        """All persisted blocks; raises CorruptStoreError on a torn or
        unparseable tail so a damaged store is refused, never half-loaded."""
        blocks = []
        with open(self.path, "rb") as f:
            raw = f.read()
        off = 0
        while off < len(raw):
            if off + 4 > len(raw):
                raise CorruptStoreError(f"torn length prefix at byte {off}")
            (length,) = struct.unpack(">I", raw[off:off + 4])
            off += 4
            if off + length > len(raw):
                raise CorruptStoreError(f"torn frame at byte {off} (want {length} bytes)")
            try:
                blocks.append(Block.from_wire(json.loads(raw[off:off + length])))
            except (ValueError, KeyError, TypeError) as exc:
                raise CorruptStoreError(f"unparseable frame at byte {off}: {exc}") from exc
            off += length
        return blocks

    def rewrite(self, blocks: Sequence[Block]) -> None:
        """Atomically replace the store contents (used on chain adoption)."""
        tmp = self.path + ".tmp"
        with open(tmp, "wb") as f:
            for block in blocks:
                frame = canonical_encode(block)
                f.write(struct.pack(">I", len(frame)))
                f.write(frame)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, self.path)
