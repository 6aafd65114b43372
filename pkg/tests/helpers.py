"""Shared test world: a small consortium with deterministic keys.

Every entity's key is derived from its name, so worlds are cheap to build
and identical across runs; timestamps tick monotonically per world.
"""
from __future__ import annotations

from ledgergate import crypto
from ledgergate.ledger import (
    Block,
    BlockData,
    GenesisConfig,
    block_hash,
    make_genesis,
    meets_difficulty,
    mine_block,
)
from ledgergate.model import (
    Entity,
    Role,
    Transaction,
    TxKind,
    canonical_encode,
    make_transaction,
    vote_tx_id,
)
from ledgergate.snapshot import base_snapshot, fold_block


def hand_mine(prev, data, key, config, ts):
    """Assemble a block outside mine_block, so invalid data can be forced in."""
    data_bytes = canonical_encode(data)
    nonce = 0
    while True:
        h = block_hash(prev.index + 1, ts, prev.hash, data_bytes, nonce)
        if meets_difficulty(h, config.difficulty):
            break
        nonce += 1
    return Block(index=prev.index + 1, timestamp=ts, previous_hash=prev.hash,
                 digital_sign=crypto.sign(key, data_bytes), data=data,
                 nonce=nonce, hash=h)


class World:
    def __init__(
        self,
        members=("node1",),
        keepers=("alice", "bob", "carol"),
        parties=("peter",),
        difficulty=0,
        scheme=crypto.ED25519,
        created_at=1_000,
    ):
        self.scheme = scheme
        self.keys = {}
        for name in (*members, *keepers, *parties):
            self.keys[name] = (
                crypto.ed25519_from_seed(f"world:{name}".encode())
                if scheme == crypto.ED25519
                else crypto.generate_keypair(scheme)
            )
        entities = tuple(
            Entity(k, Role.DATA_KEEPER, self.keys[k].public_pem) for k in keepers
        ) + tuple(Entity(p, Role.THIRD_PARTY, self.keys[p].public_pem) for p in parties)
        self.config = GenesisConfig(
            members={m: self.keys[m].public_pem for m in members},
            difficulty=difficulty,
            scheme=scheme,
            created_at=created_at,
            entities=entities,
        )
        self.genesis = make_genesis(self.config)
        self.blocks = [self.genesis]
        self.snap = base_snapshot(self.config.entities, self.config.members)
        self.snap = fold_block(self.snap, self.genesis)
        self._t = created_at

    def tick(self) -> int:
        self._t += 1
        return self._t

    def tx(self, kind, state_tag, payload, author, tx_id=None, ts=None) -> Transaction:
        return make_transaction(
            kind, state_tag, payload, author,
            self.tick() if ts is None else ts,
            self.keys[author], tx_id=tx_id,
        )

    # convenience constructors for each transition
    def create(self, author, record, keepers=None, agreement="ANY", location=None,
               tx_id=None, ts=None):
        return self.tx(
            TxKind.RECORD_OP, "CREATE",
            {
                "record": record,
                "keepers": list(keepers) if keepers is not None else [author],
                "agreement": agreement,
                "location": location or f"loc://{record}",
            },
            author, tx_id=tx_id, ts=ts,
        )

    def update(self, author, record, tx_id=None, ts=None, **fields):
        return self.tx(TxKind.RECORD_OP, "UPDATE", {"record": record, **fields},
                       author, tx_id=tx_id, ts=ts)

    def remove(self, author, record, tx_id=None, ts=None):
        return self.tx(TxKind.RECORD_OP, "REMOVE", {"record": record},
                       author, tx_id=tx_id, ts=ts)

    def register(self, author, entity: Entity, tx_id=None, ts=None):
        return self.tx(TxKind.RECORD_OP, "REGISTER", {"entity": entity.to_wire()},
                       author, tx_id=tx_id, ts=ts)

    def request(self, party, record, request_id, level="READ", expiry=None, ts=None):
        payload = {"party": party, "record": record, "level": level}
        if expiry is not None:
            payload["expiry"] = expiry
        return self.tx(TxKind.POLICY_OP, "REQUEST", payload, party,
                       tx_id=request_id, ts=ts)

    def require(self, member, request_id, ts=None):
        return self.tx(TxKind.POLICY_OP, "REQUIRE", {"requestId": request_id},
                       member, tx_id=request_id, ts=ts)

    def vote(self, keeper, request_id, verdict="GRANT", ts=None):
        tag = "AUTH_GRANT" if verdict == "GRANT" else "AUTH_DENY"
        return self.tx(TxKind.INDIVIDUAL_AUTH, tag, {"requestId": request_id},
                       keeper, tx_id=vote_tx_id(request_id, keeper), ts=ts)

    def revoke(self, keeper, request_id, ts=None):
        return self.tx(TxKind.INDIVIDUAL_AUTH, "AUTH_REVOKE", {"requestId": request_id},
                       keeper, tx_id=vote_tx_id(request_id, keeper), ts=ts)

    def mine(self, txs, member=None, ts=None):
        """Mine the transactions onto this world's chain and fold the state."""
        member = member or next(iter(self.config.members))
        block = mine_block(
            prev=self.blocks[-1],
            data=BlockData.for_transactions(txs),
            key=self.keys[member],
            config=self.config,
            timestamp=self.tick() if ts is None else ts,
            registry=dict(self.snap.entities),
        )
        self.blocks.append(block)
        self.snap = fold_block(self.snap, block)
        return block
