"""Node state and the peer synchronization protocol.

A :class:`Node` owns one copy of the chain, per-height state snapshots and
a mempool of signed-but-unmined transactions. Every handler is synchronous
and returns an *outbox* — a list of ``(peer_id, message)`` pairs — instead
of doing any I/O, so the same code runs under the in-memory simulator and
the TCP transport unchanged.

Message kinds (JSON dicts on the wire):

* HELLO          -- genesis hash + tip index, sent on connect
* GET_LATEST     -- ask a peer for its tip block
* LATEST         -- tip block (reply)
* ANNOUNCE_BLOCK -- tip block (unsolicited push after mining/adoption)
* GET_CHAIN      -- ask for the full chain
* CHAIN          -- full chain (reply)
* SUBMIT_TX      -- gossip one transaction

Tip handling follows a three-way rule: a block that extends the local tip
directly is appended; a block that is ahead of the tip, or claims the next
index without linking to our tip hash (a fork), triggers GET_CHAIN; anything
at or below the tip is ignored. Full chains are adopted only when strictly
longer, structurally valid, and replay-clean; on a tie the first-seen chain
is kept. Transactions displaced by an adoption are re-queued, and anything
the new chain already includes is purged.
"""
from __future__ import annotations

from typing import Optional

from . import lifecycle
from .ledger import (
    Block,
    BlockData,
    BlockStore,
    CorruptStoreError,
    DUPLICATE_TX,
    GenesisConfig,
    make_genesis,
    mine_block,
    validate_block,
    validate_chain,
)
from .model import Transaction, TxKind, UnknownEntityError, verify_transaction_signature
from .snapshot import (
    InadmissibleTransaction,
    ReplayInconsistentError,
    Snapshot,
    apply_transaction,
    base_snapshot,
    fold_block,
    fold_transactions,
)

HELLO = "HELLO"
GET_LATEST = "GET_LATEST"
LATEST = "LATEST"
ANNOUNCE_BLOCK = "ANNOUNCE_BLOCK"
GET_CHAIN = "GET_CHAIN"
CHAIN = "CHAIN"
SUBMIT_TX = "SUBMIT_TX"

BAD_SIGNATURE = "BAD_SIGNATURE"

# fold order inside a block: records, then policies, then individual auths
_KIND_RANK = {TxKind.RECORD_OP: 0, TxKind.POLICY_OP: 1, TxKind.INDIVIDUAL_AUTH: 2}


def hello_msg(node: "Node") -> dict:
    return {"kind": HELLO, "genesis": node.chain[0].hash, "tip": node.tip.index}


def get_latest_msg() -> dict:
    return {"kind": GET_LATEST}


def latest_msg(block: Block, kind: str = LATEST) -> dict:
    return {"kind": kind, "block": block.to_wire()}


def get_chain_msg() -> dict:
    return {"kind": GET_CHAIN}


def chain_msg(blocks) -> dict:
    return {"kind": CHAIN, "blocks": [b.to_wire() for b in blocks]}


def submit_msg(tx: Transaction) -> dict:
    return {"kind": SUBMIT_TX, "tx": tx.to_wire()}


class Node:
    """One consortium node: chain, snapshots, mempool, peers."""

    def __init__(self, node_id: str, config: GenesisConfig, key=None,
                 store: Optional[BlockStore] = None):
        self.node_id = node_id
        self.config = config
        self.key = key
        self.store = store

        genesis = make_genesis(config)
        if store is not None and store.exists():
            blocks = store.load()
            ok, bad_index, reason = validate_chain(blocks, config)
            if not ok:
                raise CorruptStoreError(
                    f"stored chain invalid at block {bad_index}: {reason}")
            self.chain = blocks
        else:
            self.chain = [genesis]
            if store is not None:
                store.append(genesis)

        snap = base_snapshot(config.entities, config.members)
        self.snapshots: list[Snapshot] = []
        try:
            for block in self.chain:
                snap = fold_block(snap, block)
                self.snapshots.append(snap)
        except ReplayInconsistentError as exc:
            raise CorruptStoreError(f"stored chain fails replay: {exc}") from exc

        self.peers: list[str] = []
        self.mempool: dict[tuple, Transaction] = {}
        self._included = {tx.dedup_key for b in self.chain
                          for tx in b.data.all_transactions()}

    # --- views -----------------------------------------------------------

    @property
    def tip(self) -> Block:
        return self.chain[-1]

    @property
    def tip_snapshot(self) -> Snapshot:
        return self.snapshots[-1]

    def provisional(self) -> Snapshot:
        """Mined state with the mempool folded on top. Views and dedup only —
        access decisions always come from ``tip_snapshot``."""
        snap, _ = fold_transactions(self.tip_snapshot, list(self.mempool.values()))
        return snap

    # --- peering ---------------------------------------------------------

    def connect(self, peer_id: str) -> list:
        if peer_id not in self.peers:
            self.peers.append(peer_id)
        return [(peer_id, hello_msg(self))]

    def disconnect(self, peer_id: str) -> None:
        if peer_id in self.peers:
            self.peers.remove(peer_id)

    def _broadcast(self, message: dict, exclude: Optional[str] = None) -> list:
        return [(p, message) for p in self.peers if p != exclude]

    # --- transaction intake ------------------------------------------------

    def submit(self, tx: Transaction, origin: Optional[str] = None
               ) -> tuple[bool, Optional[str], list]:
        """Admit one transaction into the mempool and gossip it onward.

        Returns (accepted, reason, outbox). A transaction is admitted only
        if its signature verifies and it is a legal transition against the
        provisional state, so the mempool stays sequentially consistent in
        insertion order. Re-submissions (and gossip echoes) are dropped,
        which also stops forwarding loops.
        """
        if tx.dedup_key in self._included or tx.dedup_key in self.mempool:
            return False, DUPLICATE_TX, []
        provisional = self.provisional()
        try:
            valid = verify_transaction_signature(
                tx, lambda a: provisional.entities.get(a), self.config.scheme)
        except UnknownEntityError:
            return False, lifecycle.UNKNOWN_ENTITY, []
        if not valid:
            return False, BAD_SIGNATURE, []
        ok, reason = lifecycle.admissible(tx, provisional)
        if not ok:
            return False, reason, []
        self.mempool[tx.dedup_key] = tx
        return True, None, self._broadcast(submit_msg(tx), exclude=origin)

    # --- mining ------------------------------------------------------------

    def select_pending(self) -> list:
        """Choose the next block's transactions from the mempool.

        Candidates are taken in block fold order (records, policies, auths;
        insertion order within each), each applied onto the tip state, with
        at most one transaction per txId — a REQUEST and its REQUIRE share
        an id on purpose and therefore land in consecutive blocks.
        """
        picked, ids = [], set()
        snap = self.tip_snapshot
        ordered = sorted(self.mempool.values(), key=lambda t: _KIND_RANK[t.kind])
        for tx in ordered:  # sort is stable: insertion order within kinds
            if tx.tx_id in ids:
                continue
            try:
                snap = apply_transaction(snap, tx, self.tip.index + 1)
            except InadmissibleTransaction:
                continue
            ids.add(tx.tx_id)
            picked.append(tx)
        return picked

    def mine_pending(self, timestamp: int, abort=None
                     ) -> tuple[Optional[Block], list]:
        """Mine one block from the mempool; (None, []) when nothing is ready.

        Raises MiningAborted when ``abort()`` turns true mid-search, so a
        competing block arriving at the same height can interrupt the work.
        """
        if self.key is None:
            raise ValueError("node has no signing key and cannot mine")
        picked = self.select_pending()
        if not picked:
            return None, []
        block = mine_block(
            prev=self.tip,
            data=BlockData.for_transactions(picked),
            key=self.key,
            config=self.config,
            timestamp=timestamp,
            registry=dict(self.tip_snapshot.entities),
            abort=abort,
        )
        self._append(block)
        return block, self._broadcast(latest_msg(block, ANNOUNCE_BLOCK))

    def _append(self, block: Block) -> None:
        """Extend the chain by one already-validated block and groom the
        mempool: drop what the block included, then anything now illegal."""
        self.chain.append(block)
        self.snapshots.append(fold_block(self.tip_snapshot, block))
        if self.store is not None:
            self.store.append(block)
        for tx in block.data.all_transactions():
            self._included.add(tx.dedup_key)
        self._groom_mempool()

    def _groom_mempool(self) -> None:
        survivors = [tx for tx in self.mempool.values()
                     if tx.dedup_key not in self._included]
        _, skipped = fold_transactions(self.tip_snapshot, survivors)
        dead = {tx.dedup_key for tx, _ in skipped}
        self.mempool = {tx.dedup_key: tx for tx in survivors
                        if tx.dedup_key not in dead}

    # --- chain sync ----------------------------------------------------------

    def on_tip(self, block: Block, from_peer: str) -> list:
        """LATEST/ANNOUNCE_BLOCK: append, ignore, or ask for the chain."""
        if block.index <= self.tip.index:
            return []  # nothing newer than what we hold
        if block.index == self.tip.index + 1 and block.previous_hash == self.tip.hash:
            ok, _reason = validate_block(block, self.tip, self.config,
                                         dict(self.tip_snapshot.entities))
            if not ok:
                return []
            try:
                self._append(block)
            except ReplayInconsistentError:
                return []
            return self._broadcast(latest_msg(block, ANNOUNCE_BLOCK),
                                   exclude=from_peer)
        # ahead of us, or a same-height fork that does not link: resync
        return [(from_peer, get_chain_msg())]

    def consider_chain(self, blocks: list) -> tuple[bool, list]:
        """Adopt a competing chain when strictly longer, valid and replay-
        clean. Returns (adopted, outbox)."""
        if len(blocks) <= len(self.chain):
            return False, []  # keep-first on equal length
        ok, _bad, _reason = validate_chain(blocks, self.config)
        if not ok:
            return False, []

        fork = 0  # length of the common prefix
        while (fork < len(self.chain) and fork < len(blocks)
               and self.chain[fork].hash == blocks[fork].hash):
            fork += 1
        if fork == 0:
            return False, []  # different genesis: not our network

        snapshots = self.snapshots[:fork]
        snap = snapshots[-1]
        try:
            for block in blocks[fork:]:
                snap = fold_block(snap, block)
                snapshots.append(snap)
        except ReplayInconsistentError:
            return False, []

        displaced = [tx for b in self.chain[fork:]
                     for tx in b.data.all_transactions()]
        requeue = displaced + list(self.mempool.values())

        self.chain = list(blocks)
        self.snapshots = snapshots
        self._included = {tx.dedup_key for b in self.chain
                          for tx in b.data.all_transactions()}
        if self.store is not None:
            self.store.rewrite(self.chain)

        self.mempool = {}
        snap = self.tip_snapshot
        for tx in requeue:
            if tx.dedup_key in self._included or tx.dedup_key in self.mempool:
                continue
            try:
                snap = apply_transaction(snap, tx, self.tip.index + 1)
            except InadmissibleTransaction:
                continue
            self.mempool[tx.dedup_key] = tx

        return True, self._broadcast(latest_msg(self.tip, ANNOUNCE_BLOCK))

    # --- message dispatch ----------------------------------------------------

    def handle(self, message: dict, from_peer: str) -> list:
        """Process one wire message; malformed input is dropped."""
        try:
            kind = message.get("kind")
            if kind == HELLO:
                if message.get("genesis") != self.chain[0].hash:
                    return []  # different network
                out = [(from_peer, latest_msg(self.tip))]
                if message.get("tip", -1) > self.tip.index:
                    out.append((from_peer, get_latest_msg()))
                return out
            if kind == GET_LATEST:
                return [(from_peer, latest_msg(self.tip))]
            if kind in (LATEST, ANNOUNCE_BLOCK):
                return self.on_tip(Block.from_wire(message["block"]), from_peer)
            if kind == GET_CHAIN:
                return [(from_peer, chain_msg(self.chain))]
            if kind == CHAIN:
                blocks = [Block.from_wire(b) for b in message["blocks"]]
                _adopted, out = self.consider_chain(blocks)
                return out
            if kind == SUBMIT_TX:
                tx = Transaction.from_wire(message["tx"])
                _accepted, _reason, out = self.submit(tx, origin=from_peer)
                return out
            return []
        except (KeyError, TypeError, ValueError):
            return []  # malformed frame: drop, never crash the node
