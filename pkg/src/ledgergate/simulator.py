"""Deterministic network simulator: virtual time over real proof-of-work.

A scenario (a JSON-shaped dict) declares the consortium, per-node mining
rates, link latencies, and a timeline of events. The simulator runs the
exact :class:`~ledgergate.network.Node` protocol code on a virtual clock:
each block is actually mined (real nonce search), and the *virtual* mining
duration is ``attempts / rate`` with seeded jitter, so racing behaviour is
reproducible for a given seed while the work itself stays honest.

Scenario shape::

    {
      "seed": 7,
      "difficulty": 6,
      "members": ["node1", "node2"],
      "keepers": ["alice"],
      "parties": ["peter"],
      "nodes": [{"id": "node1", "rate": 50.0, "auto_mine": true,
                 "allow_empty": false, "deaf": false, "private": false,
                 "key": "node1"}],
      "edges": [["node1", "node2", 0.05]],
      "events": [{"at": 0.1, "action": "submit", "node": "node1",
                  "tx": {"op": "create", "author": "alice", "record": "r1"}},
                 {"at": 5.0, "action": "partition",
                  "groups": [["node1"], ["node2"]]},
                 {"at": 9.0, "action": "heal"}],
      "stop": {"at": 60.0, "height": 5}
    }

Node flags: ``deaf`` ignores pushed blocks/transactions (it stays on its
own fork but still answers GET_LATEST/GET_CHAIN); ``private`` suppresses
its own announcements (a withheld fork); ``allow_empty`` mines blocks even
with an empty mempool, for pure hash-rate races; ``key`` names whose
signing key the node holds -- pointing a non-member name here models a
forger, pointing another member's name models a stolen key.

The run stops at ``stop.at`` virtual seconds, earlier when some tip reaches
``stop.height``, or naturally when the event heap drains (a functional
scenario quiescing). The result reports per-node heights, convergence of
the non-deaf nodes, the first node to reach the target height, and how
many honest nodes ended up on a chain containing adversary-mined blocks.
"""
from __future__ import annotations

import heapq
import itertools
import json
import random
from dataclasses import dataclass, field
from typing import Mapping, Optional

from . import crypto
from .ledger import (
    Block,
    BlockData,
    GenesisConfig,
    block_hash,
    canonical_encode,
    meets_difficulty,
    mine_block,
)
from .model import Entity, Role, TxKind, make_transaction, vote_tx_id
from .network import (
    ANNOUNCE_BLOCK,
    CHAIN,
    LATEST,
    SUBMIT_TX,
    Node,
    hello_msg,
    latest_msg,
)

_PUSH_KINDS = (LATEST, ANNOUNCE_BLOCK, CHAIN, SUBMIT_TX)


def forge_block(prev: Block, data: BlockData, key, config: GenesisConfig,
                timestamp: int) -> Block:
    """Mine a block with *any* key, member or not. Exists so an adversary
    without a consortium key can be simulated; honest validation is what
    must reject the result."""
    data_bytes = canonical_encode(data)
    nonce = 0
    while True:
        h = block_hash(prev.index + 1, timestamp, prev.hash, data_bytes, nonce)
        if meets_difficulty(h, config.difficulty):
            break
        nonce += 1
    return Block(index=prev.index + 1, timestamp=timestamp,
                 previous_hash=prev.hash,
                 digital_sign=crypto.sign(key, data_bytes),
                 data=data, nonce=nonce, hash=h)


def sim_keypair(name: str):
    return crypto.ed25519_from_seed(f"sim:{name}".encode())


@dataclass
class SimNode:
    node: Node
    key_name: str
    rate: float = 50.0
    auto_mine: bool = True
    allow_empty: bool = False
    deaf: bool = False
    private: bool = False
    token: int = 0  # bumps whenever the chain moves; stales in-flight work
    mining: bool = False
    mined_hashes: set = field(default_factory=set)

    @property
    def is_member(self) -> bool:
        return self.key_name in self.node.config.members


@dataclass
class SimResult:
    time: float
    stopped_by: str  # "quiesced" | "height" | "deadline"
    heights: dict
    tips: dict
    converged: bool
    winner: Optional[str]
    winner_time: Optional[float]
    adversary_tainted: int
    records: dict
    trace: list

    def to_dict(self) -> dict:
        return {
            "time": round(self.time, 6),
            "stoppedBy": self.stopped_by,
            "heights": self.heights,
            "tips": self.tips,
            "converged": self.converged,
            "winner": self.winner,
            "winnerTime": self.winner_time,
            "adversaryTainted": self.adversary_tainted,
            "records": self.records,
            "events": len(self.trace),
        }


class Simulator:
    def __init__(self, spec: Mapping):
        self.spec = spec
        self.rng = random.Random(spec.get("seed", 0))
        members = list(spec.get("members", ()))
        keepers = list(spec.get("keepers", ()))
        parties = list(spec.get("parties", ()))
        self.keys = {name: sim_keypair(name)
                     for name in (*members, *keepers, *parties)}
        entities = tuple(Entity(k, Role.DATA_KEEPER, self.keys[k].public_pem)
                         for k in keepers)
        entities += tuple(Entity(p, Role.THIRD_PARTY, self.keys[p].public_pem)
                          for p in parties)
        self.config = GenesisConfig(
            members={m: self.keys[m].public_pem for m in members},
            difficulty=int(spec.get("difficulty", 4)),
            scheme=crypto.ED25519,
            created_at=0,
            entities=entities,
        )

        self.nodes: dict[str, SimNode] = {}
        for nd in spec["nodes"]:
            key_name = nd.get("key", nd["id"])
            if key_name not in self.keys:
                self.keys[key_name] = sim_keypair(key_name)
            self.nodes[nd["id"]] = SimNode(
                node=Node(nd["id"], self.config, key=self.keys[key_name]),
                key_name=key_name,
                rate=float(nd.get("rate", 50.0)),
                auto_mine=bool(nd.get("auto_mine", True)),
                allow_empty=bool(nd.get("allow_empty", False)),
                deaf=bool(nd.get("deaf", False)),
                private=bool(nd.get("private", False)),
            )

        self.latency: dict[frozenset, float] = {}
        for edge in spec.get("edges", ()):
            a, b = edge[0], edge[1]
            self.latency[frozenset((a, b))] = float(edge[2]) if len(edge) > 2 else 0.05

        self.cuts: set[frozenset] = set()
        self.heap: list = []
        self.seq = itertools.count()
        self.trace: list = []
        self.now = 0.0
        self.winner: Optional[str] = None
        self.winner_time: Optional[float] = None
        self._tx_counter = itertools.count()

        stop = spec.get("stop", {})
        self.stop_at = float(stop.get("at", 120.0))
        self.stop_height = stop.get("height")

        for event in spec.get("events", ()):
            self._push(float(event["at"]), ("scenario", event))
        for pair in self.latency:
            a, b = sorted(pair)
            self._connect(a, b, at=0.0)

    # --- plumbing ---------------------------------------------------------

    def _push(self, at: float, item) -> None:
        heapq.heappush(self.heap, (at, next(self.seq), item))

    def _log(self, node_id: str, what: str, **extra) -> None:
        self.trace.append({"t": round(self.now, 6), "node": node_id,
                           "event": what, **extra})

    def _edge_latency(self, a: str, b: str) -> Optional[float]:
        base = self.latency.get(frozenset((a, b)))
        if base is None:
            return None
        return base * self.rng.uniform(0.9, 1.1)

    def _connect(self, a: str, b: str, at: float) -> None:
        for src, dst in ((a, b), (b, a)):
            self.nodes[src].node.connect(dst)
            base = self.latency.get(frozenset((src, dst)), 0.05)
            self._push(at + base, ("deliver", src, dst,
                                   hello_msg(self.nodes[src].node)))

    def _send(self, src: str, outbox) -> None:
        for dst, msg in outbox:
            lat = self._edge_latency(src, dst)
            if lat is None:
                continue  # no such link
            self._push(self.now + lat, ("deliver", src, dst, msg))

    # --- mining -----------------------------------------------------------

    def _maybe_mine(self, sn: SimNode, force: bool = False) -> None:
        if (not sn.auto_mine and not force) or sn.mining:
            return
        picked = sn.node.select_pending()
        if not picked and not sn.allow_empty:
            return
        timestamp = int(self.now * 1000)
        if sn.is_member:
            block = mine_block(prev=sn.node.tip,
                               data=BlockData.for_transactions(picked),
                               key=self.keys[sn.key_name], config=self.config,
                               timestamp=timestamp,
                               registry=dict(sn.node.tip_snapshot.entities))
        else:
            block = forge_block(sn.node.tip, BlockData.for_transactions(picked),
                                self.keys[sn.key_name], self.config, timestamp)
        duration = (block.nonce + 1) / sn.rate * self.rng.uniform(0.95, 1.05)
        sn.mining = True
        self._push(self.now + duration, ("mine_done", sn.node.node_id,
                                         sn.token, block))

    def _on_mine_done(self, sn: SimNode, token: int, block: Block) -> None:
        sn.mining = False
        if token != sn.token or block.previous_hash != sn.node.tip.hash:
            self._maybe_mine(sn)  # the chain moved mid-search: restart
            return
        node_id = sn.node.node_id
        if sn.is_member:
            # ingest through the ordinary tip path (a sentinel sender keeps
            # the broadcast going to every peer)
            outbox = sn.node.on_tip(block, node_id)
        else:
            # a forged block would be rejected by the node's own validation,
            # so the forger's fork is tracked outside it
            sn.node.chain.append(block)
            sn.node.snapshots.append(sn.node.snapshots[-1])
            outbox = [(p, latest_msg(block, ANNOUNCE_BLOCK))
                      for p in sn.node.peers]
        sn.token += 1
        sn.mined_hashes.add(block.hash)
        self._log(node_id, "mined", height=block.index)
        if not sn.private:
            self._send(node_id, outbox)
        self._check_height(sn)
        self._maybe_mine(sn)

    def _check_height(self, sn: SimNode) -> None:
        # a chain reaches the target height the moment its final block is
        # mined, so the race is always decided at a mine_done event
        if (self.stop_height is not None and self.winner is None
                and sn.node.tip.index >= self.stop_height):
            self.winner = sn.node.node_id
            self.winner_time = self.now

    # --- event dispatch -----------------------------------------------------

    def _deliver(self, src: str, dst: str, msg: Mapping) -> None:
        if frozenset((src, dst)) in self.cuts or dst not in self.nodes:
            return
        sn = self.nodes[dst]
        if sn.deaf and msg.get("kind") in _PUSH_KINDS:
            return
        before = sn.node.tip.hash
        outbox = sn.node.handle(dict(msg), src)
        self._send(dst, outbox)
        if sn.node.tip.hash != before:
            sn.token += 1  # stale any in-flight nonce search
            sn.mining = False
            self._log(dst, "advanced", height=sn.node.tip.index)
        self._maybe_mine(sn)

    def _build_tx(self, spec: Mapping):
        op = spec["op"]
        ts = int(self.now * 1000)
        fresh = f"t{next(self._tx_counter)}"

        def tx(kind, tag, payload, author, tx_id):
            return make_transaction(kind, tag, payload, author, ts,
                                    self.keys[author], tx_id=tx_id)

        if op == "create":
            payload = {"record": spec["record"],
                       "keepers": list(spec.get("keepers", [spec["author"]])),
                       "agreement": spec.get("agreement", "ANY"),
                       "location": spec.get("location", f"loc://{spec['record']}")}
            return tx(TxKind.RECORD_OP, "CREATE", payload, spec["author"], fresh)
        if op == "update":
            payload = {"record": spec["record"]}
            for k in ("location", "keepers", "agreement"):
                if k in spec:
                    payload[k] = spec[k]
            return tx(TxKind.RECORD_OP, "UPDATE", payload, spec["author"], fresh)
        if op == "remove":
            return tx(TxKind.RECORD_OP, "REMOVE", {"record": spec["record"]},
                      spec["author"], fresh)
        if op == "request":
            payload = {"party": spec["party"], "record": spec["record"],
                       "level": spec.get("level", "READ")}
            if "expiry" in spec:
                payload["expiry"] = int(spec["expiry"])
            return tx(TxKind.POLICY_OP, "REQUEST", payload, spec["party"],
                      spec["id"])
        if op == "require":
            return tx(TxKind.POLICY_OP, "REQUIRE", {"requestId": spec["id"]},
                      spec["member"], spec["id"])
        if op in ("grant", "deny"):
            tag = "AUTH_GRANT" if op == "grant" else "AUTH_DENY"
            return tx(TxKind.INDIVIDUAL_AUTH, tag, {"requestId": spec["id"]},
                      spec["keeper"], vote_tx_id(spec["id"], spec["keeper"]))
        if op == "revoke":
            return tx(TxKind.INDIVIDUAL_AUTH, "AUTH_REVOKE",
                      {"requestId": spec["id"]}, spec["keeper"],
                      vote_tx_id(spec["id"], spec["keeper"]))
        raise ValueError(f"unknown tx op: {op!r}")

    def _scenario_event(self, event: Mapping) -> None:
        action = event["action"]
        if action == "submit":
            sn = self.nodes[event["node"]]
            tx = self._build_tx(event["tx"])
            accepted, reason, outbox = sn.node.submit(tx)
            self._log(event["node"], "submit", op=event["tx"]["op"],
                      accepted=accepted, **({} if accepted else {"reason": reason}))
            self._send(event["node"], outbox)
            self._maybe_mine(sn)
        elif action == "partition":
            groups = [set(g) for g in event["groups"]]
            self.cuts = {frozenset((x, y))
                         for gi in groups for gj in groups if gi is not gj
                         for x in gi for y in gj}
            self._log("-", "partition", groups=[sorted(g) for g in groups])
        elif action == "heal":
            self.cuts = set()
            self._log("-", "heal")
            for pair in self.latency:
                a, b = sorted(pair)
                self._connect(a, b, at=self.now)
        elif action == "mine":
            self._maybe_mine(self.nodes[event["node"]], force=True)
        else:
            raise ValueError(f"unknown action: {action!r}")

    # --- run -----------------------------------------------------------------

    def run(self) -> SimResult:
        stopped_by = "quiesced"
        for sn in self.nodes.values():
            self._maybe_mine(sn)  # allow_empty nodes start at t=0
        while self.heap:
            at, _, item = heapq.heappop(self.heap)
            if at > self.stop_at:
                stopped_by = "deadline"
                break
            self.now = at
            kind = item[0]
            if kind == "deliver":
                self._deliver(item[1], item[2], item[3])
            elif kind == "mine_done":
                self._on_mine_done(self.nodes[item[1]], item[2], item[3])
            else:
                self._scenario_event(item[1])
            if self.winner is not None:
                stopped_by = "height"
                break

        listening = [sn for sn in self.nodes.values() if not sn.deaf]
        tips = {nid: sn.node.tip.hash for nid, sn in self.nodes.items()}
        adversaries = [sn for sn in self.nodes.values() if sn.deaf or sn.private]
        adversary_hashes = set().union(*(sn.mined_hashes for sn in adversaries)) \
            if adversaries else set()
        tainted = sum(
            1 for sn in listening
            if any(b.hash in adversary_hashes for b in sn.node.chain))
        return SimResult(
            time=self.now,
            stopped_by=stopped_by,
            heights={nid: sn.node.tip.index for nid, sn in self.nodes.items()},
            tips=tips,
            converged=len({sn.node.tip.hash for sn in listening}) <= 1,
            winner=self.winner,
            winner_time=self.winner_time,
            adversary_tainted=tainted,
            records={nid: sorted(sn.node.tip_snapshot.records)
                     for nid, sn in self.nodes.items()},
            trace=self.trace,
        )


def run_scenario(spec: Mapping) -> SimResult:
    return Simulator(spec).run()


def load_scenario(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
