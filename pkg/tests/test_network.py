"""Node synchronization: gossip, tip handling, fork resolution, persistence."""
import dataclasses
import json
from collections import deque

import pytest

from ledgergate.ledger import BlockData, BlockStore, CorruptStoreError, validate_chain
from ledgergate.network import (
    BAD_SIGNATURE,
    GET_CHAIN,
    Node,
    chain_msg,
    get_chain_msg,
    latest_msg,
)
from ledgergate import crypto

from helpers import World, hand_mine


class Net:
    """Synchronous router pumping outbox messages between nodes.

    Every message is round-tripped through JSON, proving handlers only ever
    exchange wire-shaped data. Links can be cut to model partitions.
    """

    def __init__(self, *nodes):
        self.nodes = {n.node_id: n for n in nodes}
        self.queue = deque()
        self.cuts = set()

    def link(self, a, b):
        self.post(a.node_id, a.connect(b.node_id))
        self.post(b.node_id, b.connect(a.node_id))
        self.pump()

    def cut(self, a, b):
        self.cuts.add(frozenset((a.node_id, b.node_id)))

    def heal(self, a, b):
        self.cuts.discard(frozenset((a.node_id, b.node_id)))
        self.link(a, b)

    def post(self, src, outbox):
        for dst, msg in outbox:
            self.queue.append((src, dst, json.loads(json.dumps(msg))))

    def pump(self, limit=50_000):
        count = 0
        while self.queue:
            src, dst, msg = self.queue.popleft()
            if frozenset((src, dst)) in self.cuts or dst not in self.nodes:
                continue
            self.post(dst, self.nodes[dst].handle(msg, src))
            count += 1
            assert count < limit, "message storm: the protocol failed to quiesce"
        return count


@pytest.fixture()
def w():
    return World(members=("node1", "node2", "node3"),
                 keepers=("alice", "bob"), parties=("peter",))


def node_for(w, member, store=None):
    return Node(member, w.config, key=w.keys.get(member), store=store)


def mine(net, node, w):
    block, outbox = node.mine_pending(w.tick())
    net.post(node.node_id, outbox)
    net.pump()
    return block


# --- intake ------------------------------------------------------------------


def test_submit_accepts_and_gossips(w):
    a, b = node_for(w, "node1"), node_for(w, "node2")
    net = Net(a, b)
    net.link(a, b)
    tx = w.create("alice", "r1")
    accepted, reason, outbox = a.submit(tx)
    assert (accepted, reason) == (True, None)
    net.post("node1", outbox)
    net.pump()
    assert tx.dedup_key in b.mempool
    # the echo back to node1 is dropped as a duplicate, not re-forwarded
    assert a.submit(tx) == (False, "DUPLICATE_TX", [])


def test_submit_rejects_bad_signature(w):
    a = node_for(w, "node1")
    tx = w.create("alice", "r1")
    forged = dataclasses.replace(tx, signature=bytes(len(tx.signature)))
    assert a.submit(forged) == (False, BAD_SIGNATURE, [])
    wrong_key = dataclasses.replace(tx, signature=crypto.sign(
        w.keys["bob"], tx.signing_preimage()))
    assert a.submit(wrong_key) == (False, BAD_SIGNATURE, [])


def test_submit_rejects_unknown_author_and_illegal_moves(w):
    a = node_for(w, "node1")
    ghost = crypto.ed25519_from_seed(b"ghost")
    from ledgergate.model import make_transaction
    tx = make_transaction("RECORD_OP", "CREATE",
                          {"record": "r1", "keepers": ["alice"], "agreement": "ANY",
                           "location": "x"}, "ghost", 1, ghost)
    assert a.submit(tx) == (False, "UNKNOWN_ENTITY", [])
    vote = w.vote("alice", "q-nowhere")
    assert a.submit(vote) == (False, "UNKNOWN_REQUEST", [])


def test_provisional_state_sees_mempool(w):
    a = node_for(w, "node1")
    a.submit(w.create("alice", "r1"))
    a.submit(w.request("peter", "r1", "q1"))
    assert "q1" in a.provisional().requests
    assert "r1" not in a.tip_snapshot.records  # nothing mined yet


def test_gossip_reaches_the_whole_line(w):
    a, b, c = (node_for(w, m) for m in ("node1", "node2", "node3"))
    net = Net(a, b, c)
    net.link(a, b)
    net.link(b, c)  # a line: node1 - node2 - node3
    tx = w.create("alice", "r1")
    _, _, outbox = a.submit(tx)
    net.post("node1", outbox)
    net.pump()
    assert tx.dedup_key in b.mempool and tx.dedup_key in c.mempool


# --- mining ------------------------------------------------------------------


def test_mine_pending_drains_and_announces(w):
    a, b = node_for(w, "node1"), node_for(w, "node2")
    net = Net(a, b)
    net.link(a, b)
    a.submit(w.create("alice", "r1"))
    block = mine(net, a, w)
    assert block.index == 1
    assert a.mempool == {}
    assert b.tip == block  # announce reached the peer
    assert "r1" in b.tip_snapshot.records
    assert a.mine_pending(w.tick()) == (None, [])


def test_request_and_require_take_consecutive_blocks(w):
    a = node_for(w, "node1")
    a.submit(w.create("alice", "r1"))
    assert mine_alone(a, w).index == 1
    a.submit(w.request("peter", "r1", "q1"))
    a.submit(w.require("node1", "q1"))  # same txId as the request
    first = mine_alone(a, w)
    assert [t.state_tag for t in first.data.all_transactions()] == ["REQUEST"]
    second = mine_alone(a, w)
    assert [t.state_tag for t in second.data.all_transactions()] == ["REQUIRE"]
    assert a.mempool == {}


def mine_alone(node, w):
    block, _ = node.mine_pending(w.tick())
    return block


def test_vote_can_share_a_block_with_its_require(w):
    a = node_for(w, "node1")
    a.submit(w.create("alice", "r1"))
    a.submit(w.request("peter", "r1", "q1"))
    mine_alone(a, w)
    mine_alone(a, w)
    a.submit(w.require("node1", "q1"))
    a.submit(w.vote("alice", "q1"))  # admissible: provisional holds the REQUIRE
    block = mine_alone(a, w)
    tags = [t.state_tag for t in block.data.all_transactions()]
    assert tags == ["REQUIRE", "AUTH_GRANT"]  # policies fold before auths
    assert a.tip_snapshot.requests["q1"].state.value == "GRANTED"


def test_keyless_node_cannot_mine(w):
    observer = Node("watcher", w.config)
    observer.submit(w.create("alice", "r1"))
    with pytest.raises(ValueError):
        observer.mine_pending(1)


# --- tip handling and sync -----------------------------------------------------


def test_stale_tip_is_ignored(w):
    a, b = node_for(w, "node1"), node_for(w, "node2")
    net = Net(a, b)
    net.link(a, b)
    a.submit(w.create("alice", "r1"))
    mine(net, a, w)
    stale = a.chain[1]
    assert b.handle(latest_msg(stale), "node1") == []  # height == tip
    assert b.handle(latest_msg(a.chain[0]), "node1") == []  # below tip


def test_gap_triggers_chain_download(w):
    a, b = node_for(w, "node1"), node_for(w, "node2")
    # node1 advances alone
    a.submit(w.create("alice", "r1"))
    mine_alone(a, w)
    a.submit(w.request("peter", "r1", "q1"))
    mine_alone(a, w)
    # first contact: HELLO -> GET_LATEST -> LATEST(tip 2) -> GET_CHAIN -> CHAIN
    net = Net(a, b)
    net.link(a, b)
    assert b.chain == a.chain
    assert b.tip_snapshot == a.tip_snapshot


def test_forked_next_block_asks_for_chain(w):
    a, b = node_for(w, "node1"), node_for(w, "node2")
    a.submit(w.create("alice", "rA"))
    b.submit(w.create("bob", "rB"))
    block_a1 = mine_alone(a, w)
    a.submit(w.create("alice", "rA2"))
    block_a2 = mine_alone(a, w)
    mine_alone(b, w)
    # a block at b's very next index that does not link to b's tip: a fork,
    # so b must fetch the chain rather than drop or append
    out = b.handle(latest_msg(block_a2), "node1")
    assert out == [("node1", get_chain_msg())]
    # whereas a's same-height block is simply ignored
    assert b.handle(latest_msg(block_a1), "node1") == []


def test_longer_chain_wins_and_displaced_txs_requeue(w):
    a, b = node_for(w, "node1"), node_for(w, "node2")
    net = Net(a, b)
    tx_b = w.create("bob", "rB")
    a.submit(w.create("alice", "rA"))
    b.submit(tx_b)
    mine_alone(a, w)
    mine_alone(b, w)
    a.submit(w.create("alice", "rA2"))
    mine_alone(a, w)  # a is now strictly longer
    net.link(a, b)
    assert b.chain == a.chain  # b adopted
    assert "rA" in b.tip_snapshot.records and "rA2" in b.tip_snapshot.records
    assert "rB" not in b.tip_snapshot.records
    assert tx_b.dedup_key in b.mempool  # displaced, not lost
    block = mine(net, b, w)
    assert tx_b in block.data.all_transactions()
    assert a.chain == b.chain  # and the network reconverges
    assert "rB" in a.tip_snapshot.records


def test_equal_length_fork_keeps_first_seen(w):
    a, b = node_for(w, "node1"), node_for(w, "node2")
    a.submit(w.create("alice", "rA"))
    b.submit(w.create("bob", "rB"))
    mine_alone(a, w)
    mine_alone(b, w)
    adopted, out = b.consider_chain(a.chain)
    assert (adopted, out) == (False, [])
    adopted, _ = a.consider_chain(b.chain)
    assert not adopted
    assert "rA" in a.tip_snapshot.records and "rB" in b.tip_snapshot.records


def test_included_tx_is_not_requeued_after_adoption(w):
    a, b = node_for(w, "node1"), node_for(w, "node2")
    tx = w.create("alice", "rA")
    a.submit(tx)
    b.submit(tx)
    mine_alone(a, w)
    mine_alone(b, w)  # both chains carry the same create
    a.submit(w.create("alice", "rA2"))
    mine_alone(a, w)
    adopted, _ = b.consider_chain(a.chain)
    assert adopted
    assert tx.dedup_key not in b.mempool  # already on the adopted chain


# --- adversaries ----------------------------------------------------------------


def test_non_member_block_is_rejected_everywhere(w):
    a = node_for(w, "node1")
    intruder = crypto.ed25519_from_seed(b"intruder")
    forged = hand_mine(a.tip, BlockData.for_transactions([w.create("alice", "rX")]),
                       intruder, w.config, w.tick())
    assert a.handle(latest_msg(forged), "evil") == []
    assert a.tip.index == 0
    adopted, _ = a.consider_chain([a.chain[0], forged])
    assert not adopted
    assert "rX" not in a.tip_snapshot.records


def test_structurally_valid_but_illegal_history_is_rejected(w):
    a = node_for(w, "node1")
    create1 = w.create("alice", "rX")
    create2 = w.create("alice", "rX")  # same record, fresh txId: replay-dirty
    b1 = hand_mine(a.tip, BlockData.for_transactions([create1]),
                   w.keys["node1"], w.config, w.tick())
    b2 = hand_mine(b1, BlockData.for_transactions([create2]),
                   w.keys["node1"], w.config, w.tick())
    ok, _, _ = validate_chain([a.chain[0], b1, b2], w.config)
    assert ok  # structurally fine -- the replay check must catch it
    adopted, _ = a.consider_chain([a.chain[0], b1, b2])
    assert not adopted
    assert a.tip.index == 0


def test_malformed_messages_are_dropped(w):
    a = node_for(w, "node1")
    assert a.handle({}, "x") == []
    assert a.handle({"kind": "LATEST"}, "x") == []
    assert a.handle({"kind": "LATEST", "block": {"bogus": 1}}, "x") == []
    assert a.handle({"kind": "CHAIN", "blocks": [[1, 2]]}, "x") == []
    assert a.handle({"kind": "SUBMIT_TX", "tx": {"txId": "z"}}, "x") == []
    assert a.handle({"kind": "???"}, "x") == []
    assert a.handle({"kind": "HELLO", "genesis": "not-ours", "tip": 9}, "x") == []


# --- persistence ------------------------------------------------------------------


def test_node_persists_and_restarts(tmp_path, w):
    path = str(tmp_path / "chain.dat")
    a = node_for(w, "node1", store=BlockStore(path))
    a.submit(w.create("alice", "r1"))
    a.submit(w.request("peter", "r1", "q1"))
    mine_alone(a, w)
    mine_alone(a, w)
    again = node_for(w, "node1", store=BlockStore(path))
    assert again.chain == a.chain
    assert again.tip_snapshot == a.tip_snapshot
    assert again.mempool == {}


def test_node_refuses_truncated_store(tmp_path, w):
    path = tmp_path / "chain.dat"
    a = node_for(w, "node1", store=BlockStore(str(path)))
    a.submit(w.create("alice", "r1"))
    mine_alone(a, w)
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(CorruptStoreError):
        node_for(w, "node1", store=BlockStore(str(path)))


def test_node_refuses_tampered_store(tmp_path, w):
    path = str(tmp_path / "chain.dat")
    a = node_for(w, "node1", store=BlockStore(path))
    a.submit(w.create("alice", "r1"))
    mine_alone(a, w)
    tampered = dataclasses.replace(a.chain[1], timestamp=a.chain[1].timestamp + 9)
    BlockStore(path).rewrite([a.chain[0], tampered])
    with pytest.raises(CorruptStoreError) as exc:
        node_for(w, "node1", store=BlockStore(path))
    assert "HASH_MISMATCH" in str(exc.value)


def test_adoption_rewrites_the_store(tmp_path, w):
    path = str(tmp_path / "b.dat")
    a = node_for(w, "node1")
    b = node_for(w, "node2", store=BlockStore(path))
    a.submit(w.create("alice", "rA"))
    mine_alone(a, w)
    a.submit(w.create("alice", "rA2"))
    mine_alone(a, w)
    b.submit(w.create("bob", "rB"))
    mine_alone(b, w)
    adopted, _ = b.consider_chain(a.chain)
    assert adopted
    assert BlockStore(path).load() == a.chain
