"""Replay, decisions, audit trails and pending-action views."""
import dataclasses

import pytest

from ledgergate.ledger import BlockData, mine_block
from ledgergate.model import LedgergateError, PermissionLevel, PolicyStatus
from ledgergate.snapshot import (
    ReplayInconsistentError,
    apply_transaction,
    audit_trail,
    evaluate,
    fold_block,
    fold_transactions,
    pending_actions,
    replay,
)

from helpers import World


def build(world, *txs):
    snap = world.snap
    for tx in txs:
        snap = apply_transaction(snap, tx, 1)
    return snap


@pytest.fixture()
def w():
    return World(members=("node1",), keepers=("alice", "bob", "carol"), parties=("peter",))


def mined_world():
    """A chain exercising every transaction family across six blocks."""
    w = World(members=("node1", "node2"), keepers=("alice", "bob", "carol"),
              parties=("peter",))
    w.mine([w.create("alice", "r1", keepers=["alice", "bob"], agreement="ALL"),
            w.create("bob", "r2", keepers=["bob"], agreement="ANY")])
    w.mine([w.request("peter", "r1", "q1"),
            w.update("bob", "r2", location="loc://moved")], member="node2")
    w.mine([w.require("node1", "q1")])
    w.mine([w.vote("alice", "q1")])
    w.mine([w.vote("bob", "q1")])  # ALL of 2 -> GRANTED
    w.mine([w.revoke("alice", "q1"),  # 1 < 2 -> REVOKED
            w.remove("bob", "r2")], member="node2")
    return w


def naive_audit(blocks, record_id):
    """Scan the raw chain, tracking request->record independently."""
    out = []
    req_record = {}
    for b in blocks:
        for tx in b.data.all_transactions():
            p = tx.payload
            if tx.kind.value == "RECORD_OP":
                if tx.state_tag != "REGISTER" and p["record"] == record_id:
                    out.append((b.index, tx))
            elif tx.state_tag == "REQUEST":
                req_record[tx.tx_id] = p["record"]
                if p["record"] == record_id:
                    out.append((b.index, tx))
            elif req_record.get(p["requestId"]) == record_id:
                out.append((b.index, tx))
    return tuple(out)


def test_audit_trail_matches_raw_chain_scan():
    w = mined_world()
    assert audit_trail(w.snap, "r1") == naive_audit(w.blocks, "r1")
    assert audit_trail(w.snap, "r2") == naive_audit(w.blocks, "r2")
    assert len(audit_trail(w.snap, "r1")) == 6  # create..revoke
    assert len(audit_trail(w.snap, "r2")) == 3  # create, update, remove
    with pytest.raises(LedgergateError) as exc:
        audit_trail(w.snap, "r9")
    assert exc.value.code == "UNKNOWN_RECORD"


def test_audit_block_indexes_are_monotonic():
    w = mined_world()
    indexes = [i for i, _ in audit_trail(w.snap, "r1")]
    assert indexes == sorted(indexes)
    assert indexes[0] == 1


def test_replay_equals_incremental_fold():
    w = mined_world()
    entities, members = w.config.entities, w.config.members
    assert replay(w.blocks, entities, members) == w.snap
    for k in range(1, len(w.blocks)):
        upto_prev = replay(w.blocks, entities, members, up_to=k - 1)
        assert fold_block(upto_prev, w.blocks[k]) == replay(
            w.blocks, entities, members, up_to=k)


def test_replay_is_deterministic():
    w = mined_world()
    a = replay(w.blocks, w.config.entities, w.config.members)
    b = replay(w.blocks, w.config.entities, w.config.members)
    assert a == b
    assert a.tip_index == len(w.blocks) - 1


def test_replay_rejects_illegal_history(w):
    bad = mine_block(
        prev=w.blocks[-1],
        data=BlockData.for_transactions([w.update("alice", "ghost", location="x")]),
        key=w.keys["node1"],
        config=w.config,
        timestamp=w.tick(),
        registry=dict(w.snap.entities),
    )
    with pytest.raises(ReplayInconsistentError):
        fold_block(w.snap, bad)


# --- access decisions -------------------------------------------------------


def granted(w, level="READ", expiry=None, rule="ANY", keepers=("alice",)):
    snap = build(
        w,
        w.create("alice", "r1", keepers=list(keepers), agreement=rule),
        w.request("peter", "r1", "q1", level=level, expiry=expiry),
        w.require("node1", "q1"),
    )
    for k in keepers:
        snap = apply_transaction(snap, w.vote(k, "q1"), 2)
    return snap


def test_evaluate_unknown_record(w):
    d = evaluate(w.snap, "peter", "r1", PermissionLevel.READ, now=1)
    assert (d.outcome, d.reason) == ("DENY", "UNKNOWN_RECORD")


def test_evaluate_no_policy(w):
    snap = build(w, w.create("alice", "r1"))
    d = evaluate(snap, "peter", "r1", PermissionLevel.READ, now=1)
    assert (d.outcome, d.reason) == ("UNKNOWN", "NO_POLICY")


def test_evaluate_pending_states(w):
    snap = build(w, w.create("alice", "r1"), w.request("peter", "r1", "q1"))
    d = evaluate(snap, "peter", "r1", PermissionLevel.READ, now=1)
    assert (d.outcome, d.reason) == ("UNKNOWN", "REQUEST_PENDING")
    snap = apply_transaction(snap, w.require("node1", "q1"), 2)
    d = evaluate(snap, "peter", "r1", PermissionLevel.READ, now=1)
    assert (d.outcome, d.reason, d.policy_ref) == ("UNKNOWN", "REQUEST_PENDING", "q1")


def test_evaluate_granted_and_level_ordering(w):
    snap = granted(w, level="READ")
    d = evaluate(snap, "peter", "r1", PermissionLevel.READ, now=5_000)
    assert (d.outcome, d.reason, d.policy_ref) == ("GRANT", "POLICY_GRANTED", "q1")
    d = evaluate(snap, "peter", "r1", PermissionLevel.WRITE, now=5_000)
    assert (d.outcome, d.reason) == ("UNKNOWN", "INSUFFICIENT_LEVEL")


def test_evaluate_write_grant_covers_read(w):
    snap = granted(w, level="WRITE")
    d = evaluate(snap, "peter", "r1", PermissionLevel.READ, now=5_000)
    assert d.outcome == "GRANT"


def test_evaluate_expiry_boundary(w):
    snap = granted(w, expiry=2_000)
    assert evaluate(snap, "peter", "r1", PermissionLevel.READ, now=1_999).outcome == "GRANT"
    d = evaluate(snap, "peter", "r1", PermissionLevel.READ, now=2_000)
    assert (d.outcome, d.reason) == ("DENY", "EXPIRED")
    assert evaluate(snap, "peter", "r1", PermissionLevel.READ, now=9_999).outcome == "DENY"


def test_evaluate_removed_record_beats_live_policy(w):
    snap = granted(w)
    snap = apply_transaction(snap, w.remove("alice", "r1"), 3)
    d = evaluate(snap, "peter", "r1", PermissionLevel.READ, now=5_000)
    assert (d.outcome, d.reason) == ("DENY", "RECORD_REMOVED")


def test_evaluate_denied_and_revoked(w):
    snap = build(
        w,
        w.create("alice", "r1"),
        w.request("peter", "r1", "q1"),
        w.require("node1", "q1"),
        w.vote("alice", "q1", "DENY"),
    )
    d = evaluate(snap, "peter", "r1", PermissionLevel.READ, now=5_000)
    assert (d.outcome, d.reason) == ("DENY", "POLICY_DENIED")

    snap = granted(w)
    snap = apply_transaction(snap, w.revoke("alice", "q1"), 3)
    d = evaluate(snap, "peter", "r1", PermissionLevel.READ, now=5_000)
    assert (d.outcome, d.reason) == ("DENY", "POLICY_REVOKED")


def test_evaluate_never_grants_for_other_party(w):
    snap = granted(w)
    d = evaluate(snap, "bob", "r1", PermissionLevel.READ, now=5_000)
    assert d.outcome == "UNKNOWN"  # no policy for that party


# --- pending vote slots -----------------------------------------------------


def test_pending_slots_open_per_keeper(w):
    snap = build(
        w,
        w.create("alice", "r1", keepers=["alice", "bob", "carol"], agreement="ALL"),
        w.request("peter", "r1", "q1"),
    )
    assert pending_actions(snap) == []  # voting not open until REQUIRE
    snap = apply_transaction(snap, w.require("node1", "q1"), 2)
    slots = pending_actions(snap)
    assert [(s.keeper, s.request_id) for s in slots] == [
        ("alice", "q1"), ("bob", "q1"), ("carol", "q1")]
    assert {s.level for s in slots} == {PermissionLevel.READ}
    assert pending_actions(snap, keeper="bob") == [slots[1]]

    snap = apply_transaction(snap, w.vote("alice", "q1"), 3)
    assert [s.keeper for s in pending_actions(snap)] == ["bob", "carol"]
    assert pending_actions(snap, keeper="alice") == []


def test_pending_slot_disappears_once_decided(w):
    snap = build(
        w,
        w.create("alice", "r1", keepers=["alice", "bob", "carol"], agreement="MAJORITY"),
        w.request("peter", "r1", "q1"),
        w.require("node1", "q1"),
        w.vote("alice", "q1"),
        w.vote("bob", "q1"),  # 2 of 3 -> GRANTED
    )
    assert snap.requests["q1"].state.value == "GRANTED"
    # carol's late vote would still be admissible, but nothing is listed
    assert pending_actions(snap) == []
    assert pending_actions(snap, keeper="carol") == []


def test_pending_slot_disappears_on_denial_and_removal(w):
    snap = build(
        w,
        w.create("alice", "r1", agreement="ANY"),
        w.request("peter", "r1", "q1"),
        w.require("node1", "q1"),
        w.vote("alice", "q1", "DENY"),
    )
    assert pending_actions(snap) == []

    snap = build(
        w,
        w.create("alice", "r2", keepers=["alice", "bob"], agreement="ALL"),
        w.request("peter", "r2", "q2"),
        w.require("node1", "q2"),
        w.remove("alice", "r2"),
    )
    assert pending_actions(snap) == []


def test_pending_slots_sorted_by_age(w):
    snap = build(
        w,
        w.create("alice", "r1"),
        w.create("bob", "r2"),
        w.request("peter", "r1", "q1"),
        w.require("node1", "q1", ts=100),
        w.request("peter", "r2", "q2"),
        w.require("node1", "q2", ts=50),
    )
    slots = pending_actions(snap)
    assert [(s.request_id, s.since) for s in slots] == [("q2", 50), ("q1", 100)]


# --- provisional folds ------------------------------------------------------


def test_fold_transactions_skips_inadmissible(w):
    base = w.snap
    txs = [
        w.create("alice", "r1"),
        w.request("peter", "r1", "q1"),
        w.request("peter", "r1", "q1"),  # duplicate id
        w.update("bob", "r1", location="x"),  # not a keeper
    ]
    snap, skipped = fold_transactions(base, txs)
    assert "r1" in snap.records and "q1" in snap.requests
    assert [(t.state_tag, reason) for t, reason in skipped] == [
        ("REQUEST", "REQUEST_EXISTS"), ("UPDATE", "NOT_KEEPER")]
    assert snap.tip_index == base.tip_index  # provisional: tip unchanged
    assert "r1" not in base.records  # input snapshot untouched


def test_vote_from_ex_keeper_stops_counting(w):
    snap = build(
        w,
        w.create("alice", "r1", keepers=["alice", "bob", "carol"], agreement="MAJORITY"),
        w.request("peter", "r1", "q1"),
        w.require("node1", "q1"),
        w.vote("bob", "q1"),
    )
    snap = apply_transaction(snap, w.update("alice", "r1", keepers=["alice", "carol"]), 2)
    snap = apply_transaction(snap, w.vote("carol", "q1"), 2)
    # bob's grant no longer counts: 1 of threshold 2, alice still unvoted
    assert snap.requests["q1"].state.value == "WAITING_AUTH_CHECK"
    snap = apply_transaction(snap, w.vote("alice", "q1"), 2)
    assert snap.requests["q1"].state.value == "GRANTED"


def test_expired_policy_superseded_then_old_request_revoked(w):
    snap = build(
        w,
        w.create("alice", "r1"),
        w.request("peter", "r1", "q1", expiry=2_000),
        w.require("node1", "q1"),
        w.vote("alice", "q1"),
    )
    assert snap.policies[("peter", "r1")].request_id == "q1"
    # after expiry a fresh request takes over the pair's policy row
    snap = apply_transaction(snap, w.request("peter", "r1", "q2", ts=3_000), 2)
    assert snap.policies[("peter", "r1")].request_id == "q2"
    # revoking the stale grant must not clobber the new request's row
    snap = apply_transaction(snap, w.revoke("alice", "q1"), 3)
    assert snap.requests["q1"].state.value == "REVOKED"
    row = snap.policies[("peter", "r1")]
    assert (row.request_id, row.status) == ("q2", PolicyStatus.PENDING)


def test_snapshots_are_immutable(w):
    with pytest.raises(dataclasses.FrozenInstanceError):
        w.snap.tip_index = 99
