"""Current-state projection: pure replay of chain transactions.

A snapshot is the deterministic fold of every transaction in block order
(within a block: records, then policies, then individual auths, each list
in insertion order). Snapshots are immutable values; folding a block
produces a new snapshot and never mutates the old one, which is what makes
per-height caching and fork-point recomputation safe.

Policy evaluation (the decision function behind the gateway) also lives
here: it only ever reads a snapshot, so provisional (mempool-inclusive)
state can be projected with the same code without any risk of it leaking
into decisions — callers choose which snapshot they hand in.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from . import lifecycle
from .lifecycle import (
    InadmissibleTransaction,
    RequestProgress,
    RequestState,
    Vote,
)
from .model import (
    AgreementRule,
    Entity,
    LedgergateError,
    PermissionLevel,
    Policy,
    PolicyStatus,
    Record,
    RecordStatus,
    Role,
    Transaction,
    TxKind,
)

REPLAY_INCONSISTENT = "REPLAY_INCONSISTENT"

# evaluation outcomes
GRANT = "GRANT"
DENY = "DENY"
UNKNOWN = "UNKNOWN"


class ReplayInconsistentError(LedgergateError):
    """A chain that passed structural validation contains an inadmissible
    transition — a validator bug, or a foreign chain adopted without the
    lifecycle check."""

    code = REPLAY_INCONSISTENT


@dataclass(frozen=True)
class Snapshot:
    tip_index: int  # index of the last folded block; -1 before genesis
    entities: Mapping[str, Entity]
    members: frozenset
    records: Mapping[str, Record]
    requests: Mapping[str, RequestProgress]
    policies: Mapping[tuple, Policy]
    audit: Mapping[str, tuple]  # record id -> ((block_index, Transaction), ...)


@dataclass(frozen=True)
class AccessDecision:
    outcome: str  # GRANT | DENY | UNKNOWN
    reason: str
    policy_ref: Optional[str] = None  # requestId of the deciding policy


@dataclass(frozen=True)
class PendingAction:
    request_id: str
    record: str
    party: str
    level: PermissionLevel
    keeper: str
    since: int


def base_snapshot(entities: Iterable[Entity], members: Mapping[str, str]) -> Snapshot:
    """State before any block: the genesis directory.

    Consortium members are entities too (role CONSORTIUM_NODE); they are
    merged into the registry alongside any pre-registered keepers/parties.
    """
    registry = {}
    for member_id, pem in members.items():
        registry[member_id] = Entity(member_id, Role.CONSORTIUM_NODE, pem)
    for entity in entities:
        registry[entity.id] = entity
    return Snapshot(
        tip_index=-1,
        entities=registry,
        members=frozenset(members),
        records={},
        requests={},
        policies={},
        audit={},
    )


def _with_audit(audit: Mapping, record_id: str, block_index: int, tx: Transaction) -> dict:
    new = dict(audit)
    new[record_id] = new.get(record_id, ()) + ((block_index, tx),)
    return new


def apply_transaction(snap: Snapshot, tx: Transaction, block_index: int) -> Snapshot:
    """Fold one admissible transaction; raises InadmissibleTransaction otherwise."""
    ok, reason = lifecycle.admissible(tx, snap)
    if not ok:
        raise InadmissibleTransaction(reason, f"{tx.kind.value}/{tx.state_tag} {tx.tx_id}: {reason}")

    p = tx.payload
    if tx.kind is TxKind.RECORD_OP:
        if tx.state_tag == "REGISTER":
            entities = dict(snap.entities)
            entities[p["entity"]["id"]] = Entity.from_wire(p["entity"])
            return dataclasses.replace(snap, entities=entities)

        records = dict(snap.records)
        record_id = p["record"]
        if tx.state_tag == "CREATE":
            records[record_id] = Record(
                id=record_id,
                keepers=frozenset(p["keepers"]) | {tx.author},
                agreement=AgreementRule(p["agreement"]),
                location=p["location"],
            )
        elif tx.state_tag == "UPDATE":
            old = records[record_id]
            records[record_id] = dataclasses.replace(
                old,
                keepers=frozenset(p["keepers"]) if "keepers" in p else old.keepers,
                agreement=AgreementRule(p["agreement"]) if "agreement" in p else old.agreement,
                location=p.get("location", old.location),
            )
        else:  # REMOVE
            records[record_id] = dataclasses.replace(records[record_id], status=RecordStatus.REMOVED)
        return dataclasses.replace(
            snap, records=records, audit=_with_audit(snap.audit, record_id, block_index, tx)
        )

    if tx.kind is TxKind.POLICY_OP:
        requests = dict(snap.requests)
        if tx.state_tag == "REQUEST":
            level = PermissionLevel.parse(p["level"])
            req = RequestProgress(
                request_id=tx.tx_id,
                party=p["party"],
                record=p["record"],
                level=level,
                state=RequestState.REQUESTED,
                votes={},
                expiry=p.get("expiry"),
                since=tx.timestamp,
            )
            requests[tx.tx_id] = req
            policies = dict(snap.policies)
            policies[(req.party, req.record)] = Policy(
                request_id=tx.tx_id,
                party=req.party,
                record=req.record,
                level=level,
                status=PolicyStatus.PENDING,
                expiry=req.expiry,
            )
            return dataclasses.replace(
                snap,
                requests=requests,
                policies=policies,
                audit=_with_audit(snap.audit, req.record, block_index, tx),
            )
        # REQUIRE: voting opens
        req = requests[p["requestId"]]
        requests[req.request_id] = dataclasses.replace(
            req, state=RequestState.WAITING_AUTH_CHECK, since=tx.timestamp
        )
        return dataclasses.replace(
            snap,
            requests=requests,
            audit=_with_audit(snap.audit, req.record, block_index, tx),
        )

    # INDIVIDUAL_AUTH
    req = snap.requests[p["requestId"]]
    record = snap.records[req.record]
    requests = dict(snap.requests)
    policies = dict(snap.policies)

    if tx.state_tag in ("AUTH_GRANT", "AUTH_DENY"):
        votes = dict(req.votes)
        votes[tx.author] = Vote.GRANT if tx.state_tag == "AUTH_GRANT" else Vote.DENY
        if req.state is RequestState.WAITING_AUTH_CHECK:
            outcome = lifecycle.aggregate_decision(record, votes)
            if outcome is PolicyStatus.GRANTED:
                new_state = RequestState.GRANTED
            elif outcome is PolicyStatus.DENIED:
                new_state = RequestState.DENIED
            else:
                new_state = RequestState.WAITING_AUTH_CHECK
        else:
            # late vote on an already-granted request: grants only grow
            new_state = req.state
            outcome = None
        requests[req.request_id] = dataclasses.replace(req, votes=votes, state=new_state)
        if outcome in (PolicyStatus.GRANTED, PolicyStatus.DENIED):
            _set_policy_status(policies, req, outcome)
    else:  # AUTH_REVOKE
        votes, status = lifecycle.apply_revocation(record, req.votes, tx.author)
        new_state = RequestState.GRANTED if status is PolicyStatus.GRANTED else RequestState.REVOKED
        requests[req.request_id] = dataclasses.replace(req, votes=votes, state=new_state)
        if status is PolicyStatus.REVOKED:
            _set_policy_status(policies, req, PolicyStatus.REVOKED)

    return dataclasses.replace(
        snap,
        requests=requests,
        policies=policies,
        audit=_with_audit(snap.audit, req.record, block_index, tx),
    )


def _set_policy_status(policies: dict, req: RequestProgress, status: PolicyStatus) -> None:
    # Only touch the pair's policy row if it still belongs to this request;
    # an expired policy may already have been superseded by a newer REQUEST.
    key = (req.party, req.record)
    current = policies.get(key)
    if current is not None and current.request_id == req.request_id:
        policies[key] = dataclasses.replace(current, status=status)


def fold_block(snap: Snapshot, block) -> Snapshot:
    """Fold one block: records, then policies, then individual auths."""
    for tx in block.data.all_transactions():
        try:
            snap = apply_transaction(snap, tx, block.index)
        except InadmissibleTransaction as exc:
            raise ReplayInconsistentError(
                f"block {block.index} tx {tx.tx_id}/{tx.state_tag}: {exc.reason}"
            ) from exc
    return dataclasses.replace(snap, tip_index=block.index)


def fold_transactions(snap: Snapshot, txs: Sequence[Transaction]) -> tuple[Snapshot, list]:
    """Project pending transactions onto a snapshot, skipping any that are
    inadmissible in sequence. Used for provisional (mempool-inclusive)
    views only — never for access decisions."""
    skipped = []
    index = snap.tip_index + 1
    for tx in txs:
        try:
            snap = apply_transaction(snap, tx, index)
        except InadmissibleTransaction as exc:
            skipped.append((tx, exc.reason))
    return snap, skipped


def replay(blocks: Sequence, entities: Iterable[Entity], members: Mapping[str, str],
           up_to: Optional[int] = None) -> Snapshot:
    """Pure replay of ``blocks[: up_to + 1]`` from the genesis directory."""
    snap = base_snapshot(entities, members)
    for block in blocks if up_to is None else blocks[: up_to + 1]:
        snap = fold_block(snap, block)
    return snap


def evaluate(snap: Snapshot, party: str, record_id: str, level: PermissionLevel,
             now: int) -> AccessDecision:
    """Policy decision point. Fail-closed: anything unresolvable is DENY or
    UNKNOWN, never GRANT."""
    record = snap.records.get(record_id)
    if record is None:
        return AccessDecision(DENY, lifecycle.UNKNOWN_RECORD)
    if record.status is RecordStatus.REMOVED:
        return AccessDecision(DENY, "RECORD_REMOVED")

    policy = snap.policies.get((party, record_id))
    if policy is None:
        return AccessDecision(UNKNOWN, "NO_POLICY")
    if policy.status is PolicyStatus.GRANTED:
        if policy.expiry is not None and now >= policy.expiry:
            return AccessDecision(DENY, "EXPIRED", policy.request_id)
        if policy.level >= level:
            return AccessDecision(GRANT, "POLICY_GRANTED", policy.request_id)
        return AccessDecision(UNKNOWN, "INSUFFICIENT_LEVEL", policy.request_id)
    if policy.status is PolicyStatus.DENIED:
        return AccessDecision(DENY, "POLICY_DENIED", policy.request_id)
    if policy.status is PolicyStatus.REVOKED:
        return AccessDecision(DENY, "POLICY_REVOKED", policy.request_id)
    return AccessDecision(UNKNOWN, "REQUEST_PENDING", policy.request_id)


def audit_trail(snap: Snapshot, record_id: str) -> tuple:
    """Every chain transaction touching the record or its policies, in order."""
    if record_id not in snap.records:
        raise LedgergateError(f"unknown record: {record_id!r}", code=lifecycle.UNKNOWN_RECORD)
    return snap.audit.get(record_id, ())


def pending_actions(snap: Snapshot, keeper: Optional[str] = None) -> list:
    """Open vote slots: one per (request in WAITING_AUTH_CHECK, unvoted keeper).

    Slots for requests that already reached GRANTED/DENIED/REVOKED are not
    listed (the item disappears from every keeper's list), and records no
    longer ACTIVE are skipped since votes on them would be inadmissible.
    """
    out = []
    for req in snap.requests.values():
        if req.state is not RequestState.WAITING_AUTH_CHECK:
            continue
        record = snap.records.get(req.record)
        if record is None or record.status is not RecordStatus.ACTIVE:
            continue
        for k in record.keepers:
            if k in req.votes:
                continue
            if keeper is not None and k != keeper:
                continue
            out.append(PendingAction(req.request_id, req.record, req.party,
                                     req.level, k, req.since))
    out.sort(key=lambda a: (a.since, a.request_id, a.keeper))
    return out
