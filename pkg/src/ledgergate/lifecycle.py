"""Transaction state machines: legality of every transition.

Three machines are enforced:

* records      -- CREATE -> UPDATE* -> REMOVE (REMOVE is terminal), plus
                  REGISTER for adding entities to the directory;
* access flow  -- REQUEST -> REQUIRE -> WAITING_AUTH_CHECK, then the
                  aggregate outcome GRANTED / DENIED (terminal) / REVOKED
                  (terminal), derived from individual votes;
* votes        -- one per (request, keeper): a single GRANT or DENY, with
                  AUTH_REVOKE allowed only for the keeper's own prior GRANT
                  while the aggregate is GRANTED.

Aggregate policy outcomes never appear as submitted transactions; they are
recomputed whenever a vote or revocation is applied. REQUIRE_ACTION is
implicit: a REQUIRE opens one pending vote slot per keeper instead of
writing per-keeper transactions.

Reason codes returned by :func:`admissible` are part of the public API and
stable: RECORD_TERMINAL, DUPLICATE_VOTE, NOT_KEEPER, POLICY_EXISTS,
REVOKE_WITHOUT_GRANT, BAD_AUTHOR, UNKNOWN_RECORD, plus the documented
extras defined below.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Optional

from .model import (
    AgreementRule,
    LedgergateError,
    PermissionLevel,
    PolicyStatus,
    Record,
    RecordStatus,
    Role,
    Transaction,
    TxKind,
    required_grants,
    valid_id,
    vote_tx_id,
)

# stable reason codes
RECORD_TERMINAL = "RECORD_TERMINAL"
DUPLICATE_VOTE = "DUPLICATE_VOTE"
NOT_KEEPER = "NOT_KEEPER"
POLICY_EXISTS = "POLICY_EXISTS"
REVOKE_WITHOUT_GRANT = "REVOKE_WITHOUT_GRANT"
BAD_AUTHOR = "BAD_AUTHOR"
UNKNOWN_RECORD = "UNKNOWN_RECORD"
# documented extras
UNKNOWN_ENTITY = "UNKNOWN_ENTITY"
ENTITY_EXISTS = "ENTITY_EXISTS"
RECORD_EXISTS = "RECORD_EXISTS"
UNKNOWN_REQUEST = "UNKNOWN_REQUEST"
REQUEST_EXISTS = "REQUEST_EXISTS"
REQUEST_NOT_OPEN = "REQUEST_NOT_OPEN"
REQUEST_TERMINAL = "REQUEST_TERMINAL"
BAD_STATE_TAG = "BAD_STATE_TAG"
BAD_PAYLOAD = "BAD_PAYLOAD"

RECORD_TAGS = ("REGISTER", "CREATE", "UPDATE", "REMOVE")
POLICY_TAGS = ("REQUEST", "REQUIRE", "AUTH_GRANT", "AUTH_DENY", "AUTH_REVOKE")
POLICY_SUBMITTABLE_TAGS = ("REQUEST", "REQUIRE")  # AUTH_* outcomes are derived
AUTH_TAGS = ("REQUIRE_ACTION", "AUTH_GRANT", "AUTH_DENY", "AUTH_REVOKE")
AUTH_SUBMITTABLE_TAGS = ("AUTH_GRANT", "AUTH_DENY", "AUTH_REVOKE")


class RequestState(str, enum.Enum):
    REQUESTED = "REQUESTED"
    WAITING_AUTH_CHECK = "WAITING_AUTH_CHECK"
    GRANTED = "GRANTED"
    DENIED = "DENIED"
    REVOKED = "REVOKED"


TERMINAL_REQUEST_STATES = (RequestState.DENIED, RequestState.REVOKED)


class Vote(str, enum.Enum):
    GRANT = "GRANT"
    DENY = "DENY"
    REVOKED_GRANT = "REVOKED_GRANT"


@dataclass(frozen=True)
class RequestProgress:
    """Aggregate machine state for one access request."""

    request_id: str
    party: str
    record: str
    level: PermissionLevel
    state: RequestState
    votes: Mapping[str, Vote]
    expiry: Optional[int] = None
    since: int = 0  # timestamp of the REQUIRE that opened voting


class InadmissibleTransaction(LedgergateError):
    """Raised when a transaction is not a legal transition; ``code`` is the reason."""

    def __init__(self, reason: str, message: str = ""):
        super().__init__(message or reason, code=reason)
        self.reason = reason


def aggregate_decision(record: Record, votes: Mapping[str, Vote]) -> PolicyStatus:
    """Threshold outcome over the current votes.

    GRANTED once live GRANT votes reach the rule's threshold; DENIED once
    the threshold is unreachable (too many keepers said DENY); PENDING
    otherwise. Votes from entities no longer in the keeper set do not count.
    """
    n = len(record.keepers)
    need = required_grants(record.agreement, n)
    counted = {k: v for k, v in votes.items() if k in record.keepers}
    grants = sum(1 for v in counted.values() if v is Vote.GRANT)
    if grants >= need:
        return PolicyStatus.GRANTED
    unvoted = n - len(counted)
    if grants + unvoted < need:
        return PolicyStatus.DENIED
    return PolicyStatus.PENDING


def apply_revocation(
    record: Record, votes: Mapping[str, Vote], revoking_keeper: str
) -> tuple[dict, PolicyStatus]:
    """Flip the keeper's GRANT to REVOKED_GRANT and recompute the aggregate.

    Returns the new vote map and the resulting status: still GRANTED while
    live grants meet the threshold, otherwise REVOKED (terminal).
    """
    if votes.get(revoking_keeper) is not Vote.GRANT:
        raise InadmissibleTransaction(
            REVOKE_WITHOUT_GRANT, f"{revoking_keeper!r} has no live GRANT to revoke"
        )
    new_votes = dict(votes)
    new_votes[revoking_keeper] = Vote.REVOKED_GRANT
    n = len(record.keepers)
    need = required_grants(record.agreement, n)
    grants = sum(
        1 for k, v in new_votes.items() if k in record.keepers and v is Vote.GRANT
    )
    status = PolicyStatus.GRANTED if grants >= need else PolicyStatus.REVOKED
    return new_votes, status


def _policy_is_live(policy, now: int) -> bool:
    if policy.status is not PolicyStatus.GRANTED:
        return policy.status is PolicyStatus.PENDING
    return policy.expiry is None or now < policy.expiry


def _check_keeper_list(snap, keepers) -> Optional[str]:
    if not isinstance(keepers, (list, tuple)) or not keepers:
        return BAD_PAYLOAD
    for k in keepers:
        if not valid_id(k):
            return BAD_PAYLOAD
        entity = snap.entities.get(k)
        if entity is None:
            return UNKNOWN_ENTITY
        if entity.role is not Role.DATA_KEEPER:
            return BAD_PAYLOAD
    return None


def _check_record_op(tx: Transaction, snap) -> Optional[str]:
    p = tx.payload
    if tx.state_tag == "REGISTER":
        if snap.entities.get(tx.author) is None:
            return UNKNOWN_ENTITY
        if tx.author not in snap.members:
            return BAD_AUTHOR
        entity = p.get("entity")
        if not isinstance(entity, Mapping):
            return BAD_PAYLOAD
        eid = entity.get("id")
        if not valid_id(eid) or entity.get("role") not in Role.__members__:
            return BAD_PAYLOAD
        if not isinstance(entity.get("publicKey"), str) or not entity["publicKey"]:
            return BAD_PAYLOAD
        if eid in snap.entities:
            return ENTITY_EXISTS
        return None

    record_id = p.get("record")
    if not valid_id(record_id):
        return BAD_PAYLOAD
    author = snap.entities.get(tx.author)
    if author is None:
        return UNKNOWN_ENTITY

    if tx.state_tag == "CREATE":
        if record_id in snap.records:
            return RECORD_EXISTS
        if author.role is not Role.DATA_KEEPER:
            return BAD_AUTHOR
        if p.get("agreement") not in AgreementRule.__members__:
            return BAD_PAYLOAD
        if not isinstance(p.get("location"), str):
            return BAD_PAYLOAD
        keepers = p.get("keepers")
        bad = _check_keeper_list(snap, keepers)
        if bad:
            return bad
        # the author becomes a keeper, so it must itself be a DATA_KEEPER
        return None

    record = snap.records.get(record_id)
    if record is None:
        return UNKNOWN_RECORD
    if record.status is RecordStatus.REMOVED:
        return RECORD_TERMINAL
    if tx.author not in record.keepers:
        return NOT_KEEPER

    if tx.state_tag == "UPDATE":
        if not any(k in p for k in ("location", "keepers", "agreement")):
            return BAD_PAYLOAD
        if "location" in p and not isinstance(p["location"], str):
            return BAD_PAYLOAD
        if "agreement" in p and p["agreement"] not in AgreementRule.__members__:
            return BAD_PAYLOAD
        if "keepers" in p:
            bad = _check_keeper_list(snap, p["keepers"])
            if bad:
                return bad
        return None

    # REMOVE: terminality already checked above
    return None


def _check_policy_op(tx: Transaction, snap) -> Optional[str]:
    p = tx.payload
    author = snap.entities.get(tx.author)
    if author is None:
        return UNKNOWN_ENTITY

    if tx.state_tag == "REQUEST":
        # the REQUEST's txId is the request id
        if not valid_id(tx.tx_id):
            return BAD_PAYLOAD
        party, record_id, level = p.get("party"), p.get("record"), p.get("level")
        if party != tx.author:
            return BAD_AUTHOR
        if author.role is not Role.THIRD_PARTY:
            return BAD_AUTHOR
        if level not in ("READ", "WRITE"):
            return BAD_PAYLOAD
        expiry = p.get("expiry")
        if expiry is not None and (not isinstance(expiry, int) or isinstance(expiry, bool) or expiry <= 0):
            return BAD_PAYLOAD
        record = snap.records.get(record_id)
        if record is None:
            return UNKNOWN_RECORD
        if record.status is RecordStatus.REMOVED:
            return RECORD_TERMINAL
        if tx.tx_id in snap.requests:
            return REQUEST_EXISTS
        existing = snap.policies.get((party, record_id))
        if existing is not None and _policy_is_live(existing, tx.timestamp):
            return POLICY_EXISTS
        return None

    if tx.state_tag == "REQUIRE":
        request_id = p.get("requestId")
        if request_id != tx.tx_id:
            return BAD_PAYLOAD
        if tx.author not in snap.members:
            return BAD_AUTHOR
        req = snap.requests.get(request_id)
        if req is None:
            return UNKNOWN_REQUEST
        if req.state in TERMINAL_REQUEST_STATES:
            return REQUEST_TERMINAL
        if req.state is not RequestState.REQUESTED:
            return REQUEST_EXISTS  # voting already opened
        record = snap.records.get(req.record)
        if record is None or record.status is RecordStatus.REMOVED:
            return RECORD_TERMINAL
        return None

    # aggregate outcomes are derived, never submitted
    return BAD_STATE_TAG


def _check_individual_auth(tx: Transaction, snap) -> Optional[str]:
    request_id = tx.payload.get("requestId")
    if not isinstance(request_id, str):
        return BAD_PAYLOAD
    if snap.entities.get(tx.author) is None:
        return UNKNOWN_ENTITY
    if tx.tx_id != vote_tx_id(request_id, tx.author):
        return BAD_PAYLOAD
    req = snap.requests.get(request_id)
    if req is None:
        return UNKNOWN_REQUEST
    if req.state in TERMINAL_REQUEST_STATES:
        return REQUEST_TERMINAL
    record = snap.records.get(req.record)
    if record is None or record.status is RecordStatus.REMOVED:
        return RECORD_TERMINAL
    if tx.author not in record.keepers:
        return NOT_KEEPER

    if tx.state_tag in ("AUTH_GRANT", "AUTH_DENY"):
        if req.state is RequestState.REQUESTED:
            return REQUEST_NOT_OPEN  # voting opens at REQUIRE
        # WAITING_AUTH_CHECK or GRANTED: the keeper's slot stays open until
        # the request reaches a terminal state
        if tx.author in req.votes:
            return DUPLICATE_VOTE
        return None

    # AUTH_REVOKE
    if req.state is not RequestState.GRANTED:
        return REQUEST_NOT_OPEN
    if req.votes.get(tx.author) is not Vote.GRANT:
        return REVOKE_WITHOUT_GRANT
    return None


def admissible(tx: Transaction, snap) -> tuple[bool, Optional[str]]:
    """Is ``tx`` a legal transition given snapshot ``snap``?

    Signature validity is assumed (verified upstream); this checks machine
    state only. Returns ``(True, None)`` or ``(False, reason)``.
    """
    if not valid_id(tx.tx_id) or not valid_id(tx.author):
        return False, BAD_PAYLOAD
    if not isinstance(tx.timestamp, int) or isinstance(tx.timestamp, bool) or tx.timestamp < 0:
        return False, BAD_PAYLOAD
    if not isinstance(tx.payload, Mapping):
        return False, BAD_PAYLOAD

    if tx.kind is TxKind.RECORD_OP:
        if tx.state_tag not in RECORD_TAGS:
            return False, BAD_STATE_TAG
        reason = _check_record_op(tx, snap)
    elif tx.kind is TxKind.POLICY_OP:
        if tx.state_tag not in POLICY_TAGS:
            return False, BAD_STATE_TAG
        reason = _check_policy_op(tx, snap)
    elif tx.kind is TxKind.INDIVIDUAL_AUTH:
        if tx.state_tag not in AUTH_SUBMITTABLE_TAGS:
            return False, BAD_STATE_TAG
        reason = _check_individual_auth(tx, snap)
    else:
        return False, BAD_STATE_TAG

    return (reason is None), reason
