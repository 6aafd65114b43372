"""HTTP gateway: policy enforcement point and administration surface.

The gateway fronts one node. Third parties ask for access, keepers vote and
revoke, operators manage records, auditors read the chain — every mutation
is a signed transaction submitted to the node's mempool, and every access
decision is computed from the *mined* tip snapshot (provisional state feeds
views and duplicate detection, never a GRANT).

Authentication is a detached signature: the caller signs the canonical
transaction preimage — ``canonical_encode({"payload": ..., "stateTag": ...,
"timestamp": ..., "txId": ...})`` — with their registered key and sends it
base64-encoded in the ``X-Signature`` header. The gateway rebuilds the
transaction from the JSON body and lets the node verify authorship, so the
private key never travels.

Endpoint → transaction mapping (one kind each):

====================  ==========================================
POST /access-requests POLICY_OP/REQUEST (+ gateway-signed REQUIRE)
POST /authorizations  INDIVIDUAL_AUTH/AUTH_GRANT or AUTH_DENY
POST /revocations     INDIVIDUAL_AUTH/AUTH_REVOKE
POST /records         RECORD_OP/CREATE
PATCH /records/{id}   RECORD_OP/UPDATE
DELETE /records/{id}  RECORD_OP/REMOVE
====================  ==========================================

Reads: GET / (node info), /pending, /records, /records/{id}, /audit,
/chain, /chain/validate.

A node whose key is not a consortium member key cannot sign blocks or
REQUIRE transactions; its gateway starts in read-only mode and answers
every mutating call with 403 READ_ONLY.
"""
from __future__ import annotations

import base64
import time
from typing import Optional

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import lifecycle
from .model import (
    PermissionLevel,
    Transaction,
    TxKind,
    make_transaction,
    vote_tx_id,
)
from .network import BAD_SIGNATURE
from .snapshot import GRANT, audit_trail, evaluate, pending_actions
from .transport import NodeService

READ_ONLY = "READ_ONLY"

_HTTP_STATUS = {
    BAD_SIGNATURE: 401,
    READ_ONLY: 403,
    lifecycle.NOT_KEEPER: 403,
    lifecycle.BAD_AUTHOR: 403,
    lifecycle.UNKNOWN_RECORD: 404,
    lifecycle.UNKNOWN_REQUEST: 404,
    lifecycle.UNKNOWN_ENTITY: 404,
    lifecycle.POLICY_EXISTS: 409,
    lifecycle.REQUEST_EXISTS: 409,
    lifecycle.RECORD_EXISTS: 409,
    lifecycle.ENTITY_EXISTS: 409,
    lifecycle.DUPLICATE_VOTE: 409,
    lifecycle.RECORD_TERMINAL: 409,
    lifecycle.REQUEST_TERMINAL: 409,
    lifecycle.REQUEST_NOT_OPEN: 409,
    lifecycle.REVOKE_WITHOUT_GRANT: 409,
    "DUPLICATE_TX": 409,
}


class ApiError(Exception):
    def __init__(self, code: str, message: str = ""):
        self.code = code
        self.message = message or code
        self.status = _HTTP_STATUS.get(code, 400)


class AccessRequestBody(BaseModel):
    party: str
    record: str
    level: str = "READ"
    requestId: str
    timestamp: int
    expiry: Optional[int] = None


class VoteBody(BaseModel):
    requestId: str
    keeper: str
    verdict: str = Field(pattern="^(GRANT|DENY)$")
    timestamp: int


class RevokeBody(BaseModel):
    requestId: str
    keeper: str
    timestamp: int


class RecordCreateBody(BaseModel):
    record: str
    author: str
    keepers: list[str]
    agreement: str = "ANY"
    location: str
    txId: str
    timestamp: int


class RecordUpdateBody(BaseModel):
    author: str
    txId: str
    timestamp: int
    location: Optional[str] = None
    keepers: Optional[list[str]] = None
    agreement: Optional[str] = None


class RecordRemoveBody(BaseModel):
    author: str
    txId: str
    timestamp: int


def _signature(request: Request) -> bytes:
    header = request.headers.get("X-Signature")
    if not header:
        raise ApiError(BAD_SIGNATURE, "missing X-Signature header")
    try:
        return base64.b64decode(header, validate=True)
    except (ValueError, TypeError):
        raise ApiError(BAD_SIGNATURE, "X-Signature is not valid base64")


def _status_name(state) -> str:
    """Request states as the API reports them: anything before an aggregate
    outcome is PENDING."""
    if state in (lifecycle.RequestState.REQUESTED,
                 lifecycle.RequestState.WAITING_AUTH_CHECK):
        return "PENDING"
    return state.value


def _record_wire(record) -> dict:
    return {
        "record": record.id,
        "keepers": sorted(record.keepers),
        "agreement": record.agreement.value,
        "location": record.location,
        "status": record.status.value,
    }


def _policy_rows(snap, record_id: str) -> list:
    rows = [
        {
            "requestId": req.request_id,
            "party": req.party,
            "level": req.level.name,
            "status": _status_name(req.state),
            "expiry": req.expiry,
            "since": req.since,
        }
        for req in snap.requests.values()
        if req.record == record_id
    ]
    rows.sort(key=lambda r: (r["since"], r["requestId"]))
    return rows


def now_ms() -> int:
    return int(time.time() * 1000)


def create_app(service: NodeService, *, inline_mine: bool = False) -> FastAPI:
    """Build the HTTP app over a started :class:`NodeService`.

    ``inline_mine`` mines the mempool dry synchronously after every accepted
    write — the single-node demo/test mode. Production nodes leave it off
    and let the service's miner thread work.
    """
    node = service.node
    writable = (node.key is not None
                and node.config.members.get(node.node_id) == node.key.public_pem)
    app = FastAPI(title="ledgergate", docs_url=None, redoc_url=None)

    @app.exception_handler(ApiError)
    async def api_error_handler(_request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": exc.message})

    def tip_snapshot():
        with service.lock:
            return node.tip_snapshot

    def provisional():
        with service.lock:
            return node.provisional()

    def submit(tx: Transaction) -> None:
        if not writable:
            raise ApiError(READ_ONLY, "this node cannot write to the chain")
        accepted, reason = service.submit(tx)
        if not accepted:
            raise ApiError(reason)

    def mine_if_inline() -> None:
        if not inline_mine:
            return
        while service.mine_once(timestamp=now_ms()) is not None:
            pass

    # --- info -----------------------------------------------------------------

    @app.get("/")
    def info():
        snap = tip_snapshot()
        with service.lock:
            height = node.tip.index
            mempool = len(node.mempool)
        return {
            "node": node.node_id,
            "height": height,
            "mempool": mempool,
            "records": len(snap.records),
            "readOnly": not writable,
            "scheme": node.config.scheme,
            "difficulty": node.config.difficulty,
        }

    # --- access requests ---------------------------------------------------

    @app.post("/access-requests")
    def access_request(body: AccessRequestBody, request: Request):
        signature = _signature(request)
        snap = tip_snapshot()
        if body.record not in snap.records:
            raise ApiError(lifecycle.UNKNOWN_RECORD, f"no record {body.record!r}")
        try:
            level = PermissionLevel.parse(body.level)
        except (KeyError, ValueError):
            raise ApiError(lifecycle.BAD_PAYLOAD, f"bad level {body.level!r}")

        decision = evaluate(snap, body.party, body.record, level, now=now_ms())
        if decision.outcome != "UNKNOWN":
            payload = {"outcome": decision.outcome, "reason": decision.reason,
                       "policyRef": decision.policy_ref}
            if decision.outcome == GRANT:
                payload["location"] = snap.records[body.record].location
            return payload

        tx_payload = {"party": body.party, "record": body.record,
                      "level": body.level}
        if body.expiry is not None:
            tx_payload["expiry"] = body.expiry
        request_tx = Transaction(
            tx_id=body.requestId, kind=TxKind.POLICY_OP, state_tag="REQUEST",
            payload=tx_payload, author=body.party, timestamp=body.timestamp,
            signature=signature)
        submit(request_tx)

        # the gateway is the intermediary: it opens voting by countersigning
        # the request with its node identity
        require_tx = make_transaction(
            TxKind.POLICY_OP, "REQUIRE", {"requestId": body.requestId},
            node.node_id, now_ms(), node.key, tx_id=body.requestId)
        submit(require_tx)
        mine_if_inline()
        return JSONResponse(status_code=202,
                            content={"requestId": body.requestId,
                                     "status": "PENDING"})

    # --- keeper actions ------------------------------------------------------

    @app.get("/pending")
    def pending(keeper: str = Query(...)):
        snap = provisional()
        if keeper not in snap.entities:
            raise ApiError(lifecycle.UNKNOWN_ENTITY, f"unknown entity {keeper!r}")
        return {
            "keeper": keeper,
            "pending": [
                {"requestId": a.request_id, "record": a.record,
                 "party": a.party, "level": a.level.name,
                 "keeper": a.keeper, "since": a.since}
                for a in pending_actions(snap, keeper)
            ],
        }

    @app.post("/authorizations")
    def authorize(body: VoteBody, request: Request):
        signature = _signature(request)
        tx = Transaction(
            tx_id=vote_tx_id(body.requestId, body.keeper),
            kind=TxKind.INDIVIDUAL_AUTH,
            state_tag="AUTH_GRANT" if body.verdict == "GRANT" else "AUTH_DENY",
            payload={"requestId": body.requestId}, author=body.keeper,
            timestamp=body.timestamp, signature=signature)
        submit(tx)
        mine_if_inline()
        req = provisional().requests[body.requestId]
        return {"requestId": body.requestId, "status": _status_name(req.state),
                "provisional": True}

    @app.post("/revocations")
    def revoke(body: RevokeBody, request: Request):
        signature = _signature(request)
        tx = Transaction(
            tx_id=vote_tx_id(body.requestId, body.keeper),
            kind=TxKind.INDIVIDUAL_AUTH, state_tag="AUTH_REVOKE",
            payload={"requestId": body.requestId}, author=body.keeper,
            timestamp=body.timestamp, signature=signature)
        submit(tx)
        mine_if_inline()
        req = provisional().requests[body.requestId]
        return {"requestId": body.requestId, "status": _status_name(req.state),
                "provisional": True}

    # --- record lifecycle -----------------------------------------------------

    @app.post("/records")
    def create_record(body: RecordCreateBody, request: Request):
        signature = _signature(request)
        tx = Transaction(
            tx_id=body.txId, kind=TxKind.RECORD_OP, state_tag="CREATE",
            payload={"record": body.record, "keepers": body.keepers,
                     "agreement": body.agreement, "location": body.location},
            author=body.author, timestamp=body.timestamp, signature=signature)
        submit(tx)
        mine_if_inline()
        return JSONResponse(status_code=202, content={"txId": body.txId})

    @app.patch("/records/{record_id}")
    def update_record(record_id: str, body: RecordUpdateBody, request: Request):
        signature = _signature(request)
        payload = {"record": record_id}
        for name in ("location", "keepers", "agreement"):
            value = getattr(body, name)
            if value is not None:
                payload[name] = value
        tx = Transaction(
            tx_id=body.txId, kind=TxKind.RECORD_OP, state_tag="UPDATE",
            payload=payload, author=body.author, timestamp=body.timestamp,
            signature=signature)
        submit(tx)
        mine_if_inline()
        return JSONResponse(status_code=202, content={"txId": body.txId})

    @app.delete("/records/{record_id}")
    def remove_record(record_id: str, body: RecordRemoveBody, request: Request):
        signature = _signature(request)
        tx = Transaction(
            tx_id=body.txId, kind=TxKind.RECORD_OP, state_tag="REMOVE",
            payload={"record": record_id}, author=body.author,
            timestamp=body.timestamp, signature=signature)
        submit(tx)
        mine_if_inline()
        return JSONResponse(status_code=202, content={"txId": body.txId})

    @app.get("/records")
    def list_records():
        snap = tip_snapshot()
        return {"records": [_record_wire(snap.records[rid])
                            for rid in sorted(snap.records)]}

    @app.get("/records/{record_id}")
    def show_record(record_id: str):
        snap = tip_snapshot()
        record = snap.records.get(record_id)
        if record is None:
            raise ApiError(lifecycle.UNKNOWN_RECORD, f"no record {record_id!r}")
        out = _record_wire(record)
        out["policies"] = _policy_rows(snap, record_id)
        return out

    # --- audit ---------------------------------------------------------------

    @app.get("/audit")
    def audit(record: str = Query(...)):
        snap = tip_snapshot()
        if record not in snap.records:
            raise ApiError(lifecycle.UNKNOWN_RECORD, f"no record {record!r}")
        return {
            "record": record,
            "entries": [{"blockIndex": index, "tx": tx.to_wire()}
                        for index, tx in audit_trail(snap, record)],
        }

    @app.get("/chain")
    def chain():
        with service.lock:
            blocks = list(node.chain)
        return {"height": blocks[-1].index,
                "blocks": [b.to_wire() for b in blocks]}

    @app.get("/chain/validate")
    def chain_validate():
        from .ledger import validate_chain

        with service.lock:
            blocks = list(node.chain)
        ok, index, reason = validate_chain(blocks, node.config)
        return {"valid": ok, "index": None if ok else index,
                "reason": None if ok else reason}

    return app
