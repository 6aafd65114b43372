#!/usr/bin/env python3
"""Regenerate the cross-language fixtures under frontend/tests/fixtures/.

The console trusts nothing about its own encoder, signer, or response
parsing: all three are pinned to bytes produced by the node software and to
verbatim gateway responses recorded by this script. Rerun it after any wire
format change (the engine package must be installed):

    python3 frontend/scripts/record-fixtures.py

Everything except the RSA key pair is deterministic, so regenerating after
a no-op change produces a no-op diff in the other files.
"""
from __future__ import annotations

import base64
import json
import sys
from pathlib import Path

from fastapi.testclient import TestClient

from ledgergate import crypto
from ledgergate.gateway import create_app
from ledgergate.ledger import GenesisConfig
from ledgergate.model import (
    Entity,
    Role,
    canonical_encode,
    signing_preimage,
    vote_tx_id,
)
from ledgergate.network import Node
from ledgergate.transport import NodeService

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

BASE_TS = 1_700_000_000_000


def canonical_vectors() -> list:
    samples = [
        ("null", None),
        ("true", True),
        ("false", False),
        ("zero", 0),
        ("negative", -7),
        ("large_int", 9007199254740991),
        ("empty_string", ""),
        ("plain_string", "plain"),
        ("quotes_and_backslash", 'say "hi" \\ bye'),
        ("control_chars", "line\nbreak\ttab\x01unit"),
        ("non_ascii", "éclair ☃ 中文"),
        ("astral", "smile 😀"),
        ("line_separators", "a b c"),
        ("empty_list", []),
        ("empty_object", {}),
        ("nested", {"b": [1, "two", None], "a": {"y": True, "x": False}}),
        ("numeric_string_keys", {"10": 1, "2": 2, "1": 3}),
        # code-point key order: U+E000 sorts before U+10000, although a
        # UTF-16 code-unit comparison would say the opposite
        ("astral_vs_private_use_keys", {"\U00010000": "astral", "": "bmp"}),
        ("unicode_keys", {"é": 1, "e": 2, "ß": 3}),
        ("vote_payload", {"requestId": "q1"}),
        (
            "preimage_shape",
            {
                "payload": {"party": "p", "record": "r", "level": "READ"},
                "stateTag": "REQUEST",
                "timestamp": BASE_TS,
                "txId": "q1",
            },
        ),
    ]
    return [
        {"name": name, "value": value, "hex": canonical_encode(value).hex()}
        for name, value in samples
    ]


def signing_vectors() -> dict:
    request_id = "q-fixture"
    payload = {"requestId": request_id}
    keys = {
        "ed25519": crypto.ed25519_from_seed(b"console-fixture-ed25519"),
        "rsa-sha256": crypto.generate_keypair(crypto.RSA_SHA256),
    }
    entries = []
    for scheme, key in keys.items():
        tx_id = vote_tx_id(request_id, key.entity_id)
        message = signing_preimage(payload, "AUTH_GRANT", BASE_TS + 123, tx_id)
        entries.append(
            {
                "scheme": scheme,
                "privatePem": key.private_pem().decode("ascii"),
                "publicPem": key.public_pem,
                "entityId": key.entity_id,
                "requestId": request_id,
                "stateTag": "AUTH_GRANT",
                "timestamp": BASE_TS + 123,
                "txId": tx_id,
                "messageHex": message.hex(),
                "signatureBase64": base64.b64encode(crypto.sign(key, message)).decode(),
            }
        )
    return {
        "keys": entries,
        "voteTxIds": [
            {"requestId": r, "keeper": k, "txId": vote_tx_id(r, k)}
            for r, k in [("q1", "alice"), ("q1", "bob"), ("req-42", "keeper-x")]
        ],
    }


class Recorder:
    """Drives one in-process node through a small approval history."""

    def __init__(self):
        names = ["node1", "alice", "bob", "carol", "peter", "quinn"]
        self.keys = {n: crypto.ed25519_from_seed(f"fixture:{n}".encode()) for n in names}
        self.ids = {n: self.keys[n].entity_id for n in names}
        roles = {
            "alice": Role.DATA_KEEPER,
            "bob": Role.DATA_KEEPER,
            "carol": Role.DATA_KEEPER,
            "peter": Role.THIRD_PARTY,
            "quinn": Role.THIRD_PARTY,
        }
        config = GenesisConfig(
            members={self.ids["node1"]: self.keys["node1"].public_pem},
            difficulty=0,
            scheme=crypto.ED25519,
            entities=tuple(
                Entity(self.ids[n], role, self.keys[n].public_pem)
                for n, role in roles.items()
            ),
        )
        node = Node(self.ids["node1"], config, key=self.keys["node1"])
        self.service = NodeService(node, "127.0.0.1", 0, mine_interval=None)
        self.client = TestClient(create_app(self.service, inline_mine=True))
        self.ts = BASE_TS

    def signed(self, method: str, path: str, body: dict, *, signer: str,
               payload: dict, tag: str, tx_id: str):
        preimage = signing_preimage(payload, tag, body["timestamp"], tx_id)
        signature = crypto.sign(self.keys[signer], preimage)
        return self.client.request(
            method, path, json=body,
            headers={"X-Signature": base64.b64encode(signature).decode()})

    def next_ts(self) -> int:
        self.ts += 1000
        return self.ts

    def create(self, record: str, keepers: list, agreement: str) -> None:
        ts = self.next_ts()
        tx_id = f"create-{record}"
        body = {
            "record": record,
            "author": self.ids["alice"],
            "keepers": [self.ids[k] for k in keepers],
            "agreement": agreement,
            "location": f"vault://{record}",
            "txId": tx_id,
            "timestamp": ts,
        }
        payload = {k: body[k] for k in ("record", "keepers", "agreement", "location")}
        response = self.signed("POST", "/records", body, signer="alice",
                               payload=payload, tag="CREATE", tx_id=tx_id)
        assert response.status_code == 202, response.text

    def request_access(self, party: str, record: str, request_id: str, level: str):
        ts = self.next_ts()
        body = {"party": self.ids[party], "record": record, "level": level,
                "requestId": request_id, "timestamp": ts}
        payload = {"party": self.ids[party], "record": record, "level": level}
        return self.signed("POST", "/access-requests", body, signer=party,
                           payload=payload, tag="REQUEST", tx_id=request_id)

    def vote(self, keeper: str, request_id: str, verdict: str):
        ts = self.next_ts()
        body = {"requestId": request_id, "keeper": self.ids[keeper],
                "verdict": verdict, "timestamp": ts}
        return self.signed(
            "POST", "/authorizations", body, signer=keeper,
            payload={"requestId": request_id},
            tag="AUTH_GRANT" if verdict == "GRANT" else "AUTH_DENY",
            tx_id=vote_tx_id(request_id, self.ids[keeper]))

    def get(self, path: str) -> dict:
        response = self.client.get(path)
        assert response.status_code == 200, response.text
        return response.json()


def record_api_fixtures(out: Path) -> None:
    rec = Recorder()
    try:
        rec.create("ehr1", ["alice", "bob", "carol"], "MAJORITY")

        ack = rec.request_access("peter", "ehr1", "q1", "READ")
        assert ack.status_code == 202, ack.text
        pending = rec.get(f"/pending?keeper={rec.ids['alice']}")

        assert rec.vote("alice", "q1", "GRANT").status_code == 200
        assert rec.vote("bob", "q1", "GRANT").status_code == 200

        assert rec.request_access("quinn", "ehr1", "q2", "WRITE").status_code == 202
        assert rec.vote("alice", "q2", "DENY").status_code == 200
        assert rec.vote("bob", "q2", "DENY").status_code == 200

        # the same verdict again is caught by transaction dedup; a conflicting
        # verdict gets through to the lifecycle check — the console re-syncs
        # its list on either code
        duplicate_tx = rec.vote("alice", "q1", "GRANT")
        assert duplicate_tx.status_code == 409, duplicate_tx.text
        assert duplicate_tx.json()["code"] == "DUPLICATE_TX"
        duplicate_vote = rec.vote("alice", "q1", "DENY")
        assert duplicate_vote.status_code == 409, duplicate_vote.text
        assert duplicate_vote.json()["code"] == "DUPLICATE_VOTE"

        granted = rec.request_access("peter", "ehr1", "q1", "READ")
        assert granted.status_code == 200 and granted.json()["outcome"] == "GRANT"
        denied = rec.request_access("quinn", "ehr1", "q2", "WRITE")
        assert denied.status_code == 200 and denied.json()["outcome"] == "DENY"

        fixtures = {
            "info.json": rec.get("/"),
            "pending.json": pending,
            "pending_empty.json": rec.get(f"/pending?keeper={rec.ids['carol']}"),
            "record.json": rec.get("/records/ehr1"),
            "audit.json": rec.get("/audit?record=ehr1"),
            "decisions.json": {
                "grant": granted.json(),
                "deny": denied.json(),
                "pendingAck": ack.json(),
                "duplicateTx": duplicate_tx.json(),
                "duplicateVote": duplicate_vote.json(),
            },
        }
        for name, data in fixtures.items():
            (out / name).write_text(json.dumps(data, indent=2) + "\n")
    finally:
        rec.service.stop()


def main() -> int:
    api_dir = FIXTURES / "api"
    api_dir.mkdir(parents=True, exist_ok=True)
    (FIXTURES / "canonical.json").write_text(
        json.dumps(canonical_vectors(), indent=2, ensure_ascii=False) + "\n")
    (FIXTURES / "signing.json").write_text(
        json.dumps(signing_vectors(), indent=2) + "\n")
    record_api_fixtures(api_dir)
    print(f"fixtures written under {FIXTURES}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
