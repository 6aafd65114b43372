"""Operator command line: keygen, run, inspect, sim, submit.

Every failure exits nonzero after printing ``error: <CODE>: <detail>`` to
stderr, where CODE is one of the stable names used across the package
(CORRUPT_STORE, CONFIG_INVALID, SCENARIO_INVALID, IO_FAILURE, BIND_FAILURE,
or a transaction reason code surfaced by a gateway).
"""
from __future__ import annotations

import argparse
import base64
import json
import os
import secrets
import stat
import sys
import time
from pathlib import Path
from typing import Optional

from . import crypto
from .config import (
    BIND_FAILURE,
    CONFIG_INVALID,
    IO_FAILURE,
    SCENARIO_INVALID,
    CliConfig,
    CliError,
    load_genesis,
    load_node_config,
    resolved_difficulty,
    resolved_seed,
)
from .gateway import create_app
from .ledger import BlockStore, CorruptStoreError, validate_chain
from .model import signing_preimage, vote_tx_id
from .network import Node
from .simulator import run_scenario
from .transport import NodeService


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="node config file (JSON)")
    parser.add_argument("--difficulty", type=int,
                        help="override the genesis difficulty")
    parser.add_argument("--listen", help="gateway listen address host:port")
    parser.add_argument("--peer", action="append", default=[],
                        metavar="ID=HOST:PORT", help="extra peer (repeatable)")
    parser.add_argument("--data-dir", help="chain storage directory")
    parser.add_argument("--seed", type=int, help="override a scenario seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ledgergate",
        description="consortium ledger for e-health record access control")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("keygen", help="generate a key pair and print its EntityId")
    p.add_argument("--out", default="key.pem", help="private key output path")
    p.add_argument("--scheme", choices=list(crypto.SCHEMES),
                   default=crypto.RSA_SHA256)
    _common_flags(p)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("run", help="run a node: gateway API + wire protocol + miner")
    _common_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("inspect", help="dump and validate a stored chain")
    p.add_argument("chain", help="chain store file")
    p.add_argument("--genesis", required=True, help="genesis config JSON")
    _common_flags(p)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("sim", help="run a simulator scenario and print verdicts")
    p.add_argument("scenario", help="scenario JSON file")
    _common_flags(p)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("submit", help="sign a transaction and send it to a gateway")
    p.add_argument("op", choices=["create", "update", "remove", "request",
                                  "grant", "deny", "revoke"])
    p.add_argument("--gateway", default="http://127.0.0.1:8460")
    p.add_argument("--key", required=True, help="private key PEM")
    p.add_argument("--author", help="entity id (default: derived from the key)")
    p.add_argument("--record")
    p.add_argument("--keepers", help="comma-separated keeper ids")
    p.add_argument("--agreement", default="ANY")
    p.add_argument("--location")
    p.add_argument("--level", default="READ")
    p.add_argument("--expiry", type=int)
    p.add_argument("--request-id")
    _common_flags(p)
    p.set_defaults(func=cmd_submit)

    return parser


def cli_config(args: argparse.Namespace) -> CliConfig:
    return CliConfig(
        subcommand=args.subcommand,
        config_path=args.config,
        difficulty=args.difficulty,
        listen=args.listen,
        peers=list(args.peer),
        data_dir=args.data_dir,
        seed=args.seed,
    )


# --- keygen --------------------------------------------------------------------


def cmd_keygen(args: argparse.Namespace) -> int:
    key = crypto.generate_keypair(args.scheme)
    private_path = Path(args.out)
    public_path = private_path.with_suffix(private_path.suffix + ".pub")
    try:
        private_path.touch(mode=0o600, exist_ok=True)
        os.chmod(private_path, stat.S_IRUSR | stat.S_IWUSR)
        private_path.write_bytes(key.private_pem())
        public_path.write_text(key.public_pem)
    except OSError as exc:
        raise CliError(IO_FAILURE, f"cannot write key files: {exc}")
    print(f"entity id: {key.entity_id}")
    print(f"private key: {private_path}")
    print(f"public key: {public_path}")
    return 0


# --- run -----------------------------------------------------------------------


def build_runtime(cli: CliConfig, environ=None):
    """Everything `run` needs, constructed but not yet serving HTTP.

    Returns ``(node_config, service, app)`` with the wire listener bound,
    background threads started, and peers dialed. The caller is responsible
    for ``service.stop()``.
    """
    node_cfg = load_node_config(cli, environ)
    genesis = load_genesis(node_cfg.genesis_path,
                           resolved_difficulty(cli, environ))

    key = None
    if node_cfg.key_path is not None:
        try:
            key = crypto.load_private_pem(node_cfg.key_path.read_bytes())
        except OSError as exc:
            raise CliError(IO_FAILURE, f"cannot read key: {exc}")
        except crypto.CryptoError as exc:
            raise CliError(CONFIG_INVALID, str(exc))

    store = None
    if node_cfg.data_dir is not None:
        node_cfg.data_dir.mkdir(parents=True, exist_ok=True)
        store = BlockStore(node_cfg.data_dir / "chain.dat")

    try:
        node = Node(node_cfg.node_id, genesis, key=key, store=store)
    except CorruptStoreError as exc:
        raise CliError(exc.code, str(exc))

    mining_member = (key is not None
                     and genesis.members.get(node_cfg.node_id) == key.public_pem)
    host, port = node_cfg.wire_listen
    try:
        service = NodeService(
            node, host=host, port=port,
            mine_interval=node_cfg.mine_interval if mining_member else None)
    except OSError as exc:
        raise CliError(BIND_FAILURE, f"cannot bind {host}:{port}: {exc}")
    service.start()
    for peer_id, address in node_cfg.peers.items():
        try:
            service.dial(peer_id, address)
        except OSError as exc:
            print(f"warning: peer {peer_id} unreachable: {exc}", file=sys.stderr)

    app = create_app(service, inline_mine=node_cfg.inline_mine)
    return node_cfg, service, app


def cmd_run(args: argparse.Namespace) -> int:
    import uvicorn

    node_cfg, service, app = build_runtime(cli_config(args))
    host, port = node_cfg.gateway_listen
    mode = "read-only" if service.node.key is None or service.mine_interval is None \
        else f"mining every {service.mine_interval}s"
    print(f"node {node_cfg.node_id}: gateway on {host}:{port}, "
          f"wire on {service.address[0]}:{service.address[1]}, {mode}")
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except (OSError, SystemExit) as exc:
        if isinstance(exc, OSError):
            raise CliError(BIND_FAILURE, f"cannot bind {host}:{port}: {exc}")
        raise
    finally:
        service.stop()
    return 0


# --- inspect -------------------------------------------------------------------


def cmd_inspect(args: argparse.Namespace) -> int:
    genesis = load_genesis(Path(args.genesis),
                           resolved_difficulty(cli_config(args)))
    try:
        blocks = BlockStore(args.chain).load()
    except CorruptStoreError as exc:
        raise CliError(exc.code, str(exc))
    except OSError as exc:
        raise CliError(IO_FAILURE, f"cannot read chain: {exc}")

    for block in blocks:
        tags = [f"{tx.state_tag}:{tx.tx_id[:8]}"
                for tx in block.data.all_transactions()]
        print(f"block {block.index}  ts={block.timestamp}  "
              f"nonce={block.nonce}  hash={block.hash[:16]}  "
              f"txs=[{', '.join(tags)}]")

    ok, index, reason = validate_chain(blocks, genesis)
    if not ok:
        raise CliError(reason, f"chain invalid at block {index}: {reason}")
    print(f"valid chain, height {blocks[-1].index}")
    return 0


# --- sim -----------------------------------------------------------------------


def cmd_sim(args: argparse.Namespace) -> int:
    try:
        spec = json.loads(Path(args.scenario).read_text())
    except OSError as exc:
        raise CliError(SCENARIO_INVALID, f"cannot read scenario: {exc}")
    except json.JSONDecodeError as exc:
        raise CliError(SCENARIO_INVALID, f"scenario is not valid JSON: {exc}")
    seed = resolved_seed(cli_config(args))
    if seed is not None:
        spec["seed"] = seed
    difficulty = resolved_difficulty(cli_config(args))
    if difficulty is not None:
        spec["difficulty"] = difficulty
    try:
        result = run_scenario(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(SCENARIO_INVALID, f"bad scenario: {exc!r}")
    print(json.dumps(result.to_dict(), indent=2, sort_keys=True))
    return 0


# --- submit --------------------------------------------------------------------


def _submit_transaction(args, key, author: str):
    """Map a submit op to (method, path, body, header payload/tag/txId)."""
    ts = int(time.time() * 1000)

    def need(flag: str):
        value = getattr(args, flag.replace("-", "_"))
        if value is None:
            raise CliError(CONFIG_INVALID, f"--{flag} is required for {args.op}")
        return value

    if args.op == "create":
        record = need("record")
        keepers = [k for k in (args.keepers or author).split(",") if k]
        payload = {"record": record, "keepers": keepers,
                   "agreement": args.agreement,
                   "location": args.location or f"vault://{record}"}
        tx_id = secrets.token_hex(8)
        body = dict(payload, author=author, txId=tx_id, timestamp=ts)
        return "POST", "/records", body, payload, "CREATE", tx_id

    if args.op == "update":
        record = need("record")
        payload = {"record": record}
        body = {"author": author, "timestamp": ts}
        if args.location:
            payload["location"] = body["location"] = args.location
        if args.keepers:
            keepers = [k for k in args.keepers.split(",") if k]
            payload["keepers"] = body["keepers"] = keepers
        if args.agreement != "ANY":
            payload["agreement"] = body["agreement"] = args.agreement
        tx_id = secrets.token_hex(8)
        body["txId"] = tx_id
        return "PATCH", f"/records/{record}", body, payload, "UPDATE", tx_id

    if args.op == "remove":
        record = need("record")
        payload = {"record": record}
        tx_id = secrets.token_hex(8)
        body = {"author": author, "txId": tx_id, "timestamp": ts}
        return "DELETE", f"/records/{record}", body, payload, "REMOVE", tx_id

    if args.op == "request":
        record, request_id = need("record"), need("request-id")
        payload = {"party": author, "record": record, "level": args.level}
        body = {"party": author, "record": record, "level": args.level,
                "requestId": request_id, "timestamp": ts}
        if args.expiry is not None:
            payload["expiry"] = body["expiry"] = args.expiry
        return "POST", "/access-requests", body, payload, "REQUEST", request_id

    request_id = need("request-id")
    payload = {"requestId": request_id}
    tx_id = vote_tx_id(request_id, author)
    if args.op in ("grant", "deny"):
        tag = "AUTH_GRANT" if args.op == "grant" else "AUTH_DENY"
        body = {"requestId": request_id, "keeper": author,
                "verdict": args.op.upper(), "timestamp": ts}
        return "POST", "/authorizations", body, payload, tag, tx_id
    body = {"requestId": request_id, "keeper": author, "timestamp": ts}
    return "POST", "/revocations", body, payload, "AUTH_REVOKE", tx_id


def cmd_submit(args: argparse.Namespace) -> int:
    import requests

    try:
        key = crypto.load_private_pem(Path(args.key).read_bytes())
    except OSError as exc:
        raise CliError(IO_FAILURE, f"cannot read key: {exc}")
    except crypto.CryptoError as exc:
        raise CliError(CONFIG_INVALID, str(exc))
    author = args.author or key.entity_id

    method, path, body, payload, tag, tx_id = _submit_transaction(args, key, author)
    signature = crypto.sign(key, signing_preimage(payload, tag,
                                                  body["timestamp"], tx_id))
    response = requests.request(
        method, args.gateway.rstrip("/") + path, json=body,
        headers={"X-Signature": base64.b64encode(signature).decode()},
        timeout=30)
    print(json.dumps(response.json(), indent=2, sort_keys=True))
    if response.status_code >= 400:
        raise CliError(response.json().get("code", "HTTP_ERROR"),
                       f"gateway answered {response.status_code}")
    return 0


# --- entry ---------------------------------------------------------------------


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
