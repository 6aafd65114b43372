"""Runtime configuration for the command-line tools.

Values come from three layers, strongest last:

1. the node config file (JSON),
2. ``LEDGERGATE_*`` environment variables,
3. command-line flags.

The node config file describes one node::

    {
      "nodeId": "node1",
      "genesis": "genesis.json",
      "key": "node1.pem",
      "dataDir": "data/node1",
      "gatewayListen": "127.0.0.1:8460",
      "wireListen": "127.0.0.1:9460",
      "peers": {"node2": "127.0.0.1:9461"},
      "mineInterval": 0.5,
      "inlineMine": false
    }

Relative paths are resolved against the config file's own directory, so a
deployment directory can be moved wholesale. The genesis file is the JSON
form of :class:`~ledgergate.ledger.GenesisConfig` and must be byte-identical
in meaning across the consortium — it IS the network identity.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from .ledger import GenesisConfig

ENV_PREFIX = "LEDGERGATE_"

SCENARIO_INVALID = "SCENARIO_INVALID"
CONFIG_INVALID = "CONFIG_INVALID"
IO_FAILURE = "IO_FAILURE"
BIND_FAILURE = "BIND_FAILURE"


class CliError(Exception):
    """Failure with a stable, named error code; the process exits nonzero."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class CliConfig:
    """One parsed invocation: the subcommand plus every override the user
    supplied by flag or environment (None = not supplied)."""

    subcommand: str
    config_path: Optional[str] = None
    difficulty: Optional[int] = None
    listen: Optional[str] = None
    peers: list = field(default_factory=list)  # "id=host:port" strings
    data_dir: Optional[str] = None
    seed: Optional[int] = None


@dataclass
class NodeConfig:
    node_id: str
    genesis_path: Path
    key_path: Optional[Path]
    data_dir: Optional[Path]
    gateway_listen: tuple
    wire_listen: tuple
    peers: dict  # peer id -> (host, port)
    mine_interval: Optional[float]
    inline_mine: bool


def env_value(name: str, environ: Optional[Mapping] = None) -> Optional[str]:
    environ = os.environ if environ is None else environ
    return environ.get(ENV_PREFIX + name.upper())


def parse_listen(value: str) -> tuple:
    host, sep, port = value.rpartition(":")
    if not sep or not host:
        raise CliError(CONFIG_INVALID, f"listen address needs host:port, got {value!r}")
    try:
        return host, int(port)
    except ValueError:
        raise CliError(CONFIG_INVALID, f"bad port in {value!r}")


def parse_peer(value: str) -> tuple:
    """One --peer flag: ``id=host:port``."""
    peer_id, sep, address = value.partition("=")
    if not sep or not peer_id:
        raise CliError(CONFIG_INVALID, f"peer needs id=host:port, got {value!r}")
    return peer_id, parse_listen(address)


def load_genesis(path: Path, difficulty_override: Optional[int] = None) -> GenesisConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CliError(IO_FAILURE, f"cannot read genesis file: {exc}")
    except json.JSONDecodeError as exc:
        raise CliError(CONFIG_INVALID, f"genesis file is not valid JSON: {exc}")
    if difficulty_override is not None:
        raw["difficulty"] = difficulty_override
    try:
        return GenesisConfig.from_dict(raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(CONFIG_INVALID, f"bad genesis config: {exc}")


def load_node_config(cli: CliConfig, environ: Optional[Mapping] = None) -> NodeConfig:
    """Merge config file < environment < flags into one NodeConfig."""
    path = cli.config_path or env_value("config", environ)
    if not path:
        raise CliError(CONFIG_INVALID, "a config file is required (--config)")
    base = Path(path).resolve().parent
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CliError(IO_FAILURE, f"cannot read config file: {exc}")
    except json.JSONDecodeError as exc:
        raise CliError(CONFIG_INVALID, f"config file is not valid JSON: {exc}")

    def resolve(p) -> Optional[Path]:
        return None if p is None else (base / p)

    for required in ("nodeId", "genesis"):
        if required not in raw:
            raise CliError(CONFIG_INVALID, f"config file lacks {required!r}")

    listen = cli.listen or env_value("listen", environ) or raw.get(
        "gatewayListen", "127.0.0.1:8460")

    # paths given on the command line or environment are relative to the
    # caller's directory; paths from the file are relative to the file
    override_dir = cli.data_dir or env_value("data_dir", environ)
    data_dir = Path(override_dir) if override_dir else resolve(raw.get("dataDir"))

    peers = {pid: parse_listen(addr) for pid, addr in raw.get("peers", {}).items()}
    env_peers = env_value("peer", environ)
    if env_peers:
        peers.update(dict(parse_peer(p) for p in env_peers.split(",")))
    peers.update(dict(parse_peer(p) for p in cli.peers))

    return NodeConfig(
        node_id=raw["nodeId"],
        genesis_path=resolve(raw["genesis"]),
        key_path=resolve(raw.get("key")),
        data_dir=data_dir,
        gateway_listen=parse_listen(listen),
        wire_listen=parse_listen(raw.get("wireListen", "127.0.0.1:9460")),
        peers=peers,
        mine_interval=raw.get("mineInterval", 0.5),
        inline_mine=bool(raw.get("inlineMine", False)),
    )


def resolved_difficulty(cli: CliConfig, environ: Optional[Mapping] = None) -> Optional[int]:
    if cli.difficulty is not None:
        return cli.difficulty
    env = env_value("difficulty", environ)
    return int(env) if env is not None else None


def resolved_seed(cli: CliConfig, environ: Optional[Mapping] = None) -> Optional[int]:
    if cli.seed is not None:
        return cli.seed
    env = env_value("seed", environ)
    return int(env) if env is not None else None
