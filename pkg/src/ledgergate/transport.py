"""TCP transport: length-prefixed JSON frames around the node protocol.

Every frame on the wire is a 4-byte big-endian length followed by exactly
that many bytes of UTF-8 JSON. The JSON is an envelope ``{"from": node_id,
"payload": <protocol message>}`` so the receiving side knows which logical
peer is talking regardless of which side dialed.

:class:`NodeService` serializes all access to a :class:`~ledgergate.network.Node`
behind one lock and turns the node's outboxes into socket writes. An
optional miner thread searches for blocks *outside* the lock (selection and
append each take it briefly), aborting the search whenever the tip moves so
a block arriving from a peer is never wasted work.
"""
from __future__ import annotations

import json
import socket
import struct
import threading
import time
from typing import Mapping, Optional

from .ledger import BlockData, MiningAborted, mine_block
from .model import Transaction
from .network import Node
from .snapshot import InadmissibleTransaction

MAX_FRAME = 16 * 1024 * 1024

_LEN = struct.Struct(">I")


def encode_frame(message: Mapping) -> bytes:
    body = json.dumps(message, separators=(",", ":")).encode("utf-8")
    if len(body) > MAX_FRAME:
        raise ValueError(f"frame too large: {len(body)} bytes")
    return _LEN.pack(len(body)) + body


def recv_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def read_frame(sock: socket.socket) -> Optional[dict]:
    """One decoded frame, or None on a clean or torn EOF."""
    header = recv_exact(sock, _LEN.size)
    if header is None:
        return None
    (length,) = _LEN.unpack(header)
    if length > MAX_FRAME:
        return None
    body = recv_exact(sock, length)
    if body is None:
        return None
    return json.loads(body.decode("utf-8"))


class NodeService:
    """A node bound to real sockets.

    Usage::

        svc = NodeService(node, host="127.0.0.1", port=0)
        svc.start()                       # listener + optional miner
        svc.dial("node2", ("127.0.0.1", 9402))
        ...
        svc.stop()
    """

    def __init__(self, node: Node, host: str = "127.0.0.1", port: int = 0,
                 mine_interval: Optional[float] = None):
        self.node = node
        self.lock = threading.RLock()
        self.mine_interval = mine_interval
        self._sockets: dict[str, socket.socket] = {}
        self._send_lock = threading.Lock()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._listener = socket.create_server((host, port))
        self._listener.settimeout(0.2)

    @property
    def address(self) -> tuple:
        return self._listener.getsockname()

    # --- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        self._spawn(self._accept_loop)
        if self.mine_interval is not None:
            self._spawn(self._mine_loop)

    def stop(self) -> None:
        self._stop.set()
        self._listener.close()
        with self._send_lock:
            for sock in self._sockets.values():
                try:
                    sock.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
                sock.close()
            self._sockets.clear()
        for t in self._threads:
            t.join(timeout=2.0)

    def _spawn(self, target, *args) -> None:
        t = threading.Thread(target=target, args=args, daemon=True)
        t.start()
        self._threads.append(t)

    # --- wiring ------------------------------------------------------------

    def dial(self, peer_id: str, address: tuple) -> None:
        sock = socket.create_connection(address, timeout=5.0)
        self._register(peer_id, sock)
        with self.lock:
            outbox = self.node.connect(peer_id)
        self._dispatch(outbox)

    def _register(self, peer_id: str, sock: socket.socket) -> None:
        with self._send_lock:
            old = self._sockets.get(peer_id)
            self._sockets[peer_id] = sock
        if old is not None:
            old.close()
        self._spawn(self._read_loop, peer_id, sock)

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                sock, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            # the dialer introduces itself in its first frame
            envelope = read_frame(sock)
            if not isinstance(envelope, dict) or "from" not in envelope:
                sock.close()
                continue
            peer_id = envelope["from"]
            self._register(peer_id, sock)
            with self.lock:
                self.node.connect(peer_id)
                outbox = self.node.handle(envelope.get("payload", {}), peer_id)
            self._dispatch(outbox)

    def _read_loop(self, peer_id: str, sock: socket.socket) -> None:
        while not self._stop.is_set():
            try:
                envelope = read_frame(sock)
            except (OSError, ValueError, json.JSONDecodeError):
                return
            if envelope is None:
                return
            if not isinstance(envelope, dict):
                continue
            with self.lock:
                outbox = self.node.handle(envelope.get("payload", {}),
                                          envelope.get("from", peer_id))
            self._dispatch(outbox)

    def _dispatch(self, outbox) -> None:
        for peer_id, message in outbox:
            frame = encode_frame({"from": self.node.node_id, "payload": message})
            with self._send_lock:
                sock = self._sockets.get(peer_id)
                if sock is None:
                    continue
                try:
                    sock.sendall(frame)
                except OSError:
                    self._sockets.pop(peer_id, None)

    # --- local API -----------------------------------------------------------

    def submit(self, tx: Transaction) -> tuple:
        with self.lock:
            accepted, reason, outbox = self.node.submit(tx)
        self._dispatch(outbox)
        return accepted, reason

    def mine_once(self, timestamp: Optional[int] = None):
        """One mining pass: select under the lock, search outside it, append
        only if the tip has not moved meanwhile."""
        with self.lock:
            picked = self.node.select_pending()
            if not picked or self.node.key is None:
                return None
            prev = self.node.tip
            registry = dict(self.node.tip_snapshot.entities)
        ts = int(time.time() * 1000) if timestamp is None else timestamp

        def tip_moved() -> bool:
            return self._stop.is_set() or self.node.tip.hash != prev.hash

        try:
            block = mine_block(prev=prev,
                               data=BlockData.for_transactions(picked),
                               key=self.node.key, config=self.node.config,
                               timestamp=ts, registry=registry,
                               abort=tip_moved)
        except (MiningAborted, InadmissibleTransaction):
            return None
        with self.lock:
            if self.node.tip.hash != prev.hash:
                return None  # a peer got there first
            outbox = self.node.on_tip(block, self.node.node_id)
        self._dispatch(outbox)
        return block

    def _mine_loop(self) -> None:
        while not self._stop.wait(self.mine_interval):
            try:
                self.mine_once()
            except OSError:
                pass
