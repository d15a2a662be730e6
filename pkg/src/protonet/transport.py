"""Message delivery between agents.

:class:`Bus` is a deterministic in-memory carrier: one FIFO per
``(sender, receiver)`` pair, drained round-robin over the pairs in sorted
order. :class:`TcpBus` has the same interface but pushes every envelope
through a localhost TCP connection as a length-prefixed frame
(4-byte big-endian length + UTF-8 JSON) before it is queued, and blocks in
``send`` until the frame has been received, so single-threaded stepping
stays deterministic.
"""

from __future__ import annotations

import json
import logging
import socket
import struct
import threading
from collections import deque
from typing import Optional

from .errors import ProtonetError, UnknownReceiver
from .model import MessageEnvelope

log = logging.getLogger(__name__)

_HEADER = struct.Struct(">I")
MAX_FRAME = 16 * 1024 * 1024


# -- framing -----------------------------------------------------------------

def encode_frame(env: MessageEnvelope) -> bytes:
    body = json.dumps(env.to_dict(), ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    return _HEADER.pack(len(body)) + body


def decode_body(body: bytes) -> MessageEnvelope:
    return MessageEnvelope.from_dict(json.loads(body.decode("utf-8")))


def decode_frame(buf: bytes) -> tuple[Optional[MessageEnvelope], bytes]:
    """Decode one frame from the front of *buf*; ``(None, buf)`` if incomplete."""
    if len(buf) < _HEADER.size:
        return None, buf
    (n,) = _HEADER.unpack_from(buf)
    if n > MAX_FRAME:
        raise ProtonetError(f"frame of {n} bytes exceeds limit")
    end = _HEADER.size + n
    if len(buf) < end:
        return None, buf
    return decode_body(buf[_HEADER.size:end]), buf[end:]


def _recv_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    chunks = []
    while n:
        chunk = sock.recv(n)
        if not chunk:
            return None
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> Optional[MessageEnvelope]:
    """Blocking read of one frame; ``None`` on clean EOF."""
    header = _recv_exact(sock, _HEADER.size)
    if header is None:
        return None
    (n,) = _HEADER.unpack(header)
    if n > MAX_FRAME:
        raise ProtonetError(f"frame of {n} bytes exceeds limit")
    body = _recv_exact(sock, n)
    if body is None:
        raise ProtonetError("connection closed mid-frame")
    return decode_body(body)


def write_frame(sock: socket.socket, env: MessageEnvelope) -> None:
    sock.sendall(encode_frame(env))


# -- in-memory bus -----------------------------------------------------------

class Bus:
    def __init__(self):
        self._agents: set[str] = set()
        self._queues: dict[tuple[str, str], deque[MessageEnvelope]] = {}
        self._last: Optional[tuple[str, str]] = None
        self._lock = threading.Lock()

    def register(self, name: str) -> None:
        with self._lock:
            self._agents.add(name)

    @property
    def agents(self) -> frozenset[str]:
        return frozenset(self._agents)

    def send(self, env: MessageEnvelope) -> None:
        with self._lock:
            if env.receiver not in self._agents:
                raise UnknownReceiver(env.receiver)
            self._queues.setdefault((env.sender, env.receiver), deque()).append(env)

    def pump(self) -> Optional[tuple[str, MessageEnvelope]]:
        with self._lock:
            live = sorted(k for k, q in self._queues.items() if q)
            if not live:
                return None
            pick = next((k for k in live if self._last is None or k > self._last), live[0])
            self._last = pick
            env = self._queues[pick].popleft()
            return env.receiver, env

    def empty(self) -> bool:
        with self._lock:
            return not any(self._queues.values())

    def close(self) -> None:
        pass


# -- TCP ---------------------------------------------------------------------

class TcpBus:
    """Bus whose every envelope crosses a real TCP connection.

    Each registered agent listens on ``host:port`` (port 0 picks a free
    one); one outgoing connection is opened per ``(sender, receiver)``
    pair, and one handler thread per accepted connection decodes frames and
    enqueues them into an inner :class:`Bus`.
    """

    def __init__(self, host: str = "127.0.0.1", timeout: float = 10.0):
        self.host = host
        self.timeout = timeout
        self._inner = Bus()
        self._servers: dict[str, socket.socket] = {}
        self._addresses: dict[str, tuple[str, int]] = {}
        self._clients: dict[tuple[str, str], socket.socket] = {}
        self._sent: dict[tuple[str, str], int] = {}
        self._received: dict[tuple[str, str], int] = {}
        self._cond = threading.Condition()
        self._threads: list[threading.Thread] = []
        self._accepted: list[socket.socket] = []
        self._closed = False

    def register(self, name: str, port: int = 0) -> None:
        srv = socket.create_server((self.host, port))
        self._servers[name] = srv
        self._addresses[name] = srv.getsockname()[:2]
        self._inner.register(name)
        th = threading.Thread(target=self._accept_loop, args=(srv,), daemon=True, name=f"accept-{name}")
        th.start()
        self._threads.append(th)

    def address(self, name: str) -> tuple[str, int]:
        return self._addresses[name]

    @property
    def agents(self) -> frozenset[str]:
        return self._inner.agents

    def _accept_loop(self, srv: socket.socket) -> None:
        while not self._closed:
            try:
                conn, _ = srv.accept()
            except OSError:
                return
            self._accepted.append(conn)
            th = threading.Thread(target=self._handle, args=(conn,), daemon=True)
            th.start()
            self._threads.append(th)

    def _handle(self, conn: socket.socket) -> None:
        while True:
            try:
                env = read_frame(conn)
            except (OSError, ProtonetError) as e:
                if not self._closed:
                    log.warning("tcp handler: %s", e)
                return
            if env is None:
                return
            with self._cond:
                self._inner.send(env)
                key = (env.sender, env.receiver)
                self._received[key] = self._received.get(key, 0) + 1
                self._cond.notify_all()

    def send(self, env: MessageEnvelope) -> None:
        if env.receiver not in self._addresses:
            raise UnknownReceiver(env.receiver)
        key = (env.sender, env.receiver)
        sock = self._clients.get(key)
        if sock is None:
            sock = socket.create_connection(self._addresses[env.receiver], timeout=self.timeout)
            self._clients[key] = sock
        with self._cond:
            self._sent[key] = self._sent.get(key, 0) + 1
            want = self._sent[key]
        write_frame(sock, env)
        with self._cond:
            if not self._cond.wait_for(lambda: self._received.get(key, 0) >= want, self.timeout):
                raise ProtonetError(f"tcp delivery {key} timed out")

    def pump(self) -> Optional[tuple[str, MessageEnvelope]]:
        return self._inner.pump()

    def empty(self) -> bool:
        return self._inner.empty()

    def close(self) -> None:
        self._closed = True
        for s in list(self._clients.values()) + list(self._servers.values()) + self._accepted:
            try:
                s.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            s.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
