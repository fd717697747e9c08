"""Local TCP publisher/subscriber bus carrying TimedEnvelopes.

One Publisher binds one listening socket per topic; subscribers connect
directly (no broker) and receive every envelope published after they
connect. Framing is a little-endian u32 length prefix followed by the
envelope encoding. Subscriber inboxes are bounded rings: when full, the
oldest envelope is dropped and counted, because a live pipeline prefers
fresh data over complete data.

A slow client that stops reading gets disconnected once the socket send
times out; that client's loss is never allowed to stall the publisher.
"""

from __future__ import annotations

import socket
import struct
import threading
import time
from collections import deque

from .clock import now_us
from .envelope import PayloadKind, TimedEnvelope, decode_envelope
from .errors import ContractError, TransportError

_LEN = struct.Struct("<I")
_SEND_TIMEOUT_S = 0.5
DEFAULT_INBOX_CAPACITY = 256

_live_publishers: dict[str, "Publisher"] = {}
_registry_lock = threading.Lock()


def _read_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        try:
            chunk = sock.recv(n - len(buf))
        except OSError:
            return None
        if not chunk:
            return None
        buf.extend(chunk)
    return bytes(buf)


class Publisher:
    """Per-topic fan-out sender; seq starts at 0 and only grows."""

    def __init__(self, topic: str, addr: str = "127.0.0.1:0"):
        with _registry_lock:
            if topic in _live_publishers:
                raise TransportError(f"topic {topic!r} already has a publisher")
            _live_publishers[topic] = self
        self.topic = topic
        self._seq = 0
        self._clients: list[socket.socket] = []
        self._lock = threading.Lock()
        self._closed = False
        host, _, port = addr.partition(":")
        try:
            self._listener = socket.create_server((host, int(port)))
        except OSError as exc:
            with _registry_lock:
                _live_publishers.pop(topic, None)
            raise TransportError(f"cannot bind {addr} for topic {topic!r}: {exc}") from exc
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name=f"pub-{topic}-accept", daemon=True
        )
        self._accept_thread.start()

    @property
    def addr(self) -> str:
        host, port = self._listener.getsockname()[:2]
        return f"{host}:{port}"

    def _accept_loop(self):
        while not self._closed:
            try:
                client, _ = self._listener.accept()
            except OSError:
                return
            client.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            client.settimeout(_SEND_TIMEOUT_S)
            with self._lock:
                self._clients.append(client)

    def subscriber_count(self) -> int:
        with self._lock:
            return len(self._clients)

    def publish(
        self,
        payload_kind: PayloadKind,
        payload: bytes,
        capture_ts_us: int,
        topic: str | None = None,
    ) -> int:
        if self._closed:
            raise TransportError(f"publisher for {self.topic!r} is closed")
        if topic is not None and topic != self.topic:
            raise ContractError(
                f"publisher is bound to topic {self.topic!r}, cannot send {topic!r}"
            )
        env = TimedEnvelope(
            topic=self.topic,
            seq=self._seq,
            capture_ts_us=capture_ts_us,
            publish_ts_us=now_us(),
            payload_kind=payload_kind,
            payload=payload,
        )
        data = env.encode()
        frame = _LEN.pack(len(data)) + data
        with self._lock:
            dead = []
            for client in self._clients:
                try:
                    client.sendall(frame)
                except OSError:
                    dead.append(client)
            for client in dead:
                self._clients.remove(client)
                client.close()
        seq = self._seq
        self._seq += 1
        return seq

    def close(self):
        self._closed = True
        with _registry_lock:
            if _live_publishers.get(self.topic) is self:
                del _live_publishers[self.topic]
        try:
            self._listener.close()
        except OSError:
            pass
        with self._lock:
            for client in self._clients:
                client.close()
            self._clients.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class Subscriber:
    """Bounded inbox fed by one receive thread per subscribed topic."""

    def __init__(self, topic_addrs: dict[str, str], capacity: int = DEFAULT_INBOX_CAPACITY):
        if capacity <= 0:
            raise TransportError(f"inbox capacity must be positive, got {capacity}")
        self.topics = frozenset(topic_addrs)
        self.capacity = capacity
        self.drops = 0
        self.decode_errors = 0
        self.cross_talk = 0
        self._inbox: deque[tuple[TimedEnvelope, int]] = deque()
        self._cond = threading.Condition()
        self._closed = False
        self._socks: list[socket.socket] = []
        self._threads: list[threading.Thread] = []
        for topic, addr in topic_addrs.items():
            host, _, port = addr.partition(":")
            try:
                sock = socket.create_connection((host, int(port)), timeout=5.0)
            except OSError as exc:
                self.close()
                raise TransportError(f"cannot connect to {addr} for {topic!r}: {exc}") from exc
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            sock.settimeout(None)
            self._socks.append(sock)
            t = threading.Thread(
                target=self._recv_loop, args=(sock,), name=f"sub-{topic}", daemon=True
            )
            self._threads.append(t)
            t.start()

    def _recv_loop(self, sock: socket.socket):
        while not self._closed:
            head = _read_exact(sock, _LEN.size)
            if head is None:
                return
            (length,) = _LEN.unpack(head)
            body = _read_exact(sock, length)
            if body is None:
                return
            try:
                env = decode_envelope(body)
            except Exception:
                with self._cond:
                    self.decode_errors += 1
                return
            recv_ts = now_us()
            with self._cond:
                if env.topic not in self.topics:
                    self.cross_talk += 1
                    continue
                if len(self._inbox) >= self.capacity:
                    self._inbox.popleft()
                    self.drops += 1
                self._inbox.append((env, recv_ts))
                self._cond.notify()

    def next(self, timeout_ms: float = 100.0) -> TimedEnvelope | None:
        """Oldest buffered envelope, or None once timeout_ms elapses."""
        got = self.next_with_recv_ts(timeout_ms)
        return got[0] if got else None

    def next_with_recv_ts(self, timeout_ms: float = 100.0) -> tuple[TimedEnvelope, int] | None:
        deadline = time.monotonic() + timeout_ms / 1000.0
        with self._cond:
            while not self._inbox:
                remaining = deadline - time.monotonic()
                if remaining <= 0 or self._closed:
                    return None
                self._cond.wait(remaining)
            return self._inbox.popleft()

    def pending(self) -> int:
        with self._cond:
            return len(self._inbox)

    def close(self):
        self._closed = True
        for sock in self._socks:
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()
        with self._cond:
            self._cond.notify_all()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def publisher_config_key(topic: str) -> str:
    return f"pub.{topic}.addr"
