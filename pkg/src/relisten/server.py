"""WebSocket frame streaming: pace ArkitFrames and fan them out as JSON.

One pacing thread pulls frames from a queue on an absolute monotonic
schedule (period = 1/fps); ticks that slipped are skipped, never sent in
a burst, and backlog beyond one frame is discarded as late. Each client
gets its own bounded outbound queue (drop-oldest) and its own sender
thread, so a stalled or dead client cannot hold anyone else back.

Handshake: the client opens with {"hello": "relisten", "version": 1} and
the server answers with a config summary before frames start flowing.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from dataclasses import dataclass, field

from websockets.sync.server import serve as ws_serve

from .arkit import ARKIT_BLENDSHAPE_NAMES
from .errors import ContractError, TransportError
from .frames import ArkitFrame

HELLO_NAME = "relisten"
PROTOCOL_VERSION = 1
CLIENT_QUEUE_CAPACITY = 128
_PONG_TIMEOUT_S = 1.0


def _round6(x: float) -> float:
    return round(float(x), 6)


def encode_frame(f: ArkitFrame) -> str:
    """Canonical JSON: seq, t_ms, blendshapes (name order), jaw, head."""
    doc = {
        "seq": int(f.seq),
        "t_ms": int(f.t_ms),
        "blendshapes": {
            name: _round6(f.weights[i]) for i, name in enumerate(ARKIT_BLENDSHAPE_NAMES)
        },
        "jaw": {"x": _round6(f.jaw_euler[0]), "y": _round6(f.jaw_euler[1]), "z": _round6(f.jaw_euler[2])},
        "head": {"x": _round6(f.head_euler[0]), "y": _round6(f.head_euler[1]), "z": _round6(f.head_euler[2])},
    }
    return json.dumps(doc, separators=(",", ":"))


def decode_frame(text: str) -> ArkitFrame:
    """Inverse of encode_frame (testing and client-side tooling)."""
    doc = json.loads(text)
    try:
        weights = [doc["blendshapes"][name] for name in ARKIT_BLENDSHAPE_NAMES]
        jaw = [doc["jaw"][k] for k in ("x", "y", "z")]
        head = [doc["head"][k] for k in ("x", "y", "z")]
        return ArkitFrame(
            weights=weights, jaw_euler=jaw, head_euler=head,
            seq=int(doc["seq"]), t_ms=int(doc["t_ms"]),
        )
    except KeyError as exc:
        raise ContractError(f"frame JSON missing key: {exc}") from exc


@dataclass
class ClientSession:
    """Per-connection outbound state; enqueued = sent + dropped + pending.

    Frames leave the queue only after the client answered a protocol ping,
    so a connection that nobody is reading keeps a full queue (shedding
    oldest) instead of silently parking frames in kernel buffers.
    """

    conn_id: int
    capacity: int = CLIENT_QUEUE_CAPACITY
    enqueued: int = 0
    frames_sent: int = 0
    frames_dropped: int = 0
    _buf: list = field(default_factory=list)
    _cond: threading.Condition = field(default_factory=threading.Condition)
    _closed: bool = False

    def offer(self, text: str) -> None:
        with self._cond:
            if self._closed:
                return
            self.enqueued += 1
            if len(self._buf) >= self.capacity:
                self._buf.pop(0)
                self.frames_dropped += 1
            self._buf.append(text)
            self._cond.notify()

    def wait_ready(self, timeout_s: float = 0.25) -> bool:
        deadline = time.monotonic() + timeout_s
        with self._cond:
            while not self._buf:
                remaining = deadline - time.monotonic()
                if remaining <= 0 or self._closed:
                    return False
                self._cond.wait(remaining)
            return True

    def take_nowait(self) -> str | None:
        with self._cond:
            return self._buf.pop(0) if self._buf else None

    def mark_sent(self) -> None:
        with self._cond:
            self.frames_sent += 1

    def pending(self) -> int:
        with self._cond:
            return len(self._buf)

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()


class FrameServer:
    """Owns the socket, the pacing thread, and all client sessions."""

    def __init__(self, addr: str, fps: int, config_summary: dict | None = None):
        if fps <= 0:
            raise ContractError(f"fps must be positive, got {fps}")
        self.fps = fps
        self.period_s = 1.0 / fps
        self.config_summary = dict(config_summary or {})
        self.frames_in = 0
        self.frames_late = 0
        self._source: queue.Queue[ArkitFrame | None] = queue.Queue()
        self._sessions: dict[int, ClientSession] = {}
        self._sessions_lock = threading.Lock()
        self._next_conn_id = 0
        self._stop = threading.Event()
        host, _, port = addr.partition(":")
        try:
            self._server = ws_serve(self._handle_client, host, int(port))
        except OSError as exc:
            raise TransportError(f"cannot bind websocket server on {addr}: {exc}") from exc
        self._serve_thread = threading.Thread(
            target=self._server.serve_forever, name="ws-serve", daemon=True
        )
        self._pacing_thread = threading.Thread(
            target=self._pacing_loop, name="ws-pacing", daemon=True
        )

    @property
    def addr(self) -> str:
        host, port = self._server.socket.getsockname()[:2]
        return f"{host}:{port}"

    def start(self) -> "FrameServer":
        self._serve_thread.start()
        self._pacing_thread.start()
        return self

    def submit(self, frame: ArkitFrame) -> None:
        """Hand one frame to the pacing thread (callable from any thread)."""
        self._source.put(frame)

    def session_stats(self) -> list[dict]:
        with self._sessions_lock:
            sessions = list(self._sessions.values())
        return [
            {
                "conn_id": s.conn_id,
                "enqueued": s.enqueued,
                "sent": s.frames_sent,
                "dropped": s.frames_dropped,
                "pending": s.pending(),
            }
            for s in sessions
        ]

    def client_count(self) -> int:
        with self._sessions_lock:
            return len(self._sessions)

    # -- pacing ------------------------------------------------------------

    def _pacing_loop(self) -> None:
        next_t = None
        while not self._stop.is_set():
            try:
                frame = self._source.get(timeout=0.05)
            except queue.Empty:
                continue
            now = time.monotonic()
            if next_t is None:
                next_t = now
            if now < next_t:
                time.sleep(next_t - now)
            else:
                slipped = now - next_t
                if slipped > self.period_s:
                    # schedule slipped: skip the missed ticks and retire the
                    # stalest frames instead of bursting them out
                    missed = int(slipped / self.period_s)
                    next_t += missed * self.period_s
                    for _ in range(missed):
                        try:
                            frame = self._source.get_nowait()
                            self.frames_late += 1
                        except queue.Empty:
                            break
            next_t += self.period_s
            self.frames_in += 1
            text = encode_frame(frame)
            with self._sessions_lock:
                sessions = list(self._sessions.values())
            for session in sessions:
                session.offer(text)

    # -- client handling ---------------------------------------------------

    def _handle_client(self, ws) -> None:
        try:
            raw = ws.recv(timeout=5.0)
            hello = json.loads(raw)
            if hello.get("hello") != HELLO_NAME:
                ws.send(json.dumps({"error": "bad handshake"}))
                return
            ws.send(
                json.dumps(
                    {
                        "hello": HELLO_NAME,
                        "version": PROTOCOL_VERSION,
                        "fps": self.fps,
                        **self.config_summary,
                    }
                )
            )
        except Exception:
            return

        with self._sessions_lock:
            session = ClientSession(conn_id=self._next_conn_id)
            self._next_conn_id += 1
            self._sessions[session.conn_id] = session
        try:
            while not self._stop.is_set():
                if not session.wait_ready(timeout_s=0.25):
                    continue
                # flow control: a frame leaves the queue only for a client
                # whose read loop is alive enough to answer a ping
                if not ws.ping().wait(_PONG_TIMEOUT_S):
                    continue
                text = session.take_nowait()
                if text is None:
                    continue
                ws.send(text)
                session.mark_sent()
        except Exception:
            pass  # this client is gone; others keep streaming
        finally:
            session.close()
            with self._sessions_lock:
                self._sessions.pop(session.conn_id, None)

    def close(self) -> None:
        self._stop.set()
        with self._sessions_lock:
            for session in self._sessions.values():
                session.close()
        self._server.shutdown()
        if self._serve_thread.is_alive():
            self._serve_thread.join(timeout=2.0)
        if self._pacing_thread.is_alive():
            self._pacing_thread.join(timeout=2.0)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.close()


def serve(addr: str, frame_source, fps: int, config_summary: dict | None = None) -> FrameServer:
    """Start a server fed from an iterable of ArkitFrames; returns it.

    The feeder thread forwards the iterable into the pacing queue as fast
    as the iterable yields; pacing happens server-side.
    """
    server = FrameServer(addr, fps, config_summary).start()

    def feed():
        for frame in frame_source:
            if server._stop.is_set():
                return
            server.submit(frame)

    threading.Thread(target=feed, name="ws-feed", daemon=True).start()
    return server
