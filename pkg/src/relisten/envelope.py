"""Topic-tagged message envelope and its binary wire layout.

Every inter-stage message travels as a TimedEnvelope. The wire layout is
little-endian:

    u16  topic length, then UTF-8 topic bytes
    u64  seq                 (per-publisher, per-topic counter)
    u64  capture_ts_us       (when the underlying signal was captured)
    u64  publish_ts_us       (when the envelope was handed to the bus)
    u8   payload_kind
    u32  payload length, then payload bytes

Payloads are opaque here; each stage owns its payload codec.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

from .errors import FormatError, TransportError

MAX_PAYLOAD_BYTES = 16 * 1024 * 1024

_HEAD = struct.Struct("<H")
_FIXED = struct.Struct("<QQQBI")


class PayloadKind(IntEnum):
    FLAME = 0
    MEL = 1
    ARKIT = 2
    VAD = 3
    METRICS = 4


@dataclass(frozen=True)
class TimedEnvelope:
    """Immutable, sequence-numbered, timestamped payload wrapper."""

    topic: str
    seq: int
    capture_ts_us: int
    publish_ts_us: int
    payload_kind: PayloadKind
    payload: bytes

    def encode(self) -> bytes:
        topic_b = self.topic.encode("utf-8")
        if len(topic_b) > 0xFFFF:
            raise TransportError(f"topic too long: {len(topic_b)} bytes")
        if len(self.payload) > MAX_PAYLOAD_BYTES:
            raise TransportError(
                f"payload of {len(self.payload)} bytes exceeds "
                f"{MAX_PAYLOAD_BYTES} limit"
            )
        return b"".join(
            (
                _HEAD.pack(len(topic_b)),
                topic_b,
                _FIXED.pack(
                    self.seq,
                    self.capture_ts_us,
                    self.publish_ts_us,
                    int(self.payload_kind),
                    len(self.payload),
                ),
                self.payload,
            )
        )


def decode_envelope(buf: bytes) -> TimedEnvelope:
    """Parse one envelope from ``buf``; the buffer must be exactly one envelope."""
    try:
        (topic_len,) = _HEAD.unpack_from(buf, 0)
        off = _HEAD.size
        topic = buf[off : off + topic_len].decode("utf-8")
        off += topic_len
        seq, cap, pub, kind, plen = _FIXED.unpack_from(buf, off)
        off += _FIXED.size
        payload = bytes(buf[off : off + plen])
        if len(payload) != plen or off + plen != len(buf):
            raise FormatError("envelope length does not match header")
        return TimedEnvelope(topic, seq, cap, pub, PayloadKind(kind), payload)
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise FormatError(f"malformed envelope: {exc}") from exc
