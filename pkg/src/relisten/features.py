"""Facial-parameter streams: file ingestion, synthesis, batched publication.

A FlameSequence is the offline stand-in for a live expression extractor:
frames are read from a small binary format (or synthesized) and then
published in T_video_s batches, either paced against the monotonic clock
(live) or back to back (fast, for tests). Batch publication at a 1 s
cadence is what gives the pipeline its cold-start delay.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass

import numpy as np

from .clock import now_us
from .envelope import PayloadKind, TimedEnvelope
from .errors import ContractError, FormatError
from .frames import POSE_DIM, SHAPE_DIM, FlameFrame

FLAME_MAGIC = b"FLM1"
FLAME_TOPIC = "flame"
_HEADER = struct.Struct("<4sIIIB")


@dataclass(frozen=True)
class FlameSequence:
    """Uniformly sampled expression frames at a fixed frame rate."""

    frames: tuple[FlameFrame, ...]
    fps: int

    def __post_init__(self):
        if self.fps <= 0:
            raise ContractError(f"fps must be positive, got {self.fps}")
        expr_dims = {f.expr.shape[0] for f in self.frames}
        if len(expr_dims) > 1:
            raise ContractError(f"mixed expression dims in sequence: {sorted(expr_dims)}")
        shapes = {f.shape is not None for f in self.frames}
        if len(shapes) > 1:
            raise ContractError("mixed shape presence in sequence")
        for idx, frame in enumerate(self.frames):
            ideal_us = idx / self.fps * 1e6
            if abs(frame.capture_ts_us - ideal_us) > 1.0:
                raise ContractError(
                    f"frame {idx} timestamp {frame.capture_ts_us} off grid "
                    f"(expected ~{ideal_us:.1f})"
                )

    @property
    def expr_dim(self) -> int:
        return self.frames[0].expr.shape[0] if self.frames else 0

    @property
    def has_shape(self) -> bool:
        return bool(self.frames) and self.frames[0].shape is not None

    @property
    def duration_s(self) -> float:
        return len(self.frames) / self.fps

    def __len__(self) -> int:
        return len(self.frames)


def grid_timestamp_us(index: int, fps: int) -> int:
    return round(index / fps * 1e6)


# ---------------------------------------------------------------------------
# Binary file format


def write_flame(path: str, seq: FlameSequence) -> None:
    """magic FLM1; u32 fps; u32 count; u32 expr_dim; u8 has_shape; frames."""
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                FLAME_MAGIC, seq.fps, len(seq.frames), seq.expr_dim, int(seq.has_shape)
            )
        )
        for frame in seq.frames:
            fh.write(frame.expr.astype("<f4").tobytes())
            fh.write(frame.jaw_aa.astype("<f4").tobytes())
            fh.write(frame.head_aa.astype("<f4").tobytes())
            if seq.has_shape:
                fh.write(frame.shape.astype("<f4").tobytes())


def read_flame(path: str) -> FlameSequence:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, fps, count, expr_dim, has_shape = _HEADER.unpack_from(data, 0)
    if magic != FLAME_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if has_shape not in (0, 1):
        raise FormatError(f"{path}: bad has_shape byte {has_shape}")
    per_frame = expr_dim + POSE_DIM + (SHAPE_DIM if has_shape else 0)
    expected = _HEADER.size + 4 * per_frame * count
    if len(data) != expected:
        raise FormatError(
            f"{path}: size {len(data)} does not match header "
            f"(expected {expected} for {count} frames of dim {per_frame})"
        )
    body = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(count, per_frame)
    frames = []
    for idx in range(count):
        row = body[idx]
        frames.append(
            FlameFrame(
                expr=row[:expr_dim],
                jaw_aa=row[expr_dim : expr_dim + 3],
                head_aa=row[expr_dim + 3 : expr_dim + 6],
                capture_ts_us=grid_timestamp_us(idx, fps),
                shape=row[expr_dim + 6 :] if has_shape else None,
            )
        )
    return FlameSequence(frames=tuple(frames), fps=fps)


# ---------------------------------------------------------------------------
# Synthetic sequences


def _smooth_tracks(
    rng: np.random.Generator, n_dims: int, t_s: np.ndarray, max_total_amp: float
) -> np.ndarray:
    """(len(t), n_dims) sums of 3 low-frequency sinusoids per dimension.

    Per-dimension amplitudes are normalized so their absolute sum stays at
    or below max_total_amp, bounding the track magnitude.
    """
    n_harmonics = 3
    freqs = rng.uniform(0.1, 1.0, size=(n_dims, n_harmonics))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(n_dims, n_harmonics))
    amps = rng.uniform(0.1, 1.0, size=(n_dims, n_harmonics))
    totals = max_total_amp * rng.uniform(0.25, 1.0, size=(n_dims, 1))
    amps *= totals / amps.sum(axis=1, keepdims=True)
    # (T, dims): sum_h a sin(2 pi f t + phi)
    angle = 2.0 * np.pi * freqs[None, :, :] * t_s[:, None, None] + phases[None, :, :]
    return (amps[None, :, :] * np.sin(angle)).sum(axis=2)


def synth_flame(
    duration_s: float, fps: int, seed: int, expr_dim: int = 100
) -> FlameSequence:
    """Deterministic smooth sequence: |expr| <= 2, axis-angle norms <= 0.5."""
    if duration_s <= 0 or fps <= 0:
        raise ContractError("duration and fps must be positive")
    n_frames = round(duration_s * fps)
    rng = np.random.default_rng(seed)
    t_s = np.arange(n_frames) / fps

    expr = _smooth_tracks(rng, expr_dim, t_s, 2.0)
    per_axis = 0.5 / np.sqrt(3.0)  # keeps the 3-vector norm at or below 0.5
    jaw = _smooth_tracks(rng, 3, t_s, per_axis)
    head = _smooth_tracks(rng, 3, t_s, per_axis)

    frames = tuple(
        FlameFrame(
            expr=expr[k],
            jaw_aa=jaw[k],
            head_aa=head[k],
            capture_ts_us=grid_timestamp_us(k, fps),
        )
        for k in range(n_frames)
    )
    return FlameSequence(frames=frames, fps=fps)


# ---------------------------------------------------------------------------
# Wire payload codec (shape vector stays file-side; the wire carries pose)


def encode_flame_batch(frames: list[FlameFrame] | tuple[FlameFrame, ...]) -> bytes:
    """u32 count, u32 expr_dim, then per frame u64 ts + f32 expr+jaw+head."""
    if not frames:
        raise ContractError("cannot encode an empty flame batch")
    expr_dim = frames[0].expr.shape[0]
    out = [struct.pack("<II", len(frames), expr_dim)]
    for f in frames:
        if f.expr.shape[0] != expr_dim:
            raise ContractError("mixed expression dims in batch")
        out.append(struct.pack("<Q", f.capture_ts_us))
        out.append(f.as_vector().astype("<f4").tobytes())
    return b"".join(out)


def decode_flame_batch(payload: bytes) -> list[FlameFrame]:
    try:
        count, expr_dim = struct.unpack_from("<II", payload, 0)
        off = 8
        frames = []
        for _ in range(count):
            (ts,) = struct.unpack_from("<Q", payload, off)
            off += 8
            vec = np.frombuffer(payload, dtype="<f4", count=expr_dim + POSE_DIM, offset=off)
            off += 4 * (expr_dim + POSE_DIM)
            frames.append(FlameFrame.from_vector(vec.copy(), ts))
        if off != len(payload):
            raise FormatError("flame payload length mismatch")
        return frames
    except (struct.error, ValueError) as exc:
        raise FormatError(f"malformed flame payload: {exc}") from exc


# ---------------------------------------------------------------------------
# Batched publication


def iter_batches(seq: FlameSequence, T_video_s: float):
    """Consecutive runs of ceil(fps * T_video_s) frames; the tail may be short."""
    per_batch = int(np.ceil(seq.fps * T_video_s))
    for start in range(0, len(seq.frames), per_batch):
        yield seq.frames[start : start + per_batch]


def publish_batches(
    seq: FlameSequence,
    T_video_s: float,
    pub,
    fast: bool = True,
    topic: str = FLAME_TOPIC,
) -> int:
    """Publish the sequence batch by batch; returns the batch count.

    Live mode sleeps to the T_video_s grid against the monotonic clock, so
    batch b goes out (b+1)*T_video_s after the stream starts, matching a
    capture process that must finish observing a batch before sending it.
    Fast mode publishes immediately.
    """
    if T_video_s <= 0:
        raise ContractError("T_video_s must be positive")
    start_mono = time.monotonic()
    count = 0
    for batch in iter_batches(seq, T_video_s):
        if not fast:
            target = start_mono + (count + 1) * T_video_s
            delay = target - time.monotonic()
            if delay > 0:
                time.sleep(delay)
        pub.publish(
            topic=topic,
            payload_kind=PayloadKind.FLAME,
            payload=encode_flame_batch(batch),
            capture_ts_us=batch[-1].capture_ts_us,
        )
        count += 1
    return count


class ListPublisher:
    """In-process stand-in for a transport publisher (tests, fast mode)."""

    def __init__(self):
        self.envelopes: list[TimedEnvelope] = []
        self._seqs: dict[str, int] = {}

    def publish(self, topic: str, payload_kind: PayloadKind, payload: bytes, capture_ts_us: int):
        seq = self._seqs.get(topic, 0)
        self._seqs[topic] = seq + 1
        env = TimedEnvelope(
            topic=topic,
            seq=seq,
            capture_ts_us=capture_ts_us,
            publish_ts_us=now_us(),
            payload_kind=payload_kind,
            payload=payload,
        )
        self.envelopes.append(env)
        return env
