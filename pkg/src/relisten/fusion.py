"""Sliding-window fusion of the speaker's two feature streams.

Three bounded queues (speaker FLAME, speaker mel, listener history) feed a
window assembler. Assembly never blocks: during cold start the missing
leading frames are zero-padded, and the mel block is aligned to the FLAME
block by nearest capture timestamp, re-using mel frames across windows as
needed. Queues are safe for two producer threads plus one consumer.

Padding rows carry timestamp -1 so callers can count them.
"""

from __future__ import annotations

import bisect
import threading
from dataclasses import dataclass

import numpy as np

from .audio import decode_mel_batch
from .config import PipelineConfig
from .envelope import PayloadKind, TimedEnvelope
from .errors import ContractError
from .features import decode_flame_batch

PAD_TS = -1


class ModalityQueue:
    """Bounded timestamp-ordered buffer with drop-oldest overflow.

    Counters satisfy: ingested = buffered + dropped + rejected. A frame
    older than the tail by more than one frame period is stale and
    rejected; anything newer is placed in timestamp order.
    """

    def __init__(
        self, capacity: int, period_us: float, name: str = "", dim: int | None = None
    ):
        if capacity <= 0:
            raise ContractError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.period_us = float(period_us)
        self.name = name
        self.dim = dim
        self._lock = threading.Lock()
        self._ts: list[int] = []
        self._vectors: list[np.ndarray] = []
        self.ingested = 0
        self.dropped = 0
        self.rejected = 0

    def push(self, ts_us: int, vector: np.ndarray) -> bool:
        vector = np.asarray(vector, dtype=np.float32)
        if self.dim is not None and vector.shape != (self.dim,):
            raise ContractError(
                f"queue {self.name!r} expects vectors of dim {self.dim}, "
                f"got shape {vector.shape}"
            )
        with self._lock:
            self.ingested += 1
            if self._ts and ts_us < self._ts[-1] - self.period_us:
                self.rejected += 1
                return False
            pos = bisect.bisect_right(self._ts, ts_us)
            self._ts.insert(pos, ts_us)
            self._vectors.insert(pos, vector)
            while len(self._ts) > self.capacity:
                self._ts.pop(0)
                self._vectors.pop(0)
                self.dropped += 1
            return True

    def __len__(self) -> int:
        with self._lock:
            return len(self._ts)

    def newest_ts(self) -> int | None:
        with self._lock:
            return self._ts[-1] if self._ts else None

    def snapshot(self) -> tuple[list[int], list[np.ndarray]]:
        with self._lock:
            return list(self._ts), list(self._vectors)

    def clear(self) -> None:
        with self._lock:
            self._ts.clear()
            self._vectors.clear()


def make_queues(cfg: PipelineConfig) -> tuple[ModalityQueue, ModalityQueue, ModalityQueue]:
    """(flame, mel, history) queues at T_window / 4*T_window / t_history."""
    flame_period = 1e6 / cfg.F_fps
    mel_period = 1e6 / cfg.M_fps
    return (
        ModalityQueue(cfg.T_window, flame_period, "flame", dim=cfg.frame_dim),
        ModalityQueue(4 * cfg.T_window, mel_period, "mel", dim=cfg.l),
        ModalityQueue(cfg.t_history, flame_period, "history", dim=cfg.frame_dim),
    )


def ingest(queue: ModalityQueue, envelope: TimedEnvelope) -> int:
    """Decode a modality envelope into its queue; returns frames accepted."""
    if envelope.payload_kind is PayloadKind.FLAME:
        frames = decode_flame_batch(envelope.payload)
        items = [(f.capture_ts_us, f.as_vector()) for f in frames]
    elif envelope.payload_kind is PayloadKind.MEL:
        batch = decode_mel_batch(envelope.payload)
        items = [(f.capture_ts_us, f.coeffs) for f in batch.frames]
    else:
        raise ContractError(
            f"queue {queue.name!r} cannot ingest payload kind {envelope.payload_kind}"
        )
    accepted = 0
    for ts, vec in items:
        if queue.push(ts, vec):
            accepted += 1
    return accepted


@dataclass(frozen=True)
class FusionWindow:
    """Model-ready blocks; rows are frame vectors, padding rows are zero."""

    speaker_flame: np.ndarray  # (T_window, expr_dim + 6) float32
    speaker_mel: np.ndarray  # (4 * T_window, l) float32
    listener_past: np.ndarray  # (t_history, expr_dim + 6) float32
    flame_ts_us: np.ndarray  # (T_window,) int64, PAD_TS on padding rows
    mel_ts_us: np.ndarray  # (4 * T_window,) int64
    window_end_ts_us: int

    @property
    def flame_pad_count(self) -> int:
        return int((self.flame_ts_us == PAD_TS).sum())

    @property
    def mel_pad_count(self) -> int:
        return int((self.mel_ts_us == PAD_TS).sum())

    @property
    def flame_end_ts_us(self) -> int:
        real = self.flame_ts_us[self.flame_ts_us != PAD_TS]
        return int(real[-1]) if real.size else PAD_TS

    @property
    def mel_end_ts_us(self) -> int:
        real = self.mel_ts_us[self.mel_ts_us != PAD_TS]
        return int(real[-1]) if real.size else PAD_TS


def _right_aligned(
    ts: list[int], vectors: list[np.ndarray], rows: int, dim: int, end_index: int
) -> tuple[np.ndarray, np.ndarray]:
    """Block of `rows` vectors ending at end_index, front zero-padded."""
    block = np.zeros((rows, dim), dtype=np.float32)
    block_ts = np.full(rows, PAD_TS, dtype=np.int64)
    start = max(0, end_index + 1 - rows)
    take = ts[start : end_index + 1]
    if take:
        block[rows - len(take) :] = np.stack(vectors[start : end_index + 1])
        block_ts[rows - len(take) :] = take
    return block, block_ts


def assemble_window(
    flame_q: ModalityQueue,
    mel_q: ModalityQueue,
    history_q: ModalityQueue,
    cfg: PipelineConfig,
    end_ts_us: int | None = None,
) -> FusionWindow | None:
    """Build the next model input, or None while no FLAME frame has arrived.

    With end_ts_us the window closes at that instant (frames after it are
    ignored); by default it closes at the newest FLAME frame. The mel block
    ends at the mel frame nearest the FLAME block's end.
    """
    frame_dim = cfg.frame_dim
    flame_ts, flame_vecs = flame_q.snapshot()
    if end_ts_us is not None:
        cut = bisect.bisect_right(flame_ts, end_ts_us)
        flame_ts, flame_vecs = flame_ts[:cut], flame_vecs[:cut]
    if not flame_ts:
        return None
    flame_block, flame_block_ts = _right_aligned(
        flame_ts, flame_vecs, cfg.T_window, frame_dim, len(flame_ts) - 1
    )
    flame_end = flame_ts[-1]

    mel_rows = 4 * cfg.T_window
    mel_ts, mel_vecs = mel_q.snapshot()
    if end_ts_us is not None:
        cut = bisect.bisect_right(mel_ts, end_ts_us)
        mel_ts, mel_vecs = mel_ts[:cut], mel_vecs[:cut]
    if mel_ts:
        # nearest mel frame to the FLAME block end anchors the mel block
        pos = bisect.bisect_left(mel_ts, flame_end)
        if pos >= len(mel_ts):
            anchor = len(mel_ts) - 1
        elif pos == 0:
            anchor = 0
        else:
            before, after = mel_ts[pos - 1], mel_ts[pos]
            anchor = pos if after - flame_end < flame_end - before else pos - 1
        mel_block, mel_block_ts = _right_aligned(
            mel_ts, mel_vecs, mel_rows, cfg.l, anchor
        )
    else:
        mel_block = np.zeros((mel_rows, cfg.l), dtype=np.float32)
        mel_block_ts = np.full(mel_rows, PAD_TS, dtype=np.int64)

    hist_ts, hist_vecs = history_q.snapshot()
    hist_block, _ = _right_aligned(
        hist_ts, hist_vecs, cfg.t_history, frame_dim, len(hist_ts) - 1
    )

    return FusionWindow(
        speaker_flame=flame_block,
        speaker_mel=mel_block,
        listener_past=hist_block,
        flame_ts_us=flame_block_ts,
        mel_ts_us=mel_block_ts,
        window_end_ts_us=int(end_ts_us if end_ts_us is not None else flame_end),
    )


def push_history(history_q: ModalityQueue, predicted: np.ndarray) -> None:
    """Append predicted listener frame vectors (rows of expr_dim + 6).

    The queue keeps its newest t_history rows; dimension mismatches raise.
    """
    predicted = np.asarray(predicted, dtype=np.float32)
    if predicted.ndim == 1:
        predicted = predicted[None, :]
    if predicted.ndim != 2:
        raise ContractError(f"expected a matrix of frame vectors, got ndim={predicted.ndim}")
    tail = history_q.newest_ts()
    next_ts = (tail + 1) if tail is not None else 0
    for row in predicted:
        history_q.push(next_ts, row)
        next_ts += 1
