"""Pipeline clock: monotonic microseconds since process start.

Every timestamp in the pipeline is an offset from one epoch captured at
import time, so offline runs are reproducible and latency arithmetic never
sees wall-clock jumps. A wall-clock anchor is kept alongside for log
correlation only.
"""

from __future__ import annotations

import time

_EPOCH_MONO_NS = time.monotonic_ns()
_EPOCH_WALL_S = time.time()


def now_us() -> int:
    """Microseconds elapsed since the pipeline epoch. Never decreases."""
    return (time.monotonic_ns() - _EPOCH_MONO_NS) // 1000


def epoch_wall_time() -> float:
    """Wall-clock seconds (Unix time) at the pipeline epoch."""
    return _EPOCH_WALL_S


def wall_time_at(ts_us: int) -> float:
    """Wall-clock seconds corresponding to a pipeline timestamp."""
    return _EPOCH_WALL_S + ts_us / 1e6
