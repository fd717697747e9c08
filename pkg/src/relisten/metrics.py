"""Per-stage latency collection and nearest-rank quantile reporting.

Each stage keeps a bounded ring of timing samples; the report derives
three series per stage: processing (processed - recv), publish
(publish - processed), and end_to_end (publish - capture), each
summarized as count / p50 / p95 / max in seconds. Quantiles are
nearest-rank (rank = ceil(q * n), 1-indexed into the sorted series), not
interpolated, so expected values are exactly testable.

record() stays cheap: one dict lookup, four comparisons, one deque
append. Samples violating capture <= recv <= processed <= publish are
rejected and counted, never raised.
"""

from __future__ import annotations

import io
import math
import threading
from collections import deque
from dataclasses import dataclass

from .errors import RelistenError

RING_CAPACITY = 100_000

METRIC_NAMES = ("processing", "publish", "end_to_end")


class NoSamplesError(RelistenError):
    """Raised when a report is requested before any sample was accepted."""


@dataclass(frozen=True)
class StageSample:
    stage: str
    capture_ts_us: int
    recv_ts_us: int
    processed_ts_us: int
    publish_ts_us: int

    @property
    def ordered(self) -> bool:
        return (
            self.capture_ts_us
            <= self.recv_ts_us
            <= self.processed_ts_us
            <= self.publish_ts_us
        )


@dataclass(frozen=True)
class MetricRow:
    stage: str
    metric: str
    count: int
    p50_s: float
    p95_s: float
    max_s: float


@dataclass(frozen=True)
class LatencyReport:
    rows: tuple[MetricRow, ...]

    def row(self, stage: str, metric: str) -> MetricRow:
        for r in self.rows:
            if r.stage == stage and r.metric == metric:
                return r
        raise KeyError((stage, metric))


def nearest_rank(sorted_values, q: float) -> float:
    """q-quantile by nearest rank over an ascending list."""
    n = len(sorted_values)
    if n == 0:
        raise NoSamplesError("no values")
    rank = max(1, math.ceil(q * n))
    return sorted_values[min(rank, n) - 1]


class MetricsRegistry:
    """Thread-safe sample sink; report() sees a consistent snapshot."""

    def __init__(self, capacity: int = RING_CAPACITY):
        self.capacity = capacity
        self._stages: dict[str, deque] = {}
        self._rejected: dict[str, int] = {}
        self._lock = threading.Lock()

    def _ring(self, stage: str) -> deque:
        ring = self._stages.get(stage)
        if ring is None:
            with self._lock:
                ring = self._stages.setdefault(stage, deque(maxlen=self.capacity))
                self._rejected.setdefault(stage, 0)
        return ring

    def record(self, sample: StageSample, stage: str | None = None) -> bool:
        """Append one sample; returns False (and counts) on bad ordering."""
        name = stage if stage is not None else sample.stage
        ring = self._ring(name)
        if not sample.ordered:
            with self._lock:
                self._rejected[name] += 1
            return False
        ring.append(
            (
                sample.capture_ts_us,
                sample.recv_ts_us,
                sample.processed_ts_us,
                sample.publish_ts_us,
            )
        )
        return True

    def record_values(
        self, stage: str, capture_ts_us: int, recv_ts_us: int,
        processed_ts_us: int, publish_ts_us: int,
    ) -> bool:
        """record() without the dataclass wrapper (hot paths)."""
        ring = self._ring(stage)
        if not capture_ts_us <= recv_ts_us <= processed_ts_us <= publish_ts_us:
            with self._lock:
                self._rejected[stage] += 1
            return False
        ring.append((capture_ts_us, recv_ts_us, processed_ts_us, publish_ts_us))
        return True

    def count(self, stage: str) -> int:
        return len(self._stages.get(stage, ()))

    def rejected(self, stage: str) -> int:
        return self._rejected.get(stage, 0)

    def snapshot(self) -> dict[str, list[tuple[int, int, int, int]]]:
        with self._lock:
            return {name: list(ring) for name, ring in self._stages.items()}

    def report(self) -> LatencyReport:
        """Summarize every stage; raises NoSamplesError when nothing landed."""
        snap = self.snapshot()
        rows = []
        total = 0
        for stage in sorted(snap):
            samples = snap[stage]
            total += len(samples)
            if not samples:
                continue
            series = {
                "processing": sorted((p - r) / 1e6 for _, r, p, _ in samples),
                "publish": sorted((b - p) / 1e6 for _, _, p, b in samples),
                "end_to_end": sorted((b - c) / 1e6 for c, _, _, b in samples),
            }
            for metric in METRIC_NAMES:
                vals = series[metric]
                rows.append(
                    MetricRow(
                        stage=stage,
                        metric=metric,
                        count=len(vals),
                        p50_s=nearest_rank(vals, 0.50),
                        p95_s=nearest_rank(vals, 0.95),
                        max_s=vals[-1],
                    )
                )
        if total == 0:
            raise NoSamplesError("no samples recorded")
        return LatencyReport(rows=tuple(rows))


def report_to_csv(report: LatencyReport) -> str:
    out = io.StringIO()
    out.write("stage,metric,count,p50,p95,max\n")
    for r in report.rows:
        out.write(f"{r.stage},{r.metric},{r.count},{r.p50_s:.9f},{r.p95_s:.9f},{r.max_s:.9f}\n")
    return out.getvalue()


def report_from_csv(text: str) -> LatencyReport:
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines or lines[0] != "stage,metric,count,p50,p95,max":
        raise RelistenError("unrecognized latency CSV header")
    rows = []
    for ln in lines[1:]:
        stage, metric, count, p50, p95, mx = ln.split(",")
        rows.append(
            MetricRow(
                stage=stage,
                metric=metric,
                count=int(count),
                p50_s=float(p50),
                p95_s=float(p95),
                max_s=float(mx),
            )
        )
    return LatencyReport(rows=tuple(rows))
