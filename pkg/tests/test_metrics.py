"""Latency metrics tests; quantiles checked against a sort-based oracle."""

import math
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relisten.metrics import (
    MetricsRegistry,
    NoSamplesError,
    StageSample,
    nearest_rank,
    report_from_csv,
    report_to_csv,
)


def quantile_oracle(values, q):
    s = sorted(values)
    rank = max(1, math.ceil(q * len(s)))
    return s[rank - 1]


def _sample(stage="gl", capture=0, recv=0, processed=0, publish=0):
    return StageSample(stage, capture, recv, processed, publish)


class TestRecord:
    def test_valid_sample_counts(self):
        reg = MetricsRegistry()
        assert reg.record(_sample(processed=10, publish=20))
        assert reg.count("gl") == 1
        assert reg.rejected("gl") == 0

    def test_ordering_violation_rejected(self):
        reg = MetricsRegistry()
        assert not reg.record(_sample(recv=100, processed=50, publish=200))
        assert reg.count("gl") == 0
        assert reg.rejected("gl") == 1

    def test_capture_after_recv_rejected(self):
        reg = MetricsRegistry()
        assert not reg.record(_sample(capture=10, recv=5, processed=20, publish=30))
        assert reg.rejected("gl") == 1

    def test_stage_override(self):
        reg = MetricsRegistry()
        reg.record(_sample(stage="a", publish=1), stage="b")
        assert reg.count("b") == 1
        assert reg.count("a") == 0

    def test_ring_eviction_at_capacity(self):
        reg = MetricsRegistry(capacity=5)
        for i in range(8):
            reg.record_values("s", 0, 0, i, i)
        assert reg.count("s") == 5
        kept = [p for _, _, p, _ in reg.snapshot()["s"]]
        assert kept == [3, 4, 5, 6, 7]

    def test_default_capacity_caps_at_100k(self):
        reg = MetricsRegistry()
        for i in range(100_001):
            reg.record_values("s", 0, 0, 1, 1)
        assert reg.count("s") == 100_000

    def test_concurrent_records(self):
        reg = MetricsRegistry()

        def worker(k):
            for i in range(5000):
                reg.record_values(f"stage{k % 2}", 0, 0, i, i)

        threads = [threading.Thread(target=worker, args=(k,)) for k in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert reg.count("stage0") + reg.count("stage1") == 20_000


class TestReport:
    def test_single_sample_five_ms(self):
        reg = MetricsRegistry()
        reg.record(_sample(capture=0, recv=0, processed=5000, publish=5000))
        report = reg.report()
        row = report.row("gl", "processing")
        assert (row.count, row.p50_s, row.p95_s, row.max_s) == (1, 0.005, 0.005, 0.005)
        assert report.row("gl", "publish").p50_s == 0.0
        assert report.row("gl", "end_to_end").max_s == 0.005

    def test_one_to_hundred_ms(self):
        reg = MetricsRegistry()
        order = list(range(1, 101))
        order = order[50:] + order[:50]  # out of order on purpose
        for k in order:
            reg.record_values("s", 0, 0, k * 1000, k * 1000)
        row = reg.report().row("s", "processing")
        assert row.p50_s == pytest.approx(0.050)
        assert row.p95_s == pytest.approx(0.095)
        assert row.max_s == pytest.approx(0.100)
        assert row.count == 100

    def test_no_samples_raises(self):
        with pytest.raises(NoSamplesError):
            MetricsRegistry().report()

    def test_all_rejected_raises(self):
        reg = MetricsRegistry()
        reg.record(_sample(recv=10, processed=5, publish=20))
        with pytest.raises(NoSamplesError):
            reg.report()

    def test_multiple_stages_sorted(self):
        reg = MetricsRegistry()
        reg.record_values("zeta", 0, 0, 1, 2)
        reg.record_values("alpha", 0, 0, 3, 4)
        report = reg.report()
        stages = [r.stage for r in report.rows]
        assert stages == ["alpha"] * 3 + ["zeta"] * 3

    @given(st.lists(st.integers(0, 10_000_000), min_size=1, max_size=300))
    @settings(max_examples=50, deadline=None)
    def test_quantiles_match_oracle(self, processing_us):
        reg = MetricsRegistry()
        for us in processing_us:
            reg.record_values("s", 0, 0, us, us)
        row = reg.report().row("s", "processing")
        series = [us / 1e6 for us in processing_us]
        assert row.p50_s == quantile_oracle(series, 0.50)
        assert row.p95_s == quantile_oracle(series, 0.95)
        assert row.max_s == max(series)
        assert row.p50_s <= row.p95_s <= row.max_s

    def test_nearest_rank_basics(self):
        assert nearest_rank([1.0], 0.5) == 1.0
        assert nearest_rank([1.0, 2.0], 0.5) == 1.0
        assert nearest_rank([1.0, 2.0], 0.95) == 2.0
        with pytest.raises(NoSamplesError):
            nearest_rank([], 0.5)


class TestCsv:
    def test_round_trip(self):
        reg = MetricsRegistry()
        for k in range(1, 40):
            reg.record_values("mel", k, k + 2, k + 700, k + 900)
            reg.record_values("gl", k, k + 1, k + 350, k + 420)
        report = reg.report()
        text = report_to_csv(report)
        assert text.splitlines()[0] == "stage,metric,count,p50,p95,max"
        assert report_from_csv(text) == report

    def test_bad_header_rejected(self):
        with pytest.raises(Exception, match="header"):
            report_from_csv("nope\n1,2,3\n")
