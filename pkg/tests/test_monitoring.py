import pytest
from hypothesis import given, strategies as st

from gridtune.errors import EmptyInputError, TimeRegressionError, UnknownConsumerError
from gridtune.monitoring import (
    DataBuffer, MetricKind, MetricSample, cpu_usage, load_imbalance, pull, record_sample,
    thread_shares,
)


def busy(at, value, node="n"):
    return MetricSample(at, node, MetricKind.CPU_BUSY, value)


def beat(at, node="n"):
    return MetricSample(at, node, MetricKind.HEARTBEAT, 1)


class TestBuffer:
    def test_append(self):
        buf = DataBuffer("n")
        assert record_sample(buf, beat(0.0)) is None
        assert len(buf) == 1

    def test_overflow_evicts_oldest(self):
        buf = DataBuffer("n", capacity=3)
        for t in range(4):
            evicted = record_sample(buf, beat(float(t)))
        assert evicted.at == 0.0
        assert [s.at for s in buf.samples] == [1.0, 2.0, 3.0]
        assert buf.dropped == [evicted] and buf.evicted == 1

    def test_time_regression(self):
        buf = DataBuffer("n")
        record_sample(buf, beat(2.0))
        with pytest.raises(TimeRegressionError):
            record_sample(buf, beat(1.0))

    def test_wrong_node(self):
        with pytest.raises(ValueError):
            record_sample(DataBuffer("n"), beat(0.0, node="m"))

    def test_pull_cursor(self):
        buf = DataBuffer("n")
        buf.register("na")
        for t in range(3):
            record_sample(buf, beat(float(t)))
        assert len(pull(buf, "na")) == 3
        assert pull(buf, "na") == []
        for t in range(3, 5):
            record_sample(buf, beat(float(t)))
        assert [s.at for s in pull(buf, "na")] == [3.0, 4.0]

    def test_unknown_consumer(self):
        with pytest.raises(UnknownConsumerError):
            pull(DataBuffer("n"), "na")

    def test_samples_before_registration_are_not_delivered(self):
        buf = DataBuffer("n")
        record_sample(buf, beat(0.0))
        buf.register("na")
        record_sample(buf, beat(1.0))
        assert [s.at for s in pull(buf, "na")] == [1.0]


class TestSampleDomain:
    def test_bad_values(self):
        with pytest.raises(ValueError):
            MetricSample(0, "n", MetricKind.MEM_PRESSURE, 1.5)
        with pytest.raises(ValueError):
            MetricSample(0, "n", MetricKind.HEARTBEAT, 2)
        with pytest.raises(ValueError):
            busy(0, -1.0)


class TestCpuUsage:
    def test_full(self):
        assert cpu_usage([busy(1, 2.0)], 1.0, 2) == 1.0

    def test_quarter(self):
        assert cpu_usage([busy(1, 0.5)], 1.0, 2) == 0.25

    def test_empty(self):
        assert cpu_usage([], 1.0, 2) == 0.0

    def test_window_filter(self):
        samples = [busy(0.5, 2.0), busy(2.0, 1.0)]
        assert cpu_usage(samples, 1.0, 2, now=2.0) == 0.5

    def test_bad_window(self):
        with pytest.raises(ValueError):
            cpu_usage([], 0.0, 1)

    @given(st.lists(st.floats(0, 1e6), max_size=20), st.floats(0.01, 100), st.integers(1, 64))
    def test_monotone_in_busy_time(self, values, window, procs):
        samples = [busy(float(i), v) for i, v in enumerate(values)]
        u = cpu_usage(samples, window, procs)
        more = cpu_usage(samples + [busy(float(len(values)), 1.0)], window, procs)
        assert 0.0 <= u <= more <= 1.0


class TestLoadImbalance:
    @pytest.mark.parametrize("work,expected", [([1, 1, 1, 1], 0.0), ([4, 0, 0, 0], 0.75), ([2, 1, 1, 0], 0.5)])
    def test_examples(self, work, expected):
        assert load_imbalance(work) == expected

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            load_imbalance([])

    def test_all_zero(self):
        assert load_imbalance([0, 0]) == 0.0

    @given(st.lists(st.floats(0, 1e9), min_size=1, max_size=32))
    def test_range(self, work):
        assert 0.0 <= load_imbalance(work) < 1.0

    @given(st.integers(1, 16), st.floats(0, 0.99))
    def test_thread_shares_hit_target(self, n, target):
        shares = thread_shares(n, target)
        assert sum(shares) == pytest.approx(1.0)
        expected = 0.0 if n == 1 else min(target, (n - 1) / n)
        assert load_imbalance(shares) == pytest.approx(expected, abs=1e-9)
