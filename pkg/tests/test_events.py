import numpy as np
import pytest

from evspin.errors import ConfigError
from evspin.events import Event, EventStream, SensorConfig, validate_stream, window


def make_random_stream(rng, n, width=640, height=480, t_max=100_000):
    t = np.sort(rng.integers(0, t_max, n))
    return EventStream(
        width,
        height,
        t,
        rng.integers(0, width, n),
        rng.integers(0, height, n),
        rng.choice([-1, 1], n).astype(np.int8),
    )


class TestValidateStream:
    def test_empty_stream_is_ok(self):
        assert validate_stream(EventStream(640, 480)).ok

    def test_non_monotonic_timestamps_flagged_at_index(self):
        s = EventStream.from_events(640, 480, [(5, 0, 0, 1), (3, 0, 0, 1)])
        report = validate_stream(s)
        assert not report.ok
        assert report.violations[0].index == 1
        assert "timestamp" in report.violations[0].reason

    def test_out_of_bounds_x_flagged(self):
        s = EventStream.from_events(640, 480, [(1, 640, 0, 1)])
        report = validate_stream(s)
        assert not report.ok
        assert report.violations[0].reason == "x out of bounds"

    def test_bad_polarity_flagged(self):
        s = EventStream.from_events(640, 480, [(1, 0, 0, 0)])
        assert not validate_stream(s).ok

    def test_equal_timestamps_allowed(self):
        s = EventStream.from_events(640, 480, [(7, 1, 1, 1), (7, 2, 2, -1)])
        assert validate_stream(s).ok

    def test_violation_report_capped_at_100(self):
        n = 300
        s = EventStream(640, 480, np.zeros(n, np.int64), np.full(n, 999), np.zeros(n), np.ones(n))
        report = validate_stream(s)
        assert len(report.violations) == 100


class TestWindow:
    def test_half_open_boundaries(self):
        s = EventStream.from_events(64, 64, [(10, 0, 0, 1), (20, 1, 1, 1), (30, 2, 2, 1)])
        out = window(s, 10, 20)
        assert out.to_events() == [Event(10, 0, 0, 1), Event(20, 1, 1, 1)]

    def test_empty_region(self):
        s = EventStream.from_events(64, 64, [(10, 0, 0, 1)])
        out = window(s, 100, 50)
        assert len(out) == 0
        assert out.width == 64 and out.height == 64

    def test_non_positive_duration_rejected(self):
        s = EventStream(64, 64)
        with pytest.raises(ValueError):
            window(s, 0, 0)
        with pytest.raises(ValueError):
            window(s, 0, -5)

    def test_matches_brute_force_filter(self):
        rng = np.random.default_rng(42)
        s = make_random_stream(rng, 10_000)
        for start, duration in [(0, 1), (500, 777), (0, 100_000), (99_000, 5_000)]:
            got = window(s, start, duration)
            keep = (s.t >= start) & (s.t < start + duration)
            assert np.array_equal(got.t, s.t[keep])
            assert np.array_equal(got.x, s.x[keep])
            assert np.array_equal(got.y, s.y[keep])
            assert np.array_equal(got.p, s.p[keep])

    def test_partition_concatenation_recovers_window(self):
        rng = np.random.default_rng(1)
        s = make_random_stream(rng, 5_000, t_max=10_000)
        whole = window(s, 1000, 6000)
        cuts = [1000, 2500, 3000, 5500, 7000]
        parts = [window(s, a, b - a) for a, b in zip(cuts[:-1], cuts[1:])]
        t = np.concatenate([p.t for p in parts])
        x = np.concatenate([p.x for p in parts])
        assert np.array_equal(t, whole.t)
        assert np.array_equal(x, whole.x)
        assert sum(len(p) for p in parts) == len(whole)

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        s = make_random_stream(rng, 1_000, t_max=5_000)
        once = window(s, 1000, 2000)
        twice = window(once, 1000, 2000)
        assert once == twice


class TestSensorConfig:
    def test_default_fov_matches_declared_angles(self):
        s = SensorConfig()
        assert abs(s.horizontal_fov_deg() - 77.32) < 0.1
        assert abs(s.vertical_fov_deg() - 61.93) < 0.1

    def test_invalid_intrinsics_rejected(self):
        with pytest.raises(ConfigError):
            SensorConfig(fx=0.0)
        with pytest.raises(ConfigError):
            SensorConfig(cx=640.0)
        with pytest.raises(ConfigError):
            SensorConfig(width=0)


class TestEventStream:
    def test_immutable_arrays(self):
        s = EventStream.from_events(8, 8, [(1, 2, 3, 1)])
        with pytest.raises(ValueError):
            s.t[0] = 99

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValueError):
            EventStream(8, 8, [1, 2], [1], [1], [1])
