import math
import time

import numpy as np
import pytest

from evspin.errors import ConfigError
from evspin.events import EventStream
from evspin.representation import (
    Msr,
    MsrConfig,
    build_msr,
    build_time_surface,
    slice_to_image,
    write_pgm,
)


def random_stream(rng, n, width=64, height=48, t_max=100_000):
    return EventStream(
        width,
        height,
        np.sort(rng.integers(0, t_max, n)),
        rng.integers(0, width, n),
        rng.integers(0, height, n),
        rng.choice([-1, 1], n).astype(np.int8),
    )


def brute_force_msr(stream, cfg):
    """Per-event reference accumulation with explicit python arithmetic."""
    slices = np.zeros((cfg.n_slices, stream.height, stream.width), dtype=np.int64)
    sub = cfg.window_us // cfg.n_slices
    for t, x, y, p in zip(stream.t, stream.x, stream.y, stream.p):
        if not (cfg.start_us <= t < cfg.start_us + cfg.window_us):
            continue
        i = (int(t) - cfg.start_us) // sub
        slices[i, y, x] += int(p)
    return slices


class TestMsrConfig:
    def test_window_must_divide_evenly(self):
        with pytest.raises(ConfigError):
            MsrConfig(window_us=100, n_slices=3)

    def test_invalid_counts_rejected(self):
        with pytest.raises(ConfigError):
            MsrConfig(window_us=100, n_slices=0)
        with pytest.raises(ConfigError):
            MsrConfig(window_us=0, n_slices=1)

    def test_default_window_divisible(self):
        cfg = MsrConfig()
        assert cfg.window_us % cfg.n_slices == 0


class TestBuildMsr:
    def test_empty_window_all_zero(self):
        cfg = MsrConfig(window_us=1000, n_slices=4)
        msr = build_msr(EventStream(32, 32), cfg)
        assert msr.slices.shape == (4, 32, 32)
        assert not msr.slices.any()

    def test_signed_cancellation(self):
        stream = EventStream.from_events(8, 8, [(10, 3, 4, 1), (11, 3, 4, -1)])
        msr = build_msr(stream, MsrConfig(window_us=100, n_slices=1))
        assert msr.slices[0, 4, 3] == 0
        assert not msr.slices.any()

    def test_half_open_slice_boundaries(self):
        # events at 0, 25, 50, 99 with 2 slices of 50us: 50 goes to slice 1
        stream = EventStream.from_events(
            8, 8, [(0, 0, 0, 1), (25, 1, 0, 1), (50, 2, 0, 1), (99, 3, 0, 1)]
        )
        msr = build_msr(stream, MsrConfig(window_us=100, n_slices=2))
        assert msr.slices[0, 0, 0] == 1 and msr.slices[0, 0, 1] == 1
        assert msr.slices[0, 0, 2] == 0
        assert msr.slices[1, 0, 2] == 1 and msr.slices[1, 0, 3] == 1

    def test_matches_brute_force_and_partition_identity(self):
        rng = np.random.default_rng(11)
        stream = random_stream(rng, 100_000)
        for n_slices in (1, 4, 10):
            cfg = MsrConfig(window_us=100_000, n_slices=n_slices)
            msr = build_msr(stream, cfg)
            assert np.array_equal(msr.slices, brute_force_msr(stream, cfg))
        single = build_msr(stream, MsrConfig(window_us=100_000, n_slices=1))
        multi = build_msr(stream, MsrConfig(window_us=100_000, n_slices=10))
        assert np.array_equal(multi.slices.sum(axis=0), single.slices[0])

    def test_event_conservation_via_count_grid(self):
        rng = np.random.default_rng(12)
        stream = random_stream(rng, 20_000)
        cfg = MsrConfig(window_us=80_000, n_slices=5, start_us=10_000)
        msr = build_msr(stream, cfg, with_counts=True)
        from evspin.events import window

        assert msr.counts.sum() == len(window(stream, 10_000, 80_000))

    def test_permutation_of_equal_timestamps_is_invariant(self):
        rng = np.random.default_rng(13)
        n = 2000
        t = np.repeat(np.arange(100, dtype=np.int64) * 10, n // 100)
        x = rng.integers(0, 16, n)
        y = rng.integers(0, 16, n)
        p = rng.choice([-1, 1], n).astype(np.int8)
        base = build_msr(EventStream(16, 16, t, x, y, p), MsrConfig(1000, 5))
        # shuffle within equal-timestamp groups
        perm = np.arange(n)
        for start in range(0, n, n // 100):
            seg = perm[start: start + n // 100].copy()
            rng.shuffle(seg)
            perm[start: start + n // 100] = seg
        shuffled = build_msr(EventStream(16, 16, t, x[perm], y[perm], p[perm]), MsrConfig(1000, 5))
        assert np.array_equal(base.slices, shuffled.slices)

    def test_sparse_and_dense_paths_agree(self):
        rng = np.random.default_rng(14)
        stream = random_stream(rng, 60_001, width=32, height=32)
        cfg = MsrConfig(window_us=100_000, n_slices=5)
        dense = build_msr(stream, cfg, with_counts=True)
        from evspin.events import window as cut

        small = cut(stream, 0, 40_000)  # below the sparse-path threshold
        sparse = build_msr(small, MsrConfig(window_us=40_000, n_slices=5), with_counts=True)
        assert np.array_equal(
            dense.slices[:2], brute_force_msr(stream, cfg)[:2]
        )
        assert np.array_equal(
            sparse.slices, brute_force_msr(small, MsrConfig(40_000, 5))
        )

    def test_throughput_scales_linearly(self):
        rng = np.random.default_rng(15)
        cfg = MsrConfig(window_us=1_000_000, n_slices=5)

        def timed(n):
            stream = random_stream(rng, n, width=640, height=480, t_max=1_000_000)
            best = math.inf
            for _ in range(5):
                t0 = time.perf_counter()
                build_msr(stream, cfg)
                best = min(best, time.perf_counter() - t0)
            return best

        t1 = timed(1_000_000)
        t2 = timed(2_000_000)
        assert t2 <= 2.5 * t1


class TestTimeSurface:
    def test_single_event_decays_to_inverse_e(self):
        stream = EventStream.from_events(8, 8, [(0, 2, 3, 1)])
        grid = build_time_surface(stream, 1000, tau_us=1000.0)
        assert grid[3, 2] == pytest.approx(math.exp(-1.0))
        assert np.count_nonzero(grid) == 1

    def test_later_event_overwrites(self):
        stream = EventStream.from_events(8, 8, [(0, 2, 3, 1), (500, 2, 3, -1)])
        grid = build_time_surface(stream, 1000, tau_us=1000.0)
        assert grid[3, 2] == pytest.approx(-math.exp(-0.5))

    def test_matches_brute_force_scan(self):
        rng = np.random.default_rng(16)
        stream = random_stream(rng, 5000, width=32, height=24, t_max=50_000)
        grid = build_time_surface(stream, 50_000, tau_us=7000.0)
        ref = np.zeros((24, 32))
        for t, x, y, p in zip(stream.t, stream.x, stream.y, stream.p):
            ref[y, x] = math.exp(-(50_000 - int(t)) / 7000.0) * int(p)
        assert np.allclose(grid, ref, atol=1e-12)

    def test_rejects_bad_tau_and_early_query(self):
        stream = EventStream.from_events(8, 8, [(100, 1, 1, 1)])
        with pytest.raises(ConfigError):
            build_time_surface(stream, 200, tau_us=0.0)
        with pytest.raises(ValueError):
            build_time_surface(stream, 50, tau_us=100.0)


class TestSliceToImage:
    def test_zero_maps_to_128(self):
        img = slice_to_image(np.zeros((4, 4), dtype=np.int32), clip=5)
        assert (img == 128).all()

    def test_endpoints(self):
        grid = np.array([[5, -5]], dtype=np.int32)
        img = slice_to_image(grid, clip=5)
        assert img[0, 0] == 255 and img[0, 1] == 1

    def test_clamps_beyond_clip(self):
        grid = np.array([[100, -100]], dtype=np.int32)
        img = slice_to_image(grid, clip=5)
        assert img[0, 0] == 255 and img[0, 1] == 1

    def test_matches_scalar_formula(self):
        rng = np.random.default_rng(17)
        grid = rng.integers(-12, 12, size=(20, 30)).astype(np.int32)
        clip = 7
        img = slice_to_image(grid, clip=clip)
        for y in range(20):
            for x in range(30):
                c = max(-clip, min(clip, int(grid[y, x])))
                expected = 128 + round(127 * c / clip)
                assert img[y, x] == expected

    def test_invalid_clip(self):
        with pytest.raises(ValueError):
            slice_to_image(np.zeros((2, 2), dtype=np.int32), clip=0)


class TestPgm:
    def test_header_and_payload(self, tmp_path):
        img = np.arange(6, dtype=np.uint8).reshape(2, 3)
        path = tmp_path / "s.pgm"
        write_pgm(img, path)
        data = path.read_bytes()
        assert data == b"P5\n3 2\n255\n" + bytes(range(6))
