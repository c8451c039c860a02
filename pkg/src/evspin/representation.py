"""Event-window representations: multi-slice accumulation and a time surface.

The multi-slice representation (MSR) divides a window of length ``window_us``
into ``n_slices`` uniform sub-intervals and accumulates signed polarities per
pixel per sub-interval. Sub-intervals are half-open, so boundary events are
counted exactly once; the window length must divide evenly so all slices are
literally uniform.

The time surface is the overwrite-style baseline: each pixel keeps only its
latest event, exponentially decayed at query time. Under continuous rotation
it loses most of the motion history, which is the failure mode the sliced
representation avoids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .events import EventStream, window

DEFAULT_WINDOW_US = 33_335  # ~30 Hz cadence, divisible by the default 5 slices
DEFAULT_SLICES = 5


@dataclass(frozen=True)
class MsrConfig:
    window_us: int = DEFAULT_WINDOW_US
    n_slices: int = DEFAULT_SLICES
    start_us: int = 0

    def __post_init__(self):
        if self.n_slices < 1:
            raise ConfigError("msr: slice count must be >= 1")
        if self.window_us <= 0:
            raise ConfigError("msr: window length must be positive")
        if self.window_us % self.n_slices != 0:
            raise ConfigError(
                f"msr: window length {self.window_us} us is not divisible by "
                f"{self.n_slices} slices"
            )

    @property
    def slice_us(self) -> int:
        return self.window_us // self.n_slices

    def slice_mid_us(self, i: int) -> int:
        """Midpoint time of slice i (0-based)."""
        return self.start_us + i * self.slice_us + self.slice_us // 2

    @property
    def mid_us(self) -> int:
        return self.start_us + self.window_us // 2


@dataclass(frozen=True)
class Msr:
    """Signed per-pixel accumulation slices, shape (n_slices, height, width)."""

    slices: np.ndarray  # int32
    config: MsrConfig
    counts: np.ndarray | None = None  # unsigned event counts, same shape

    def __post_init__(self):
        self.slices.setflags(write=False)
        if self.counts is not None:
            self.counts.setflags(write=False)


def build_msr(stream: EventStream, cfg: MsrConfig, with_counts: bool = False) -> Msr:
    """Accumulate a window of events into signed per-slice pixel grids.

    Slice i (0-based) covers [start + i*slice_us, start + (i+1)*slice_us).
    With ``with_counts`` a parallel unsigned count grid is kept, which lets
    callers check event conservation.
    """
    sub = window(stream, cfg.start_us, cfg.window_us)
    h, w = stream.height, stream.width
    cells = h * w
    shape = (cfg.n_slices, h, w)
    if len(sub) == 0:
        zero = np.zeros(shape, dtype=np.int32)
        return Msr(zero, cfg, np.zeros(shape, dtype=np.int32) if with_counts else None)

    slice_idx = (sub.t - cfg.start_us) // cfg.slice_us
    flat = slice_idx * cells + sub.y.astype(np.int64) * w + sub.x
    total = cfg.n_slices * cells
    # Scattered adds win for sparse windows; a full bincount pass wins once
    # the event count rivals the grid size. Both are integer-exact.
    if len(flat) <= 50_000:
        slices = np.zeros(total, dtype=np.int32)
        np.add.at(slices, flat, sub.p.astype(np.int32))
        counts = None
        if with_counts:
            counts = np.zeros(total, dtype=np.int32)
            np.add.at(counts, flat, 1)
    else:
        slices = np.bincount(flat, weights=sub.p, minlength=total).astype(np.int32)
        counts = None
        if with_counts:
            counts = np.bincount(flat, minlength=total).astype(np.int32)
    return Msr(
        slices.reshape(shape),
        cfg,
        counts.reshape(shape) if counts is not None else None,
    )


@dataclass(frozen=True)
class TimeSurface:
    """Per-pixel latest-event timestamp and polarity with decay constant tau."""

    last_t: np.ndarray  # int64; -1 where no event landed
    last_p: np.ndarray  # int8
    tau_us: float

    def decayed(self, query_time_us: int) -> np.ndarray:
        out = np.zeros(self.last_t.shape, dtype=np.float64)
        hit = self.last_t >= 0
        age = (query_time_us - self.last_t[hit]).astype(np.float64)
        out[hit] = np.exp(-age / self.tau_us) * self.last_p[hit]
        return out


def build_time_surface(stream: EventStream, query_time_us: int, tau_us: float) -> np.ndarray:
    """Dense exp(-(query - t_last)/tau) * p_last grid; untouched pixels are 0.

    Later events overwrite earlier ones at the same pixel (that is the
    baseline's defining information loss).
    """
    if tau_us <= 0:
        raise ConfigError("time surface: tau must be positive")
    if len(stream) and int(stream.t[-1]) > query_time_us:
        raise ValueError("query time precedes some event timestamps")
    last_t = np.full((stream.height, stream.width), -1, dtype=np.int64)
    last_p = np.zeros((stream.height, stream.width), dtype=np.int8)
    if len(stream):
        flat = stream.y.astype(np.int64) * stream.width + stream.x
        # Last occurrence per pixel: first occurrence in the reversed order.
        rev_unique, rev_first = np.unique(flat[::-1], return_index=True)
        src = len(stream) - 1 - rev_first
        last_t.reshape(-1)[rev_unique] = stream.t[src]
        last_p.reshape(-1)[rev_unique] = stream.p[src]
    return TimeSurface(last_t, last_p, tau_us).decayed(query_time_us)


def slice_to_image(slice_grid: np.ndarray, clip: int) -> np.ndarray:
    """Map signed counts to 8-bit gray: 128 + round(127 * clamp(c)/clip).

    Zero cells map to exactly 128; +clip to 255 and -clip to 1.
    """
    if clip < 1:
        raise ValueError("clip must be >= 1")
    scaled = np.clip(slice_grid, -clip, clip).astype(np.float64) * (127.0 / clip)
    return (128.0 + np.rint(scaled)).astype(np.uint8)


def write_pgm(image: np.ndarray, destination) -> None:
    """Write an 8-bit grayscale image as binary PGM (P5)."""
    h, w = image.shape
    payload = f"P5\n{w} {h}\n255\n".encode("ascii") + image.astype(np.uint8).tobytes()
    if hasattr(destination, "write"):
        destination.write(payload)
    else:
        with open(destination, "wb") as fh:
            fh.write(payload)
