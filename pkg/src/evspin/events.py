"""Core event data model: streams, validation, and time-window extraction.

Timestamps are 64-bit integer microseconds since the stream epoch; polarity
is signed (+1 brightness increase, -1 decrease) so per-pixel accumulation is
a plain signed sum. All window bounds are half-open [start, start+duration)
so an event on a boundary lands in exactly one interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np


class Event(NamedTuple):
    t: int  # microseconds since stream epoch
    x: int  # pixel column, 0-based
    y: int  # pixel row, 0-based
    p: int  # polarity, +1 or -1


@dataclass(frozen=True)
class SensorConfig:
    """Pinhole sensor geometry: resolution plus intrinsics in pixels.

    Defaults model a 640x480 sensor whose horizontal/vertical full field of
    view is 77.32 x 61.93 degrees (focal length 400 px on both axes).
    """

    width: int = 640
    height: int = 480
    fx: float = 400.0
    fy: float = 400.0
    cx: float = 319.5
    cy: float = 239.5

    def __post_init__(self):
        from .errors import ConfigError

        if self.width <= 0 or self.height <= 0:
            raise ConfigError("sensor: width and height must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigError("sensor: fx and fy must be positive")
        if not (0 <= self.cx < self.width):
            raise ConfigError("sensor: cx must lie in [0, width)")
        if not (0 <= self.cy < self.height):
            raise ConfigError("sensor: cy must lie in [0, height)")

    def horizontal_fov_deg(self) -> float:
        return math.degrees(2.0 * math.atan(self.width / (2.0 * self.fx)))

    def vertical_fov_deg(self) -> float:
        return math.degrees(2.0 * math.atan(self.height / (2.0 * self.fy)))


class EventStream:
    """Immutable, time-ordered event sequence with sensor dimensions.

    Stored as parallel numpy arrays (struct-of-arrays) so windowing and
    accumulation are vectorized. Arrays are marked read-only after
    construction; slices share the underlying buffers.
    """

    __slots__ = ("width", "height", "t", "x", "y", "p")

    def __init__(self, width: int, height: int, t=None, x=None, y=None, p=None):
        object.__setattr__(self, "width", int(width))
        object.__setattr__(self, "height", int(height))
        t = np.asarray(t if t is not None else [], dtype=np.int64)
        x = np.asarray(x if x is not None else [], dtype=np.int32)
        y = np.asarray(y if y is not None else [], dtype=np.int32)
        p = np.asarray(p if p is not None else [], dtype=np.int8)
        if not (len(t) == len(x) == len(y) == len(p)):
            raise ValueError("event field arrays must have equal length")
        for arr, name in ((t, "t"), (x, "x"), (y, "y"), (p, "p")):
            if arr.flags.owndata:
                arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __setattr__(self, name, value):  # pragma: no cover - guard only
        raise AttributeError("EventStream is immutable")

    @classmethod
    def from_events(cls, width: int, height: int, events: Iterable[tuple]) -> "EventStream":
        evs = [Event(*e) for e in events]
        return cls(
            width,
            height,
            [e.t for e in evs],
            [e.x for e in evs],
            [e.y for e in evs],
            [e.p for e in evs],
        )

    def __len__(self) -> int:
        return len(self.t)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )

    def __repr__(self) -> str:
        return f"EventStream({self.width}x{self.height}, {len(self)} events)"

    def to_events(self) -> list[Event]:
        return [
            Event(int(t), int(x), int(y), int(p))
            for t, x, y, p in zip(self.t, self.x, self.y, self.p)
        ]


@dataclass(frozen=True)
class StreamViolation:
    index: int
    reason: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: list[StreamViolation] = field(default_factory=list)


#: Violations past this count are dropped from the report.
MAX_REPORTED_VIOLATIONS = 100


def validate_stream(stream: EventStream) -> ValidationReport:
    """Check event invariants and timestamp monotonicity.

    Returns a report rather than raising: ``ok`` is True iff every event has
    in-bounds coordinates, polarity in {+1, -1}, and timestamps are
    non-decreasing. At most the first 100 offending indices are listed.
    """
    found: list[StreamViolation] = []

    def collect(mask: np.ndarray, reason: str):
        for idx in np.nonzero(mask)[0]:
            found.append(StreamViolation(int(idx), reason))

    collect((stream.x < 0) | (stream.x >= stream.width), "x out of bounds")
    collect((stream.y < 0) | (stream.y >= stream.height), "y out of bounds")
    collect((stream.p != 1) & (stream.p != -1), "polarity not in {+1, -1}")
    if len(stream) > 1:
        non_monotonic = np.zeros(len(stream), dtype=bool)
        non_monotonic[1:] = np.diff(stream.t) < 0
        collect(non_monotonic, "timestamp decreases")

    found.sort(key=lambda v: v.index)
    return ValidationReport(ok=not found, violations=found[:MAX_REPORTED_VIOLATIONS])


def window(stream: EventStream, start: int, duration: int) -> EventStream:
    """Extract events with start <= t < start+duration, order preserved.

    The result shares the sensor dimensions (and, internally, the storage)
    of the input stream.
    """
    if duration <= 0:
        raise ValueError("window duration must be positive")
    lo = int(np.searchsorted(stream.t, start, side="left"))
    hi = int(np.searchsorted(stream.t, start + duration, side="left"))
    return EventStream(
        stream.width,
        stream.height,
        stream.t[lo:hi],
        stream.x[lo:hi],
        stream.y[lo:hi],
        stream.p[lo:hi],
    )
