"""File formats and the synchronization-trigger demultiplexer.

Event file (".evb"): 16-byte header = magic "EVB1", width:u16, height:u16,
count:u64, followed by fixed 13-byte records t:u64 + x:u16 + y:u16 + p:i8.
All integers little-endian. Fixed-width records make file sizes exactly
16 + 13*count and allow scanning without parsing state.

A CSV alternate (t,x,y,p per line, optional header) is accepted on read for
interoperability; writes are binary unless the CSV writer is called
explicitly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import FormatError, InsufficientDataError
from .events import EventStream, validate_stream

EVB_MAGIC = b"EVB1"
HEADER_BYTES = 16
RECORD_BYTES = 13

_HEADER_DTYPE = np.dtype([("width", "<u2"), ("height", "<u2"), ("count", "<u8")])
_RECORD_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])

TriggerSource = Literal["PPS", "ROTATION", "UNKNOWN"]


@dataclass(frozen=True)
class TriggerRecord:
    t: int  # microseconds
    source: TriggerSource


def write_events(stream: EventStream, destination) -> int:
    """Serialize a stream to the binary format; returns bytes written.

    ``destination`` is a path or a binary file object.
    """
    n = len(stream)
    header = np.zeros(1, dtype=_HEADER_DTYPE)
    header["width"] = stream.width
    header["height"] = stream.height
    header["count"] = n
    records = np.zeros(n, dtype=_RECORD_DTYPE)
    records["t"] = stream.t.astype(np.uint64)
    records["x"] = stream.x.astype(np.uint16)
    records["y"] = stream.y.astype(np.uint16)
    records["p"] = stream.p
    payload = EVB_MAGIC + header.tobytes() + records.tobytes()
    if hasattr(destination, "write"):
        destination.write(payload)
    else:
        with open(destination, "wb") as fh:
            fh.write(payload)
    return len(payload)


def read_events(source) -> EventStream:
    """Parse the binary event format; the result passes validate_stream.

    Raises FormatError naming the byte offset of the first malformed field.
    """
    if hasattr(source, "read"):
        data = source.read()
        name = getattr(source, "name", "<stream>")
    else:
        name = os.fspath(source)
        if str(name).endswith(".csv"):
            return read_events_csv(source)
        with open(source, "rb") as fh:
            data = fh.read()

    if len(data) < HEADER_BYTES or data[:4] != EVB_MAGIC:
        raise FormatError(f"{name}: bad magic at offset 0")
    header = np.frombuffer(data[4:HEADER_BYTES], dtype=_HEADER_DTYPE)[0]
    width, height, count = int(header["width"]), int(header["height"]), int(header["count"])
    expected = HEADER_BYTES + RECORD_BYTES * count
    if len(data) != expected:
        # Offset of the first incomplete/extra record boundary.
        full = min(count, (len(data) - HEADER_BYTES) // RECORD_BYTES)
        raise FormatError(
            f"{name}: expected {expected} bytes for {count} records, got "
            f"{len(data)} (record boundary at offset {HEADER_BYTES + RECORD_BYTES * full})"
        )
    records = np.frombuffer(data, dtype=_RECORD_DTYPE, count=count, offset=HEADER_BYTES)
    stream = EventStream(
        width,
        height,
        records["t"].astype(np.int64),
        records["x"].astype(np.int32),
        records["y"].astype(np.int32),
        records["p"].astype(np.int8),
    )
    report = validate_stream(stream)
    if not report.ok:
        first = report.violations[0]
        offset = HEADER_BYTES + RECORD_BYTES * first.index
        raise FormatError(f"{name}: {first.reason} in record {first.index} at offset {offset}")
    return stream


def read_events_csv(source, width: int | None = None, height: int | None = None) -> EventStream:
    """Parse t,x,y,p CSV rows (header optional).

    Sensor dimensions are not part of the CSV; when omitted they default to
    the coordinate maxima + 1.
    """
    if hasattr(source, "read"):
        lines = source.read().splitlines()
        name = getattr(source, "name", "<stream>")
    else:
        name = os.fspath(source)
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    rows = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if lineno == 1 and not parts[0].strip().lstrip("-").isdigit():
            continue  # header row
        if len(parts) != 4:
            raise FormatError(f"{name}:{lineno}: expected 4 fields, got {len(parts)}")
        try:
            rows.append(tuple(int(part) for part in parts))
        except ValueError as exc:
            raise FormatError(f"{name}:{lineno}: {exc}") from exc
    arr = np.asarray(rows, dtype=np.int64).reshape(-1, 4)
    if width is None:
        width = int(arr[:, 1].max()) + 1 if len(arr) else 1
    if height is None:
        height = int(arr[:, 2].max()) + 1 if len(arr) else 1
    return EventStream(width, height, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])


def write_events_csv(stream: EventStream, destination) -> None:
    rows = ["t,x,y,p"]
    rows.extend(
        f"{t},{x},{y},{p}" for t, x, y, p in zip(stream.t, stream.x, stream.y, stream.p)
    )
    text = "\n".join(rows) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", encoding="utf-8") as fh:
            fh.write(text)


# --- trigger demultiplexing -------------------------------------------------

def _circular_distance(ts: np.ndarray, period: float, phase: float) -> np.ndarray:
    d = (ts - phase) % period
    return np.minimum(d, period - d)


def _fit_comb_phase(ts: np.ndarray, period: float, tolerance: float) -> float:
    """Phase of the periodic comb best supported by the timestamps.

    Residues modulo the period cluster at the true phase for timestamps that
    belong to the comb while the other comb's residues spread out; the
    densest window of width 2*tolerance locates the cluster and its median
    is the phase.
    """
    residues = np.sort(ts % period)
    n = len(residues)
    extended = np.concatenate([residues, residues + period])  # unwrap the circle
    ends = np.searchsorted(extended, residues + 2.0 * tolerance, side="right")
    counts = ends - np.arange(n)
    best = int(np.argmax(counts))  # ties resolve to the smallest start index
    members = extended[best: ends[best]]
    return float(np.median(members)) % period


def demux_triggers(
    merged: Sequence[int] | np.ndarray,
    pps_period_us: float,
    rotation_period_us: float,
    jitter_tolerance_us: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split a merged trigger stream into (pps, rotation, unknown) timestamps.

    Both nominal periods are known; only the phases are estimated, by
    periodic-comb fitting. A timestamp is assigned to the comb whose
    predicted tick lies within the jitter tolerance; timestamps matching
    both combs (or neither) land in the unknown bin, so the three outputs
    always partition the input.
    """
    if pps_period_us == rotation_period_us:
        raise ValueError("demux requires distinct pps and rotation periods")
    if pps_period_us <= 2 * jitter_tolerance_us or rotation_period_us <= 2 * jitter_tolerance_us:
        raise ValueError("demux periods must exceed twice the jitter tolerance")
    ts = np.asarray(merged, dtype=np.float64)
    if len(ts) < 3:
        raise InsufficientDataError("demux needs at least 3 timestamps")

    pps_phase = _fit_comb_phase(ts, pps_period_us, jitter_tolerance_us)
    rot_phase = _fit_comb_phase(ts, rotation_period_us, jitter_tolerance_us)
    near_pps = _circular_distance(ts, pps_period_us, pps_phase) <= jitter_tolerance_us
    near_rot = _circular_distance(ts, rotation_period_us, rot_phase) <= jitter_tolerance_us

    original = np.asarray(merged)
    pps = original[near_pps & ~near_rot]
    rotation = original[near_rot & ~near_pps]
    unknown = original[~(near_pps ^ near_rot)]
    return pps, rotation, unknown


def classify_triggers(
    merged: Sequence[int],
    pps_period_us: float,
    rotation_period_us: float,
    jitter_tolerance_us: float,
) -> list[TriggerRecord]:
    """Per-timestamp labeled view of demux_triggers, in input order."""
    pps, rotation, _ = demux_triggers(
        merged, pps_period_us, rotation_period_us, jitter_tolerance_us
    )
    pps_set, rot_set = set(np.asarray(pps).tolist()), set(np.asarray(rotation).tolist())
    records = []
    for t in merged:
        source: TriggerSource = (
            "PPS" if t in pps_set else "ROTATION" if t in rot_set else "UNKNOWN"
        )
        records.append(TriggerRecord(int(t), source))
    return records


# --- small CSV writers used by the pipeline ---------------------------------

def write_timestamps_csv(timestamps: Sequence[int], destination, header: str = "t_us") -> None:
    text = "\n".join([header] + [str(int(t)) for t in timestamps]) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", encoding="utf-8") as fh:
            fh.write(text)


def read_timestamps_csv(source) -> np.ndarray:
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    values = []
    for line in lines:
        line = line.strip()
        if not line or not line.lstrip("-").isdigit():
            continue
        values.append(int(line))
    return np.asarray(values, dtype=np.int64)
