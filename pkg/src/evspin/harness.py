"""Pipeline orchestration: simulate -> represent -> detect -> bearing -> score.

The evaluation loop slides non-overlapping windows across the event stream.
Window construction (extraction + slicing + detector-input preparation) and
detection (tracking/inference + bearing) are modeled as two independently
executing stages connected by a bounded queue of immutable window payloads,
mirroring a two-process deployment; a serial fallback runs both stages
inline and must produce identical detections.

Per-stage wall times are collected under the names data_processing,
image_generation, input_construction, inference, bearing_estimation and
other (queue wait / bookkeeping). Timing lives in a separate artifact
(timings.json) because the evaluation report itself is required to be
byte-identical across reruns with a fixed seed.
"""

from __future__ import annotations

import json
import math
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import io as evio
from .config import RunConfig
from .detection import (
    Box,
    Detection,
    DetectorParams,
    detect_from_components,
    detect_oracle,
    extract_components,
)
from .errors import ConfigError, InsufficientDataError
from .events import EventStream, SensorConfig, window
from .geometry import PlatformPose, angular_error, pixel_to_bearing, to_spherical, BearingVector
from .metrics import ApReport, ErrorStats, compute_ap, error_stats
from .representation import Msr, MsrConfig, build_msr, slice_to_image, write_pgm
from .sim import GroundTruthSample, SimResult, simulate_sequence

SCHEMA_VERSION = 1
STAGES = (
    "data_processing",
    "image_generation",
    "input_construction",
    "inference",
    "bearing_estimation",
    "other",
)

DESK_SCALE_NOTE = (
    "Angular-error statistics come from synthetic desk-scale sequences with "
    "exact simulated ground truth; they bound the geometry chain only and are "
    "not comparable to field measurements against GNSS/LiDAR references."
)


@dataclass(frozen=True)
class StageTiming:
    stage: str
    mean_ms: float
    p50_ms: float
    p95_ms: float
    samples: int


def _summarize_stage(name: str, samples_ns: Sequence[int]) -> StageTiming:
    arr = np.asarray(samples_ns, dtype=np.float64) * 1e-6
    if arr.size == 0:
        arr = np.zeros(1)
    return StageTiming(
        stage=name,
        mean_ms=float(arr.mean()),
        p50_ms=float(np.percentile(arr, 50)),
        p95_ms=float(np.percentile(arr, 95)),
        samples=int(arr.size),
    )


class GtInterpolator:
    """Linear interpolation over ground-truth samples.

    Bearings are interpolated component-wise and re-normalized; the in-view
    flag and target box at an arbitrary instant are recomputed by projecting
    the interpolated bearing, which keeps them consistent with the oracle
    detector at the same instant.
    """

    def __init__(self, t_us: np.ndarray, bearings: np.ndarray, apparent: np.ndarray):
        if len(t_us) == 0:
            raise ConfigError("ground truth is empty")
        self.t = np.asarray(t_us, dtype=np.int64)
        self.bearings = np.asarray(bearings, dtype=np.float64)
        self.apparent = np.asarray(apparent, dtype=np.float64)

    @classmethod
    def from_samples(cls, samples: Sequence[GroundTruthSample]) -> "GtInterpolator":
        return cls(
            np.array([s.t for s in samples], dtype=np.int64),
            np.array([s.bearing for s in samples]),
            np.array([s.apparent_size for s in samples]),
        )

    def covers(self, t_us: int) -> bool:
        return bool(self.t[0] <= t_us <= self.t[-1])

    def sample(self, t_us: int, pose: PlatformPose, sensor: SensorConfig) -> GroundTruthSample:
        vec = np.array(
            [np.interp(t_us, self.t, self.bearings[:, k]) for k in range(3)]
        )
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise ValueError("interpolated bearing degenerated to zero")
        vec /= norm
        apparent = float(np.interp(t_us, self.t, self.apparent))
        probe = GroundTruthSample(int(t_us), vec, False, apparent)
        in_fov = detect_oracle(probe, sensor, pose) is not None
        return GroundTruthSample(int(t_us), vec, in_fov, apparent)


class ReferenceDetectorAdapter:
    kind = "reference"

    def __init__(self, pose: PlatformPose, sensor: SensorConfig, params: DetectorParams):
        self.pose, self.sensor, self.params = pose, sensor, params

    def prepare(self, msr: Msr):
        return extract_components(msr, self.params)

    def infer(self, msr: Msr, prepared) -> list[Detection]:
        return detect_from_components(
            prepared, msr.config, self.pose, self.sensor, self.params
        )


class OracleDetectorAdapter:
    kind = "oracle"

    def __init__(self, gt: GtInterpolator, pose: PlatformPose, sensor: SensorConfig):
        self.gt, self.pose, self.sensor = gt, pose, sensor

    def prepare(self, msr: Msr):
        return self.gt.sample(msr.config.mid_us, self.pose, self.sensor)

    def infer(self, msr: Msr, prepared) -> list[Detection]:
        det = detect_oracle(prepared, self.sensor, self.pose)
        return [det] if det is not None else []


@dataclass
class WindowResult:
    index: int
    mid_us: int
    detections: list[Detection]
    gt: Optional[GroundTruthSample]
    estimate: Optional[tuple[float, float, np.ndarray]]  # theta, phi, unit vector
    gamma_deg: Optional[float]


@dataclass
class EvalReport:
    detector: str
    window_us: int
    n_slices: int
    n_windows: int
    n_skipped_no_gt: int
    n_in_fov: int
    n_detected_in_fov: int
    false_positives: int
    recall: Optional[float]
    errors: Optional[ErrorStats]
    ap: ApReport
    notes: list[str]
    config_echo: dict
    bearings: list[tuple] = field(default_factory=list)
    detections: list[tuple] = field(default_factory=list)
    timings: list[StageTiming] = field(default_factory=list)
    schema: int = SCHEMA_VERSION

    def to_json_dict(self) -> dict:
        """Deterministic report payload; wall-clock timings are excluded."""
        return {
            "schema": self.schema,
            "detector": self.detector,
            "window_us": self.window_us,
            "n_slices": self.n_slices,
            "windows": {
                "total": self.n_windows,
                "skipped_no_gt": self.n_skipped_no_gt,
                "in_fov": self.n_in_fov,
                "detected_in_fov": self.n_detected_in_fov,
            },
            "false_positives": self.false_positives,
            "recall": self.recall,
            "angular_error_deg": None
            if self.errors is None
            else {
                "mean": self.errors.mean,
                "median": self.errors.median,
                "max": self.errors.max,
                "count": self.errors.count,
            },
            "detection_metrics": {
                "ap": self.ap.ap,
                "ap75": self.ap.ap75,
                "ar100": self.ap.ar100,
            },
            "notes": self.notes,
            "config": self.config_echo,
        }


def timings_to_json_dict(timings: Sequence[StageTiming]) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "stages": [
            {
                "stage": t.stage,
                "mean_ms": t.mean_ms,
                "p50_ms": t.p50_ms,
                "p95_ms": t.p95_ms,
                "samples": t.samples,
            }
            for t in timings
        ],
    }


# --- pipeline core ------------------------------------------------------------

_SENTINEL = object()


def _pipeline_windows(
    stream: EventStream,
    detector,
    window_us: int,
    n_slices: int,
    parallel: bool,
    skip_window=None,
):
    """Run the staged loop over consecutive windows.

    Yields (index, start_us, msr, detections, stage_ns) in window order.
    ``skip_window`` may veto a window (by start time) before any work runs.
    """
    if len(stream) == 0:
        return
    n_windows = math.ceil((int(stream.t[-1]) + 1) / window_us)
    starts = [k * window_us for k in range(n_windows)]

    def produce_one(k: int, start: int):
        ns = {}
        t0 = time.perf_counter_ns()
        win = window(stream, start, window_us)
        t1 = time.perf_counter_ns()
        msr = build_msr(win, MsrConfig(window_us, n_slices, start))
        t2 = time.perf_counter_ns()
        prepared = detector.prepare(msr)
        t3 = time.perf_counter_ns()
        ns["data_processing"] = t1 - t0
        ns["image_generation"] = t2 - t1
        ns["input_construction"] = t3 - t2
        return (k, start, msr, prepared, ns)

    def consume_one(item, wait_ns: int):
        k, start, msr, prepared, ns = item
        t0 = time.perf_counter_ns()
        detections = detector.infer(msr, prepared)
        ns["inference"] = time.perf_counter_ns() - t0
        ns["other"] = wait_ns
        return (k, start, msr, detections, ns)

    if not parallel:
        for k, start in enumerate(starts):
            if skip_window is not None and skip_window(start):
                continue
            yield consume_one(produce_one(k, start), 0)
        return

    q: queue.Queue = queue.Queue(maxsize=4)

    def producer():
        try:
            for k, start in enumerate(starts):
                if skip_window is not None and skip_window(start):
                    continue
                q.put(produce_one(k, start))
        except BaseException as exc:  # propagate into the consumer
            q.put(exc)
            return
        q.put(_SENTINEL)

    worker = threading.Thread(target=producer, name="window-producer", daemon=True)
    worker.start()
    try:
        while True:
            t0 = time.perf_counter_ns()
            item = q.get()
            wait_ns = time.perf_counter_ns() - t0
            if item is _SENTINEL:
                break
            if isinstance(item, BaseException):
                raise item
            yield consume_one(item, wait_ns)
    finally:
        worker.join(timeout=10.0)


def _best_detection(detections: list[Detection]) -> Optional[Detection]:
    return detections[0] if detections else None


def run_eval(
    cfg: RunConfig,
    stream: EventStream,
    gt: GtInterpolator,
    detector_kind: Optional[str] = None,
    window_us: Optional[int] = None,
    n_slices: Optional[int] = None,
    parallel: bool = True,
) -> EvalReport:
    """Slide windows over the stream, detect, estimate bearings, and score.

    Windows whose midpoint lies outside the ground-truth span are skipped
    and counted. The per-window angular error compares the best detection's
    bearing against the ground truth interpolated at the window midpoint.
    """
    kind = detector_kind or cfg.detector_kind
    w_us = window_us or cfg.msr.window_us
    n_sl = n_slices or cfg.msr.n_slices
    if w_us % n_sl != 0:
        raise ConfigError(f"window {w_us} us is not divisible by {n_sl} slices")
    pose, sensor = cfg.platform, cfg.sensor

    if kind == "oracle":
        detector = OracleDetectorAdapter(gt, pose, sensor)
    elif kind == "reference":
        detector = ReferenceDetectorAdapter(pose, sensor, cfg.detector)
    else:
        raise ConfigError(f"unknown detector kind {kind!r}")

    n_total = 0
    n_skipped = 0
    results: list[WindowResult] = []
    stage_ns: dict[str, list[int]] = {name: [] for name in STAGES}

    def skip_window(start: int) -> bool:
        nonlocal n_total, n_skipped
        n_total += 1
        mid = start + w_us // 2
        if not gt.covers(mid):
            n_skipped += 1
            return True
        return False

    for k, start, msr, detections, ns in _pipeline_windows(
        stream, detector, w_us, n_sl, parallel, skip_window
    ):
        mid = start + w_us // 2
        t0 = time.perf_counter_ns()
        best = _best_detection(detections)
        estimate = None
        if best is not None:
            vec, sph = pixel_to_bearing(best.box.cx, best.box.cy, best.t, sensor, pose)
            estimate = (sph.theta_deg, sph.phi_deg, vec.as_array())
        ns["bearing_estimation"] = time.perf_counter_ns() - t0

        gt_sample = gt.sample(mid, pose, sensor)
        gamma = None
        if estimate is not None and gt_sample.in_fov:
            gamma = angular_error(estimate[2], gt_sample.bearing)
        results.append(WindowResult(k, mid, detections, gt_sample, estimate, gamma))
        for name in STAGES:
            if name in ns:
                stage_ns[name].append(ns[name])

    # -- aggregate -------------------------------------------------------
    in_fov = [r for r in results if r.gt is not None and r.gt.in_fov]
    detected = [r for r in in_fov if r.detections]
    false_positives = sum(
        len(r.detections) for r in results if not (r.gt is not None and r.gt.in_fov)
    )
    gammas = [r.gamma_deg for r in detected if r.gamma_deg is not None]

    det_per_image = [r.detections for r in results]
    gts_per_image = []
    for r in results:
        boxes: list[Box] = []
        if r.gt is not None and r.gt.in_fov:
            oracle_det = detect_oracle(r.gt, sensor, pose)
            if oracle_det is not None:
                boxes.append(oracle_det.box)
        gts_per_image.append(boxes)
    ap = compute_ap(det_per_image, gts_per_image)

    bearings_rows = []
    for r in results:
        if r.estimate is None or r.gt is None or not r.gt.in_fov:
            continue
        gt_sph = to_spherical(
            BearingVector(*[float(c) for c in r.gt.bearing], frame="platform")
        )
        bearings_rows.append(
            (
                r.mid_us,
                r.estimate[0],
                r.estimate[1],
                gt_sph.theta_deg,
                gt_sph.phi_deg,
                r.gamma_deg,
            )
        )
    detections_rows = [
        (d.t, d.box.cx, d.box.cy, d.box.w, d.box.h, d.score)
        for r in results
        for d in r.detections
    ]

    timings = [_summarize_stage(name, stage_ns[name]) for name in STAGES]
    totals = _per_window_totals(stage_ns)
    timings.append(_summarize_stage("subtotal", totals))

    return EvalReport(
        detector=kind,
        window_us=w_us,
        n_slices=n_sl,
        n_windows=n_total,
        n_skipped_no_gt=n_skipped,
        n_in_fov=len(in_fov),
        n_detected_in_fov=len(detected),
        false_positives=false_positives,
        recall=(len(detected) / len(in_fov)) if in_fov else None,
        errors=error_stats(gammas) if gammas else None,
        ap=ap,
        notes=[DESK_SCALE_NOTE],
        config_echo=cfg.to_dict(),
        bearings=bearings_rows,
        detections=detections_rows,
        timings=timings,
    )


def _per_window_totals(stage_ns: dict[str, list[int]]) -> list[int]:
    n = max((len(v) for v in stage_ns.values()), default=0)
    totals = [0] * n
    for samples in stage_ns.values():
        for i, v in enumerate(samples):
            totals[i] += v
    return totals


def run_bench(
    cfg: RunConfig,
    stream: EventStream,
    max_windows: Optional[int] = None,
    warmup: int = 5,
    parallel: bool = True,
) -> list[StageTiming]:
    """Time every pipeline stage over the stream's windows.

    Uses the reference detector (the oracle needs ground truth, which a
    latency benchmark should not). The first few windows are treated as
    warm-up and excluded from the statistics.
    """
    w_us = cfg.msr.window_us
    n_sl = cfg.msr.n_slices
    if len(stream) == 0:
        raise InsufficientDataError("bench: event stream is empty")
    available = math.ceil((int(stream.t[-1]) + 1) / w_us)
    n_windows = min(available, max_windows) if max_windows else available
    if n_windows < 10:
        raise InsufficientDataError(
            f"bench needs at least 10 windows, stream provides {n_windows}"
        )
    pose, sensor = cfg.platform, cfg.sensor
    detector = ReferenceDetectorAdapter(pose, sensor, cfg.detector)

    stage_ns: dict[str, list[int]] = {name: [] for name in STAGES}
    limit = n_windows * w_us

    def skip_window(start: int) -> bool:
        return start >= limit

    for k, start, msr, detections, ns in _pipeline_windows(
        stream, detector, w_us, n_sl, parallel, skip_window
    ):
        t0 = time.perf_counter_ns()
        best = _best_detection(detections)
        if best is not None:
            pixel_to_bearing(best.box.cx, best.box.cy, best.t, sensor, pose)
        ns["bearing_estimation"] = time.perf_counter_ns() - t0
        for name in STAGES:
            if name in ns:
                stage_ns[name].append(ns[name])

    drop = min(warmup, max(0, len(stage_ns["inference"]) - 1))
    trimmed = {name: samples[drop:] for name, samples in stage_ns.items()}
    timings = [_summarize_stage(name, trimmed[name]) for name in STAGES]
    timings.append(_summarize_stage("subtotal", _per_window_totals(trimmed)))
    return timings


# --- command-level wrappers (file I/O around the core) -------------------------

@dataclass
class SimulateOutput:
    events_path: str
    triggers_path: str
    ground_truth_path: str
    result: SimResult
    event_bytes: int


def cmd_simulate(cfg: RunConfig, out_dir, seed: Optional[int] = None) -> SimulateOutput:
    """Simulate the configured scene and write .evb + trigger + gt files."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    scene = cfg.scene.build_scene()
    result = simulate_sequence(
        scene,
        cfg.platform,
        cfg.sensor,
        cfg.scene.duration_us,
        seed=cfg.seed if seed is None else seed,
    )
    events_path = os.path.join(out_dir, "events.evb")
    triggers_path = os.path.join(out_dir, "triggers.csv")
    gt_path = os.path.join(out_dir, "ground_truth.csv")
    n_bytes = evio.write_events(result.stream, events_path)
    evio.write_timestamps_csv(result.triggers, triggers_path)
    write_ground_truth_csv(result.ground_truth, gt_path)
    return SimulateOutput(events_path, triggers_path, gt_path, result, n_bytes)


def write_ground_truth_csv(samples: Sequence[GroundTruthSample], destination) -> None:
    rows = ["t_us,bx,by,bz,in_fov,apparent_size_px"]
    for s in samples:
        bx, by, bz = (float(c) for c in s.bearing)
        rows.append(
            f"{s.t},{bx!r},{by!r},{bz!r},{int(s.in_fov)},{float(s.apparent_size)!r}"
        )
    text = "\n".join(rows) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", encoding="utf-8") as fh:
            fh.write(text)


def read_ground_truth_csv(source) -> GtInterpolator:
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    ts, bearings, apparent = [], [], []
    for line in lines[1:]:
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        ts.append(int(parts[0]))
        bearings.append([float(parts[1]), float(parts[2]), float(parts[3])])
        apparent.append(float(parts[5]))
    return GtInterpolator(
        np.asarray(ts, dtype=np.int64), np.asarray(bearings), np.asarray(apparent)
    )


def write_bearings_csv(rows: Sequence[tuple], destination) -> None:
    out = ["t_us,theta_est_deg,phi_est_deg,theta_gt_deg,phi_gt_deg,gamma_deg"]
    for t, te, pe, tg, pg, g in rows:
        out.append(f"{t},{te!r},{pe!r},{tg!r},{pg!r},{g!r}")
    _write_text(destination, "\n".join(out) + "\n")


def write_detections_csv(rows: Sequence[tuple], destination) -> None:
    out = ["t_us,cx,cy,w,h,score"]
    for t, cx, cy, w, h, score in rows:
        out.append(f"{t},{cx!r},{cy!r},{w!r},{h!r},{score!r}")
    _write_text(destination, "\n".join(out) + "\n")


def _write_text(destination, text: str) -> None:
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", encoding="utf-8") as fh:
            fh.write(text)


def write_report_json(report: EvalReport, destination) -> None:
    _write_text(
        destination,
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n",
    )


def write_timings_json(timings: Sequence[StageTiming], destination) -> None:
    _write_text(
        destination, json.dumps(timings_to_json_dict(timings), indent=2, sort_keys=True) + "\n"
    )


def cmd_eval(
    cfg: RunConfig,
    events_path,
    gt_path,
    out_dir,
    detector_kind: Optional[str] = None,
    window_us: Optional[int] = None,
    n_slices: Optional[int] = None,
    parallel: bool = True,
    plots: bool = False,
    dump_slices: int = 0,
) -> EvalReport:
    """File-level eval: reads inputs, runs the loop, writes report artifacts."""
    import os

    stream = evio.read_events(events_path)
    gt = read_ground_truth_csv(gt_path)
    report = run_eval(
        cfg,
        stream,
        gt,
        detector_kind=detector_kind,
        window_us=window_us,
        n_slices=n_slices,
        parallel=parallel,
    )
    os.makedirs(out_dir, exist_ok=True)
    write_report_json(report, os.path.join(out_dir, "report.json"))
    write_timings_json(report.timings, os.path.join(out_dir, "timings.json"))
    write_bearings_csv(report.bearings, os.path.join(out_dir, "bearings.csv"))
    write_detections_csv(report.detections, os.path.join(out_dir, "detections.csv"))
    if plots:
        from .plots import svg_timeseries, write_svg

        t_s = [row[0] * 1e-6 for row in report.bearings]
        write_svg(
            os.path.join(out_dir, "azimuth.svg"),
            svg_timeseries(
                {
                    "estimated": (t_s, [row[1] for row in report.bearings]),
                    "ground truth": (t_s, [row[3] for row in report.bearings]),
                },
                "Azimuth vs time",
                "time [s]",
                "azimuth [deg]",
            ),
        )
        write_svg(
            os.path.join(out_dir, "elevation.svg"),
            svg_timeseries(
                {
                    "estimated": (t_s, [row[2] for row in report.bearings]),
                    "ground truth": (t_s, [row[4] for row in report.bearings]),
                },
                "Elevation vs time",
                "time [s]",
                "elevation [deg]",
            ),
        )
    if dump_slices > 0:
        w_us = window_us or cfg.msr.window_us
        n_sl = n_slices or cfg.msr.n_slices
        for k in range(dump_slices):
            msr = build_msr(stream, MsrConfig(w_us, n_sl, k * w_us))
            for i, grid in enumerate(msr.slices):
                write_pgm(
                    slice_to_image(grid, clip=3),
                    os.path.join(out_dir, f"window{k:04d}_slice{i}.pgm"),
                )
    return report


def cmd_bench(
    cfg: RunConfig,
    events_path,
    out_dir,
    max_windows: Optional[int] = None,
    parallel: bool = True,
) -> list[StageTiming]:
    import os

    stream = evio.read_events(events_path)
    timings = run_bench(cfg, stream, max_windows=max_windows, parallel=parallel)
    os.makedirs(out_dir, exist_ok=True)
    write_timings_json(timings, os.path.join(out_dir, "timings.json"))
    return timings


def cmd_demux(cfg: RunConfig, triggers_path, out_dir) -> tuple[int, int, int]:
    """Split a merged trigger file into pps/rotation/unknown CSVs."""
    import os

    merged = evio.read_timestamps_csv(triggers_path)
    pps, rotation, unknown = evio.demux_triggers(
        merged,
        cfg.demux.pps_period_us,
        cfg.platform.rotation_period_us(),
        cfg.demux.jitter_tolerance_us,
    )
    os.makedirs(out_dir, exist_ok=True)
    evio.write_timestamps_csv(pps, os.path.join(out_dir, "pps.csv"))
    evio.write_timestamps_csv(rotation, os.path.join(out_dir, "rotation.csv"))
    evio.write_timestamps_csv(unknown, os.path.join(out_dir, "unknown.csv"))
    return len(pps), len(rotation), len(unknown)
