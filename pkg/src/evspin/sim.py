"""Synthetic event streams from a parametric scene and a spinning camera.

The renderer keeps a per-pixel log-intensity buffer updated incrementally:
each step projects the scene entities (point landmarks splatted bilinearly,
the drone as an anti-aliased filled disk), and every pixel whose
log-intensity moved by at least the contrast threshold since its last event
emits one event per full threshold crossing (signed, capped per step, with a
timestamp drawn uniformly inside the step). Poisson background noise is
appended independently. The output therefore exhibits the two phenomena the
downstream detector must separate: rotation-induced background streaming and
independent target motion.

Synchronization triggers are emitted analytically: one rotation trigger per
zero-direction passage and one PPS tick per simulated second, merged into a
single sorted timestamp stream (separation is the demultiplexer's job).
Ground truth is sampled once per step with the exact drone bearing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError
from .events import EventStream, SensorConfig
from .geometry import PlatformPose, platform_angle, project_platform_points

MAX_EVENTS_PER_PIXEL_PER_STEP = 8  # real sensors saturate
PPS_PERIOD_US = 1_000_000


@dataclass(frozen=True)
class Scene:
    """World content: point landmarks plus one moving disk target.

    ``landmarks`` is (M, 4): world x, y, z in meters and per-point
    log-intensity contrast. ``drone_waypoints`` is (K, 4): t_us, x, y, z;
    the trajectory is piecewise-linear and must cover the simulated span.
    ``carrier_waypoints`` (optional, same layout) translate the whole device;
    world coordinates are interpreted relative to the carrier position.
    """

    landmarks: np.ndarray
    drone_waypoints: np.ndarray
    drone_radius_m: float
    drone_contrast: float
    noise_rate_hz_per_px: float = 0.0
    contrast_threshold: float = 0.25
    dt_us: int = 1000
    carrier_waypoints: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.dt_us <= 0:
            raise ConfigError("scene: dt must be positive")
        if self.noise_rate_hz_per_px < 0:
            raise ConfigError("scene: noise rate must be non-negative")
        if self.contrast_threshold <= 0:
            raise ConfigError("scene: contrast threshold must be positive")
        if self.drone_radius_m <= 0:
            raise ConfigError("scene: drone radius must be positive")
        wp = np.asarray(self.drone_waypoints, dtype=np.float64)
        if wp.ndim != 2 or wp.shape[0] < 1 or wp.shape[1] != 4:
            raise ConfigError("scene: drone trajectory requires (K, 4) waypoints")
        object.__setattr__(self, "drone_waypoints", wp)
        lm = np.asarray(self.landmarks, dtype=np.float64).reshape(-1, 4)
        object.__setattr__(self, "landmarks", lm)
        if self.carrier_waypoints is not None:
            cw = np.asarray(self.carrier_waypoints, dtype=np.float64)
            if cw.ndim != 2 or cw.shape[1] != 4:
                raise ConfigError("scene: carrier waypoints must be (K, 4)")
            object.__setattr__(self, "carrier_waypoints", cw)


@dataclass(frozen=True)
class GroundTruthSample:
    t: int
    bearing: np.ndarray  # unit 3-vector, platform frame
    in_fov: bool
    apparent_size: float  # projected disk diameter, pixels (0 behind camera)


@dataclass(frozen=True)
class SimResult:
    stream: EventStream
    triggers: np.ndarray  # merged PPS + rotation timestamps, sorted
    ground_truth: list[GroundTruthSample] = field(default_factory=list)
    pps_times: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    rotation_times: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))


def world_to_pixel(
    point_w, t_us: int, pose: PlatformPose, sensor: SensorConfig
) -> Optional[tuple[float, float, float]]:
    """Forward camera model: world point -> (u, v, depth) or None.

    The world frame coincides with the platform frame (device at the
    origin); None when the point is behind the camera or projects outside
    the sensor.
    """
    u, v, z, valid = project_platform_points(
        np.asarray(point_w, dtype=np.float64),
        platform_angle(t_us, pose),
        pose.tilt_deg,
        sensor,
    )
    if not valid[0]:
        return None
    return float(u[0]), float(v[0]), float(z[0])


def _interp_track(waypoints: np.ndarray, times_us: np.ndarray) -> np.ndarray:
    """Piecewise-linear (N, 3) positions at the query times."""
    t = waypoints[:, 0]
    return np.stack(
        [np.interp(times_us, t, waypoints[:, k]) for k in (1, 2, 3)], axis=1
    )


def rotation_trigger_times(pose: PlatformPose, duration_us: int) -> np.ndarray:
    """Times in [0, duration) at which the platform crosses the zero direction."""
    if pose.omega_rad_s == 0.0:
        return np.empty(0, dtype=np.int64)
    period = pose.rotation_period_us()
    k_first = math.ceil((0 - pose.t0_us) / period)
    k_last = math.floor((duration_us - 1 - pose.t0_us) / period)
    if k_last < k_first:
        return np.empty(0, dtype=np.int64)
    ks = np.arange(k_first, k_last + 1, dtype=np.float64)
    return np.rint(pose.t0_us + ks * period).astype(np.int64)


def pps_times(duration_us: int) -> np.ndarray:
    return np.arange(0, duration_us, PPS_PERIOD_US, dtype=np.int64)


def _splat_points(u, v, contrast, width, height):
    """Bilinear 2x2 splat of sub-pixel points; returns (flat_idx, values)."""
    ok = (u >= 0) & (u < width - 1) & (v >= 0) & (v < height - 1)
    if not ok.any():
        return np.empty(0, dtype=np.int64), np.empty(0)
    u, v, contrast = u[ok], v[ok], contrast[ok]
    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    wu, wv = u - u0, v - v0
    base = v0 * width + u0
    idx = np.concatenate([base, base + 1, base + width, base + width + 1])
    vals = np.concatenate(
        [
            contrast * (1 - wu) * (1 - wv),
            contrast * wu * (1 - wv),
            contrast * (1 - wu) * wv,
            contrast * wu * wv,
        ]
    )
    return idx, vals


def _splat_disk(u, v, radius_px, contrast, width, height):
    """Anti-aliased filled disk: coverage ramps linearly over one pixel."""
    pad = radius_px + 1.0
    x0, x1 = int(math.floor(u - pad)), int(math.ceil(u + pad))
    y0, y1 = int(math.floor(v - pad)), int(math.ceil(v + pad))
    x0, x1 = max(x0, 0), min(x1, width - 1)
    y0, y1 = max(y0, 0), min(y1, height - 1)
    if x1 < x0 or y1 < y0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    xs = np.arange(x0, x1 + 1)
    ys = np.arange(y0, y1 + 1)
    dist = np.hypot(xs[None, :] - u, ys[:, None] - v)
    coverage = np.clip(radius_px - dist + 0.5, 0.0, 1.0)
    yy, xx = np.nonzero(coverage)
    if len(yy) == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    idx = (ys[yy] * width + xs[xx]).astype(np.int64)
    return idx, contrast * coverage[yy, xx]


def simulate_sequence(
    scene: Scene,
    pose: PlatformPose,
    sensor: SensorConfig,
    duration_us: int,
    seed: int = 0,
) -> SimResult:
    """Render the scene through the spinning camera and threshold events.

    Deterministic for a fixed seed. Raises ConfigError for degenerate scenes
    (no drone trajectory, or one not covering the requested duration).
    """
    if duration_us <= 0:
        raise ConfigError("simulate: duration must be positive")
    wp = scene.drone_waypoints
    if wp[0, 0] > 0 or wp[-1, 0] < duration_us:
        raise ConfigError(
            "scene: drone trajectory does not cover the simulated duration"
        )

    rng = np.random.default_rng(seed)
    width, height = sensor.width, sensor.height
    n_px = width * height
    c_thr = scene.contrast_threshold

    n_steps = math.ceil(duration_us / scene.dt_us)
    step_starts = np.arange(n_steps, dtype=np.int64) * scene.dt_us
    drone_pos = _interp_track(wp, step_starts)
    if scene.carrier_waypoints is not None:
        drone_pos = drone_pos - _interp_track(scene.carrier_waypoints, step_starts)
        carrier_lm = _interp_track(scene.carrier_waypoints, step_starts)
    else:
        carrier_lm = None

    frame = np.zeros(n_px)
    reference = np.zeros(n_px)
    prev_idx = np.empty(0, dtype=np.int64)
    prev_vals = np.empty(0)

    ev_t: list[np.ndarray] = []
    ev_flat: list[np.ndarray] = []
    ev_p: list[np.ndarray] = []
    ground_truth: list[GroundTruthSample] = []

    lm_points = scene.landmarks[:, :3]
    lm_contrast = scene.landmarks[:, 3]

    for k in range(n_steps):
        t_k = int(step_starts[k])
        step_len = min(scene.dt_us, duration_us - t_k)
        theta = platform_angle(t_k, pose)

        # Project and splat the scene at this instant.
        idx_parts, val_parts = [], []
        if len(lm_points):
            pts = lm_points if carrier_lm is None else lm_points - carrier_lm[k]
            u, v, z, _ = project_platform_points(pts, theta, pose.tilt_deg, sensor)
            front = z > 0
            li, lv = _splat_points(
                u[front], v[front], lm_contrast[front], width, height
            )
            idx_parts.append(li)
            val_parts.append(lv)

        dpos = drone_pos[k]
        du, dv, dz, d_valid = project_platform_points(
            dpos, theta, pose.tilt_deg, sensor
        )
        apparent = 0.0
        if dz[0] > 0:
            radius_px = sensor.fx * scene.drone_radius_m / dz[0]
            apparent = 2.0 * radius_px
            di, dvals = _splat_disk(
                float(du[0]), float(dv[0]), radius_px, scene.drone_contrast,
                width, height,
            )
            idx_parts.append(di)
            val_parts.append(dvals)

        norm = float(np.linalg.norm(dpos))
        if norm == 0.0:
            raise ConfigError("scene: drone trajectory passes through the origin")
        ground_truth.append(
            GroundTruthSample(
                t=t_k,
                bearing=dpos / norm,
                in_fov=bool(d_valid[0]),
                apparent_size=float(apparent),
            )
        )

        new_idx = np.concatenate(idx_parts) if idx_parts else np.empty(0, dtype=np.int64)
        new_vals = np.concatenate(val_parts) if val_parts else np.empty(0)

        # Incremental frame update: remove the previous contributions, add new.
        np.subtract.at(frame, prev_idx, prev_vals)
        np.add.at(frame, new_idx, new_vals)
        touched = np.unique(np.concatenate([prev_idx, new_idx]))
        prev_idx, prev_vals = new_idx, new_vals

        if len(touched):
            diff = frame[touched] - reference[touched]
            n_cross = np.minimum(
                np.abs(diff) // c_thr, MAX_EVENTS_PER_PIXEL_PER_STEP
            ).astype(np.int64)
            firing = n_cross > 0
            if firing.any():
                f_idx = touched[firing]
                f_n = n_cross[firing]
                f_sign = np.sign(diff[firing]).astype(np.int8)
                reference[f_idx] += f_n * c_thr * f_sign
                flat = np.repeat(f_idx, f_n)
                pol = np.repeat(f_sign, f_n)
                times = rng.integers(t_k, t_k + step_len, size=len(flat))
                order = np.argsort(times, kind="stable")
                ev_t.append(times[order])
                ev_flat.append(flat[order])
                ev_p.append(pol[order])

        if scene.noise_rate_hz_per_px > 0:
            expected = scene.noise_rate_hz_per_px * n_px * step_len * 1e-6
            n_noise = int(rng.poisson(expected))
            if n_noise:
                flat = rng.integers(0, n_px, size=n_noise)
                pol = (rng.integers(0, 2, size=n_noise) * 2 - 1).astype(np.int8)
                times = rng.integers(t_k, t_k + step_len, size=n_noise)
                order = np.argsort(times, kind="stable")
                ev_t.append(times[order])
                ev_flat.append(flat[order])
                ev_p.append(pol[order])

    if ev_t:
        t_all = np.concatenate(ev_t)
        flat_all = np.concatenate(ev_flat)
        p_all = np.concatenate(ev_p)
        # Steps are time-ordered; merge contrast and noise events per step.
        order = np.argsort(t_all, kind="stable")
        t_all, flat_all, p_all = t_all[order], flat_all[order], p_all[order]
        stream = EventStream(
            width, height, t_all, (flat_all % width), (flat_all // width), p_all
        )
    else:
        stream = EventStream(width, height)

    pps = pps_times(duration_us)
    rotation = rotation_trigger_times(pose, duration_us)
    merged = np.sort(np.concatenate([pps, rotation]))
    return SimResult(
        stream=stream,
        triggers=merged,
        ground_truth=ground_truth,
        pps_times=pps,
        rotation_times=rotation,
    )
