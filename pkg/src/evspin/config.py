"""Structured run configuration (JSON) with hardware-mirroring defaults.

Every field has a default so an empty document is a valid config: a 640x480
sensor with a 77.32 x 61.93 degree field of view, a platform spinning at
0.95 rad/s with a 35-degree upward tilt, 5 slices over a 33,335 us window,
and a standard scene (landmark rings plus one orbiting disk target).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .detection import DetectorParams
from .errors import ConfigError
from .events import SensorConfig
from .geometry import PlatformPose
from .representation import MsrConfig
from .sim import Scene

ORBIT_WAYPOINT_STEP_US = 50_000  # dense enough that chord error is sub-mm


@dataclass(frozen=True)
class RingSpec:
    """Evenly spaced point landmarks on a circle of constant elevation."""

    count: int = 24
    range_m: float = 30.0
    elevation_deg: float = 12.0
    contrast: float = 2.4

    def points(self) -> np.ndarray:
        az = np.linspace(0.0, 2.0 * math.pi, self.count, endpoint=False)
        el = math.radians(self.elevation_deg)
        r_h = self.range_m * math.cos(el)
        pts = np.zeros((self.count, 4))
        pts[:, 0] = r_h * np.sin(az)
        pts[:, 1] = self.range_m * math.sin(el)
        pts[:, 2] = r_h * np.cos(az)
        pts[:, 3] = self.contrast
        return pts


@dataclass(frozen=True)
class OrbitSpec:
    """Circular constant-height target path around the device."""

    range_m: float = 6.0
    height_m: float = 4.2
    angular_rate_rad_s: float = -1.0
    start_azimuth_deg: float = 0.0

    def waypoints(self, duration_us: int) -> np.ndarray:
        ts = np.arange(0, duration_us + ORBIT_WAYPOINT_STEP_US, ORBIT_WAYPOINT_STEP_US)
        az = math.radians(self.start_azimuth_deg) + self.angular_rate_rad_s * ts * 1e-6
        wp = np.zeros((len(ts), 4))
        wp[:, 0] = ts
        wp[:, 1] = self.range_m * np.sin(az)
        wp[:, 2] = self.height_m
        wp[:, 3] = self.range_m * np.cos(az)
        return wp


@dataclass(frozen=True)
class SceneSettings:
    duration_us: int = 10_000_000
    dt_us: int = 1000
    contrast_threshold: float = 0.25
    noise_rate_hz_per_px: float = 0.02
    landmark_rings: tuple[RingSpec, ...] = (
        RingSpec(elevation_deg=12.0),
        RingSpec(elevation_deg=50.0),
        RingSpec(elevation_deg=62.0),
    )
    landmark_points: tuple[tuple[float, float, float, float], ...] = ()
    drone_radius_m: float = 0.15
    drone_contrast: float = -2.4
    drone_orbit: OrbitSpec | None = field(default_factory=OrbitSpec)
    drone_waypoints: tuple[tuple[float, float, float, float], ...] = ()
    carrier_waypoints: tuple[tuple[float, float, float, float], ...] | None = None

    def build_scene(self) -> Scene:
        points = [ring.points() for ring in self.landmark_rings]
        if self.landmark_points:
            points.append(np.asarray(self.landmark_points, dtype=np.float64))
        landmarks = (
            np.concatenate(points) if points else np.empty((0, 4), dtype=np.float64)
        )
        if self.drone_waypoints:
            waypoints = np.asarray(self.drone_waypoints, dtype=np.float64)
        elif self.drone_orbit is not None:
            waypoints = self.drone_orbit.waypoints(self.duration_us)
        else:
            raise ConfigError("scene.drone: provide either waypoints or an orbit")
        carrier = (
            np.asarray(self.carrier_waypoints, dtype=np.float64)
            if self.carrier_waypoints
            else None
        )
        return Scene(
            landmarks=landmarks,
            drone_waypoints=waypoints,
            drone_radius_m=self.drone_radius_m,
            drone_contrast=self.drone_contrast,
            noise_rate_hz_per_px=self.noise_rate_hz_per_px,
            contrast_threshold=self.contrast_threshold,
            dt_us=self.dt_us,
            carrier_waypoints=carrier,
        )


@dataclass(frozen=True)
class DemuxSettings:
    pps_period_us: float = 1_000_000.0
    jitter_tolerance_us: float = 500.0


@dataclass(frozen=True)
class RunConfig:
    sensor: SensorConfig = field(default_factory=SensorConfig)
    platform: PlatformPose = field(default_factory=PlatformPose)
    msr: MsrConfig = field(default_factory=MsrConfig)
    detector_kind: str = "reference"
    detector: DetectorParams = field(default_factory=DetectorParams)
    demux: DemuxSettings = field(default_factory=DemuxSettings)
    scene: SceneSettings = field(default_factory=SceneSettings)
    seed: int = 7
    output_dir: str = "out"

    def __post_init__(self):
        if self.detector_kind not in ("reference", "oracle"):
            raise ConfigError(
                f"detector.kind must be 'reference' or 'oracle', got {self.detector_kind!r}"
            )

    def rotation_period_us(self) -> float:
        return self.platform.rotation_period_us()

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "sensor": _public_fields(self.sensor),
            "platform": _public_fields(self.platform),
            "msr": {"window_us": self.msr.window_us, "slices": self.msr.n_slices},
            "detector": {"kind": self.detector_kind, **_public_fields(self.detector)},
            "demux": _public_fields(self.demux),
            "scene": _scene_to_dict(self.scene),
            "seed": self.seed,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        ctx = _Parser(doc, path="config")
        sensor = ctx.sub("sensor").build(SensorConfig)
        platform = ctx.sub("platform").build(PlatformPose)
        msr_ctx = ctx.sub("msr")
        msr = _checked(
            "config.msr",
            lambda: MsrConfig(
                window_us=msr_ctx.get("window_us", int, MsrConfig().window_us),
                n_slices=msr_ctx.get("slices", int, MsrConfig().n_slices),
            ),
        )
        msr_ctx.finish()
        det_ctx = ctx.sub("detector")
        detector_kind = det_ctx.get("kind", str, "reference")
        detector = det_ctx.build(DetectorParams)
        demux = ctx.sub("demux").build(DemuxSettings)
        scene = _scene_from_parser(ctx.sub("scene"))
        seed = ctx.get("seed", int, 7)
        output_dir = ctx.get("output_dir", str, "out")
        ctx.finish()
        return _checked(
            "config",
            lambda: cls(
                sensor=sensor,
                platform=platform,
                msr=msr,
                detector_kind=detector_kind,
                detector=detector,
                demux=demux,
                scene=scene,
                seed=seed,
                output_dir=output_dir,
            ),
        )

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top-level document must be an object")
        return cls.from_dict(doc)


def _public_fields(obj) -> dict:
    return {k: v for k, v in vars(obj).items()}


def _scene_to_dict(scene: SceneSettings) -> dict:
    doc: dict[str, Any] = {
        "duration_us": scene.duration_us,
        "dt_us": scene.dt_us,
        "contrast_threshold": scene.contrast_threshold,
        "noise_rate_hz_per_px": scene.noise_rate_hz_per_px,
        "landmark_rings": [_public_fields(r) for r in scene.landmark_rings],
        "landmark_points": [list(p) for p in scene.landmark_points],
        "drone": {
            "radius_m": scene.drone_radius_m,
            "contrast": scene.drone_contrast,
        },
    }
    if scene.drone_waypoints:
        doc["drone"]["waypoints"] = [list(p) for p in scene.drone_waypoints]
    elif scene.drone_orbit is not None:
        doc["drone"]["orbit"] = _public_fields(scene.drone_orbit)
    if scene.carrier_waypoints is not None:
        doc["carrier_waypoints"] = [list(p) for p in scene.carrier_waypoints]
    return doc


class _Parser:
    """Dict reader that tracks the field path and rejects unknown keys."""

    def __init__(self, doc: dict, path: str):
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: expected an object")
        self.doc = dict(doc)
        self.path = path

    def get(self, key: str, kind, default):
        if key not in self.doc:
            return default
        value = self.doc.pop(key)
        if kind is float and isinstance(value, int):
            value = float(value)
        if kind is int and isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
            raise ConfigError(
                f"{self.path}.{key}: expected {kind.__name__}, got {type(value).__name__}"
            )
        return value

    def raw(self, key: str, default=None):
        return self.doc.pop(key, default)

    def sub(self, key: str) -> "_Parser":
        return _Parser(self.doc.pop(key, {}), f"{self.path}.{key}")

    def build(self, cls):
        """Populate a dataclass's fields by name, then require emptiness."""
        kwargs = {}
        defaults = cls()
        for name in vars(defaults):
            if name in self.doc:
                value = self.doc.pop(name)
                current = getattr(defaults, name)
                if isinstance(current, float) and isinstance(value, int):
                    value = float(value)
                kwargs[name] = value
        self.finish()
        return _checked(self.path, lambda: cls(**kwargs))

    def finish(self):
        if self.doc:
            raise ConfigError(f"{self.path}: unknown fields {sorted(self.doc)}")


def _checked(path: str, builder):
    try:
        return builder()
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _scene_from_parser(ctx: _Parser) -> SceneSettings:
    rings_doc = ctx.raw("landmark_rings", None)
    rings: tuple[RingSpec, ...]
    if rings_doc is None:
        rings = SceneSettings().landmark_rings
    else:
        if not isinstance(rings_doc, list):
            raise ConfigError(f"{ctx.path}.landmark_rings: expected a list")
        rings = tuple(
            _Parser(r, f"{ctx.path}.landmark_rings[{i}]").build(RingSpec)
            for i, r in enumerate(rings_doc)
        )
    points = tuple(
        tuple(float(c) for c in p) for p in ctx.raw("landmark_points", [])
    )

    drone_doc = ctx.raw("drone", None)
    defaults = SceneSettings()
    radius, contrast = defaults.drone_radius_m, defaults.drone_contrast
    orbit, waypoints = defaults.drone_orbit, ()
    if drone_doc is not None:
        d = _Parser(drone_doc, f"{ctx.path}.drone")
        radius = d.get("radius_m", float, radius)
        contrast = d.get("contrast", float, contrast)
        wp_doc = d.raw("waypoints", None)
        orbit_doc = d.raw("orbit", None)
        d.finish()
        if wp_doc is not None and orbit_doc is not None:
            raise ConfigError(f"{ctx.path}.drone: give either waypoints or orbit, not both")
        if wp_doc is not None:
            waypoints = tuple(tuple(float(c) for c in p) for p in wp_doc)
            orbit = None
        elif orbit_doc is not None:
            orbit = _Parser(orbit_doc, f"{ctx.path}.drone.orbit").build(OrbitSpec)

    carrier_doc = ctx.raw("carrier_waypoints", None)
    carrier = (
        tuple(tuple(float(c) for c in p) for p in carrier_doc)
        if carrier_doc is not None
        else None
    )

    settings = _checked(
        ctx.path,
        lambda: SceneSettings(
            duration_us=ctx.get("duration_us", int, defaults.duration_us),
            dt_us=ctx.get("dt_us", int, defaults.dt_us),
            contrast_threshold=ctx.get(
                "contrast_threshold", float, defaults.contrast_threshold
            ),
            noise_rate_hz_per_px=ctx.get(
                "noise_rate_hz_per_px", float, defaults.noise_rate_hz_per_px
            ),
            landmark_rings=rings,
            landmark_points=points,
            drone_radius_m=radius,
            drone_contrast=contrast,
            drone_orbit=orbit,
            drone_waypoints=waypoints,
            carrier_waypoints=carrier,
        ),
    )
    ctx.finish()
    return settings
