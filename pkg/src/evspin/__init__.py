"""Spinning-event-camera target detection and bearing estimation, desk scale.

The pipeline: synthesize an event stream from a rotating tilted camera
observing landmarks and one moving aerial target, slice event windows into a
multi-slice representation, detect the independently moving target, estimate
its bearing, and score angular error, detection metrics, and per-stage
latency.
"""

from .config import RunConfig, SceneSettings
from .detection import (
    Box,
    Detection,
    DetectorParams,
    FcgParams,
    detect_oracle,
    detect_reference,
    fcg_forward,
)
from .errors import ConfigError, FormatError, InsufficientDataError
from .events import Event, EventStream, SensorConfig, validate_stream, window
from .geometry import (
    BearingVector,
    PlatformPose,
    SphericalBearing,
    angular_error,
    camera_to_platform,
    pixel_to_bearing,
    pixel_to_camera_ray,
    platform_angle,
    to_spherical,
)
from .harness import EvalReport, StageTiming, run_bench, run_eval
from .io import demux_triggers, read_events, write_events
from .metrics import ApReport, EiouBreakdown, ErrorStats, compute_ap, eiou_loss, error_stats, iou
from .representation import Msr, MsrConfig, build_msr, build_time_surface, slice_to_image
from .sim import GroundTruthSample, Scene, SimResult, simulate_sequence, world_to_pixel

__version__ = "0.1.0"

__all__ = [
    "ApReport",
    "BearingVector",
    "Box",
    "ConfigError",
    "Detection",
    "DetectorParams",
    "EiouBreakdown",
    "ErrorStats",
    "EvalReport",
    "Event",
    "EventStream",
    "FcgParams",
    "FormatError",
    "GroundTruthSample",
    "InsufficientDataError",
    "Msr",
    "MsrConfig",
    "PlatformPose",
    "RunConfig",
    "Scene",
    "SceneSettings",
    "SensorConfig",
    "SimResult",
    "SphericalBearing",
    "StageTiming",
    "angular_error",
    "build_msr",
    "build_time_surface",
    "camera_to_platform",
    "compute_ap",
    "demux_triggers",
    "detect_oracle",
    "detect_reference",
    "eiou_loss",
    "error_stats",
    "fcg_forward",
    "iou",
    "pixel_to_bearing",
    "pixel_to_camera_ray",
    "platform_angle",
    "read_events",
    "run_bench",
    "run_eval",
    "simulate_sequence",
    "slice_to_image",
    "to_spherical",
    "validate_stream",
    "window",
    "world_to_pixel",
    "write_events",
]
