"""Bearing-estimation geometry for a camera spinning about a vertical axis.

Frame conventions, pinned down once here and used everywhere:

* Camera frame: x right (+u), y down (+v), z along the optical axis.
* Platform frame: y is the rotation axis (up), z points along the zero
  direction (the heading at which the once-per-rotation trigger fires),
  x completes a right-handed frame.
* The camera is mounted rotated 180 degrees about its optical axis
  (camera y-down becomes platform y-up) and tilted upward by ``tilt_deg``.

A pixel maps to a platform-frame direction via

    v_platform = R_spin(theta) @ R_tilt(alpha) @ R_MOUNT @ K^-1 (u, v, 1)

with theta the platform angle at the observation instant. Azimuth is
measured with the full-quadrant two-argument arctangent of (x, z) so the
panorama covers all 360 degrees; elevation is arcsin(y / |v|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import ConfigError
from .events import SensorConfig

TAU = 2.0 * math.pi

Frame = Literal["camera", "platform"]

#: 180-degree rotation about the optical axis: camera y-down -> platform y-up.
MOUNT = np.diag([-1.0, -1.0, 1.0])


@dataclass(frozen=True)
class PlatformPose:
    """Spin-state of the platform: rate, zero-crossing time, mounting tilt."""

    omega_rad_s: float = 0.95
    t0_us: int = 0
    tilt_deg: float = 35.0

    def __post_init__(self):
        if not math.isfinite(self.omega_rad_s):
            raise ConfigError("platform: omega must be finite")
        if not (0.0 <= self.tilt_deg < 90.0):
            raise ConfigError("platform: tilt must lie in [0, 90) degrees")

    def rotation_period_us(self) -> float:
        if self.omega_rad_s == 0.0:
            return math.inf
        return TAU / abs(self.omega_rad_s) * 1e6

    @classmethod
    def from_triggers(cls, rotation_ticks_us: Sequence[int], tilt_deg: float = 35.0,
                      spin_sign: int = 1) -> "PlatformPose":
        """Recover pose from once-per-rotation trigger times.

        The rate is 2*pi over the mean tick interval and t0 is refreshed to
        the latest tick, so stepper-speed drift does not accumulate.
        """
        ticks = np.asarray(rotation_ticks_us, dtype=np.int64)
        if len(ticks) < 2:
            from .errors import InsufficientDataError

            raise InsufficientDataError("need at least 2 rotation triggers")
        mean_period_s = float(np.diff(ticks).mean()) * 1e-6
        omega = (TAU / mean_period_s) * (1 if spin_sign >= 0 else -1)
        return cls(omega_rad_s=omega, t0_us=int(ticks[-1]), tilt_deg=tilt_deg)


@dataclass(frozen=True)
class BearingVector:
    x: float
    y: float
    z: float
    frame: Frame = "platform"

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise ValueError("bearing vector components must be finite")
        if self.x == 0.0 and self.y == 0.0 and self.z == 0.0:
            raise ValueError("bearing vector must not be the zero vector")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


@dataclass(frozen=True)
class SphericalBearing:
    """Azimuth/elevation pair in degrees: theta in (-180, 180], phi in [-90, 90]."""

    theta_deg: float
    phi_deg: float


def platform_angle(t_us: int, pose: PlatformPose) -> float:
    """Platform angle (t - t0) * omega, wrapped to [0, 2*pi)."""
    theta = (float(t_us - pose.t0_us) * 1e-6 * pose.omega_rad_s) % TAU
    if theta >= TAU:  # guard against rounding at the wrap point
        theta -= TAU
    return theta


def spin_matrix(theta_rad: float) -> np.ndarray:
    """Rotation by theta about the platform's y (rotation) axis."""
    c, s = math.cos(theta_rad), math.sin(theta_rad)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def tilt_matrix(tilt_deg: float) -> np.ndarray:
    """Rotation raising the optical axis by ``tilt_deg`` toward +y."""
    a = math.radians(tilt_deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])


def platform_from_camera_matrix(theta_rad: float, tilt_deg: float) -> np.ndarray:
    """Full camera->platform rotation R_spin @ R_tilt @ R_MOUNT."""
    return spin_matrix(theta_rad) @ tilt_matrix(tilt_deg) @ MOUNT


def pixel_to_camera_ray(u: float, v: float, sensor: SensorConfig) -> BearingVector:
    """Back-project a (sub)pixel to the camera-frame ray ((u-cx)/fx, (v-cy)/fy, 1).

    The ray is intentionally not unit length; the spherical conversion is
    scale-invariant, and the z=1 form keeps K @ ray == (u, v, 1) exact.
    """
    return BearingVector(
        (u - sensor.cx) / sensor.fx, (v - sensor.cy) / sensor.fy, 1.0, frame="camera"
    )


def camera_to_platform(ray: BearingVector, theta_rad: float, tilt_deg: float) -> BearingVector:
    """Rotate a camera-frame ray into the platform frame at platform angle theta."""
    if ray.frame != "camera":
        raise ValueError("camera_to_platform expects a camera-frame vector")
    out = platform_from_camera_matrix(theta_rad, tilt_deg) @ ray.as_array()
    return BearingVector(float(out[0]), float(out[1]), float(out[2]), frame="platform")


def platform_points_to_camera(points: np.ndarray, theta_rad: float,
                              tilt_deg: float) -> np.ndarray:
    """Vectorized platform->camera transform for an (N, 3) array of points."""
    rot = platform_from_camera_matrix(theta_rad, tilt_deg)
    return np.asarray(points, dtype=np.float64) @ rot  # == (rot.T @ p.T).T


def project_platform_points(points: np.ndarray, theta_rad: float, tilt_deg: float,
                            sensor: SensorConfig):
    """Project (N, 3) platform-frame points to continuous pixels.

    Returns (u, v, depth, valid); valid is False where the point is behind
    the camera (depth <= 0) or projects outside [0, width) x [0, height).
    """
    cam = platform_points_to_camera(np.atleast_2d(points), theta_rad, tilt_deg)
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = sensor.fx * cam[:, 0] / z + sensor.cx
        v = sensor.fy * cam[:, 1] / z + sensor.cy
    valid = (z > 0) & (u >= 0) & (u < sensor.width) & (v >= 0) & (v < sensor.height)
    return u, v, z, valid


def to_spherical(vec: BearingVector) -> SphericalBearing:
    """Convert a platform-frame vector to azimuth/elevation degrees.

    Elevation phi = arcsin(y / |v|). Azimuth theta = atan2(x, z), covering
    the full panorama; at the poles (x = z = 0) theta is 0 by convention.
    """
    if vec.frame != "platform":
        raise ValueError("to_spherical expects a platform-frame vector")
    n = vec.norm()
    phi = math.degrees(math.asin(max(-1.0, min(1.0, vec.y / n))))
    if vec.x == 0.0 and vec.z == 0.0:
        theta = 0.0
    else:
        theta = math.degrees(math.atan2(vec.x, vec.z))
    if theta <= -180.0:
        theta += 360.0
    return SphericalBearing(theta_deg=theta, phi_deg=phi)


def from_spherical(theta_deg: float, phi_deg: float) -> BearingVector:
    """Unit platform-frame vector for an azimuth/elevation pair."""
    th, ph = math.radians(theta_deg), math.radians(phi_deg)
    return BearingVector(
        math.cos(ph) * math.sin(th), math.sin(ph), math.cos(ph) * math.cos(th),
        frame="platform",
    )


def pixel_to_bearing(u: float, v: float, t_us: int, sensor: SensorConfig,
                     pose: PlatformPose) -> tuple[BearingVector, SphericalBearing]:
    """Full pixel->bearing chain at observation time t.

    Chains the platform angle, camera-ray back-projection, and the
    camera->platform rotation; the returned platform vector is
    unit-normalized.
    """
    theta = platform_angle(t_us, pose)
    ray = pixel_to_camera_ray(u, v, sensor)
    vec = camera_to_platform(ray, theta, pose.tilt_deg)
    n = vec.norm()
    unit = BearingVector(vec.x / n, vec.y / n, vec.z / n, frame="platform")
    return unit, to_spherical(unit)


def _as_xyz(v) -> np.ndarray:
    if isinstance(v, BearingVector):
        return v.as_array()
    arr = np.asarray(v, dtype=np.float64)
    if arr.shape != (3,):
        raise ValueError("expected a 3-vector")
    return arr


def angular_error(v_est, v_gt) -> float:
    """True 3D angle between two directions, in degrees.

    Inputs are normalized internally; the dot product is clamped to [-1, 1]
    to guard against floating-point drift just outside the arccos domain.
    """
    a, b = _as_xyz(v_est), _as_xyz(v_gt)
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("angular_error requires non-zero vectors")
    dot = float(np.dot(a, b)) / (na * nb)
    return math.degrees(math.acos(max(-1.0, min(1.0, dot))))
