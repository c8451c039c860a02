"""Detectors over the sliced event representation.

Two interchangeable detectors ship with the pipeline:

* an oracle that projects ground truth through the forward camera model
  (isolates bearing-chain accuracy from detector accuracy), and
* a classical reference detector that finds connected event components per
  slice, tracks them across slices, and keeps the tracks whose image motion
  is inconsistent with the known rotation-induced background flow.

The feature-channel gating kernel (a squeeze-and-excitation style gate used
by learned detectors over this representation) is also provided as a
standalone, numerically verified operation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.special import expit

from .errors import ConfigError
from .events import SensorConfig
from .geometry import (
    PlatformPose,
    camera_to_platform,
    pixel_to_camera_ray,
    platform_angle,
    project_platform_points,
)
from .representation import Msr

_EIGHT_CONNECTED = np.ones((3, 3), dtype=np.int32)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in center-size form, pixels (continuous)."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError("box width and height must be positive")

    def corners(self) -> tuple[float, float, float, float]:
        """(x_min, y_min, x_max, y_max)."""
        return (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )

    @classmethod
    def from_corners(cls, x0: float, y0: float, x1: float, y1: float) -> "Box":
        return cls((x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)


@dataclass(frozen=True)
class Detection:
    box: Box
    score: float
    t: int  # representative timestamp, microseconds

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError("detection score must lie in [0, 1]")


# --- feature channel gating ---------------------------------------------------

@dataclass(frozen=True)
class FcgParams:
    """Gate weights: w_reduce (C_r x C) squeezes, w_expand (C x C_r) expands."""

    w_reduce: np.ndarray
    w_expand: np.ndarray

    def __post_init__(self):
        if self.w_reduce.ndim != 2 or self.w_expand.ndim != 2:
            raise ValueError("gate weights must be 2-D matrices")
        cr, c = self.w_reduce.shape
        if self.w_expand.shape != (c, cr):
            raise ValueError(
                f"w_expand shape {self.w_expand.shape} does not match "
                f"w_reduce {self.w_reduce.shape}"
            )
        if not (np.isfinite(self.w_reduce).all() and np.isfinite(self.w_expand).all()):
            raise ValueError("gate weights must be finite")


def fcg_gate(features: np.ndarray, w_reduce: np.ndarray, w_expand: np.ndarray) -> np.ndarray:
    """Per-channel gate values sigmoid(w_expand @ relu(w_reduce @ mean_hw(F)))."""
    if features.ndim != 3:
        raise ValueError(f"features must be (C, H, W), got shape {features.shape}")
    c = features.shape[0]
    if w_reduce.ndim != 2 or w_reduce.shape[1] != c:
        raise ValueError(
            f"w_reduce shape {np.shape(w_reduce)} does not accept {c} channels"
        )
    if np.shape(w_expand) != (c, w_reduce.shape[0]):
        raise ValueError(
            f"w_expand shape {np.shape(w_expand)} must be {(c, w_reduce.shape[0])}"
        )
    pooled = features.mean(axis=(1, 2))
    hidden = np.maximum(w_reduce @ pooled, 0.0)
    logits = w_expand @ hidden
    return expit(logits)


def fcg_forward(features: np.ndarray, w_reduce: np.ndarray, w_expand: np.ndarray) -> np.ndarray:
    """Channel-gated feature map: gate[c] * features[c, :, :].

    Gate values are strictly inside (0, 1), so the output never exceeds the
    input in magnitude and preserves its sign element-wise.
    """
    gate = fcg_gate(features, w_reduce, w_expand)
    return gate[:, None, None] * features


# --- oracle detector ----------------------------------------------------------

def detect_oracle(gt_sample, sensor: SensorConfig, pose: PlatformPose) -> Optional[Detection]:
    """Project a ground-truth sample into the image; None when out of view.

    The detection is centered on the exact (sub-pixel) projection with the
    sample's apparent size as the box side, score 1.0.
    """
    u, v, _, valid = project_platform_points(
        gt_sample.bearing, platform_angle(gt_sample.t, pose), pose.tilt_deg, sensor
    )
    if not valid[0]:
        return None
    side = max(float(gt_sample.apparent_size), 1.0)
    return Detection(
        box=Box(float(u[0]), float(v[0]), side, side), score=1.0, t=int(gt_sample.t)
    )


# --- reference detector -------------------------------------------------------

@dataclass(frozen=True)
class DetectorParams:
    """Thresholds for the velocity-consistency reference detector."""

    tau_e: int = 1               # |signed count| binarization threshold
    area_min: int = 6            # component pixel-count window
    area_max: int = 5000
    track_radius_px: float = 12.0   # nearest-neighbor gate between slices
    flow_tolerance_px: float = 1.5  # deviation from predicted background flow
    group_gap_px: float = 12.0      # candidate tracks closer than this merge
    density_ref: float = 0.25       # fill ratio that saturates the score

    def __post_init__(self):
        if self.tau_e < 1 or self.area_min < 1 or self.area_max < self.area_min:
            raise ConfigError("detector: invalid component thresholds")
        if min(self.track_radius_px, self.flow_tolerance_px, self.density_ref) <= 0:
            raise ConfigError("detector: radii and density_ref must be positive")


@dataclass(frozen=True)
class SliceComponent:
    """Connected event blob of one polarity in one slice."""

    slice_index: int
    centroid: tuple[float, float]  # (u, v)
    bbox: tuple[float, float, float, float]  # x_min, y_min, x_max, y_max (+1 exclusive)
    area: int
    polarity: int  # +1 or -1

    @property
    def fill_ratio(self) -> float:
        x0, y0, x1, y1 = self.bbox
        return self.area / max((x1 - x0) * (y1 - y0), 1.0)


def _label_mask(mask: np.ndarray, slice_index: int, polarity: int,
                params: DetectorParams) -> list[SliceComponent]:
    labels, n = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    comps: list[SliceComponent] = []
    if not n:
        return comps
    areas = np.bincount(labels.ravel(), minlength=n + 1)
    keep = np.nonzero((areas >= params.area_min) & (areas <= params.area_max))[0]
    keep = keep[keep > 0]
    if len(keep) == 0:
        return comps
    ys, xs = np.nonzero(mask)
    lab = labels[ys, xs]
    sum_x = np.bincount(lab, weights=xs, minlength=n + 1)
    sum_y = np.bincount(lab, weights=ys, minlength=n + 1)
    objects = ndimage.find_objects(labels)
    for label in keep:
        area = int(areas[label])
        sl_y, sl_x = objects[label - 1]
        comps.append(
            SliceComponent(
                slice_index=slice_index,
                centroid=(sum_x[label] / area, sum_y[label] / area),
                bbox=(
                    float(sl_x.start),
                    float(sl_y.start),
                    float(sl_x.stop),
                    float(sl_y.stop),
                ),
                area=area,
                polarity=polarity,
            )
        )
    return comps


def extract_components(msr: Msr, params: DetectorParams) -> list[list[SliceComponent]]:
    """Area-filtered 8-connected components per slice, one polarity at a time.

    A moving object's brightening and darkening bands are labeled
    separately: mixed-polarity labeling lets the two bands merge and split
    between slices, which aliases the component centroid to spurious
    half-flow velocities.
    """
    per_slice: list[list[SliceComponent]] = []
    for i, grid in enumerate(msr.slices):
        comps = _label_mask(grid >= params.tau_e, i, 1, params)
        comps.extend(_label_mask(grid <= -params.tau_e, i, -1, params))
        per_slice.append(comps)
    return per_slice


@dataclass
class _Track:
    components: list[SliceComponent] = field(default_factory=list)
    deviations: list[np.ndarray] = field(default_factory=list)  # actual - predicted shift

    @property
    def head(self) -> SliceComponent:
        return self.components[-1]

    @property
    def length(self) -> int:
        return len(self.components)

    def flow_deviation_px(self) -> float:
        """Median per-step deviation magnitude from the predicted flow.

        The median keeps one bad association (component split/merge between
        two slices) from masking or faking an independent mover.
        """
        if not self.deviations:
            return 0.0
        return float(np.median([np.linalg.norm(d) for d in self.deviations]))

    def median_box(self) -> tuple[float, float, float, float]:
        boxes = np.array([c.bbox for c in self.components])
        return tuple(np.median(boxes, axis=0))

    def mean_fill_ratio(self) -> float:
        return float(np.mean([c.fill_ratio for c in self.components]))


def predicted_static_shift(
    u: float, v: float, t_from_us: int, t_to_us: int,
    pose: PlatformPose, sensor: SensorConfig,
) -> Optional[np.ndarray]:
    """Pixel displacement a static world point at (u, v) would undergo.

    Back-projects the pixel at the first instant, holds the platform-frame
    direction fixed, and re-projects at the second instant; this is the
    rotation-induced background flow, exact at every image position. None
    when the re-projection leaves the sensor.
    """
    ray = pixel_to_camera_ray(u, v, sensor)
    fixed = camera_to_platform(ray, platform_angle(t_from_us, pose), pose.tilt_deg)
    u2, v2, _, valid = project_platform_points(
        fixed.as_array(), platform_angle(t_to_us, pose), pose.tilt_deg, sensor
    )
    if not valid[0]:
        return None
    return np.array([u2[0] - u, v2[0] - v])


def nominal_background_flow_px(pose: PlatformPose, sensor: SensorConfig,
                               interval_us: int) -> float:
    """First-order background flow magnitude fx * omega * dt at image center."""
    return sensor.fx * abs(pose.omega_rad_s) * interval_us * 1e-6


def _link_tracks(
    per_slice: list[list[SliceComponent]],
    cfg,
    pose: PlatformPose,
    sensor: SensorConfig,
    params: DetectorParams,
) -> list[_Track]:
    """Greedy nearest-neighbor association of components across slices."""
    tracks: list[_Track] = [_Track([c]) for c in per_slice[0]]
    for i in range(1, len(per_slice)):
        comps = per_slice[i]
        active = [tr for tr in tracks if tr.head.slice_index == i - 1]
        pairs = []
        for ti, tr in enumerate(active):
            hu, hv = tr.head.centroid
            for ci, comp in enumerate(comps):
                if comp.polarity != tr.head.polarity:
                    continue
                d = math.hypot(comp.centroid[0] - hu, comp.centroid[1] - hv)
                if d <= params.track_radius_px:
                    pairs.append((d, ti, ci))
        pairs.sort()
        used_tracks: set[int] = set()
        used_comps: set[int] = set()
        t_prev = cfg.slice_mid_us(i - 1)
        t_cur = cfg.slice_mid_us(i)
        for d, ti, ci in pairs:
            if ti in used_tracks or ci in used_comps:
                continue
            used_tracks.add(ti)
            used_comps.add(ci)
            track = active[ti]
            hu, hv = track.head.centroid
            actual = np.array([comps[ci].centroid[0] - hu, comps[ci].centroid[1] - hv])
            predicted = predicted_static_shift(hu, hv, t_prev, t_cur, pose, sensor)
            track.components.append(comps[ci])
            if predicted is not None:
                track.deviations.append(actual - predicted)
        for ci, comp in enumerate(comps):
            if ci not in used_comps:
                tracks.append(_Track([comp]))
    return tracks


def _group_candidates(tracks: list[_Track], gap_px: float) -> list[list[_Track]]:
    """Union candidate tracks whose median boxes, inflated by gap, intersect.

    A single moving target sheds separate leading/trailing polarity blobs;
    grouping re-assembles them into one detection.
    """
    boxes = [tr.median_box() for tr in tracks]
    parent = list(range(len(tracks)))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(len(tracks)):
        x0a, y0a, x1a, y1a = boxes[i]
        for j in range(i + 1, len(tracks)):
            x0b, y0b, x1b, y1b = boxes[j]
            if (
                x0a - gap_px < x1b and x0b - gap_px < x1a
                and y0a - gap_px < y1b and y0b - gap_px < y1a
            ):
                parent[find(i)] = find(j)
    groups: dict[int, list[_Track]] = {}
    for i, tr in enumerate(tracks):
        groups.setdefault(find(i), []).append(tr)
    return list(groups.values())


def detect_from_components(
    per_slice: list[list[SliceComponent]],
    cfg,
    pose: PlatformPose,
    sensor: SensorConfig,
    params: DetectorParams = DetectorParams(),
) -> list[Detection]:
    """Tracking and decision half of the reference detector.

    ``cfg`` is the MsrConfig the components were extracted under; split out
    from detect_reference so the pipeline can time extraction and decision
    separately.
    """
    n = cfg.n_slices
    if n < 3:
        raise ConfigError("reference detector needs at least 3 slices")
    tracks = _link_tracks(per_slice, cfg, pose, sensor, params)

    min_len = math.ceil(n / 2)
    candidates = [
        tr
        for tr in tracks
        if tr.length >= min_len
        and tr.deviations
        and tr.flow_deviation_px() > params.flow_tolerance_px
    ]
    if not candidates:
        return []

    detections = []
    mid_t = cfg.mid_us
    for group in _group_candidates(candidates, params.group_gap_px):
        gboxes = np.array([tr.median_box() for tr in group])
        x0 = max(0.0, float(gboxes[:, 0].min()))
        y0 = max(0.0, float(gboxes[:, 1].min()))
        x1 = min(float(sensor.width), float(gboxes[:, 2].max()))
        y1 = min(float(sensor.height), float(gboxes[:, 3].max()))
        score = max(
            (tr.length / n) * min(1.0, tr.mean_fill_ratio() / params.density_ref)
            for tr in group
        )
        detections.append(
            Detection(Box.from_corners(x0, y0, x1, y1), min(1.0, score), mid_t)
        )
    detections.sort(key=lambda d: (-d.score, d.box.cx))
    return detections


def detect_reference(
    msr: Msr,
    pose: PlatformPose,
    sensor: SensorConfig,
    params: DetectorParams = DetectorParams(),
) -> list[Detection]:
    """Velocity-consistency detector over a multi-slice window.

    Per-slice connected components are tracked across slices; a track whose
    mean per-slice displacement deviates from the predicted rotation-induced
    background flow by more than ``flow_tolerance_px`` (and that persists at
    least ceil(N/2) slices) is an independent mover. Surviving tracks within
    ``group_gap_px`` of each other merge into one detection: box = union of
    per-track median boxes, timestamp = window midpoint, score =
    (track length / N) * min(1, fill / density_ref).
    """
    if msr.config.n_slices < 3:
        raise ConfigError("reference detector needs at least 3 slices")
    per_slice = extract_components(msr, params)
    return detect_from_components(per_slice, msr.config, pose, sensor, params)
