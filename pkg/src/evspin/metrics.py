"""Detection-quality metrics: box overlap losses, AP/AR, angular-error stats.

The AP evaluator follows the de-facto protocol behind the AP / AP75 / AR100
vocabulary: IoU thresholds 0.50:0.05:0.95, greedy highest-IoU matching in
score order with one-to-one detection/ground-truth pairing, a 101-point
interpolated precision-recall integral, and recall limited to the top 100
detections per image.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .detection import Box, Detection

IOU_THRESHOLDS = tuple((50 + 5 * k) / 100.0 for k in range(10))
MAX_DETECTIONS = 100
RECALL_POINTS = np.linspace(0.0, 1.0, 101)


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0 for disjoint boxes, 1 for identical."""
    ax0, ay0, ax1, ay1 = a.corners()
    bx0, by0, bx1, by1 = b.corners()
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return inter / union


@dataclass(frozen=True)
class EiouBreakdown:
    """Additive terms of the efficient-IoU loss; total is their sum."""

    l_iou: float
    center_term: float
    width_term: float
    height_term: float

    @property
    def total(self) -> float:
        return self.l_iou + self.center_term + self.width_term + self.height_term


def eiou_loss(b: Box, b_gt: Box) -> EiouBreakdown:
    """IoU loss plus center-distance, width, and height penalties.

    Each penalty is a squared difference normalized by the smallest
    enclosing box: the center term by its squared diagonal, the width and
    height terms by its squared width and height. All terms vanish iff the
    boxes are identical.
    """
    x0a, y0a, x1a, y1a = b.corners()
    x0b, y0b, x1b, y1b = b_gt.corners()
    wc = max(x1a, x1b) - min(x0a, x0b)
    hc = max(y1a, y1b) - min(y0a, y0b)
    center_sq = (b.cx - b_gt.cx) ** 2 + (b.cy - b_gt.cy) ** 2
    return EiouBreakdown(
        l_iou=1.0 - iou(b, b_gt),
        center_term=center_sq / (wc * wc + hc * hc),
        width_term=(b.w - b_gt.w) ** 2 / (wc * wc),
        height_term=(b.h - b_gt.h) ** 2 / (hc * hc),
    )


@dataclass(frozen=True)
class ApReport:
    ap: float    # mean AP over IoU thresholds 0.50:0.05:0.95
    ap75: float  # AP at IoU 0.75
    ar100: float  # average recall at <= 100 detections per image


def _match_image(
    detections: Sequence[Detection], gts: Sequence[Box], threshold: float
) -> list[tuple[float, bool]]:
    """Greedy one-to-one matching for one image at one IoU threshold.

    Detections are visited in descending score (ties keep input order); each
    claims the unmatched ground truth with the highest IoU >= threshold.
    Returns (score, is_true_positive) per detection.
    """
    order = sorted(range(len(detections)), key=lambda i: -detections[i].score)
    taken = [False] * len(gts)
    results = []
    for i in order:
        det = detections[i]
        best_j, best_v = -1, 0.0
        for j, gt in enumerate(gts):
            if taken[j]:
                continue
            v = iou(det.box, gt)
            if v >= threshold and v > best_v:
                best_j, best_v = j, v
        if best_j >= 0:
            taken[best_j] = True
            results.append((det.score, True))
        else:
            results.append((det.score, False))
    return results


def _ap_from_matches(matches: list[tuple[float, bool]], n_gt: int) -> float:
    """101-point interpolated AP from pooled (score, tp) pairs."""
    if n_gt == 0:
        return 1.0 if not matches else 0.0
    if not matches:
        return 0.0
    scores = np.array([m[0] for m in matches])
    tps = np.array([m[1] for m in matches], dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    tp_cum = np.cumsum(tps[order])
    fp_cum = np.cumsum(1.0 - tps[order])
    recall = tp_cum / n_gt
    precision = tp_cum / (tp_cum + fp_cum)
    # Interpolated precision: max precision at any recall >= r.
    interp = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.where(idx < len(interp), interp[np.minimum(idx, len(interp) - 1)], 0.0)
    return float(sampled.mean())


def compute_ap(
    detections_per_image: Sequence[Sequence[Detection]],
    gts_per_image: Sequence[Sequence[Box]],
    thresholds: Sequence[float] = IOU_THRESHOLDS,
) -> ApReport:
    """COCO-style AP / AP75 / AR100 over a set of images.

    With no ground truths at all the metrics are 1.0 when there are also no
    detections and 0.0 otherwise.
    """
    if len(detections_per_image) != len(gts_per_image):
        raise ValueError("detections and ground truths must cover the same images")
    capped = [
        sorted(dets, key=lambda d: -d.score)[:MAX_DETECTIONS]
        for dets in detections_per_image
    ]
    n_gt = sum(len(g) for g in gts_per_image)

    aps, recalls = [], []
    ap75 = 0.0
    for thr in thresholds:
        matches: list[tuple[float, bool]] = []
        for dets, gts in zip(capped, gts_per_image):
            matches.extend(_match_image(dets, gts, thr))
        aps.append(_ap_from_matches(matches, n_gt))
        if n_gt == 0:
            recalls.append(1.0 if not matches else 0.0)
        else:
            recalls.append(sum(1 for m in matches if m[1]) / n_gt)
        if abs(thr - 0.75) < 1e-9:
            ap75 = aps[-1]
    return ApReport(ap=float(np.mean(aps)), ap75=ap75, ar100=float(np.mean(recalls)))


@dataclass(frozen=True)
class ErrorStats:
    mean: float
    median: float
    max: float
    count: int


def error_stats(samples: Sequence[float]) -> ErrorStats:
    """Mean / median / max of angular-error samples in degrees.

    Even-length medians average the two middle values.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("error_stats requires at least one sample")
    return ErrorStats(
        mean=float(arr.mean()),
        median=float(np.median(arr)),
        max=float(arr.max()),
        count=int(arr.size),
    )
