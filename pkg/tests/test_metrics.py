import itertools

import numpy as np
import pytest

from evspin.detection import Box, Detection
from evspin.metrics import (
    IOU_THRESHOLDS,
    ApReport,
    compute_ap,
    eiou_loss,
    error_stats,
    iou,
)


# --- independent corner-form oracle for the overlap losses --------------------

def corner_oracle(b: Box, g: Box):
    """Re-derives every loss term from corner coordinates with scalar math."""
    ax0, ay0 = b.cx - b.w / 2, b.cy - b.h / 2
    ax1, ay1 = b.cx + b.w / 2, b.cy + b.h / 2
    gx0, gy0 = g.cx - g.w / 2, g.cy - g.h / 2
    gx1, gy1 = g.cx + g.w / 2, g.cy + g.h / 2
    iw = max(0.0, min(ax1, gx1) - max(ax0, gx0))
    ih = max(0.0, min(ay1, gy1) - max(ay0, gy0))
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (gx1 - gx0) * (gy1 - gy0) - inter
    iou_val = inter / union
    wc = max(ax1, gx1) - min(ax0, gx0)
    hc = max(ay1, gy1) - min(ay0, gy0)
    center = (b.cx - g.cx) ** 2 + (b.cy - g.cy) ** 2
    return (
        1.0 - iou_val,
        center / (wc**2 + hc**2),
        (b.w - g.w) ** 2 / wc**2,
        (b.h - g.h) ** 2 / hc**2,
    )


def random_box(rng) -> Box:
    return Box(
        cx=rng.uniform(-20, 20),
        cy=rng.uniform(-20, 20),
        w=rng.uniform(0.2, 15),
        h=rng.uniform(0.2, 15),
    )


class TestIou:
    def test_identical(self):
        b = Box(1, 2, 3, 4)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(Box(0, 0, 2, 2), Box(10, 0, 2, 2)) == 0.0

    def test_hand_geometry_one_third(self):
        assert iou(Box(0, 0, 2, 2), Box(1, 0, 2, 2)) == pytest.approx(1 / 3, abs=1e-12)

    def test_symmetry_and_translation_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            a, b = random_box(rng), random_box(rng)
            assert iou(a, b) == pytest.approx(iou(b, a), abs=1e-12)
            dx, dy = rng.uniform(-50, 50, 2)
            a2 = Box(a.cx + dx, a.cy + dy, a.w, a.h)
            b2 = Box(b.cx + dx, b.cy + dy, b.w, b.h)
            assert iou(a2, b2) == pytest.approx(iou(a, b), abs=1e-12)

    def test_invalid_box_rejected(self):
        with pytest.raises(ValueError):
            Box(0, 0, 0, 1)


class TestEiou:
    def test_identical_boxes_zero_exactly(self):
        b = Box(3, -2, 5, 7)
        out = eiou_loss(b, b)
        assert out.total == 0.0
        assert (out.l_iou, out.center_term, out.width_term, out.height_term) == (0, 0, 0, 0)

    def test_hand_geometry_offset_one(self):
        out = eiou_loss(Box(0, 0, 2, 2), Box(1, 0, 2, 2))
        assert out.l_iou == pytest.approx(2 / 3, abs=1e-12)
        assert out.center_term == pytest.approx(1 / 13, abs=1e-12)
        assert out.width_term == 0.0 and out.height_term == 0.0
        assert out.total == pytest.approx(2 / 3 + 1 / 13, abs=1e-12)

    def test_hand_geometry_disjoint(self):
        out = eiou_loss(Box(0, 0, 2, 2), Box(10, 0, 2, 2))
        assert out.l_iou == 1.0
        assert out.center_term == pytest.approx(100 / 148, abs=1e-12)
        assert out.total == pytest.approx(1 + 100 / 148, abs=1e-12)

    def test_matches_corner_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(10_000):
            a, b = random_box(rng), random_box(rng)
            got = eiou_loss(a, b)
            ref = corner_oracle(a, b)
            assert got.l_iou == pytest.approx(ref[0], abs=1e-9)
            assert got.center_term == pytest.approx(ref[1], abs=1e-9)
            assert got.width_term == pytest.approx(ref[2], abs=1e-9)
            assert got.height_term == pytest.approx(ref[3], abs=1e-9)

    def test_total_at_least_iou_loss_and_symmetric(self):
        rng = np.random.default_rng(2)
        for _ in range(2000):
            a, b = random_box(rng), random_box(rng)
            out = eiou_loss(a, b)
            assert out.total >= out.l_iou
            rev = eiou_loss(b, a)
            assert out.total == pytest.approx(rev.total, abs=1e-12)

    def test_breakdown_sums_to_total(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            out = eiou_loss(random_box(rng), random_box(rng))
            s = out.l_iou + out.center_term + out.width_term + out.height_term
            assert out.total == pytest.approx(s, abs=1e-12)

    def test_translation_invariance(self):
        rng = np.random.default_rng(4)
        for _ in range(300):
            a, b = random_box(rng), random_box(rng)
            dx, dy = rng.uniform(-100, 100, 2)
            moved = eiou_loss(
                Box(a.cx + dx, a.cy + dy, a.w, a.h), Box(b.cx + dx, b.cy + dy, b.w, b.h)
            )
            base = eiou_loss(a, b)
            assert moved.total == pytest.approx(base.total, abs=1e-12)


# --- independent AP oracle -----------------------------------------------------

def oracle_ap(dets_per_image, gts_per_image, thresholds=IOU_THRESHOLDS):
    """Literal re-implementation with explicit loops and no shared helpers."""

    def c_iou(d: Box, g: Box) -> float:
        dx0, dx1 = d.cx - d.w / 2, d.cx + d.w / 2
        dy0, dy1 = d.cy - d.h / 2, d.cy + d.h / 2
        gx0, gx1 = g.cx - g.w / 2, g.cx + g.w / 2
        gy0, gy1 = g.cy - g.h / 2, g.cy + g.h / 2
        w = min(dx1, gx1) - max(dx0, gx0)
        h = min(dy1, gy1) - max(dy0, gy0)
        if w <= 0 or h <= 0:
            return 0.0
        inter = w * h
        return inter / (d.w * d.h + g.w * g.h - inter)

    n_gt = sum(len(g) for g in gts_per_image)
    aps, recalls = [], {}
    for thr in thresholds:
        pooled = []  # (score, order_index, tp)
        order_counter = 0
        for dets, gts in zip(dets_per_image, gts_per_image):
            dets = sorted(dets, key=lambda d: -d.score)[:100]
            matched = set()
            for det in dets:
                best, best_iou = None, 0.0
                for j, g in enumerate(gts):
                    if j in matched:
                        continue
                    v = c_iou(det.box, g)
                    if v >= thr and v > best_iou:
                        best, best_iou = j, v
                tp = best is not None
                if tp:
                    matched.add(best)
                pooled.append((det.score, order_counter, tp))
                order_counter += 1
        pooled.sort(key=lambda item: (-item[0], item[1]))
        if n_gt == 0:
            ap = 1.0 if not pooled else 0.0
            recalls[thr] = ap
        else:
            tps = 0
            fps = 0
            curve = []
            for score, _, tp in pooled:
                tps += int(tp)
                fps += int(not tp)
                curve.append((tps / n_gt, tps / (tps + fps)))
            samples = []
            for k in range(101):
                r = k / 100
                candidates = [p for rec, p in curve if rec >= r - 1e-12]
                samples.append(max(candidates) if candidates else 0.0)
            ap = sum(samples) / 101
            recalls[thr] = (tps / n_gt) if pooled else 0.0
        aps.append(ap)
    ap75 = aps[thresholds.index(0.75)] if 0.75 in thresholds else 0.0
    return ApReport(
        ap=sum(aps) / len(aps), ap75=ap75, ar100=sum(recalls.values()) / len(recalls)
    )


# Offsets of a 2x2 detection box relative to its ground truth; the resulting
# IoU values must stay clear of every matching threshold (checked below).
DET_OFFSETS = [
    (0.0, 0.0),   # IoU 1.0
    (0.4, 0.0),   # IoU 2/3
    (1.0, 0.0),   # IoU 1/3
    (0.0, 0.9),   # IoU ~0.379
    (12.0, 0.0),  # IoU 0
]
SCORE_GRID = (0.3, 0.6, 0.9)


def test_offset_ious_avoid_threshold_boundaries():
    g = Box(0, 0, 2, 2)
    for dx, dy in DET_OFFSETS:
        v = iou(Box(dx, dy, 2, 2), g)
        for thr in IOU_THRESHOLDS:
            if v > 0:
                assert abs(v - thr) > 1e-6


def enumerate_instances():
    """Small detection/ground-truth layouts with exhaustive score choices."""
    instances = []
    for n_gt, n_det in itertools.product(range(4), range(5)):
        gts = [Box(0, k * 10.0, 2, 2) for k in range(n_gt)]
        for variant in range(3):
            boxes = []
            for j in range(n_det):
                dx, dy = DET_OFFSETS[(j + variant) % len(DET_OFFSETS)]
                anchor = gts[j % n_gt] if n_gt else Box(50.0, 50.0, 2, 2)
                boxes.append(Box(anchor.cx + dx, anchor.cy + dy, 2, 2))
            if n_det <= 2:
                score_combos = list(itertools.product(SCORE_GRID, repeat=n_det))
            else:
                score_combos = [
                    tuple(SCORE_GRID[(j + r) % 3] for j in range(n_det))
                    for r in range(3)
                ]
            for scores in score_combos:
                dets = [
                    Detection(box=b, score=s, t=0) for b, s in zip(boxes, scores)
                ]
                instances.append(([dets], [gts]))
    return instances


class TestComputeAp:
    def test_perfect_single_detection(self):
        gts = [[Box(5, 5, 4, 4)]]
        dets = [[Detection(Box(5, 5, 4, 4), 0.9, 0)]]
        report = compute_ap(dets, gts)
        assert report.ap == 1.0 and report.ap75 == 1.0 and report.ar100 == 1.0

    def test_missed_gt_scores_zero(self):
        report = compute_ap([[]], [[Box(5, 5, 4, 4)]])
        assert report.ap == 0.0 and report.ap75 == 0.0 and report.ar100 == 0.0

    def test_empty_everything_is_one_by_convention(self):
        report = compute_ap([[]], [[]])
        assert report.ap == 1.0 and report.ar100 == 1.0

    def test_spurious_detection_with_no_gt_is_zero(self):
        report = compute_ap([[Detection(Box(0, 0, 2, 2), 0.5, 0)]], [[]])
        assert report.ap == 0.0

    def test_matches_exhaustive_oracle(self):
        count = 0
        for dets, gts in enumerate_instances():
            got = compute_ap(dets, gts)
            ref = oracle_ap(dets, gts)
            assert got.ap == pytest.approx(ref.ap, abs=1e-9)
            assert got.ap75 == pytest.approx(ref.ap75, abs=1e-9)
            assert got.ar100 == pytest.approx(ref.ar100, abs=1e-9)
            count += 1
        assert count >= 200

    def test_multi_image_pooling_matches_oracle(self):
        rng = np.random.default_rng(9)
        dets_per_image, gts_per_image = [], []
        for _ in range(6):
            n_gt = rng.integers(0, 4)
            gts = [Box(0, k * 10.0, 2, 2) for k in range(n_gt)]
            dets = []
            for j in range(rng.integers(0, 5)):
                dx, dy = DET_OFFSETS[rng.integers(0, len(DET_OFFSETS))]
                anchor = gts[j % n_gt] if n_gt else Box(50.0, 50.0, 2, 2)
                dets.append(
                    Detection(
                        Box(anchor.cx + dx, anchor.cy + dy, 2, 2),
                        float(rng.choice(SCORE_GRID)),
                        0,
                    )
                )
            dets_per_image.append(dets)
            gts_per_image.append(gts)
        got = compute_ap(dets_per_image, gts_per_image)
        ref = oracle_ap(dets_per_image, gts_per_image)
        assert got.ap == pytest.approx(ref.ap, abs=1e-9)
        assert got.ar100 == pytest.approx(ref.ar100, abs=1e-9)

    def test_invariant_to_monotone_score_transform(self):
        gts = [[Box(0, 0, 2, 2), Box(0, 10, 2, 2)]]
        dets = [
            [
                Detection(Box(0.4, 0, 2, 2), 0.9, 0),
                Detection(Box(0, 10, 2, 2), 0.6, 0),
                Detection(Box(12, 0, 2, 2), 0.3, 0),
            ]
        ]
        base = compute_ap(dets, gts)
        squashed = [
            [Detection(d.box, 0.05 + 0.5 * d.score**2, d.t) for d in dets[0]]
        ]
        out = compute_ap(squashed, gts)
        assert out == base

    def test_mismatched_image_counts_rejected(self):
        with pytest.raises(ValueError):
            compute_ap([[]], [[], []])


class TestErrorStats:
    def test_single_sample(self):
        s = error_stats([2.0])
        assert (s.mean, s.median, s.max, s.count) == (2.0, 2.0, 2.0, 1)

    def test_two_samples_median_is_mean_of_middle(self):
        s = error_stats([1.0, 3.0])
        assert s.mean == 2.0 and s.median == 2.0 and s.max == 3.0

    def test_matches_sort_based_oracle(self):
        rng = np.random.default_rng(10)
        samples = rng.uniform(0, 180, 10_000)
        s = error_stats(samples)
        ordered = sorted(samples.tolist())
        assert s.mean == pytest.approx(sum(ordered) / len(ordered), rel=1e-12)
        assert s.median == pytest.approx((ordered[4999] + ordered[5000]) / 2, rel=1e-12)
        assert s.max == ordered[-1]
        assert s.count == 10_000

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            error_stats([])
