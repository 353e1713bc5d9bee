import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contourcal.errors import DataError, DimensionMismatch, EmptyGroundTruth, NoFrames
from contourcal.objective import (ContourTarget, ObjectiveConfig, contour_objective, dataset_objective,
                                  edge_overlap, iou, mask_weight_field, reduce_scores)
from contourcal.raster import distance_transform, extract_edges, weight_field

CFG = ObjectiveConfig()


def square(n=40, r0=10, c0=10, side=10):
    m = np.zeros((n, n), bool)
    m[r0:r0 + side, c0:c0 + side] = True
    return m


@st.composite
def blob_pairs(draw, n=48):
    """Two masks made of a few random rectangles each, sharing a frame."""
    out = []
    for _ in range(2):
        m = np.zeros((n, n), bool)
        for _ in range(draw(st.integers(1, 3))):
            r, c = draw(st.integers(0, n - 2)), draw(st.integers(0, n - 2))
            h, w = draw(st.integers(1, 20)), draw(st.integers(1, 20))
            m[r:r + h, c:c + w] = True
        out.append(m)
    return tuple(out)


def test_config_validation():
    for kw in ({"alpha": 1.5}, {"d_max": 0}, {"aggregate": "median"}):
        with pytest.raises(DataError):
            ObjectiveConfig(**kw)


def test_iou_cases():
    a = square()
    assert iou(a, a) == 1.0
    assert iou(a, square(r0=25, c0=25)) == 0.0
    b = square(c0=15)
    assert iou(a, b) == pytest.approx(np.sum(a & b) / np.sum(a | b)) == pytest.approx(50 / 150)
    assert iou(np.zeros((3, 3)), np.zeros((3, 3))) == 0.0
    with pytest.raises(DimensionMismatch):
        iou(a, a[:-1])


def test_edge_overlap_cases():
    g = mask_weight_field(square(), 10)
    assert edge_overlap(g, g) == 1.0
    far = np.zeros((80, 80), bool)
    far[2:6, 2:6] = True
    near = np.zeros((80, 80), bool)
    near[60:70, 60:70] = True
    assert edge_overlap(mask_weight_field(far, 10), mask_weight_field(near, 10)) == 0.0
    with pytest.raises(EmptyGroundTruth):
        edge_overlap(np.zeros((4, 4)), np.zeros((4, 4)))


def test_edge_overlap_double_sum_oracle():
    n = 30
    a = np.zeros((n, n), bool)
    b = np.zeros((n, n), bool)
    a[15, 10] = True
    b[15, 13] = True
    pa = weight_field(distance_transform(a), 10)
    pb = weight_field(distance_transform(b), 10)
    num = den = 0.0
    for v in range(n):
        for u in range(n):
            da = math.hypot(v - 15, u - 10)
            db = math.hypot(v - 15, u - 13)
            wa = (10 - min(da, 10)) ** 2
            wb = (10 - min(db, 10)) ** 2
            num += wa * wb
            den += wa * wa
    assert edge_overlap(pa, pb) == pytest.approx(num / den, abs=1e-12)


def test_blend_arithmetic():
    a = square()
    assert contour_objective(a, a) == 1.0
    assert 0.8 * 0.5 + 0.2 * 0.25 == pytest.approx(0.45)


@given(blob_pairs())
def test_blend_matches_terms(pair):
    gt, proj = pair
    want = 0.8 * iou(gt, proj) + 0.2 * edge_overlap(mask_weight_field(gt, 10), mask_weight_field(proj, 10))
    assert contour_objective(gt, proj) == pytest.approx(want, abs=1e-12)


@given(blob_pairs())
def test_known_bounds(pair):
    gt, proj = pair
    wg, wp = mask_weight_field(gt, 10), mask_weight_field(proj, 10)
    e = edge_overlap(wg, wp)
    assert 0.0 <= iou(gt, proj) <= 1.0
    assert e >= 0.0
    # Cauchy-Schwarz: the edge term cannot exceed the ratio of field norms
    assert e <= math.sqrt(np.sum(wp * wp) / np.sum(wg * wg)) + 1e-12


def test_edge_term_can_exceed_one():
    """Pinned counterexample: extra projected edges near the truth lift the blend above 1."""
    gt = np.zeros((200, 200), bool)
    gt[50:150, 50:150] = True
    proj = gt.copy()
    proj[100, 155] = True
    value = contour_objective(gt, proj)
    assert value > 1.0
    assert value == pytest.approx(1.0002291779417185, abs=1e-12)


def test_empty_projection_scores_zero():
    assert contour_objective(square(), np.zeros((40, 40), bool)) == 0.0


def test_translation_monotone():
    gt = square(120, 30, 30, 20)
    scores = []
    # weight bands stop overlapping once the edges are 2 * d_max apart
    for shift in range(0, 41):
        proj = np.zeros_like(gt)
        proj[30:50, 30 + shift:50 + shift] = True
        scores.append(contour_objective(gt, proj))
    assert scores[0] == 1.0
    assert all(b <= a + 1e-15 for a, b in zip(scores, scores[1:]))
    assert scores[-1] == 0.0


def test_edge_overlap_shift_invariant():
    a, b = square(60, 20, 20, 12), square(60, 22, 23, 10)
    sa, sb = np.roll(a, (5, -4), (0, 1)), np.roll(b, (5, -4), (0, 1))
    e0 = edge_overlap(mask_weight_field(a, 10), mask_weight_field(b, 10))
    e1 = edge_overlap(mask_weight_field(sa, 10), mask_weight_field(sb, 10))
    assert e0 == pytest.approx(e1, abs=1e-12)


def test_dataset_aggregation():
    a = square()
    far = square(r0=0, c0=0, side=3)
    far2 = np.zeros((40, 40), bool)
    far2[36:, 36:] = True
    assert dataset_objective([(a, a), (a, a)]) == 1.0
    assert reduce_scores([1.0, 0.5, 0.0], CFG) == 0.5
    assert reduce_scores([1.0, 0.5, 0.0], ObjectiveConfig(aggregate="sum")) == 1.5
    assert dataset_objective([(far, far2)]) == 0.0
    with pytest.raises(NoFrames):
        dataset_objective([])


@given(blob_pairs())
def test_target_matches_full_objective(pair):
    gt, proj = pair
    t = ContourTarget(gt, CFG)
    assert t.score(proj) == pytest.approx(contour_objective(gt, proj), abs=1e-12)
