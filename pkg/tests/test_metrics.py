import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contourcal.errors import DataError, NoPairs
from contourcal.geometry import EulerPose, RigidTransform, from_euler, rot_x, rot_z
from contourcal.metrics import (BoundingBox2D, Detection, EvalPair, GroundTruthBox, box_iou,
                                centerline_angle_error, detected, mean_average_precision, summarize,
                                translation_error)

from conftest import random_transform, transforms

BOX = BoundingBox2D(0, 0, 10, 10)


def spun(T: RigidTransform, deg: float) -> RigidTransform:
    return T @ RigidTransform(rot_z(deg), np.zeros(3))


def test_translation_error_cases(rng):
    a = random_transform(rng)
    assert translation_error(a, a) == 0.0
    assert translation_error(RigidTransform.identity(), RigidTransform.from_translation((3, 4, 0))) == 5.0
    b = random_transform(rng)
    assert translation_error(a, b) == pytest.approx(np.linalg.norm(a.translation - b.translation), abs=1e-12)


@given(transforms(), transforms(), transforms())
def test_translation_error_is_a_metric(a, b, c):
    assert translation_error(a, b) == translation_error(b, a)
    assert translation_error(a, c) <= translation_error(a, b) + translation_error(b, c) + 1e-9


def test_centerline_cases(rng):
    a = random_transform(rng)
    assert centerline_angle_error(a, a) == pytest.approx(0.0, abs=1e-6)
    b = a @ RigidTransform(rot_x(90), np.zeros(3))
    assert centerline_angle_error(a, b) == pytest.approx(90.0, abs=1e-9)


@given(transforms(), transforms(), st.floats(-720, 720))
def test_centerline_ignores_spin(a, b, theta):
    base = centerline_angle_error(a, b)
    assert abs(centerline_angle_error(spun(a, theta), b) - base) < 1e-9
    assert abs(centerline_angle_error(a, spun(b, theta)) - base) < 1e-9


def test_box_basics():
    with pytest.raises(DataError):
        BoundingBox2D(5, 0, 1, 1)
    assert BoundingBox2D.from_json(BOX.to_json()) == BOX
    m = np.zeros((20, 20), bool)
    m[3:7, 2:12] = True
    assert BoundingBox2D.from_mask(m) == BoundingBox2D(2, 3, 12, 7)
    assert BoundingBox2D.from_mask(np.zeros((3, 3), bool)) is None


def test_detected_cases():
    assert detected(BOX, BOX)
    assert not detected(BOX, BoundingBox2D(20, 20, 30, 30))
    half = BoundingBox2D(5, 0, 15, 10)
    assert box_iou(BOX, half) == pytest.approx(1 / 3)
    assert not detected(half, BOX)
    with pytest.raises(DataError):
        detected(BOX, BOX, thr=0.0)


def _gts(*image_ids):
    return [GroundTruthBox(i, BoundingBox2D(10 * k, 0, 10 * k + 10, 10)) for k, i in enumerate(image_ids)]


def test_map_trivial_cases():
    gts = _gts("a", "a", "b")
    dets = [Detection(g.image_id, g.box, 1.0 - 0.1 * k) for k, g in enumerate(gts)]
    assert mean_average_precision(dets, gts) == 1.0
    assert mean_average_precision([], gts) == 0.0
    with pytest.raises(DataError):
        mean_average_precision([Detection("a", BOX, float("nan"))], gts)


def test_map_three_gt_four_predictions():
    """Ranked TP, FP, TP, TP over 3 gts: precision 1, 1/2, 2/3, 3/4 at recall 1/3, 1/3, 2/3, 1.

    The envelope is 1 up to recall 1/3 and 3/4 after it, so AP = (1 + 3/4 + 3/4) / 3.
    """
    gts = _gts("img", "img", "img")
    dets = [
        Detection("img", gts[0].box, 0.9),
        Detection("img", BoundingBox2D(100, 100, 110, 110), 0.8),
        Detection("img", gts[1].box, 0.7),
        Detection("img", gts[2].box, 0.6),
    ]
    assert mean_average_precision(dets, gts) == pytest.approx(5 / 6, abs=1e-9)


def test_duplicate_detection_is_false_positive():
    gts = _gts("a")
    dets = [Detection("a", gts[0].box, 0.9), Detection("a", gts[0].box, 0.8)]
    assert mean_average_precision(dets, gts) == 1.0
    assert mean_average_precision(dets[::-1], gts) == 1.0


def test_classes_are_averaged():
    gts = [GroundTruthBox("a", BOX, "grasper"), GroundTruthBox("a", BOX, "scissors")]
    dets = [Detection("a", BOX, 0.9, "grasper")]
    assert mean_average_precision(dets, gts) == 0.5


@given(st.lists(st.tuples(st.integers(0, 3), st.floats(0, 1), st.booleans()), min_size=1, max_size=12))
def test_map_range_and_fp_removal(spec):
    gts = _gts("i", "i", "i", "i")
    far = BoundingBox2D(200, 200, 210, 210)
    dets = [Detection("i", gts[k].box if hit else far, s) for k, s, hit in spec]
    full = mean_average_precision(dets, gts)
    assert 0.0 <= full <= 1.0
    for j, (_, _, hit) in enumerate(spec):
        if not hit:
            assert mean_average_precision(dets[:j] + dets[j + 1:], gts) >= full - 1e-12


def test_summarize_identical():
    T = from_euler(EulerPose(1, 2, 20, 60, 5, 10))
    s = summarize([EvalPair(T, BOX, T, BOX), EvalPair(T, BOX, T, BOX, image_id="x")])
    assert (s.mean_translation_mm, s.mean_centerline_deg, s.detected_rate_pct, s.map_at_50) == (0.0, 0.0, 100.0, 1.0)


def test_summarize_no_detections():
    T = RigidTransform.identity()
    s = summarize([EvalPair(T, BOX)])
    assert s.detected_rate_pct == 0.0 and s.mean_translation_mm is None and s.map_at_50 == 0.0
    assert s.to_json()["mean_centerline_deg"] is None
    with pytest.raises(NoPairs):
        summarize([])


def test_summarize_mixed_enumeration():
    """Two detected pairs (errors 5 mm / 0 deg and 0 mm / 10 deg), one miss, one unpredicted."""
    T = from_euler(EulerPose(0, 0, 20))
    pairs = [
        EvalPair(T, BOX, from_euler(EulerPose(3, 4, 20)), BOX, 0.9, "a"),
        EvalPair(T, BOX, from_euler(EulerPose(0, 0, 20, 0, 10, 0)), BoundingBox2D(0, 0, 10, 5), 0.7, "b"),
        EvalPair(T, BoundingBox2D(20, 20, 30, 30), T, BoundingBox2D(25, 20, 35, 30), 0.8, "a"),
        EvalPair(T, BOX, image_id="c"),
    ]
    s = summarize(pairs)
    assert s.mean_translation_mm == pytest.approx(2.5, abs=1e-9)
    assert s.mean_centerline_deg == pytest.approx(5.0, abs=1e-9)
    assert s.detected_rate_pct == 50.0 and s.n_detected == 2
    # ranked TP(.9), FP(.8), TP(.7) over 4 gts: AP = .25 * 1 + .25 * 2/3
    assert s.map_at_50 == pytest.approx(0.25 + 0.25 * 2 / 3, abs=1e-9)
