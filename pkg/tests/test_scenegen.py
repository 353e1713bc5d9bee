import io
import json
import math

import numpy as np
import pytest
from scipy import stats

from contourcal.errors import DataError, EmptyCatalog
from contourcal.geometry import PoseRangeTable
from contourcal.scenegen import (BACKGROUND_RATIOS, DR_DEFAULTS, PURPOSE_DR, PURPOSE_POSE, Catalogs, DRFlags,
                                 SceneGenConfig, dumps, generate_dataset, sample_background, sample_pose,
                                 sample_scene, scene_at, stream, write_jsonl)

CATS = Catalogs.placeholder()


def test_placeholder_sizes():
    assert len(CATS.contextual) == 754 and len(CATS.surgery) == 2840 and len(CATS.convex_maps) == 19


def test_degenerate_range_is_exact():
    r = PoseRangeTable(x=(3.0, 3.0), gripper=(0.0, 0.0))
    p = sample_pose(r, np.random.default_rng(0))
    assert p.x == 3.0 and p.gripper == 0.0


def test_pose_statistics():
    r = PoseRangeTable()
    rng = np.random.default_rng(7)
    X = np.array([sample_pose(r, rng).as_array() for _ in range(100_000)])
    lo, hi = r.lows(), r.highs()
    assert np.all(X >= lo) and np.all(X <= hi)
    sigma = (hi - lo) / math.sqrt(12) / math.sqrt(len(X))
    assert np.all(np.abs(X.mean(axis=0) - (lo + hi) / 2) <= 3 * sigma + 1e-12)
    assert X[:, 2].min() >= 10 and X[:, 2].max() <= 35


def test_background_contextual_only_when_disabled():
    rng = np.random.default_rng(0)
    for _ in range(500):
        b = sample_background(rng, CATS, non_contextual=False)
        assert b.source == "contextual" and b.image_ref in CATS.contextual


def test_background_single_image_and_empty():
    one = Catalogs(contextual=("only.png",))
    rng = np.random.default_rng(0)
    assert {sample_background(rng, one, non_contextual=False).image_ref for _ in range(20)} == {"only.png"}
    with pytest.raises(EmptyCatalog):
        for _ in range(50):
            sample_background(rng, one, non_contextual=True)


def test_background_frequencies():
    rng = np.random.default_rng(3)
    src = [sample_background(rng, CATS).source for _ in range(100_000)]
    for name, p in BACKGROUND_RATIOS:
        assert abs(src.count(name) / len(src) - p) <= 0.01


def test_canonical_scene():
    s = scene_at(0, 42, DRFlags(), CATS)
    canon = DR_DEFAULTS["canonical_light"]
    assert len(s.lights) == 1
    light = s.lights[0]
    assert (light.kind, list(light.position), light.intensity) == (canon["kind"], canon["position"], canon["intensity"])
    a = s.appearances[0]
    assert (a.hue_shift, a.brightness_shift, a.roughness, a.per_part, a.scratch, a.convex_maps) == \
        (0.0, 0.0, DR_DEFAULTS["canonical_roughness"], {}, None, ())
    assert s.background.source == "contextual"


def test_poses_independent_of_flags():
    ref = [s.pose_json() for s in generate_dataset(50, 9, DRFlags(), CATS)]
    for bits in (1, 0b101, 0b11111111111, 0b10000100000, 1234):
        assert [s.pose_json() for s in generate_dataset(50, 9, DRFlags.from_bits(bits), CATS)] == ref


def test_flag_toggle_leaves_other_components_alone():
    a = scene_at(17, 5, DRFlags(dr2=True, dr7=True), CATS)
    b = scene_at(17, 5, DRFlags(dr2=True, dr7=True, dr10=True, dr3=True), CATS)
    assert a.lights[0].intensity == b.lights[0].intensity
    assert a.appearances[0].hue_shift == b.appearances[0].hue_shift


def test_random_access_matches_sequential():
    seq = list(generate_dataset(12, 42, DRFlags.all_on(), CATS, start=4990))
    assert dumps(scene_at(5000, 42, DRFlags.all_on(), CATS).to_json()) == dumps(seq[10].to_json())


def test_streams_are_distinct():
    a = stream(42, PURPOSE_POSE, 0).random(4)
    assert not np.array_equal(a, stream(42, PURPOSE_DR, 0).random(4))
    assert not np.array_equal(a, stream(42, PURPOSE_POSE, 1).random(4))
    assert not np.array_equal(a, stream(43, PURPOSE_POSE, 0).random(4))
    assert np.array_equal(a, stream(42, PURPOSE_POSE, 0).random(4))


def test_intensity_log_uniform():
    f = DRFlags(dr2=True)
    vals = np.array([s.lights[0].intensity for s in generate_dataset(20_000, 1, f, CATS)])
    lo, hi = DR_DEFAULTS["intensity_range"]
    assert vals.min() >= lo and vals.max() <= hi
    u = (np.log(vals) - math.log(lo)) / (math.log(hi) - math.log(lo))
    assert stats.kstest(u, "uniform").pvalue > 0.01


def test_dr_components_respect_ranges():
    f = DRFlags.all_on()
    counts, parts = set(), []
    for s in generate_dataset(2000, 2, f, CATS):
        counts.add(len(s.lights))
        for l in s.lights:
            assert l.kind in ("point", "sun", "area", "hemi") and l.position[2] <= 0
        a = s.appearances[0]
        assert 0 <= a.roughness <= 1 and len(a.convex_maps) == 1 and a.convex_maps[0] in CATS.convex_maps
        assert a.scratch is not None
        parts.append(len(a.per_part))
    assert counts == {1, 2}
    assert np.mean(parts) / 3 == pytest.approx(0.5, abs=0.03)


def test_augmented_contextual_source():
    f = DRFlags(dr5=True)
    s = scene_at(0, 0, f, CATS)
    assert s.background.source == "contextual_augmented" and s.background.augmentation


def test_convex_maps_need_catalog():
    with pytest.raises(EmptyCatalog):
        scene_at(0, 0, DRFlags(dr11=True), Catalogs(contextual=("c.png",)))


def test_flag_names():
    assert DRFlags.from_names(["dr1", "dr6"]).enabled() == ["dr1", "dr6"]
    with pytest.raises(DataError):
        DRFlags.from_names(["dr12"])
    with pytest.raises(DataError):
        list(generate_dataset(0, 1, DRFlags(), CATS))


def test_jsonl_is_deterministic():
    outs = []
    for _ in range(2):
        fh = io.StringIO()
        write_jsonl(fh, 3, 42, DRFlags.all_on(), CATS)
        outs.append(fh.getvalue())
    assert outs[0] == outs[1]
    lines = outs[0].splitlines()
    head = json.loads(lines[0])
    assert head["schema_version"] == 1 and head["n"] == 3 and len(lines) == 4
    assert json.loads(lines[1])["image_size"] == [299, 299]


def test_multiple_instruments():
    s = sample_scene(DRFlags(), stream(1, 0, 0), stream(1, 1, 0), CATS, cfg=SceneGenConfig(n_instruments=2))
    assert len(s.poses) == 2 and len(s.appearances) == 2
