import json

import numpy as np
import pytest

from contourcal import dataio
from contourcal.calibrate import CalibrationFrame, HandEyeNominals, MountingCorrection
from contourcal.camera import default_intrinsics_for_fov
from contourcal.errors import (DanglingIndex, DataError, NonRigidRotation, ParseError, SchemaError,
                               UnknownPart, UnsupportedDirective)
from contourcal.geometry import RigidTransform, rot_x
from contourcal.objective import ContourAnnotation
from contourcal.raster import articulate

from conftest import random_transform

I = RigidTransform.identity()


def _row(fid="0", t="0.0", B=None, C=None):
    B = np.eye(4)[:3] if B is None else B
    C = np.eye(4)[:3] if C is None else C
    return ",".join([fid, t] + [repr(float(v)) for v in np.ravel(B)] + [repr(float(v)) for v in np.ravel(C)])


def _log(tmp_path, *rows):
    p = tmp_path / "tracker.csv"
    p.write_text(",".join(dataio.TRACKER_HEADER) + "\n" + "\n".join(rows) + "\n")
    return p


def test_identity_row(tmp_path):
    (fr,) = dataio.load_tracker_log(_log(tmp_path, _row()))
    assert fr.B.almost_equal(I, 0) and fr.C.almost_equal(I, 0) and fr.frame_id == "0"


def test_reflection_rejected(tmp_path):
    B = np.eye(4)[:3]
    B[2, 2] = -1
    with pytest.raises(NonRigidRotation) as exc:
        dataio.load_tracker_log(_log(tmp_path, _row(), _row("1", "0.05", B)))
    assert exc.value.row == 2


def test_small_drift_reorthonormalized_large_rejected(tmp_path):
    B = np.eye(4)[:3]
    B[0, 1] = 2e-4
    (fr,) = dataio.load_tracker_log(_log(tmp_path, _row(B=B)))
    assert np.allclose(fr.B.rotation, np.eye(3), atol=2e-4)
    B[0, 1] = 5e-2
    with pytest.raises(NonRigidRotation):
        dataio.load_tracker_log(_log(tmp_path, _row(B=B)))


def test_parse_error_location(tmp_path):
    text = _row().split(",")
    text[7] = "abc"
    with pytest.raises(ParseError) as exc:
        dataio.load_tracker_log(_log(tmp_path, _row(), ",".join(text)))
    assert (exc.value.row, exc.value.column) == (2, 8)
    with pytest.raises(ParseError):
        dataio.load_tracker_log(_log(tmp_path, "0,1,2"))


def test_tracker_round_trip_is_exact(tmp_path, rng):
    frames = [CalibrationFrame(f"{k:03d}", random_transform(rng), random_transform(rng), timestamp=k / 20.0)
              for k in range(25)]
    p = tmp_path / "t.csv"
    dataio.save_tracker_log(p, frames)
    back = dataio.load_tracker_log(p)
    for a, b in zip(frames, back):
        assert a.frame_id == b.frame_id and a.timestamp == b.timestamp
        assert np.array_equal(a.B.matrix(), b.B.matrix()) and np.array_equal(a.C.matrix(), b.C.matrix())


def _obj(tmp_path, text):
    p = tmp_path / "m.obj"
    p.write_text(text)
    return p


def test_obj_cases(tmp_path):
    V, T = dataio.load_obj(_obj(tmp_path, "# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"))
    assert V.shape == (3, 3) and T.tolist() == [[0, 1, 2]]
    with pytest.raises(DanglingIndex):
        dataio.load_obj(_obj(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n"))
    with pytest.raises(UnsupportedDirective):
        dataio.load_obj(_obj(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n"))
    with pytest.raises(UnsupportedDirective):
        dataio.load_obj(_obj(tmp_path, "vn 0 0 1\n"))


def test_cube(tmp_path):
    corners = [(x, y, z) for x in (0, 1) for y in (0, 1) for z in (0, 1)]
    quads = [(1, 2, 4, 3), (5, 7, 8, 6), (1, 5, 6, 2), (3, 4, 8, 7), (1, 3, 7, 5), (2, 6, 8, 4)]
    lines = [f"v {x} {y} {z}" for x, y, z in corners]
    lines += [f"f {a} {b} {c}\nf {a} {c} {d}" for a, b, c, d in quads]
    V, T = dataio.load_obj(_obj(tmp_path, "\n".join(lines) + "\n"))
    assert V.shape == (8, 3) and T.shape == (12, 3)


def test_mesh_round_trip(tmp_path, mesh):
    dataio.save_mesh(tmp_path / "f.obj", tmp_path / "f.json", mesh)
    back = dataio.load_mesh(tmp_path / "f.obj", tmp_path / "f.json")
    assert back.part_names == mesh.part_names and back.hinge.signs == mesh.hinge.signs
    assert np.array_equal(articulate(back, 40.0), articulate(mesh, 40.0))


def test_sidecar_errors(tmp_path, mesh):
    dataio.save_mesh(tmp_path / "f.obj", tmp_path / "f.json", mesh)
    side = json.loads((tmp_path / "f.json").read_text())
    side["hinge"]["signs"]["jaw_middle"] = 1
    (tmp_path / "bad.json").write_text(json.dumps(side))
    with pytest.raises(UnknownPart):
        dataio.load_mesh(tmp_path / "f.obj", tmp_path / "bad.json")
    side = json.loads((tmp_path / "f.json").read_text())
    side["parts"] = side["parts"][:2]
    (tmp_path / "short.json").write_text(json.dumps(side))
    with pytest.raises(DanglingIndex):
        dataio.load_mesh(tmp_path / "f.obj", tmp_path / "short.json")


def _ann_file(tmp_path, *records):
    p = tmp_path / "a.jsonl"
    p.write_text("".join(json.dumps(r) + "\n" for r in records))
    return p


SQUARE = [[0, 0], [10, 0], [10, 10], [0, 10]]


def test_annotations_cases(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    assert dataio.load_annotations(p) == []
    bad = {"frame_id": "0", "instrument_id": "0", "polygons": [[[0, 0], [1, 1]]]}
    with pytest.raises(SchemaError) as exc:
        dataio.load_annotations(_ann_file(tmp_path, {"frame_id": "0", "instrument_id": "0", "polygons": [SQUARE]}, bad))
    assert exc.value.line == 2


def test_annotations_strict_and_lax(tmp_path):
    rec = {"frame_id": "3", "instrument_id": "1", "polygons": [SQUARE], "annotator": "kim"}
    p = _ann_file(tmp_path, rec)
    with pytest.raises(SchemaError):
        dataio.load_annotations(p)
    (a,) = dataio.load_annotations(p, strict=False)
    assert a.extra == {"annotator": "kim"}
    dataio.save_annotations(tmp_path / "b.jsonl", [a])
    assert json.loads((tmp_path / "b.jsonl").read_text())["annotator"] == "kim"


def test_annotation_bounds(tmp_path):
    rec = {"frame_id": "0", "instrument_id": "0", "polygons": [[[0, 0], [30, 0], [30, 5]]]}
    with pytest.raises(SchemaError):
        dataio.load_annotations(_ann_file(tmp_path, rec), image_size=(20, 20))
    rec["polygons"] = [[[-1, 0], [21, 0], [21, 5]]]
    assert len(dataio.load_annotations(_ann_file(tmp_path, rec), image_size=(20, 20))) == 1


def test_annotation_round_trip(tmp_path):
    anns = [ContourAnnotation("0", "0", (((0.0, 0.0), (5.5, 0.0), (5.5, 3.25)),), 12.5),
            ContourAnnotation("1", "2", (tuple(map(tuple, SQUARE)), ((1.0, 1.0), (2.0, 1.0), (2.0, 2.0))))]
    dataio.save_annotations(tmp_path / "r.jsonl", anns)
    assert dataio.load_annotations(tmp_path / "r.jsonl") == anns


def test_attach_annotations_rejects_orphans():
    frames = [CalibrationFrame("0", I, I)]
    ann = ContourAnnotation("9", "0", (tuple(map(tuple, SQUARE)),))
    with pytest.raises(DataError):
        dataio.attach_annotations(frames, [ann])


def test_json_records_round_trip(tmp_path, rng):
    cam = default_intrinsics_for_fov(299, 299, 95)
    dataio.save_intrinsics(tmp_path / "i.json", cam)
    assert dataio.load_intrinsics(tmp_path / "i.json") == cam
    nom = HandEyeNominals(random_transform(rng), random_transform(rng))
    dataio.save_nominals(tmp_path / "n.json", nom)
    back = dataio.load_nominals(tmp_path / "n.json")
    assert np.array_equal(back.X_nom.matrix(), nom.X_nom.matrix())
    assert np.array_equal(back.Z_nom.matrix(), nom.Z_nom.matrix())


def test_manifest(tmp_path):
    (tmp_path / "intr.json").write_text("{}")
    (tmp_path / "m.obj").write_text("")
    (tmp_path / "t.csv").write_text("")
    dataio.save_manifest(tmp_path / "manifest.json", intrinsics="intr.json", mesh="m.obj", tracker="t.csv")
    m = dataio.load_manifest(tmp_path / "manifest.json")
    assert m.tracker == tmp_path / "t.csv" and m.annotations is None
    obj = json.loads((tmp_path / "manifest.json").read_text())
    for change in ({"schema_version": 2}, {"colour": "red"}):
        (tmp_path / "bad.json").write_text(json.dumps(obj | change))
        with pytest.raises(SchemaError):
            dataio.load_manifest(tmp_path / "bad.json")
    (tmp_path / "bad.json").write_text(json.dumps(obj | {"tracker": "missing.csv"}))
    with pytest.raises(DataError):
        dataio.load_manifest(tmp_path / "bad.json")


def test_eval_records(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_text(json.dumps({"image_id": "a", "instance_id": "1", "pose": {}, "box": [0, 0, 2, 2]}) + "\n")
    (rec,) = dataio.load_eval_records(p)
    assert rec["box"].area == 4
    p.write_text(json.dumps({"image_id": "a", "pose": {}, "box": [0, 0, 2, 2]}) + "\n")
    with pytest.raises(SchemaError):
        dataio.load_eval_records(p)


def test_pgm_round_trip(tmp_path, rng):
    m = rng.random((13, 17)) < 0.4
    dataio.write_pgm(tmp_path / "m.pgm", m)
    raw = (tmp_path / "m.pgm").read_bytes()
    assert raw.startswith(b"P5\n17 13\n255\n") and len(raw) == len(b"P5\n17 13\n255\n") + 13 * 17
    assert np.array_equal(dataio.read_pgm(tmp_path / "m.pgm"), m)


def test_result_json_contents(tmp_path):
    from contourcal.calibrate import CalibrationResult, TraceEntry
    res = CalibrationResult(MountingCorrection(dx_X=(0.1, 0, 0)), I, RigidTransform(rot_x(1), (0, 0, 1)),
                            0.5, 0.9, (TraceEntry(0, 0, 0.1, 0.9, True),), 1, 10)
    dataio.save_result(tmp_path / "r.json", res)
    obj = json.loads((tmp_path / "r.json").read_text())
    assert obj["objective_before"] == 0.5 and obj["objective_after"] == 0.9 and len(obj["trace"]) == 1
    assert dataio.load_correction(tmp_path / "r.json") == res.correction
