"""Text-format loaders and writers: tracker CSV, OBJ + sidecar, annotation JSONL, JSON records, PGM."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .calibrate import CalibrationFrame, CalibrationResult, HandEyeNominals, MountingCorrection, PARAM_NAMES
from .camera import CameraIntrinsics
from .errors import (DanglingIndex, DataError, NonRigidRotation, ParseError, SchemaError, UnknownPart,
                     UnsupportedDirective)
from .geometry import RigidTransform, nearest_rotation, orthonormal_drift
from .metrics import BoundingBox2D
from .objective import ContourAnnotation
from .raster import Hinge, TriangleMesh
from .scenegen import Catalogs

MANIFEST_SCHEMA_VERSION = 1
REORTHO_LIMIT = 1e-3
EXACT_LIMIT = 1e-12  # rotations this close to orthonormal are kept bit-for-bit

TRACKER_HEADER = (["frame_id", "t_sec"]
                  + [f"B{r}{c}" for r in range(3) for c in range(4)]
                  + [f"C{r}{c}" for r in range(3) for c in range(4)])


def _num(x: float) -> str:
    # repr round-trips a double exactly (17 significant digits at most)
    return repr(float(x))


# --- tracker log ---------------------------------------------------------------------

def _rigid_from_row(values, row: int) -> RigidTransform:
    M = np.asarray(values, dtype=float).reshape(3, 4)
    R = M[:, :3]
    if np.linalg.det(R) <= 0:
        raise NonRigidRotation(f"row {row}: rotation has non-positive determinant", row=row)
    drift = orthonormal_drift(R)
    if drift > REORTHO_LIMIT:
        raise NonRigidRotation(f"row {row}: rotation is {drift:.2e} away from orthonormal", row=row)
    if drift > EXACT_LIMIT:
        R = nearest_rotation(R)
    return RigidTransform(R, M[:, 3])


def load_tracker_log(path) -> list[CalibrationFrame]:
    """Frames without annotations, one per data row (rows counted from 1 after the header)."""
    frames = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return frames
        if [h.strip() for h in header] != TRACKER_HEADER:
            raise ParseError("unexpected tracker header", row=0)
        for row, rec in enumerate(reader, start=1):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(TRACKER_HEADER):
                raise ParseError(f"row {row}: expected {len(TRACKER_HEADER)} fields, got {len(rec)}",
                                 row=row, column=min(len(rec), len(TRACKER_HEADER)) + 1)
            nums = []
            for col in range(1, len(rec)):
                try:
                    v = float(rec[col])
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    raise ParseError(f"row {row}, column {col + 1} ({TRACKER_HEADER[col]}): bad number {rec[col]!r}",
                                     row=row, column=col + 1)
                nums.append(v)
            frames.append(CalibrationFrame(
                frame_id=rec[0].strip(),
                B=_rigid_from_row(nums[1:13], row),
                C=_rigid_from_row(nums[13:25], row),
                timestamp=nums[0],
            ))
    return frames


def save_tracker_log(path, frames) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACKER_HEADER)
        for fr in frames:
            B = fr.B.matrix()[:3].ravel()
            C = fr.C.matrix()[:3].ravel()
            w.writerow([fr.frame_id, _num(fr.timestamp)] + [_num(v) for v in B] + [_num(v) for v in C])


# --- mesh ----------------------------------------------------------------------------

def load_obj(path) -> tuple[np.ndarray, np.ndarray]:
    """Vertices and triangles from the ``v``/``f`` subset of Wavefront OBJ (1-based indices)."""
    verts, tris = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            tag, args = parts[0], parts[1:]
            if tag == "v":
                if len(args) not in (3, 4):
                    raise ParseError(f"line {lineno}: vertex needs 3 coordinates", row=lineno)
                try:
                    verts.append([float(a) for a in args[:3]])
                except ValueError:
                    raise ParseError(f"line {lineno}: bad vertex coordinate", row=lineno) from None
            elif tag == "f":
                if len(args) != 3:
                    raise UnsupportedDirective(f"line {lineno}: only triangular faces are supported ({len(args)} vertices)")
                idx = []
                for a in args:
                    try:
                        k = int(a.split("/", 1)[0])
                    except ValueError:
                        raise ParseError(f"line {lineno}: bad face index {a!r}", row=lineno) from None
                    if k < 1 or k > len(verts):
                        raise DanglingIndex(f"line {lineno}: face index {k} does not name a preceding vertex")
                    idx.append(k - 1)
                tris.append(idx)
            else:
                raise UnsupportedDirective(f"line {lineno}: unsupported directive {tag!r}")
    return np.asarray(verts, dtype=float).reshape(-1, 3), np.asarray(tris, dtype=np.int64).reshape(-1, 3)


def save_obj(path, vertices, triangles) -> None:
    with open(path, "w") as fh:
        for v in np.asarray(vertices, dtype=float):
            fh.write("v " + " ".join(_num(x) for x in v) + "\n")
        for t in np.asarray(triangles, dtype=np.int64):
            fh.write("f " + " ".join(str(int(k) + 1) for k in t) + "\n")


def mesh_sidecar(mesh: TriangleMesh) -> dict:
    """Sidecar record for a mesh whose parts own contiguous vertex ranges."""
    parts = []
    for k, name in enumerate(mesh.part_names):
        idx = np.flatnonzero(mesh.vertex_part == k)
        if idx.size and idx[-1] - idx[0] + 1 != idx.size:
            raise DataError(f"part {name!r} does not own a contiguous vertex range")
        lo, hi = (int(idx[0]), int(idx[-1]) + 1) if idx.size else (0, 0)
        T = mesh.part_transforms[k]
        parts.append({"name": name, "vertices": [lo, hi], "transform": T.matrix()[:3].tolist()})
    out = {"parts": parts}
    if mesh.hinge is not None:
        out["hinge"] = {
            "axis": mesh.hinge.axis.tolist(),
            "origin": mesh.hinge.origin.tolist(),
            "signs": dict(zip(mesh.part_names, mesh.hinge.signs)),
        }
    return out


def load_mesh(obj_path, sidecar_path=None) -> TriangleMesh:
    V, T = load_obj(obj_path)
    if sidecar_path is None:
        return TriangleMesh(V, T)
    side = _read_json(sidecar_path)
    try:
        parts = side["parts"]
        names = [p["name"] for p in parts]
        owner = np.full(len(V), -1, dtype=np.int64)
        transforms = []
        for k, p in enumerate(parts):
            lo, hi = (int(x) for x in p["vertices"])
            if not 0 <= lo <= hi <= len(V):
                raise DanglingIndex(f"part {p['name']!r} vertex range [{lo}, {hi}) exceeds {len(V)} vertices")
            if np.any(owner[lo:hi] >= 0):
                raise DataError(f"part {p['name']!r} overlaps another part")
            owner[lo:hi] = k
            transforms.append(RigidTransform.from_matrix(p["transform"]) if "transform" in p
                              else RigidTransform.identity())
        if np.any(owner < 0):
            raise DanglingIndex(f"vertex {int(np.flatnonzero(owner < 0)[0])} belongs to no part")
        hinge = None
        if "hinge" in side:
            h = side["hinge"]
            unknown = sorted(set(h.get("signs", {})) - set(names))
            if unknown:
                raise UnknownPart(f"hinge names unknown part(s): {', '.join(unknown)}")
            hinge = Hinge(h["axis"], h.get("origin", [0.0, 0.0, 0.0]),
                          tuple(int(h.get("signs", {}).get(n, 0)) for n in names))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"bad mesh sidecar: {exc!r}") from None
    return TriangleMesh(V, T, tuple(names), owner, tuple(transforms), hinge)


def save_mesh(obj_path, sidecar_path, mesh: TriangleMesh) -> None:
    save_obj(obj_path, mesh.vertices, mesh.triangles)
    _write_json(sidecar_path, mesh_sidecar(mesh))


# --- annotations ---------------------------------------------------------------------

ANNOTATION_FIELDS = {"frame_id", "instrument_id", "polygons", "gripper_deg"}


def _parse_annotation(obj, line: int, strict: bool, image_size) -> ContourAnnotation:
    if not isinstance(obj, dict):
        raise SchemaError("record must be a JSON object", line)
    for key in ("frame_id", "instrument_id", "polygons"):
        if key not in obj:
            raise SchemaError(f"missing field {key!r}", line)
    extra = {k: v for k, v in obj.items() if k not in ANNOTATION_FIELDS}
    if strict and extra:
        raise SchemaError(f"unknown field(s) {sorted(extra)}", line)
    polys = obj["polygons"]
    if not isinstance(polys, list) or not polys:
        raise SchemaError("polygons must be a non-empty list", line)
    out = []
    for poly in polys:
        if not isinstance(poly, list) or len(poly) < 3:
            raise SchemaError("each polygon needs at least 3 vertices", line)
        pts = []
        for pt in poly:
            if (not isinstance(pt, list) or len(pt) != 2
                    or not all(isinstance(c, (int, float)) and not isinstance(c, bool) and math.isfinite(c) for c in pt)):
                raise SchemaError(f"bad vertex {pt!r}", line)
            if image_size is not None:
                w, h = image_size
                if not (-1 <= pt[0] <= w + 1 and -1 <= pt[1] <= h + 1):
                    raise SchemaError(f"vertex {pt!r} outside the {w}x{h} image", line)
            pts.append((float(pt[0]), float(pt[1])))
        out.append(tuple(pts))
    g = obj.get("gripper_deg", 0.0)
    if not isinstance(g, (int, float)) or isinstance(g, bool) or not math.isfinite(g):
        raise SchemaError("gripper_deg must be a number", line)
    return ContourAnnotation(str(obj["frame_id"]), str(obj["instrument_id"]), tuple(out), float(g), extra)


def load_annotations(path, strict: bool = True, image_size=None) -> list[ContourAnnotation]:
    """One contour instance per JSON line; unknown fields fail in strict mode and are kept otherwise."""
    out = []
    with open(path) as fh:
        for line, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON ({exc.msg})", line) from None
            out.append(_parse_annotation(obj, line, strict, image_size))
    return out


def annotation_json(a: ContourAnnotation) -> dict:
    rec = dict(a.extra)
    rec.update({
        "frame_id": a.frame_id,
        "instrument_id": a.instrument_id,
        "polygons": [[list(p) for p in poly] for poly in a.polygons],
        "gripper_deg": a.gripper_deg,
    })
    return rec


def save_annotations(path, annotations) -> None:
    with open(path, "w") as fh:
        for a in annotations:
            fh.write(json.dumps(annotation_json(a), sort_keys=True) + "\n")


def attach_annotations(frames, annotations) -> list[CalibrationFrame]:
    by_frame: dict = {}
    for a in annotations:
        by_frame.setdefault(a.frame_id, []).append(a)
    known = {fr.frame_id for fr in frames}
    orphans = sorted(set(by_frame) - known)
    if orphans:
        raise DataError(f"annotations reference unknown frame(s): {', '.join(orphans[:5])}")
    return [replace(fr, annotations=tuple(by_frame.get(fr.frame_id, ()))) for fr in frames]


# --- small JSON records --------------------------------------------------------------

def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc.msg})", exc.lineno) from None


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_intrinsics(path) -> CameraIntrinsics:
    return CameraIntrinsics.from_json(_read_json(path))


def save_intrinsics(path, cam: CameraIntrinsics) -> None:
    _write_json(path, cam.to_json())


def transform_json(T: RigidTransform) -> list:
    return T.matrix().tolist()


def load_nominals(path) -> HandEyeNominals:
    obj = _read_json(path)
    try:
        return HandEyeNominals(RigidTransform.from_matrix(obj["X_nom"]), RigidTransform.from_matrix(obj["Z_nom"]))
    except KeyError as exc:
        raise DataError(f"nominals record lacks {exc}") from None


def save_nominals(path, nominals: HandEyeNominals) -> None:
    _write_json(path, {"X_nom": transform_json(nominals.X_nom), "Z_nom": transform_json(nominals.Z_nom)})


def result_json(res: CalibrationResult, extra: Optional[dict] = None) -> dict:
    out = {
        "correction": res.correction.to_json(),
        "X_cal": transform_json(res.X_cal),
        "Z_cal": transform_json(res.Z_cal),
        "objective_before": res.objective_before,
        "objective_after": res.objective_after,
        "sweeps": res.sweeps,
        "evaluations": res.evaluations,
        "trace": [
            {"sweep": e.sweep, "parameter": PARAM_NAMES[e.index] if e.index >= 0 else "direction",
             "index": e.index, "value": e.value, "objective": e.objective, "accepted": e.accepted,
             **({"direction": list(e.direction)} if e.direction is not None else {})}
            for e in res.trace
        ],
    }
    if extra:
        out.update(extra)
    return out


def save_result(path, res: CalibrationResult, extra: Optional[dict] = None) -> None:
    _write_json(path, result_json(res, extra))


def load_correction(path) -> MountingCorrection:
    obj = _read_json(path)
    return MountingCorrection.from_json(obj.get("correction", obj))


def load_catalog(path) -> tuple:
    """Plain-text image list: one reference per line, blank lines and ``#`` comments skipped."""
    with open(path) as fh:
        return tuple(s for s in (line.split("#", 1)[0].strip() for line in fh) if s)


# --- manifest ------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    intrinsics: Path
    mesh: Path
    tracker: Path
    annotations: Optional[Path] = None
    nominals: Optional[Path] = None
    mesh_sidecar: Optional[Path] = None
    catalogs: Optional[dict] = None
    schema_version: int = MANIFEST_SCHEMA_VERSION

    def load_frames(self, strict: bool = True) -> list[CalibrationFrame]:
        frames = load_tracker_log(self.tracker)
        if self.annotations is None:
            return frames
        cam = load_intrinsics(self.intrinsics)
        anns = load_annotations(self.annotations, strict=strict, image_size=(cam.width, cam.height))
        return attach_annotations(frames, anns)

    def load_catalogs(self) -> Catalogs:
        if not self.catalogs:
            raise DataError("manifest lists no catalogs")
        return Catalogs(**{k: load_catalog(v) for k, v in self.catalogs.items()})


_MANIFEST_KEYS = {"schema_version", "intrinsics", "mesh", "mesh_sidecar", "tracker", "annotations", "nominals",
                  "catalogs"}


def load_manifest(path) -> DatasetManifest:
    """Manifest JSON; relative paths resolve against the manifest's own directory."""
    path = Path(path)
    obj = _read_json(path)
    if not isinstance(obj, dict):
        raise SchemaError("manifest must be a JSON object")
    if obj.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise SchemaError(f"unrecognized manifest schema_version {obj.get('schema_version')!r}")
    unknown = sorted(set(obj) - _MANIFEST_KEYS)
    if unknown:
        raise SchemaError(f"unknown manifest field(s) {unknown}")
    root = path.parent

    def resolve(key, required=True):
        if key not in obj or obj[key] is None:
            if required:
                raise SchemaError(f"manifest lacks {key!r}")
            return None
        p = root / obj[key]
        if not p.exists():
            raise DataError(f"manifest entry {key!r}: {p} does not exist")
        return p

    catalogs = None
    if obj.get("catalogs"):
        catalogs = {}
        for k, v in obj["catalogs"].items():
            if k not in ("contextual", "surgery", "coco", "convex_maps"):
                raise SchemaError(f"unknown catalog {k!r}")
            p = root / v
            if not p.exists():
                raise DataError(f"catalog {k!r}: {p} does not exist")
            catalogs[k] = p
    return DatasetManifest(
        root=root,
        intrinsics=resolve("intrinsics"),
        mesh=resolve("mesh"),
        tracker=resolve("tracker"),
        annotations=resolve("annotations", required=False),
        nominals=resolve("nominals", required=False),
        mesh_sidecar=resolve("mesh_sidecar", required=False),
        catalogs=catalogs,
    )


def save_manifest(path, **entries) -> None:
    rec = {"schema_version": MANIFEST_SCHEMA_VERSION}
    rec.update({k: v for k, v in entries.items() if v is not None})
    _write_json(path, rec)


# --- evaluation records --------------------------------------------------------------

def load_eval_records(path) -> list[dict]:
    """Per-instance JSONL: image_id, instance_id, pose (tip pose fields), box [u0, v0, u1, v1], optional score."""
    out = []
    with open(path) as fh:
        for line, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON ({exc.msg})", line) from None
            for key in ("image_id", "instance_id", "pose", "box"):
                if key not in obj:
                    raise SchemaError(f"missing field {key!r}", line)
            try:
                obj["box"] = BoundingBox2D.from_json(obj["box"])
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"bad box: {exc}", line) from None
            out.append(obj)
    return out


# --- images --------------------------------------------------------------------------

def write_pgm(path, mask: np.ndarray) -> None:
    """Binary PGM (P5), 255 where the mask is set."""
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write((m.astype(np.uint8) * 255).tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while end < len(data) and not data[end:end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P5":
        raise DataError("not a binary PGM")
    w, h, maxval = (int(f) for f in fields[1:])
    pix = np.frombuffer(data[pos + 1:pos + 1 + w * h], dtype=np.uint8)
    if pix.size != w * h or maxval != 255:
        raise DataError("truncated or unsupported PGM")
    return pix.reshape(h, w) > 127
