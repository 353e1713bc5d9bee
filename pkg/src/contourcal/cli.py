"""Command-line entry points.

Exit codes: 0 success, 1 usage error, 2 bad input data, 3 numerical failure.
Machine-readable output goes to a file or stdout; a short human summary goes
to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import dataio
from .calibrate import (DEFAULT_COORDINATES, PARAM_NAMES, MountingCorrection, SearchConfig, calibrate,
                        synthesize_scenario, tip_in_camera)
from .camera import default_intrinsics_for_fov
from .errors import DataError, NumericalError
from .geometry import EulerPose, RigidTransform, from_euler
from .instrument import forceps_mesh
from .metrics import Detection, EvalPair, summarize
from .objective import ObjectiveConfig
from .raster import render_mask
from .scenegen import Catalogs, DRFlags, SceneGenConfig, write_jsonl

log = logging.getLogger("contourcal")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(obj, out: Path | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def _path(root: Path, p):
    if p is None:
        return None
    p = Path(p)
    return p if p.is_absolute() else root / p


def _parse_error_spec(text: str) -> MountingCorrection:
    """``"X.tx=0.6,Z.roll=0.5"`` -> correction vector."""
    v = np.zeros(12)
    if text:
        for item in text.split(","):
            name, _, val = item.partition("=")
            name = name.strip()
            if name not in PARAM_NAMES or not val:
                raise UsageError(f"bad error term {item!r}; use NAME=VALUE with NAME in {', '.join(PARAM_NAMES)}")
            v[PARAM_NAMES.index(name)] = float(val)
    return MountingCorrection.from_vector(v)


def _parse_coordinates(text: str | None) -> tuple:
    if text is None:
        return DEFAULT_COORDINATES
    if text == "all":
        return tuple(range(12))
    names = [t.strip() for t in text.split(",") if t.strip()]
    bad = [n for n in names if n not in PARAM_NAMES]
    if bad or not names:
        raise UsageError(f"unknown parameter(s) {bad}; choose from {', '.join(PARAM_NAMES)}")
    return tuple(PARAM_NAMES.index(n) for n in names)


def _load_mesh(m: dataio.DatasetManifest):
    return dataio.load_mesh(m.mesh, m.mesh_sidecar)


# --- commands ------------------------------------------------------------------------

def cmd_calibrate(args) -> int:
    m = dataio.load_manifest(_path(args.root, args.manifest))
    if m.nominals is None:
        raise DataError("manifest lacks nominals; calibration needs X_nom and Z_nom")
    cam = dataio.load_intrinsics(m.intrinsics)
    frames = m.load_frames(strict=not args.lax)
    obj_cfg = ObjectiveConfig(alpha=args.alpha, d_max=args.dmax, aggregate=args.aggregate)
    search_cfg = SearchConfig(max_sweeps=args.sweeps, line_tolerance=args.tol, bound_mm=args.bounds_mm,
                              bound_deg=args.bounds_deg, coordinates=_parse_coordinates(args.coordinates),
                              refine=args.refine, probes=args.probes)
    t0 = time.perf_counter()
    res = calibrate(frames, dataio.load_nominals(m.nominals), _load_mesh(m), cam, obj_cfg, search_cfg)
    elapsed = time.perf_counter() - t0
    extra = {"objective_config": asdict(obj_cfg), "search": {
        "max_sweeps": search_cfg.max_sweeps, "line_tolerance": search_cfg.line_tolerance,
        "bound_mm": search_cfg.bound_mm, "bound_deg": search_cfg.bound_deg,
        "coordinates": [PARAM_NAMES[i] for i in search_cfg.coordinates], "refine": search_cfg.refine,
        "probes": search_cfg.probes}}
    _emit(dataio.result_json(res, extra), _path(args.root, args.out))
    _say(f"objective {res.objective_before:.4f} -> {res.objective_after:.4f} "
         f"({res.sweeps} sweeps, {res.evaluations} evaluations, {elapsed:.1f} s)")
    _say("correction: " + ", ".join(f"{k}={v:+.3f}" for k, v in res.correction.to_json().items()))
    return 0


def _load_transform(path: Path, key: str) -> RigidTransform:
    obj = json.loads(path.read_text())
    if isinstance(obj, dict):
        if key not in obj:
            raise DataError(f"{path} has no {key!r} entry")
        obj = obj[key]
    return RigidTransform.from_matrix(obj)


def cmd_project(args) -> int:
    m = dataio.load_manifest(_path(args.root, args.manifest))
    cam = dataio.load_intrinsics(m.intrinsics)
    mesh = _load_mesh(m)
    frames = m.load_frames(strict=not args.lax)
    if m.nominals is not None:
        nom = dataio.load_nominals(m.nominals)
        X, Z = nom.X_nom, nom.Z_nom
    else:
        X = Z = RigidTransform.identity()
    if args.x_cal:
        X = _load_transform(_path(args.root, args.x_cal), "X_cal")
    if args.z_cal:
        Z = _load_transform(_path(args.root, args.z_cal), "Z_cal")
    if args.frames:
        wanted = [f.strip() for f in args.frames.split(",") if f.strip()]
        by_id = {fr.frame_id: fr for fr in frames}
        missing = [f for f in wanted if f not in by_id]
        if missing:
            raise DataError(f"unknown frame(s): {', '.join(missing)}")
        frames = [by_id[f] for f in wanted]
    out_dir = _path(args.root, args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    empty = 0
    for fr in frames:
        grip = fr.annotations[0].gripper_deg if fr.annotations else 0.0
        mask = render_mask(mesh, tip_in_camera(fr.B, fr.C, X, Z), grip, cam)
        if not mask.any():
            empty += 1
            _say(f"warning: frame {fr.frame_id}: silhouette is empty (behind the lens or out of view)")
        dataio.write_pgm(out_dir / f"{fr.frame_id}.pgm", mask)
    _say(f"wrote {len(frames)} masks to {out_dir} ({empty} empty)")
    return 0


def _pose(rec) -> RigidTransform:
    p = rec["pose"]
    return from_euler(EulerPose.from_json(p)) if isinstance(p, dict) else RigidTransform.from_matrix(p)


def cmd_evaluate(args) -> int:
    preds = dataio.load_eval_records(_path(args.root, args.pred))
    gts = dataio.load_eval_records(_path(args.root, args.gt))
    by_key = {}
    for r in preds:
        by_key.setdefault((str(r["image_id"]), str(r["instance_id"])), r)
    pairs, used = [], set()
    for g in gts:
        key = (str(g["image_id"]), str(g["instance_id"]))
        p = by_key.get(key)
        if p is not None:
            used.add(key)
        pairs.append(EvalPair(
            gt_pose=_pose(g), gt_box=g["box"],
            pred_pose=_pose(p) if p else None, pred_box=p["box"] if p else None,
            score=float(p.get("score", 1.0)) if p else 1.0, image_id=key[0]))
    extra = [Detection(k[0], r["box"], float(r.get("score", 1.0))) for k, r in by_key.items() if k not in used]
    summary = summarize(pairs, args.thr, extra)
    _emit(summary.to_json(), _path(args.root, args.out))
    fmt = lambda v, u: "n/a" if v is None else f"{v:.3f} {u}"
    _say(f"{summary.n_pairs} instances, detected {summary.detected_rate_pct:.1f}%, "
         f"translation {fmt(summary.mean_translation_mm, 'mm')}, centerline {fmt(summary.mean_centerline_deg, 'deg')}, "
         f"mAP@{args.thr:g} {summary.map_at_50:.3f}")
    return 0


def write_scenario(out_dir: Path, sc, cam, mesh, annotate: bool = True) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    dataio.save_intrinsics(out_dir / "intrinsics.json", cam)
    dataio.save_mesh(out_dir / "instrument.obj", out_dir / "instrument.json", mesh)
    dataio.save_tracker_log(out_dir / "tracker.csv", sc.frames)
    dataio.save_nominals(out_dir / "nominals.json", sc.nominals)
    anns = [a for fr in sc.frames for a in fr.annotations] if annotate else []
    if annotate:
        dataio.save_annotations(out_dir / "annotations.jsonl", anns)
    (out_dir / "truth.json").write_text(json.dumps(sc.truth.to_json(), indent=2, sort_keys=True) + "\n")
    dataio.save_manifest(out_dir / "manifest.json", intrinsics="intrinsics.json", mesh="instrument.obj",
                         mesh_sidecar="instrument.json", tracker="tracker.csv",
                         annotations="annotations.jsonl" if annotate else None, nominals="nominals.json")
    return out_dir / "manifest.json"


def cmd_synth_oracle(args) -> int:
    truth = _parse_error_spec(args.error)
    cam = default_intrinsics_for_fov(args.size, args.size, args.fov)
    mesh = forceps_mesh()
    sc = synthesize_scenario(truth, args.frames, mesh, cam, noise_mm=args.noise_mm, seed=args.seed)
    out_dir = _path(args.root, args.out_dir)
    write_scenario(out_dir, sc, cam, mesh)
    report = {"truth": truth.to_json(), "frames": args.frames, "noise_mm": args.noise_mm, "seed": args.seed}
    if not args.no_calibrate:
        t0 = time.perf_counter()
        res = calibrate(sc.frames, sc.nominals, mesh, cam, ObjectiveConfig(),
                        SearchConfig(max_sweeps=args.sweeps, coordinates=_parse_coordinates(args.coordinates)))
        err = res.correction.as_vector() - truth.as_vector()
        report.update({
            "recovered": res.correction.to_json(),
            "error": dict(zip(PARAM_NAMES, err.tolist())),
            "objective_before": res.objective_before,
            "objective_after": res.objective_after,
        })
        _say(f"objective {res.objective_before:.4f} -> {res.objective_after:.4f} in "
             f"{time.perf_counter() - t0:.1f} s; worst component error {np.max(np.abs(err)):.3f}")
    _emit(report, out_dir / "report.json")
    _say(f"wrote {args.frames}-frame scenario to {out_dir}")
    return 0


def _catalogs(root: Path, spec: str | None) -> Catalogs:
    if spec is None:
        return Catalogs.placeholder()
    p = _path(root, spec)
    if p.is_dir():
        found = {k: dataio.load_catalog(p / f"{k}.txt") for k in ("contextual", "surgery", "coco", "convex_maps")
                 if (p / f"{k}.txt").exists()}
        if "contextual" not in found:
            raise DataError(f"{p} has no contextual.txt")
        return Catalogs(**found)
    return dataio.load_manifest(p).load_catalogs()


def cmd_sample_scenes(args) -> int:
    if args.flags == "all":
        flags = DRFlags.all_on()
    elif args.flags in ("", "none"):
        flags = DRFlags()
    else:
        flags = DRFlags.from_names([f.strip() for f in args.flags.split(",") if f.strip()])
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    cats = _catalogs(args.root, args.catalogs)
    cfg = SceneGenConfig(image_size=(args.size, args.size))
    out = _path(args.root, args.out)
    if out is None:
        write_jsonl(sys.stdout, args.n, args.seed, flags, cats, cfg)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w") as fh:
            write_jsonl(fh, args.n, args.seed, flags, cats, cfg)
    _say(f"sampled {args.n} scenes (seed {args.seed}, components: {', '.join(flags.enabled()) or 'none'})")
    return 0


# --- parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="contourcal", description="Contour-based hand-eye calibration and scene sampling.",
                 formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ap.add_argument("--root", type=Path, default=Path("."), help="base directory for relative paths")
    ap.add_argument("-v", "--verbose", action="store_true", help="log search progress")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser, required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    c = sub.add_parser("calibrate", help="recover mounting corrections from annotated frames", formatter_class=fmt)
    c.add_argument("manifest")
    c.add_argument("--alpha", type=float, default=0.8, help="IoU weight in the objective; published setting")
    c.add_argument("--dmax", type=float, default=10.0, help="edge-proximity cutoff in pixels; published setting")
    c.add_argument("--aggregate", choices=("mean", "sum"), default="mean", help="how per-contour scores combine")
    c.add_argument("--bounds-mm", type=float, default=1.0, help="translation search half-width; published interval")
    c.add_argument("--bounds-deg", type=float, default=1.0, help="rotation search half-width; published interval")
    c.add_argument("--sweeps", type=int, default=10, help="maximum sweeps; design choice")
    c.add_argument("--tol", type=float, default=1e-3, help="line-search interval width; design choice")
    c.add_argument("--coordinates", default=None,
                   help="comma-separated parameters to search, or 'all'; default omits X.yaw (spin about the "
                        "shaft, invisible in silhouettes)")
    c.add_argument("--refine", choices=("sensitivity", "coordinate"), default="sensitivity",
                   help="search directions after the first coordinate sweep; design choice")
    c.add_argument("--probes", choices=("golden", "thirds"), default="golden",
                   help="line-search probe spacing: golden reuses a probe per step, thirds is the plain "
                        "ternary search; design choice")
    c.add_argument("--lax", action="store_true", help="keep unknown annotation fields instead of failing")
    c.add_argument("--out", help="result JSON (stdout when omitted)")
    c.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("project", help="render projected silhouettes as PGM masks", formatter_class=fmt)
    p.add_argument("manifest")
    p.add_argument("--x-cal", help="JSON with X_cal (a result file) or a bare 4x4 matrix; default nominal X")
    p.add_argument("--z-cal", help="JSON with Z_cal (a result file) or a bare 4x4 matrix; default nominal Z")
    p.add_argument("--frames", help="comma-separated frame ids (default all)")
    p.add_argument("--out-dir", default="masks", help="output directory")
    p.add_argument("--lax", action="store_true", help="keep unknown annotation fields instead of failing")
    p.set_defaults(func=cmd_project)

    e = sub.add_parser("evaluate", help="pose and detection metrics for predictions", formatter_class=fmt)
    e.add_argument("pred")
    e.add_argument("gt")
    e.add_argument("--thr", type=float, default=0.5, help="box IoU for a detection; common practice")
    e.add_argument("--out", help="summary JSON (stdout when omitted)")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("synth-oracle", help="write a synthetic scenario and check recovery", formatter_class=fmt)
    s.add_argument("--error", default="X.tx=0.6,Z.roll=0.5",
                   help="injected mounting error; magnitudes match the largest published estimates")
    s.add_argument("--frames", type=int, default=20, help="frame count; published protocol used 20 images")
    s.add_argument("--noise-mm", type=float, default=0.12, help="tracker RMS noise; published tracker spec")
    s.add_argument("--seed", type=int, default=0, help="random seed")
    s.add_argument("--size", type=int, default=299, help="image side in pixels; published image size")
    s.add_argument("--fov", type=float, default=95.0, help="horizontal field of view; published endoscope angle")
    s.add_argument("--sweeps", type=int, default=10, help="maximum sweeps; design choice")
    s.add_argument("--coordinates", default=None, help="parameters to search (see calibrate)")
    s.add_argument("--no-calibrate", action="store_true", help="only write the dataset")
    s.add_argument("--out-dir", default="synthetic", help="output directory")
    s.set_defaults(func=cmd_synth_oracle)

    g = sub.add_parser("sample-scenes", help="sample domain-randomized scene configurations", formatter_class=fmt)
    g.add_argument("--n", type=int, default=10000, help="scene count; published per-component dataset size")
    g.add_argument("--seed", type=int, default=42, help="seed shared by the pose and randomization streams")
    g.add_argument("--flags", default="all", help="comma-separated dr1..dr11, 'all' or 'none'")
    g.add_argument("--catalogs", help="directory of <name>.txt lists or a manifest; default placeholder names "
                                      "sized 754 contextual / 2840 surgery images")
    g.add_argument("--size", type=int, default=299, help="image side in pixels; published image size")
    g.add_argument("--out", help="JSONL output (stdout when omitted)")
    g.set_defaults(func=cmd_sample_scenes)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        _say(f"contourcal: usage error: {exc}")
        return 1
    except DataError as exc:
        _say(f"contourcal: data error: {exc}")
        return 2
    except NumericalError as exc:
        _say(f"contourcal: numerical failure: {exc}")
        return 3
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        _say(f"contourcal: data error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
