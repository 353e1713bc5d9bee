"""Regenerate the end-to-end fixtures under tests/fixtures.

    python3 scripts/make_fixtures.py [--out tests/fixtures]

Scenarios are synthesized from fixed seeds, so rerunning reproduces the
committed files byte for byte. The evaluation summary is written from
hand-enumerated constants, not from the metrics code it checks.
"""
from __future__ import annotations

import argparse
import json
import shutil
from pathlib import Path

from contourcal import dataio
from contourcal.calibrate import MountingCorrection, synthesize_scenario, tip_in_camera
from contourcal.camera import default_intrinsics_for_fov
from contourcal.cli import write_scenario
from contourcal.instrument import forceps_mesh
from contourcal.raster import render_mask

ZERO_SEED = 11
INJECTED_SEED = 12
INJECTED = MountingCorrection(dx_X=(0.0, 0.0, 0.0), drpy_X=(0.0, 0.5, 0.0), dx_Z=(0.0, -0.6, 0.0))


def _eval_fixture(out: Path) -> None:
    """Four gt instances over three images, four matched predictions and one stray.

    By hand: detected a/1 (box IoU 1) and b/1 (IoU 0.5); a/2 has IoU 1/3.
    Rate 2/4 = 50 %, translation (5 + 0)/2 = 2.5 mm, centerline (0 + 10)/2 = 5 deg.
    Ranked by score: c/9 FP, a/1 TP, a/2 FP, b/1 TP with 4 positives, so
    recall 0, .25, .25, .5 and precision 0, .5, 1/3, .5; the envelope is .5
    up to recall .5, giving AP = .25 * .5 + .25 * .5 = 0.25.
    """
    pose = lambda **kw: {"x_mm": 0.0, "y_mm": 0.0, "z_mm": 20.0, "roll_deg": 0.0, "pitch_deg": 0.0,
                         "yaw_deg": 0.0, "gripper_deg": 0.0, "euler_convention": "ZYX-intrinsic"} | kw
    gt = [
        {"image_id": "a", "instance_id": "1", "pose": pose(), "box": [0, 0, 10, 10]},
        {"image_id": "a", "instance_id": "2", "pose": pose(), "box": [20, 20, 30, 30]},
        {"image_id": "b", "instance_id": "1", "pose": pose(), "box": [0, 0, 10, 10]},
        {"image_id": "c", "instance_id": "1", "pose": pose(), "box": [0, 0, 10, 10]},
    ]
    pred = [
        {"image_id": "a", "instance_id": "1", "pose": pose(x_mm=3.0, y_mm=4.0), "box": [0, 0, 10, 10], "score": 0.9},
        {"image_id": "a", "instance_id": "2", "pose": pose(), "box": [25, 20, 35, 30], "score": 0.8},
        {"image_id": "b", "instance_id": "1", "pose": pose(pitch_deg=10.0), "box": [0, 0, 10, 5], "score": 0.7},
        {"image_id": "c", "instance_id": "9", "pose": pose(), "box": [50, 50, 60, 60], "score": 0.95},
    ]
    out.mkdir(parents=True, exist_ok=True)
    for name, recs in (("gt.jsonl", gt), ("pred.jsonl", pred)):
        with open(out / name, "w") as fh:
            for r in recs:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
    expected = {"mean_translation_mm": 2.5, "mean_centerline_deg": 5.0, "detected_rate_pct": 50.0,
                "map_at_50": 0.25, "n_pairs": 4, "n_detected": 2}
    (out / "expected_summary.json").write_text(json.dumps(expected, indent=2, sort_keys=True) + "\n")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "tests" / "fixtures")
    args = ap.parse_args()
    cam = default_intrinsics_for_fov(299, 299, 95.0)
    mesh = forceps_mesh()

    zero = synthesize_scenario(MountingCorrection(), 20, mesh, cam, seed=ZERO_SEED)
    write_scenario(args.out / "zero_error", zero, cam, mesh)
    injected = synthesize_scenario(INJECTED, 20, mesh, cam, seed=INJECTED_SEED)
    write_scenario(args.out / "injected_error", injected, cam, mesh)
    write_scenario(args.out / "unannotated", zero, cam, mesh, annotate=False)

    # golden silhouette: first zero-error frame through the nominal chain
    fr = zero.frames[0]
    golden = render_mask(mesh, tip_in_camera(fr.B, fr.C, zero.nominals.X_nom, zero.nominals.Z_nom),
                         fr.annotations[0].gripper_deg, cam)
    golden_dir = args.out / "golden"
    if golden_dir.exists():
        shutil.rmtree(golden_dir)
    golden_dir.mkdir(parents=True)
    dataio.write_pgm(golden_dir / f"{fr.frame_id}.pgm", golden)

    _eval_fixture(args.out / "evaluate")
    print(f"fixtures written to {args.out}")


if __name__ == "__main__":
    main()
