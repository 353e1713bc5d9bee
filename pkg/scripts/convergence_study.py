"""Compare search schedules on noiseless synthetic cases.

    python3 scripts/convergence_study.py [--sweeps 10] [--probes golden,thirds]

For each injected error, runs the pure cyclic coordinate schedule
(``refine="coordinate"``) and the default schedule that follows the first
coordinate sweep with sensitivity-direction sweeps, each with every listed
probe spacing, and prints the final objective, the worst component error,
the number of objective evaluations and the wall time.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from contourcal.calibrate import SearchConfig, calibrate, synthesize_scenario
from contourcal.camera import default_intrinsics_for_fov
from contourcal.cli import _parse_error_spec
from contourcal.instrument import forceps_mesh

CASES = (
    ("X.tx=0.6,Z.roll=0.5", 1),
    ("X.pitch=0.5,Z.ty=0.6", 2),
    ("X.tz=-0.6,Z.yaw=0.5", 3),
    ("Z.tx=0.6,Z.pitch=0.5", 4),
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sweeps", type=int, default=10)
    ap.add_argument("--frames", type=int, default=20)
    ap.add_argument("--probes", default="golden,thirds", help="comma-separated probe spacings to compare")
    args = ap.parse_args()
    cam = default_intrinsics_for_fov(299, 299, 95.0)
    mesh = forceps_mesh()
    print(f"{'case':24s} {'schedule':12s} {'probes':7s} {'O_before':>9s} {'O_after':>9s} {'max_err':>8s} "
          f"{'evals':>6s} {'time_s':>7s}")
    for spec, seed in CASES:
        truth = _parse_error_spec(spec)
        sc = synthesize_scenario(truth, args.frames, mesh, cam, seed=seed)
        for refine in ("coordinate", "sensitivity"):
            for probes in args.probes.split(","):
                cfg = SearchConfig(max_sweeps=args.sweeps, refine=refine, probes=probes)
                t0 = time.perf_counter()
                res = calibrate(sc.frames, sc.nominals, mesh, cam, search_cfg=cfg)
                err = np.max(np.abs(res.correction.as_vector() - truth.as_vector()))
                print(f"{spec:24s} {refine:12s} {probes:7s} {res.objective_before:9.4f} {res.objective_after:9.4f} "
                      f"{err:8.3f} {res.evaluations:6d} {time.perf_counter() - t0:7.1f}", flush=True)


if __name__ == "__main__":
    main()
