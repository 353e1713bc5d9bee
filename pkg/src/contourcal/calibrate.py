"""Markerless hand-eye calibration from annotated instrument contours.

The instrument tip is placed in the lens frame through the tracker chain
``Z^-1 C^-1 B X`` and its CAD silhouette is compared with the annotated
contour. Mounting errors are modelled as small corrections right-multiplied
onto the nominal X (marker -> tip) and Z (marker -> lens) transforms, and
recovered by cyclic coordinate ascent with a ternary line search per
parameter, followed by sweeps along the principal directions of the
silhouette's sensitivity to the parameters. Line searches place their two
probes at golden-ratio points by default, which halves their cost.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraIntrinsics, project_point, project_points, view_mask
from .errors import AllProjectionsEmpty, EmptyGroundTruth, NoAnnotatedFrames
from .geometry import EulerPose, PoseRangeTable, RigidTransform, from_euler
from .objective import ContourAnnotation, ContourTarget, ObjectiveConfig, reduce_scores
from .raster import (TriangleMesh, articulate, mask_to_polygons, rasterize_polygons, rasterize_silhouette,
                     render_mask)

log = logging.getLogger(__name__)

PARAM_NAMES = (
    "X.tx", "X.ty", "X.tz", "X.roll", "X.pitch", "X.yaw",
    "Z.tx", "Z.ty", "Z.tz", "Z.roll", "Z.pitch", "Z.yaw",
)
ANGLE_PARAMS = frozenset((3, 4, 5, 9, 10, 11))
DIRECTION_STEP = -1  # trace index of a line search along a sensitivity direction
SPIN_ABOUT_SHAFT = 5  # X.yaw: moves the silhouette by far less than a pixel over its whole bound
DEFAULT_COORDINATES = tuple(i for i in range(12) if i != SPIN_ABOUT_SHAFT)


@dataclass(frozen=True)
class MountingCorrection:
    dx_X: tuple = (0.0, 0.0, 0.0)
    drpy_X: tuple = (0.0, 0.0, 0.0)
    dx_Z: tuple = (0.0, 0.0, 0.0)
    drpy_Z: tuple = (0.0, 0.0, 0.0)

    def as_vector(self) -> np.ndarray:
        return np.array([*self.dx_X, *self.drpy_X, *self.dx_Z, *self.drpy_Z], dtype=float)

    @classmethod
    def from_vector(cls, v) -> "MountingCorrection":
        v = [float(x) for x in v]
        if len(v) != 12:
            raise ValueError("mounting correction has 12 parameters")
        return cls(tuple(v[0:3]), tuple(v[3:6]), tuple(v[6:9]), tuple(v[9:12]))

    def to_json(self) -> dict:
        return dict(zip(PARAM_NAMES, self.as_vector().tolist()))

    @classmethod
    def from_json(cls, obj: dict) -> "MountingCorrection":
        return cls.from_vector([float(obj.get(n, 0.0)) for n in PARAM_NAMES])


@dataclass(frozen=True)
class HandEyeNominals:
    X_nom: RigidTransform
    Z_nom: RigidTransform


@dataclass(frozen=True)
class CalibrationFrame:
    frame_id: str
    B: RigidTransform
    C: RigidTransform
    annotations: tuple = ()
    timestamp: float = 0.0


@dataclass(frozen=True)
class SearchConfig:
    max_sweeps: int = 10
    line_tolerance: float = 1e-3
    sweep_improvement_tol: float = 1e-4
    bound_mm: float = 1.0
    bound_deg: float = 1.0
    coordinates: tuple = DEFAULT_COORDINATES
    refine: str = "sensitivity"
    trust_floor: float = 0.05
    probes: str = "golden"

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if not (self.line_tolerance > 0 and self.sweep_improvement_tol > 0):
            raise ValueError("tolerances must be positive")
        if not (self.bound_mm > 0 and self.bound_deg > 0):
            raise ValueError("search bounds must be positive")
        if not self.coordinates or any(c not in range(12) for c in self.coordinates):
            raise ValueError("coordinate indices must lie in 0..11")
        if self.refine not in ("sensitivity", "coordinate"):
            raise ValueError("refine must be 'sensitivity' or 'coordinate'")
        if self.probes not in LINE_SEARCHES:
            raise ValueError(f"probes must be one of {sorted(LINE_SEARCHES)}")

    def bound(self, index: int) -> float:
        return self.bound_deg if index in ANGLE_PARAMS else self.bound_mm


@dataclass(frozen=True)
class TraceEntry:
    sweep: int
    index: int
    value: float
    objective: float
    accepted: bool
    direction: tuple | None = None


@dataclass(frozen=True)
class CalibrationResult:
    correction: MountingCorrection
    X_cal: RigidTransform
    Z_cal: RigidTransform
    objective_before: float
    objective_after: float
    trace: tuple = ()
    sweeps: int = 0
    evaluations: int = 0


def tip_in_camera(B: RigidTransform, C: RigidTransform, X: RigidTransform, Z: RigidTransform) -> RigidTransform:
    """Instrument-tip frame expressed in the lens frame."""
    return Z.inverse() @ C.inverse() @ B @ X


def apply_correction(nom: RigidTransform, dt, drpy) -> RigidTransform:
    """``nom`` followed by a small rigid offset given in the nominal child frame."""
    dt = [float(x) for x in dt]
    roll, pitch, yaw = (float(a) for a in drpy)
    return nom @ from_euler(EulerPose(dt[0], dt[1], dt[2], roll, pitch, yaw))


def corrected(nominals: HandEyeNominals, corr: MountingCorrection) -> tuple[RigidTransform, RigidTransform]:
    return (apply_correction(nominals.X_nom, corr.dx_X, corr.drpy_X),
            apply_correction(nominals.Z_nom, corr.dx_Z, corr.drpy_Z))


def ternary_line_search(f, lo: float, hi: float, tol: float) -> tuple[float, float]:
    """Maximize ``f`` on [lo, hi] by two-probe interval shrinking.

    Exact for strictly unimodal ``f``; otherwise the result is a local
    maximum. Equal probes shrink both ends, so a constant function returns
    the interval midpoint.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    while hi - lo >= tol:
        third = (hi - lo) / 3.0
        m1, m2 = lo + third, hi - third
        f1, f2 = f(m1), f(m2)
        if f1 < f2:
            lo = m1
        elif f1 > f2:
            hi = m2
        else:
            lo, hi = m1, m2
    x = 0.5 * (lo + hi)
    return x, f(x)


INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_line_search(f, lo: float, hi: float, tol: float) -> tuple[float, float]:
    """Two-probe interval shrinking with golden-ratio spacing.

    Same contract as ``ternary_line_search``, but one probe survives each
    shrink, so every step costs a single evaluation instead of two.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    m1, m2 = None, None
    while hi - lo >= tol:
        if m1 is None:
            m1, m2 = hi - INV_PHI * (hi - lo), lo + INV_PHI * (hi - lo)
            f1, f2 = f(m1), f(m2)
        if f1 < f2:
            lo, m1, f1 = m1, m2, f2
            if hi - lo >= tol:
                m2 = lo + INV_PHI * (hi - lo)
                f2 = f(m2)
        elif f1 > f2:
            hi, m2, f2 = m2, m1, f1
            if hi - lo >= tol:
                m1 = hi - INV_PHI * (hi - lo)
                f1 = f(m1)
        else:
            lo, hi = m1, m2
            m1 = None
    x = 0.5 * (lo + hi)
    return x, f(x)


LINE_SEARCHES = {"golden": golden_line_search, "thirds": ternary_line_search}


class FrameSetObjective:
    """Dataset objective as a function of the 12 mounting-correction parameters."""

    def __init__(self, frames, nominals: HandEyeNominals, mesh: TriangleMesh, cam: CameraIntrinsics,
                 cfg: ObjectiveConfig = ObjectiveConfig()):
        self.nominals = nominals
        self.mesh = mesh
        self.cam = cam
        self.cfg = cfg
        self.view = view_mask(cam)
        self.items = []
        size = (cam.width, cam.height)
        for fr in frames:
            if not fr.annotations:
                continue
            chain = fr.C.inverse() @ fr.B
            for ann in fr.annotations:
                gt = rasterize_polygons(ann.polygons, size)
                try:
                    target = ContourTarget(gt, cfg)
                except EmptyGroundTruth:
                    log.warning("frame %s instrument %s: annotation covers no pixels; skipped",
                                fr.frame_id, ann.instrument_id)
                    continue
                local = articulate(mesh, float(ann.gripper_deg))
                self.items.append((fr.frame_id, chain, local, target))
        if not self.items:
            raise NoAnnotatedFrames("no frame carries a usable contour annotation")
        self.evaluations = 0

    def poses(self, params) -> list[RigidTransform]:
        X, Z = corrected(self.nominals, MountingCorrection.from_vector(params))
        Zi = Z.inverse()
        return [Zi @ chain @ X for _, chain, _, _ in self.items]

    def masks(self, params) -> list[np.ndarray]:
        tris = self.mesh.triangles
        return [rasterize_silhouette(T.apply(local), tris, self.cam, self.view)
                for T, (_, _, local, _) in zip(self.poses(params), self.items)]

    def scores(self, params) -> list[float]:
        self.evaluations += 1
        return [target.score(m) for m, (_, _, _, target) in zip(self.masks(params), self.items)]

    def __call__(self, params) -> float:
        return reduce_scores(self.scores(params), self.cfg)

    def _projections(self, params):
        return [(project_points(self.cam, T.apply(local))[0], T.apply(local))
                for T, (_, _, local, _) in zip(self.poses(params), self.items)]

    def sensitivity_basis(self, params, active, h: float = 1e-3) -> np.ndarray:
        """Orthonormal directions (12 x len(active)) from the Gauss-Newton matrix of vertex image motion.

        Only motion a silhouette can show is counted: shaft vertices (local
        z <= 0) contribute their motion across the projected shaft axis, distal
        parts their full image motion. Vertices behind the lens or outside the
        view circle are ignored.
        """
        params = np.asarray(params, dtype=float)
        circle = self.cam.circle
        base = self._projections(params)
        steps = []
        for i in active:
            e = np.zeros(12)
            e[i] = h
            steps.append((self._projections(params + e), self._projections(params - e)))
        rows = []
        for k, (uv, P) in enumerate(base):
            keep = (P[:, 2] > 1.0) & (np.hypot(uv[:, 0] - circle.u, uv[:, 1] - circle.v) < circle.r)
            if not keep.any():
                continue
            D = np.stack([(plus[k][0] - minus[k][0]) / (2 * h) for plus, minus in steps], axis=2)[keep]
            T = self.poses(params)[k]
            ends = T.apply(np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -5.0]]))
            local = self.items[k][2][keep]
            distal = local[:, 2] > 0.0
            if ends[1, 2] > 1.0 and ends[0, 2] > 1.0:
                (a, b), _ = project_points(self.cam, ends)
                t = b - a
                n = np.array([-t[1], t[0]]) / (np.hypot(*t) or 1.0)
                rows.append(np.einsum("j,vjk->vk", n, D[~distal]))
            else:
                rows.append(D[~distal].reshape(-1, len(active)))
            rows.append(D[distal].reshape(-1, len(active)))
        J = np.vstack(rows) if rows else np.zeros((0, len(active)))
        _, V = np.linalg.eigh(J.T @ J)
        U = np.zeros((12, len(active)))
        U[active] = V
        return U


def _line_interval(x, u, bounds):
    """Range of t keeping ``x + t u`` inside the box ``|x_i| <= bounds_i``."""
    lo, hi = -np.inf, np.inf
    for xi, ui, bi in zip(x, u, bounds):
        if abs(ui) < 1e-15:
            continue
        a, b = (-bi - xi) / ui, (bi - xi) / ui
        lo, hi = max(lo, min(a, b)), min(hi, max(a, b))
    return lo, hi


def calibrate(frames, nominals: HandEyeNominals, mesh: TriangleMesh, cam: CameraIntrinsics,
              obj_cfg: ObjectiveConfig = ObjectiveConfig(),
              search_cfg: SearchConfig = SearchConfig()) -> CalibrationResult:
    """Recover the mounting corrections of X and Z that best align projected silhouettes.

    The first sweep runs a ternary search on each coordinate in turn. With
    ``refine="sensitivity"`` later sweeps search along the eigenvectors of the
    silhouette sensitivity matrix instead, which follow the narrow ridges
    (e.g. a lens tilt traded against a lens shift) that single coordinates
    cannot climb. Every step stays inside the bound box and is kept only if
    the objective rises. ``probes`` picks golden-ratio or equal-thirds probe
    spacing for every line search.
    """
    objective = FrameSetObjective(frames, nominals, mesh, cam, obj_cfg)
    x = np.zeros(12)
    masks = objective.masks(x)
    if not any(m.any() for m in masks):
        depths = [float(T.translation[2]) for T in objective.poses(x)]
        raise AllProjectionsEmpty(
            f"no silhouette projects into the view with the nominal transforms "
            f"({len(masks)} contours, tip depths {min(depths):.1f}..{max(depths):.1f} mm)")
    best = objective(x)
    before = best
    trace = []
    sweeps = 0
    active = list(search_cfg.coordinates)
    bounds = np.array([search_cfg.bound(i) for i in range(12)])
    radius = None
    line_search = LINE_SEARCHES[search_cfg.probes]
    for sweep in range(search_cfg.max_sweeps):
        sweeps += 1
        start = best
        if sweep == 0 or search_cfg.refine == "coordinate":
            for i in active:
                def along(v, i=i):
                    y = x.copy()
                    y[i] = v
                    return objective(y)

                v, fv = line_search(along, -bounds[i], bounds[i], search_cfg.line_tolerance)
                accepted = fv > best
                if accepted:
                    x[i] = v
                    best = fv
                trace.append(TraceEntry(sweep, i, v, fv, accepted))
        else:
            U = objective.sensitivity_basis(x, active)
            if radius is None:
                radius = np.full(U.shape[1], np.inf)
            for k in range(U.shape[1]):
                u = U[:, k]
                lo, hi = _line_interval(x, u, bounds)
                lo, hi = max(lo, -radius[k]), min(hi, radius[k])
                if not lo < hi:
                    continue
                t, ft = line_search(lambda t: objective(x + t * u), lo, hi, search_cfg.line_tolerance)
                accepted = ft > best
                if accepted:
                    x = np.clip(x + t * u, -bounds, bounds)
                    best = ft
                    radius[k] = max(4.0 * abs(t), search_cfg.trust_floor)
                else:
                    radius[k] = max(min(radius[k], 1.0) / 2.0, search_cfg.trust_floor)
                trace.append(TraceEntry(sweep, DIRECTION_STEP, t, ft, accepted, tuple(u.tolist())))
        log.info("sweep %d: objective %.6f", sweep, best)
        if best - start < search_cfg.sweep_improvement_tol:
            break
    corr = MountingCorrection.from_vector(x)
    X_cal, Z_cal = corrected(nominals, corr)
    return CalibrationResult(corr, X_cal, Z_cal, before, best, tuple(trace), sweeps, objective.evaluations)


def evaluate_correction(frames, nominals: HandEyeNominals, corr: MountingCorrection, mesh: TriangleMesh,
                        cam: CameraIntrinsics, cfg: ObjectiveConfig = ObjectiveConfig()) -> float:
    """Dataset objective of ``frames`` under a given correction (e.g. on held-out frames)."""
    return FrameSetObjective(frames, nominals, mesh, cam, cfg)(corr.as_vector())


# --- synthetic scenarios -------------------------------------------------------------

DEFAULT_X_NOM = from_euler(EulerPose(0.0, 40.0, 160.0, 0.0, 0.0, 0.0))
DEFAULT_Z_NOM = from_euler(EulerPose(0.0, 35.0, 190.0, 30.0, 0.0, 0.0))


@dataclass
class Scenario:
    frames: list
    nominals: HandEyeNominals
    truth: MountingCorrection
    tip_poses: list = field(default_factory=list)
    masks: list = field(default_factory=list)


def sample_visible_pose(rng, ranges: PoseRangeTable, cam: CameraIntrinsics, max_tries: int = 1000) -> EulerPose:
    """Uniform pose from ``ranges`` whose tip projects inside the view circle."""
    from .scenegen import sample_pose

    for _ in range(max_tries):
        p = sample_pose(ranges, rng)
        uv = project_point(cam, (p.x, p.y, p.z))
        if uv is not None and math.hypot(uv[0] - cam.circle.u, uv[1] - cam.circle.v) < cam.circle.r:
            return p
    raise RuntimeError("could not sample a visible pose; check the ranges and intrinsics")


def synthesize_scenario(true_error: MountingCorrection, n_frames: int, mesh: TriangleMesh, cam: CameraIntrinsics,
                        pose_ranges: PoseRangeTable = PoseRangeTable(), noise_mm: float = 0.0, seed: int = 0,
                        nominals: HandEyeNominals | None = None, annotate: bool = True) -> Scenario:
    """Fabricate tracker frames and contour annotations for a known mounting error.

    Ground-truth silhouettes are rendered with the true X and Z, then turned
    into polygon annotations. ``noise_mm`` is the RMS of an isotropic
    Gaussian perturbation added to the B and C translations after rendering.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    nominals = nominals or HandEyeNominals(DEFAULT_X_NOM, DEFAULT_Z_NOM)
    X_true, Z_true = corrected(nominals, true_error)
    rng = np.random.default_rng(seed)
    sigma = noise_mm / math.sqrt(3.0)
    view = view_mask(cam)
    frames, poses, masks = [], [], []
    while len(frames) < n_frames:
        p = sample_visible_pose(rng, pose_ranges, cam)
        P = from_euler(p)
        mask = render_mask(mesh, P, p.gripper, cam, view)
        if not mask.any() or mask.all():
            continue
        C = from_euler(EulerPose(*rng.uniform(-300.0, 300.0, 3), *rng.uniform(-180.0, 180.0, 3)))
        B = C @ Z_true @ P @ X_true.inverse()
        if sigma > 0:
            B = RigidTransform(B.rotation, B.translation + rng.normal(0.0, sigma, 3))
            C = RigidTransform(C.rotation, C.translation + rng.normal(0.0, sigma, 3))
        fid = f"{len(frames):04d}"
        anns = ()
        if annotate:
            anns = (ContourAnnotation(fid, "0", tuple(mask_to_polygons(mask)), p.gripper),)
        frames.append(CalibrationFrame(fid, B, C, anns, timestamp=len(frames) / 20.0))
        poses.append(p)
        masks.append(mask)
    return Scenario(frames, nominals, true_error, poses, masks)
