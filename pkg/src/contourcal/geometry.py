"""Rigid transforms, Euler poses, the 7-channel pose codec and the pose loss.

Units: millimetres for translations, degrees at every public angle
interface. Euler angles follow the intrinsic Z-Y-X convention
(yaw about z, then pitch about the new y, then roll about the new x), so
``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import DataError, OutOfRange

EULER_CONVENTION = "ZYX-intrinsic"
ORTHO_TOL = 1e-6
DRIFT_TOL = 1e-10

POSE_CHANNELS = ("x", "y", "z", "roll", "pitch", "yaw", "gripper")


def rot_x(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def axis_angle(axis, deg: float) -> np.ndarray:
    """Rodrigues rotation about a unit ``axis``."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    th = math.radians(deg)
    return np.eye(3) + math.sin(th) * K + (1.0 - math.cos(th)) * (K @ K)


def orthonormal_drift(R: np.ndarray) -> float:
    return float(np.max(np.abs(R.T @ R - np.eye(3))))


def nearest_rotation(R: np.ndarray) -> np.ndarray:
    """Project a near-rotation onto SO(3) (polar decomposition via SVD)."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] *= -1
        Q = U @ Vt
    return Q


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Element of SE(3); maps child-frame coordinates into the parent frame."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise DataError("transform contains non-finite values")
        if orthonormal_drift(R) > ORTHO_TOL or np.linalg.det(R) <= 0:
            raise DataError("rotation is not a proper orthonormal matrix")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def _trusted(cls, R: np.ndarray, t: np.ndarray) -> "RigidTransform":
        # skips validation; callers guarantee a proper rotation
        obj = object.__new__(cls)
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(obj, "rotation", R)
        object.__setattr__(obj, "translation", t)
        return obj

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls._trusted(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t) -> "RigidTransform":
        return cls(np.eye(3), t)

    @classmethod
    def from_matrix(cls, M) -> "RigidTransform":
        M = np.asarray(M, dtype=float)
        if M.shape == (4, 4):
            if not np.allclose(M[3], [0.0, 0.0, 0.0, 1.0]):
                raise DataError("bottom row of a homogeneous transform must be [0 0 0 1]")
        elif M.shape != (3, 4):
            raise DataError(f"expected 3x4 or 4x4 matrix, got {M.shape}")
        return cls(M[:3, :3], M[:3, 3])

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        R = self.rotation @ other.rotation
        t = self.rotation @ other.translation + self.translation
        if orthonormal_drift(R) > DRIFT_TOL:
            R = nearest_rotation(R)
        return RigidTransform._trusted(R, t)

    __matmul__ = compose

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T.copy()
        return RigidTransform._trusted(Rt, -Rt @ self.translation)

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def almost_equal(self, other: "RigidTransform", tol: float = 1e-9) -> bool:
        return bool(
            np.max(np.abs(self.rotation - other.rotation)) <= tol
            and np.max(np.abs(self.translation - other.translation)) <= tol
        )

    def __repr__(self):
        return f"RigidTransform(R={self.rotation.tolist()}, t={self.translation.tolist()})"


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return a.compose(b)


def invert(t: RigidTransform) -> RigidTransform:
    return t.inverse()


@dataclass(frozen=True)
class EulerPose:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0
    gripper: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in POSE_CHANNELS], dtype=float)

    @classmethod
    def from_array(cls, values) -> "EulerPose":
        v = [float(x) for x in values]
        if len(v) != 7:
            raise DataError(f"pose needs 7 values, got {len(v)}")
        return cls(*v)

    def to_json(self) -> dict:
        return {
            "x_mm": self.x,
            "y_mm": self.y,
            "z_mm": self.z,
            "roll_deg": self.roll,
            "pitch_deg": self.pitch,
            "yaw_deg": self.yaw,
            "gripper_deg": self.gripper,
            "euler_convention": EULER_CONVENTION,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EulerPose":
        conv = obj.get("euler_convention", EULER_CONVENTION)
        if conv != EULER_CONVENTION:
            raise DataError(f"unsupported euler_convention {conv!r}")
        try:
            return cls(
                float(obj["x_mm"]),
                float(obj["y_mm"]),
                float(obj["z_mm"]),
                float(obj["roll_deg"]),
                float(obj["pitch_deg"]),
                float(obj["yaw_deg"]),
                float(obj.get("gripper_deg", 0.0)),
            )
        except KeyError as exc:
            raise DataError(f"pose record missing key {exc}") from None


def rotation_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def from_euler(p: EulerPose) -> RigidTransform:
    R = rotation_from_euler(p.roll, p.pitch, p.yaw)
    return RigidTransform._trusted(R, np.array([p.x, p.y, p.z], dtype=float))


def to_euler(t: RigidTransform, gripper: float = 0.0) -> EulerPose:
    """Inverse of :func:`from_euler`; yaw is returned in [0, 360)."""
    R = t.rotation
    sp = -R[2, 0]
    cp = math.hypot(R[0, 0], R[1, 0])
    pitch = math.degrees(math.atan2(sp, cp))
    if cp > 1e-9:
        roll = math.degrees(math.atan2(R[2, 1], R[2, 2]))
        yaw = math.degrees(math.atan2(R[1, 0], R[0, 0]))
    else:
        # gimbal lock: fold everything into yaw
        roll = 0.0
        yaw = math.degrees(math.atan2(-R[0, 1], R[1, 1]))
    yaw = yaw % 360.0
    if yaw >= 360.0:
        yaw = 0.0
    x, y, z = (float(v) for v in t.translation)
    return EulerPose(x, y, z, roll, pitch, yaw, gripper)


@dataclass(frozen=True)
class PoseRangeTable:
    """Per-dimension (min, max); defaults are the endonasal workspace ranges."""

    x: tuple = (-20.0, 20.0)
    y: tuple = (-20.0, 20.0)
    z: tuple = (10.0, 35.0)
    roll: tuple = (50.0, 90.0)
    pitch: tuple = (-40.0, 40.0)
    yaw: tuple = (0.0, 360.0)
    gripper: tuple = (0.0, 60.0)

    def __post_init__(self):
        for f in fields(self):
            lo, hi = getattr(self, f.name)
            object.__setattr__(self, f.name, (float(lo), float(hi)))
            if not lo <= hi:
                raise DataError(f"range for {f.name} has min > max")

    def lows(self) -> np.ndarray:
        return np.array([getattr(self, n)[0] for n in POSE_CHANNELS])

    def highs(self) -> np.ndarray:
        return np.array([getattr(self, n)[1] for n in POSE_CHANNELS])

    def to_json(self) -> dict:
        return {n: list(getattr(self, n)) for n in POSE_CHANNELS}

    @classmethod
    def from_json(cls, obj: dict) -> "PoseRangeTable":
        return cls(**{n: tuple(obj[n]) for n in POSE_CHANNELS if n in obj})


def _wrapped_values(p: EulerPose, ranges: PoseRangeTable) -> np.ndarray:
    v = p.as_array()
    lo, hi = ranges.yaw
    if not lo <= v[5] <= hi:
        v[5] = v[5] % 360.0
    return v


def encode_pose7(p: EulerPose, ranges: PoseRangeTable | None = None) -> np.ndarray:
    """Normalize each pose dimension to [0, 1] over its range.

    A zero-width range encodes to 0 and decodes back to its single value.
    """
    ranges = ranges or PoseRangeTable()
    v = _wrapped_values(p, ranges)
    lo, hi = ranges.lows(), ranges.highs()
    bad = [n for n, val, a, b in zip(POSE_CHANNELS, v, lo, hi) if not a <= val <= b]
    if bad:
        raise OutOfRange(f"pose outside range in {', '.join(bad)}")
    span = hi - lo
    out = np.zeros(7)
    nz = span > 0
    out[nz] = (v[nz] - lo[nz]) / span[nz]
    return out


def decode_pose7(channels, ranges: PoseRangeTable | None = None) -> EulerPose:
    ranges = ranges or PoseRangeTable()
    c = np.asarray(channels, dtype=float)
    if c.shape != (7,):
        raise DataError("pose vector must have 7 channels")
    lo, hi = ranges.lows(), ranges.highs()
    return EulerPose.from_array(lo + c * (hi - lo))


DEFAULT_LOSS_WEIGHTS = (1.0, 1.0, 1.5, 2.0, 2.0, 0.1, 0.1)


def weighted_pose_loss(pred, gt, weights=DEFAULT_LOSS_WEIGHTS) -> float:
    """Channel-weighted squared error between two 7-channel pose vectors."""
    p = np.asarray(pred, dtype=float)
    g = np.asarray(gt, dtype=float)
    w = np.asarray(weights, dtype=float)
    if p.shape != (7,) or g.shape != (7,) or w.shape != (7,):
        raise DataError("pose loss needs 7-channel inputs and 7 weights")
    if np.any(w < 0):
        raise DataError("loss weights must be non-negative")
    return float(np.sum(w * (p - g) ** 2))
