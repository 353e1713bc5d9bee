"""Pinhole endoscope camera with 2-term radial distortion and a circular view.

Pixel (u, v) covers [u, u+1) x [v, v+1) in continuous image coordinates,
so its centre sits at (u + 0.5, v + 0.5). Projections return continuous
coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadFov, DataError

BEHIND_EPS = 1e-9


@dataclass(frozen=True)
class ViewCircle:
    u: float
    v: float
    r: float


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    circle: ViewCircle
    k1: float = 0.0
    k2: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise DataError("focal lengths must be positive")
        if not (self.width > 0 and self.height > 0):
            raise DataError("image size must be positive")
        if not self.circle.r > 0:
            raise DataError("view circle radius must be positive")
        # the circle may overhang the image (an uncropped sensor); its centre may not
        if not (0 <= self.circle.u <= self.width and 0 <= self.circle.v <= self.height):
            raise DataError("view circle centre lies outside the image")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def to_json(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "k1": self.k1, "k2": self.k2,
            "width": self.width, "height": self.height,
            "circle": {"u": self.circle.u, "v": self.circle.v, "r": self.circle.r},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CameraIntrinsics":
        try:
            c = obj["circle"]
            return cls(
                fx=float(obj["fx"]), fy=float(obj["fy"]),
                cx=float(obj["cx"]), cy=float(obj["cy"]),
                width=int(obj["width"]), height=int(obj["height"]),
                circle=ViewCircle(float(c["u"]), float(c["v"]), float(c["r"])),
                k1=float(obj.get("k1", 0.0)), k2=float(obj.get("k2", 0.0)),
            )
        except (KeyError, TypeError) as exc:
            raise DataError(f"bad intrinsics record: {exc}") from None


def default_intrinsics_for_fov(width: int = 299, height: int = 299, fov_deg: float = 95.0) -> CameraIntrinsics:
    """Square-pixel intrinsics whose horizontal field of view is ``fov_deg``."""
    if not 0.0 < fov_deg < 180.0:
        raise BadFov(f"field of view must lie in (0, 180) degrees, got {fov_deg}")
    f = (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    cx, cy = width / 2.0, height / 2.0
    return CameraIntrinsics(f, f, cx, cy, width, height, ViewCircle(cx, cy, min(width, height) / 2.0))


def project_point(cam: CameraIntrinsics, p) -> tuple[float, float] | None:
    """Project one camera-frame point; ``None`` when it is at or behind the lens plane."""
    x, y, z = (float(c) for c in p)
    if z <= BEHIND_EPS:
        return None
    xn, yn = x / z, y / z
    r2 = xn * xn + yn * yn
    s = 1.0 + cam.k1 * r2 + cam.k2 * r2 * r2
    return (cam.fx * xn * s + cam.cx, cam.fy * yn * s + cam.cy)


def project_points(cam: CameraIntrinsics, pts) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection: returns ``(uv, in_front)``; uv rows of points behind are NaN."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    z = pts[:, 2]
    front = z > BEHIND_EPS
    uv = np.full((len(pts), 2), np.nan)
    zf = z[front]
    xn = pts[front, 0] / zf
    yn = pts[front, 1] / zf
    r2 = xn * xn + yn * yn
    s = 1.0 + cam.k1 * r2 + cam.k2 * r2 * r2
    uv[front, 0] = cam.fx * xn * s + cam.cx
    uv[front, 1] = cam.fy * yn * s + cam.cy
    return uv, front


def view_mask(cam: CameraIntrinsics) -> np.ndarray:
    """Boolean (height, width) mask of pixels whose centres fall in the view circle."""
    uu = np.arange(cam.width) + 0.5
    vv = np.arange(cam.height) + 0.5
    du = (uu - cam.circle.u) ** 2
    dv = (vv - cam.circle.v) ** 2
    return (dv[:, None] + du[None, :]) <= cam.circle.r ** 2
