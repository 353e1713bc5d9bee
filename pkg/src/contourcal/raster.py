"""Silhouette and polygon rasterization, edge maps, and the exact distance transform.

Masks are boolean numpy arrays indexed ``[row, col] == [v, u]``. Every fill
uses pixel-centre sampling: pixel (u, v) is set when the point
(u + 0.5, v + 0.5) lies inside the shape.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import ndimage

from .camera import CameraIntrinsics, view_mask
from .errors import DataError, DegeneratePolygon, JointLimit
from .geometry import RigidTransform, axis_angle

Z_NEAR = 1e-6
GRIPPER_LIMITS = (0.0, 60.0)
_BIG = 1e20


@dataclass(frozen=True)
class Hinge:
    axis: np.ndarray
    origin: np.ndarray
    signs: tuple  # one of -1, 0, +1 per part

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float).reshape(3)
        n = np.linalg.norm(axis)
        if abs(n - 1.0) > 1e-9:
            raise DataError(f"hinge axis must be unit length (norm {n})")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))
        signs = tuple(int(s) for s in self.signs)
        if any(s not in (-1, 0, 1) for s in signs):
            raise DataError("hinge signs must be -1, 0 or +1")
        object.__setattr__(self, "signs", signs)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Triangle soup split into rigid parts, optionally articulated by one hinge.

    ``vertex_part[i]`` names the part owning vertex ``i``. The hinge axis and
    origin are expressed in part coordinates, before the part transform.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    part_names: tuple = ("body",)
    vertex_part: np.ndarray | None = None
    part_transforms: tuple = ()
    hinge: Hinge | None = None

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        T = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if T.size and (T.min() < 0 or T.max() >= len(V)):
            raise DataError("triangle index out of range")
        vp = np.zeros(len(V), dtype=np.int64) if self.vertex_part is None else np.asarray(self.vertex_part, dtype=np.int64)
        if vp.shape != (len(V),) or (len(vp) and (vp.min() < 0 or vp.max() >= len(self.part_names))):
            raise DataError("vertex_part must assign every vertex to a known part")
        pt = tuple(self.part_transforms) or tuple(RigidTransform.identity() for _ in self.part_names)
        if len(pt) != len(self.part_names):
            raise DataError("need one transform per part")
        if self.hinge is not None and len(self.hinge.signs) != len(self.part_names):
            raise DataError("need one hinge sign per part")
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "triangles", T)
        object.__setattr__(self, "vertex_part", vp)
        object.__setattr__(self, "part_transforms", pt)
        object.__setattr__(self, "part_names", tuple(self.part_names))


def articulate(mesh: TriangleMesh, gripper_deg: float = 0.0) -> np.ndarray:
    """Vertices in the body frame after the hinge and the fixed part transforms."""
    if mesh.hinge is not None:
        lo, hi = GRIPPER_LIMITS
        if not lo <= gripper_deg <= hi:
            raise JointLimit(f"gripper angle {gripper_deg} outside [{lo}, {hi}] degrees")
    out = np.empty_like(mesh.vertices)
    for i, part_tf in enumerate(mesh.part_transforms):
        sel = mesh.vertex_part == i
        local = mesh.vertices[sel]
        sign = mesh.hinge.signs[i] if mesh.hinge is not None else 0
        if sign and gripper_deg:
            R = axis_angle(mesh.hinge.axis, sign * gripper_deg / 2.0)
            o = mesh.hinge.origin
            local = (local - o) @ R.T + o
        out[sel] = part_tf.apply(local)
    return out


def pose_mesh(mesh: TriangleMesh, body_pose: RigidTransform, gripper_deg: float = 0.0) -> np.ndarray:
    """Vertex positions after the hinge, the part transforms and ``body_pose``."""
    return body_pose.apply(articulate(mesh, gripper_deg))


@njit(cache=True)
def _fill_one(ax, ay, bx, by, cx, cy, out):
    H, W = out.shape
    area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if area == 0.0 or area != area:
        return
    if area < 0.0:
        bx, by, cx, cy = cx, cy, bx, by
    j0 = max(0, int(np.floor(max(min(ay, by, cy), -1e9) - 0.5)))
    j1 = min(H - 1, int(np.ceil(min(max(ay, by, cy), 1e9) - 0.5)))
    xs = (ax, bx, cx)
    ys = (ay, by, cy)
    for j in range(j0, j1 + 1):
        py = j + 0.5
        lo = -1e300
        hi = 1e300
        empty = False
        for k in range(3):
            x0, y0 = xs[k], ys[k]
            x1, y1 = xs[(k + 1) % 3], ys[(k + 1) % 3]
            # edge function e(px) = A + B * px, inside when >= 0
            B = -(y1 - y0)
            A = (x1 - x0) * (py - y0) + (y1 - y0) * x0
            if B > 0.0:
                lo = max(lo, -A / B)
            elif B < 0.0:
                hi = min(hi, -A / B)
            elif A < 0.0:
                empty = True
        if empty or lo > hi:
            continue
        # the span only narrows the scan; the exact edge test below decides
        i0 = max(0, int(np.floor(max(lo, -1e9) - 0.5)))
        i1 = min(W - 1, int(np.ceil(min(hi, 1e9) - 0.5)))
        for i in range(i0, i1 + 1):
            px = i + 0.5
            if ((bx - ax) * (py - ay) - (by - ay) * (px - ax) >= 0.0
                    and (cx - bx) * (py - by) - (cy - by) * (px - bx) >= 0.0
                    and (ax - cx) * (py - cy) - (ay - cy) * (px - cx) >= 0.0):
                out[j, i] = True


@njit(cache=True)
def _fill_triangles(uv, tris, out):
    for t in range(tris.shape[0]):
        a, b, c = tris[t, 0], tris[t, 1], tris[t, 2]
        _fill_one(uv[a, 0], uv[a, 1], uv[b, 0], uv[b, 1], uv[c, 0], uv[c, 1], out)


@njit(cache=True)
def _project(x, y, z, fx, fy, cx, cy, k1, k2):
    xn = x / z
    yn = y / z
    r2 = xn * xn + yn * yn
    s = 1.0 + k1 * r2 + k2 * r2 * r2
    return fx * xn * s + cx, fy * yn * s + cy


@njit(cache=True)
def _raster_mesh(P, tris, fx, fy, cx, cy, k1, k2, z_near, out):
    pu = np.empty(4)
    pv = np.empty(4)
    for t in range(tris.shape[0]):
        n = 0
        for k in range(3):
            a = tris[t, k]
            b = tris[t, (k + 1) % 3]
            az, bz = P[a, 2], P[b, 2]
            a_in = az >= z_near
            if a_in:
                pu[n], pv[n] = _project(P[a, 0], P[a, 1], az, fx, fy, cx, cy, k1, k2)
                n += 1
            if a_in != (bz >= z_near):
                s = (z_near - az) / (bz - az)
                qx = P[a, 0] + s * (P[b, 0] - P[a, 0])
                qy = P[a, 1] + s * (P[b, 1] - P[a, 1])
                pu[n], pv[n] = _project(qx, qy, z_near, fx, fy, cx, cy, k1, k2)
                n += 1
        for k in range(1, n - 1):
            _fill_one(pu[0], pv[0], pu[k], pv[k], pu[k + 1], pv[k + 1], out)


def fill_triangles_2d(uv: np.ndarray, tris: np.ndarray, shape) -> np.ndarray:
    """Union of 2D triangles (pixel-centre test, inclusive of edges)."""
    out = np.zeros(shape, dtype=np.bool_)
    if len(tris):
        _fill_triangles(np.ascontiguousarray(uv, dtype=np.float64), np.ascontiguousarray(tris, dtype=np.int64), out)
    return out


def rasterize_silhouette(posed: np.ndarray, triangles: np.ndarray, cam: CameraIntrinsics, view=None) -> np.ndarray:
    """Filled silhouette of posed triangles, clipped at the near plane and to the view circle.

    Triangles straddling the plane z = Z_NEAR are cut there and fan
    triangulated; edges between projected vertices are straight. An empty
    result is a valid outcome (nothing in front of the lens or in view).
    """
    out = np.zeros(cam.shape, dtype=np.bool_)
    tris = np.ascontiguousarray(triangles, dtype=np.int64)
    if len(tris):
        _raster_mesh(np.ascontiguousarray(posed, dtype=np.float64), tris,
                     cam.fx, cam.fy, cam.cx, cam.cy, cam.k1, cam.k2, Z_NEAR, out)
    out &= view_mask(cam) if view is None else view
    return out


def render_mask(mesh: TriangleMesh, body_pose: RigidTransform, gripper_deg: float, cam: CameraIntrinsics, view=None) -> np.ndarray:
    return rasterize_silhouette(pose_mesh(mesh, body_pose, gripper_deg), mesh.triangles, cam, view)


def _even_odd(P: np.ndarray, width: int, height: int) -> np.ndarray:
    a = P
    b = np.roll(P, -1, axis=0)
    # order each edge bottom-up so both traversal directions give identical crossings
    swap = b[:, 1] < a[:, 1]
    lo = np.where(swap[:, None], b, a)
    hi = np.where(swap[:, None], a, b)
    dy = hi[:, 1] - lo[:, 1]
    active = dy > 0
    lo, hi, dy = lo[active], hi[active], dy[active]
    out = np.zeros((height, width), dtype=bool)
    if len(lo) == 0:
        return out
    px = np.arange(width) + 0.5
    j0 = max(0, int(np.floor(lo[:, 1].min() - 0.5)))
    j1 = min(height - 1, int(np.ceil(hi[:, 1].max() - 0.5)))
    slope = (hi[:, 0] - lo[:, 0]) / dy
    for j in range(j0, j1 + 1):
        py = j + 0.5
        cross = (lo[:, 1] <= py) & (hi[:, 1] > py)
        if not cross.any():
            continue
        xs = np.sort(lo[cross, 0] + (py - lo[cross, 1]) * slope[cross])
        right = len(xs) - np.searchsorted(xs, px, side="right")
        out[j] = (right % 2) == 1
    return out


def rasterize_polygons(polys, size) -> np.ndarray:
    """Union of even-odd filled pixel-coordinate polygons; ``size`` is (width, height)."""
    width, height = int(size[0]), int(size[1])
    out = np.zeros((height, width), dtype=bool)
    for poly in polys:
        P = np.asarray(poly, dtype=float).reshape(-1, 2)
        if len(P) < 3:
            raise DegeneratePolygon(f"polygon has {len(P)} vertices, need at least 3")
        out |= _even_odd(P, width, height)
    return out


def extract_edges(mask: np.ndarray) -> np.ndarray:
    """Set pixels with at least one 4-neighbour unset or outside the image."""
    m = np.asarray(mask, dtype=bool)
    p = np.pad(m, 1, constant_values=False)
    interior = p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    return m & ~interior


@njit(cache=True)
def _envelope_1d(f, n, d, v, z):
    # lower envelope of parabolas (q - v)^2 + f[v]
    k = 0
    v[0] = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, n):
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) * (q - v[k]) + f[v[k]]


@njit(cache=True)
def _sq_edt(feat):
    H, W = feat.shape
    g = np.empty((H, W), dtype=np.float64)
    n = max(H, W)
    f = np.empty(n, dtype=np.float64)
    d = np.empty(n, dtype=np.float64)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1, dtype=np.float64)
    for col in range(W):
        anyf = False
        for r in range(H):
            if feat[r, col]:
                f[r] = 0.0
                anyf = True
            else:
                f[r] = _BIG
        if not anyf:
            for r in range(H):
                g[r, col] = _BIG
            continue
        _envelope_1d(f, H, d, v, z)
        for r in range(H):
            g[r, col] = d[r]
    out = np.empty((H, W), dtype=np.float64)
    for r in range(H):
        anyf = False
        for c in range(W):
            f[c] = g[r, c]
            if g[r, c] < _BIG:
                anyf = True
        if not anyf:
            for c in range(W):
                out[r, c] = np.inf
            continue
        _envelope_1d(f, W, d, v, z)
        for c in range(W):
            out[r, c] = d[c] if d[c] < 1e19 else np.inf
    return out


@njit(cache=True)
def _band_correlation(mask, o0, o1, p0, p1, rows, cols, weights, d_max):
    H, W = mask.shape
    m = int(np.ceil(d_max))
    far = m + 1
    # vertical distance to the nearest edge pixel of mask in each column, capped at m + 1
    g = np.full((o1 - o0, p1 - p0), far, dtype=np.int64)
    last = np.full(p1 - p0, -far - 1, dtype=np.int64)
    anyf = False
    for r in range(o0, o1):
        for c in range(p0, p1):
            if mask[r, c] and (r == 0 or c == 0 or r == H - 1 or c == W - 1 or not mask[r - 1, c]
                               or not mask[r + 1, c] or not mask[r, c - 1] or not mask[r, c + 1]):
                last[c - p0] = r
                anyf = True
            if r - last[c - p0] < far:
                g[r - o0, c - p0] = r - last[c - p0]
    last[:] = o1 + far + 1
    for r in range(o1 - 1, o0 - 1, -1):
        for c in range(p1 - p0):
            if g[r - o0, c] == 0:
                last[c] = r
            elif last[c] - r < g[r - o0, c]:
                g[r - o0, c] = last[c] - r
    if not anyf:
        return 0.0
    # weight by integer squared distance; zero from d_max outwards
    nq = m * m + 1
    table = np.zeros(nq)
    for q in range(nq):
        dist = np.sqrt(q)
        if dist < d_max:
            table[q] = (d_max - dist) ** 2
    total = 0.0
    gw = g.shape[1]
    for k in range(rows.shape[0]):
        gi = rows[k] - o0
        gj = cols[k] - p0
        best = nq
        # widen the window symmetrically; stop once dc^2 alone cannot beat best
        for a in range(m + 1):
            if a * a >= best:
                break
            for side in range(2 if a else 1):
                j = gj + a if side == 0 else gj - a
                if 0 <= j < gw:
                    v = g[gi, j]
                    if v < far:
                        q = a * a + v * v
                        if q < best:
                            best = q
        if best < nq:
            total += weights[k] * table[best]
    return total


def band_correlation(mask, outer, rows, cols, weights, d_max) -> float:
    """Sum over band pixels ``(rows, cols)`` of ``weights * weight_field(distance to edges of mask)``.

    ``outer`` (rows o0:o1, cols p0:p1) must contain every band pixel grown by
    ``ceil(d_max)`` (clipped to the image) so clamped distances are exact.
    """
    o0, o1, p0, p1 = outer
    return _band_correlation(np.ascontiguousarray(mask, dtype=np.bool_), o0, o1, p0, p1,
                             np.ascontiguousarray(rows, dtype=np.int64),
                             np.ascontiguousarray(cols, dtype=np.int64),
                             np.ascontiguousarray(weights, dtype=np.float64), float(d_max))


def squared_distance_transform(edges: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distance (pixels^2) to the nearest set pixel; +inf if none."""
    e = np.ascontiguousarray(edges, dtype=np.bool_)
    if e.size == 0:
        return np.zeros(e.shape)
    return _sq_edt(e)


def distance_transform(edges: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance (pixels) to the nearest edge pixel; +inf everywhere if none."""
    return np.sqrt(squared_distance_transform(edges))


def weight_field(d: np.ndarray, d_max: float) -> np.ndarray:
    """Edge-proximity weight ``(d_max - min(d, d_max))**2``: d_max**2 on edges, 0 beyond d_max."""
    if not d_max > 0:
        raise DataError("d_max must be positive")
    return (d_max - np.minimum(d, d_max)) ** 2


def _crack_loops(mask: np.ndarray) -> list[list[tuple[int, int]]]:
    """Closed outlines along pixel borders, as lists of (u, v) corner points."""
    m = np.pad(np.asarray(mask, dtype=bool), 1)
    core = m[1:-1, 1:-1]
    vs, us = np.nonzero(core & ~m[:-2, 1:-1])
    edges = [((u, v), (u + 1, v)) for u, v in zip(us.tolist(), vs.tolist())]
    vs, us = np.nonzero(core & ~m[1:-1, 2:])
    edges += [((u + 1, v), (u + 1, v + 1)) for u, v in zip(us.tolist(), vs.tolist())]
    vs, us = np.nonzero(core & ~m[2:, 1:-1])
    edges += [((u + 1, v + 1), (u, v + 1)) for u, v in zip(us.tolist(), vs.tolist())]
    vs, us = np.nonzero(core & ~m[1:-1, :-2])
    edges += [((u, v + 1), (u, v)) for u, v in zip(us.tolist(), vs.tolist())]
    outgoing: dict = {}
    for a, b in edges:
        outgoing.setdefault(a, []).append(b)
    loops = []
    while outgoing:
        start = next(iter(outgoing))
        loop = [start]
        cur = start
        while True:
            nxt = outgoing[cur].pop()
            if not outgoing[cur]:
                del outgoing[cur]
            if nxt == start:
                break
            loop.append(nxt)
            cur = nxt
        loops.append(_drop_collinear(loop))
    return loops


def _drop_collinear(loop):
    n = len(loop)
    out = []
    for i in range(n):
        a, b, c = loop[i - 1], loop[i], loop[(i + 1) % n]
        if (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]) != 0:
            out.append(b)
    return out


def mask_to_polygons(mask: np.ndarray) -> list[list[tuple[float, float]]]:
    """Polygons whose even-odd union reproduces ``mask`` exactly.

    One polygon per 4-connected component; holes are stitched onto the
    outer outline through doubled bridge edges, which cancel under the
    even-odd rule.
    """
    labels, n = ndimage.label(np.asarray(mask, dtype=bool))
    polys = []
    for lab in range(1, n + 1):
        loops = _crack_loops(labels == lab)
        if len(loops) == 1:
            polys.append([(float(u), float(v)) for u, v in loops[0]])
            continue
        ring = list(loops[0])
        ring.append(loops[0][0])
        for loop in loops[1:]:
            ring.extend(loop)
            ring.append(loop[0])
        for loop in reversed(loops[:-1]):
            ring.append(loop[0])
        # the final point equals ring[0]; the closing edge is implicit
        ring.pop()
        polys.append([(float(u), float(v)) for u, v in ring])
    return polys
