"""Procedural 2-DoF forceps model used by the synthetic scenarios and fixtures.

Frame convention: origin at the distal end of the shaft, z along the shaft
pointing towards the jaws. The shaft occupies ``-shaft_length <= z <= 0``;
the jaws open about the x axis through the origin.
"""
from __future__ import annotations

import math

import numpy as np

from .raster import Hinge, TriangleMesh


def _cylinder(radius, z0, z1, segments):
    ang = np.linspace(0.0, 2.0 * math.pi, segments, endpoint=False)
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    V = np.vstack([
        np.column_stack([ring, np.full(segments, z0)]),
        np.column_stack([ring, np.full(segments, z1)]),
        [[0.0, 0.0, z0], [0.0, 0.0, z1]],
    ])
    T = []
    for i in range(segments):
        j = (i + 1) % segments
        T.append((i, j, segments + j))
        T.append((i, segments + j, segments + i))
        T.append((2 * segments, j, i))
        T.append((2 * segments + 1, segments + i, segments + j))
    return V, np.asarray(T)


def _jaw(half_width, base_height, tip_height, length, upper):
    s = 1.0 if upper else -1.0
    w = half_width
    V = np.array([
        [-w, 0.0, 0.0], [w, 0.0, 0.0], [w, s * base_height, 0.0], [-w, s * base_height, 0.0],
        [-0.6 * w, 0.0, length], [0.6 * w, 0.0, length],
        [0.6 * w, s * tip_height, length], [-0.6 * w, s * tip_height, length],
    ])
    quads = [(0, 1, 2, 3), (4, 7, 6, 5), (0, 4, 5, 1), (1, 5, 6, 2), (2, 6, 7, 3), (3, 7, 4, 0)]
    T = []
    for a, b, c, d in quads:
        T.append((a, b, c))
        T.append((a, c, d))
    return V, np.asarray(T)


def forceps_mesh(shaft_radius: float = 1.5, shaft_length: float = 60.0, jaw_length: float = 8.0,
                 segments: int = 16) -> TriangleMesh:
    """Shaft cylinder plus two hinged jaws (parts: shaft, jaw_upper, jaw_lower)."""
    pieces = [
        _cylinder(shaft_radius, -shaft_length, 0.0, segments),
        _jaw(0.8 * shaft_radius, shaft_radius, 0.3 * shaft_radius, jaw_length, upper=True),
        _jaw(0.8 * shaft_radius, shaft_radius, 0.3 * shaft_radius, jaw_length, upper=False),
    ]
    verts, tris, owner = [], [], []
    offset = 0
    for part, (V, T) in enumerate(pieces):
        verts.append(V)
        tris.append(T + offset)
        owner.append(np.full(len(V), part))
        offset += len(V)
    # positive rotation about +x swings +z towards -y, so the upper jaw opens with sign -1
    hinge = Hinge(axis=(1.0, 0.0, 0.0), origin=(0.0, 0.0, 0.0), signs=(0, -1, 1))
    return TriangleMesh(
        vertices=np.vstack(verts),
        triangles=np.vstack(tris),
        part_names=("shaft", "jaw_upper", "jaw_lower"),
        vertex_part=np.concatenate(owner),
        hinge=hinge,
    )
