"""Triangle meshes, area-weighted surface sampling, and a few primitive builders."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from roomlayout.errors import InvalidParameter


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise InvalidParameter("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)

    def triangle_areas(self):
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    @property
    def degenerate(self):
        """Mask of zero-area triangles (kept in the mesh, excluded from sampling)."""
        return self.triangle_areas() <= 1e-15

    @property
    def area(self):
        return float(self.triangle_areas().sum())

    def transformed(self, matrix3, offset=(0.0, 0.0, 0.0)):
        return TriangleMesh(self.vertices @ np.asarray(matrix3).T + np.asarray(offset), self.triangles)

    @staticmethod
    def merge(meshes) -> TriangleMesh:
        verts, tris, base = [], [], 0
        for m in meshes:
            verts.append(m.vertices)
            tris.append(m.triangles + base)
            base += len(m.vertices)
        if not verts:
            return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
        return TriangleMesh(np.concatenate(verts), np.concatenate(tris))


def sample_surface(mesh: TriangleMesh, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` points uniformly distributed over the surface area."""
    areas = mesh.triangle_areas()
    total = areas.sum()
    if n <= 0 or total <= 0:
        raise InvalidParameter("need n > 0 and a mesh with positive area")
    tri = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, c = (mesh.vertices[mesh.triangles[tri, i]] for i in range(3))
    return (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c


_BOX_QUADS = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]


def box_mesh(lo, hi) -> TriangleMesh:
    """Closed axis-aligned box, outward-facing triangles."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    verts = np.array([[(lo, hi)[i][0], (lo, hi)[j][1], (lo, hi)[k][2]]
                      for i in (0, 1) for j in (0, 1) for k in (0, 1)])
    tris = []
    for a, b, c, d in _BOX_QUADS:
        tris += [(a, b, c), (a, c, d)]
    return TriangleMesh(verts, tris)


def cylinder_mesh(radius, height, segments=24, center=(0.0, 0.0)) -> TriangleMesh:
    """Capped vertical cylinder standing on z = 0."""
    ang = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    ring = np.stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)], axis=1)
    bottom = np.column_stack([ring, np.zeros(segments)])
    top = np.column_stack([ring, np.full(segments, height)])
    verts = np.vstack([bottom, top, [[center[0], center[1], 0.0], [center[0], center[1], height]]])
    cb, ct = 2 * segments, 2 * segments + 1
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris += [(i, j, segments + j), (i, segments + j, segments + i), (cb, j, i), (ct, segments + i, segments + j)]
    return TriangleMesh(verts, tris)
