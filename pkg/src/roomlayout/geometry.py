"""Geometry kernels: point clouds, rigid transforms, PCA, nearest neighbors, chamfer, OBBs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from roomlayout import kernels
from roomlayout.errors import DegenerateCloud, EmptyCloud, InvalidParameter

ORTHO_TOL = 1e-9


def _frozen(arr, dtype=np.float64):
    out = np.array(arr, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Points in meters with optional RGB colors in [0, 1]."""

    points: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise InvalidParameter("point coordinates must be finite")
        object.__setattr__(self, "points", _frozen(pts))
        if self.colors is not None:
            cols = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(cols) != len(pts):
                raise InvalidParameter(f"{len(cols)} colors for {len(pts)} points")
            object.__setattr__(self, "colors", _frozen(cols))

    def __len__(self):
        return len(self.points)

    @property
    def centroid(self):
        if len(self.points) == 0:
            raise EmptyCloud("centroid of an empty cloud")
        return self.points.mean(axis=0)

    def subset(self, indices) -> PointCloud:
        indices = np.asarray(indices, dtype=np.intp)
        cols = None if self.colors is None else self.colors[indices]
        return PointCloud(self.points[indices], cols)

    def transformed(self, transform: RigidTransform) -> PointCloud:
        return PointCloud(transform.apply(self.points), self.colors)

    @staticmethod
    def concat(clouds) -> PointCloud:
        clouds = list(clouds)
        if not clouds:
            return PointCloud(np.zeros((0, 3)))
        pts = np.concatenate([c.points for c in clouds])
        if all(c.colors is not None for c in clouds):
            return PointCloud(pts, np.concatenate([c.colors for c in clouds]))
        return PointCloud(pts)


def as_points(cloud) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.points
    return np.asarray(cloud, dtype=np.float64).reshape(-1, 3)


def rotation_about(axis, angle_rad) -> np.ndarray:
    """Rotation matrix for a right-handed rotation of ``angle_rad`` about ``axis``."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    k = np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]])
    return c * np.eye(3) + s * k + (1 - c) * np.outer(axis, axis)


def rot_z(angle_deg) -> np.ndarray:
    a = np.deg2rad(angle_deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def quaternion_to_matrix(q) -> np.ndarray:
    """``q`` is (qx, qy, qz, qw) and must already be unit length."""
    x, y, z, w = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quaternion(r) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    tr = np.trace(r)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = [(r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s, 0.25 * s]
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2
        q = [0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s, (r[2, 1] - r[1, 2]) / s]
    elif r[1, 1] > r[2, 2]:
        s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2
        q = [(r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s, (r[0, 2] - r[2, 0]) / s]
    else:
        s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2
        q = [(r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s, (r[1, 0] - r[0, 1]) / s]
    q = np.array(q)
    return q / np.linalg.norm(q)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """``x -> rotation @ x + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise InvalidParameter("transform must be finite")
        if np.abs(r @ r.T - np.eye(3)).max() > ORTHO_TOL or abs(np.linalg.det(r) - 1.0) > ORTHO_TOL:
            raise InvalidParameter("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise InvalidParameter("expected a 4x4 matrix")
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_quaternion(cls, q_xyzw, translation):
        return cls(quaternion_to_matrix(q_xyzw), translation)

    @property
    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points):
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def apply_vector(self, vectors):
        return np.asarray(vectors, dtype=np.float64) @ self.rotation.T

    def inverse(self):
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)


@dataclass(frozen=True, eq=False)
class PrincipalAxes:
    """PCA frame of a point set. ``axes`` rows are unit vectors, descending eigenvalue."""

    centroid: np.ndarray
    axes: np.ndarray
    eigenvalues: np.ndarray
    extents: np.ndarray


def _canonical_sign(v):
    # deterministic sign: largest-magnitude component positive
    return v if v[np.argmax(np.abs(v))] >= 0 else -v


def compute_pca(cloud) -> PrincipalAxes:
    """Eigen-decomposition of the centered covariance.

    The third axis is replaced by ``axes[0] x axes[1]`` so the frame is right-handed.
    Extents are max - min of the projections onto each axis.
    """
    pts = as_points(cloud)
    if len(pts) < 3:
        raise DegenerateCloud(f"PCA needs at least 3 points, got {len(pts)}")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered / len(pts)
    vals, vecs = np.linalg.eigh(cov)
    vals = np.clip(vals[::-1], 0.0, None)
    vecs = vecs[:, ::-1].T
    scale = max(vals[0], np.abs(centered).max() ** 2, 1e-300)
    if vals[1] <= 1e-12 * scale:
        raise DegenerateCloud("points are collinear or coincident (covariance rank < 2)")
    a0 = _canonical_sign(vecs[0])
    a1 = _canonical_sign(vecs[1])
    a1 = a1 - (a1 @ a0) * a0
    a1 /= np.linalg.norm(a1)
    a2 = np.cross(a0, a1)
    axes = np.stack([a0, a1, a2])
    proj = centered @ axes.T
    extents = proj.max(axis=0) - proj.min(axis=0)
    return PrincipalAxes(centroid, axes, vals, extents)


class NnIndex:
    """Exact nearest-neighbor index over a fixed cloud (read-only after construction)."""

    def __init__(self, cloud):
        pts = as_points(cloud)
        if len(pts) == 0:
            raise EmptyCloud("cannot index an empty cloud")
        self.points = _frozen(pts)
        self._tree = kernels.KdTree(self.points)

    def __len__(self):
        return len(self.points)

    def query(self, queries):
        """Batched nearest neighbors: ``(indices, squared distances)``."""
        q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        if len(q) == 0:
            return np.zeros(0, dtype=np.intp), np.zeros(0)
        return self._tree.query(q)

    def mean_distance(self, queries, squared=True):
        _, sqd = self.query(queries)
        if len(sqd) == 0:
            raise EmptyCloud("no query points")
        return float(np.mean(sqd if squared else np.sqrt(sqd)))


def build_nn_index(cloud) -> NnIndex:
    return NnIndex(cloud)


def nearest(index: NnIndex, query) -> tuple[int, float]:
    idx, sqd = index.query(np.asarray(query, dtype=np.float64).reshape(1, 3))
    return int(idx[0]), float(sqd[0])


def chamfer_distance(a, b, squared=True, symmetric=True) -> float:
    """Chamfer distance between two clouds.

    Default: mean squared nearest distance a->b and b->a, averaged.
    ``squared=False`` uses plain distances; ``symmetric=False`` returns only a->b.
    Either argument may be an ``NnIndex`` to reuse a prebuilt tree.
    """
    a_idx = a if isinstance(a, NnIndex) else None
    b_idx = b if isinstance(b, NnIndex) else None
    pa = a_idx.points if a_idx is not None else as_points(a)
    pb = b_idx.points if b_idx is not None else as_points(b)
    if len(pa) == 0 or len(pb) == 0:
        raise EmptyCloud("chamfer distance of an empty cloud")
    if b_idx is None:
        b_idx = NnIndex(pb)
    forward = b_idx.mean_distance(pa, squared)
    if not symmetric:
        return forward
    if a_idx is None:
        a_idx = NnIndex(pa)
    return 0.5 * (forward + a_idx.mean_distance(pb, squared))


@dataclass(frozen=True, eq=False)
class Obb:
    """Oriented box. ``axes`` rows are orthonormal directions."""

    center: np.ndarray
    axes: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        axes = np.asarray(self.axes, dtype=np.float64).reshape(3, 3)
        he = np.asarray(self.half_extents, dtype=np.float64).reshape(3)
        if np.any(he < 0):
            raise InvalidParameter("half extents must be non-negative")
        if np.abs(axes @ axes.T - np.eye(3)).max() > ORTHO_TOL:
            raise InvalidParameter("OBB axes must be orthonormal")
        object.__setattr__(self, "center", _frozen(np.asarray(self.center).reshape(3)))
        object.__setattr__(self, "axes", _frozen(axes))
        object.__setattr__(self, "half_extents", _frozen(he))

    @classmethod
    def from_points(cls, points, axes):
        """Tightest box around ``points`` with the given orientation."""
        axes = np.asarray(axes, dtype=np.float64)
        proj = as_points(points) @ axes.T
        lo, hi = proj.min(axis=0), proj.max(axis=0)
        return cls(((lo + hi) / 2) @ axes, axes, (hi - lo) / 2)

    def corners(self):
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
        return self.center + (signs * self.half_extents) @ self.axes

    def radius_along(self, direction):
        return float(np.sum(self.half_extents * np.abs(self.axes @ direction)))

    def translated(self, offset):
        return Obb(self.center + offset, self.axes, self.half_extents)


def obb_overlap(a: Obb, b: Obb) -> bool:
    """Separating-axis test over the 6 face normals and 9 edge cross products.

    Touching boxes count as overlapping.
    """
    d = b.center - a.center
    candidates = [*a.axes, *b.axes]
    for u in a.axes:
        for v in b.axes:
            c = np.cross(u, v)
            n = np.linalg.norm(c)
            if n > 1e-9:
                candidates.append(c / n)
    for axis in candidates:
        if abs(d @ axis) > a.radius_along(axis) + b.radius_along(axis):
            return False
    return True
