"""Room envelope: floor plane frame, 2-D floor contour, wall height, area and volume."""
from __future__ import annotations

import math
from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from roomlayout.errors import DegenerateCloud, EmptyCloud, MissingCategory
from roomlayout.geometry import as_points, compute_pca
from roomlayout.sceneio import EnvelopeSummary, SegmentedScene

HEIGHT_PERCENTILE = 95.0


@dataclass(frozen=True, eq=False)
class FloorModel:
    origin: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    fn: np.ndarray
    contour: np.ndarray     # K x 2, counter-clockwise, in (f1, f2) coordinates
    area: float
    dims: tuple             # (long, short) sides of the minimum-area enclosing rectangle

    @property
    def basis(self):
        """3x3 matrix with columns f1, f2, fn (floor frame to world directions)."""
        return np.column_stack([self.f1, self.f2, self.fn])

    def to_plane(self, points):
        """World points -> (N, 3) floor coordinates (along f1, along f2, height)."""
        return (as_points(points) - self.origin) @ self.basis

    def from_plane(self, coords):
        return np.asarray(coords, dtype=np.float64) @ self.basis.T + self.origin


@dataclass(frozen=True, eq=False)
class RoomEnvelope:
    floor: FloorModel
    height: float
    volume: float
    clamped_heights: int = 0

    def summary(self) -> EnvelopeSummary:
        f = self.floor
        return EnvelopeSummary(
            contour=[tuple(map(float, p)) for p in f.contour], area=float(f.area),
            height=float(self.height), volume=float(self.volume), dims=tuple(map(float, f.dims)),
            origin=tuple(map(float, f.origin)), f1=tuple(map(float, f.f1)),
            f2=tuple(map(float, f.f2)), fn=tuple(map(float, f.fn)))

    @classmethod
    def from_summary(cls, s: EnvelopeSummary) -> RoomEnvelope:
        floor = FloorModel(np.array(s.origin), np.array(s.f1), np.array(s.f2), np.array(s.fn),
                           np.array(s.contour, dtype=np.float64).reshape(-1, 2), s.area, tuple(s.dims))
        return cls(floor, s.height, s.volume)


def _cross2(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull_2d(points) -> np.ndarray:
    """Monotone-chain hull: counter-clockwise, collinear points dropped, starts at the lexicographic minimum."""
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        raise DegenerateCloud("hull needs at least 3 distinct points")
    pts = [tuple(p) for p in pts]
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross2(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross2(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateCloud("projected points are collinear")
    return np.array(hull)


def polygon_area(poly) -> float:
    """Shoelace formula; positive for counter-clockwise vertex order."""
    p = np.asarray(poly, dtype=np.float64)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def min_area_rect_dims(contour) -> tuple:
    """(long, short) side lengths of the smallest rectangle enclosing a convex polygon.

    One side of the optimal rectangle lies along a polygon edge, so only edge
    directions are tried.
    """
    p = np.asarray(contour, dtype=np.float64)
    e = np.roll(p, -1, axis=0) - p
    e = e[np.linalg.norm(e, axis=1) > 0]
    u = e / np.linalg.norm(e, axis=1)[:, None]
    v = np.column_stack([-u[:, 1], u[:, 0]])
    a, b = p @ u.T, p @ v.T
    wa, wb = np.ptp(a, axis=0), np.ptp(b, axis=0)
    k = int(np.argmin(wa * wb))
    return float(max(wa[k], wb[k])), float(min(wa[k], wb[k]))


def floor_contour(frame, points) -> np.ndarray:
    """Convex hull of ``points`` projected into the (f1, f2) plane of ``frame``."""
    pts = as_points(points)
    rel = pts - frame.origin
    uv = np.column_stack([rel @ frame.f1, rel @ frame.f2])
    return convex_hull_2d(uv)


def fit_floor(floor_points, reference_points=None) -> FloorModel:
    """Plane frame from PCA of the floor, oriented so the rest of the scene has positive height.

    Without reference points the normal points to the side holding the majority of
    floor points.
    """
    pts = as_points(floor_points)
    pca = compute_pca(pts)
    origin = pca.centroid
    f1, f2 = pca.axes[0].copy(), pca.axes[1].copy()
    fn = np.cross(f1, f2)
    if reference_points is not None and len(as_points(reference_points)):
        flip = float(np.mean((as_points(reference_points) - origin) @ fn)) < 0
    else:
        h = (pts - origin) @ fn
        flip = np.count_nonzero(h < 0) > np.count_nonzero(h > 0)
    if flip:
        f2, fn = -f2, -fn
    contour = floor_contour(SimpleNamespace(origin=origin, f1=f1, f2=f2), pts)
    area = polygon_area(contour)
    dims = min_area_rect_dims(contour)
    return FloorModel(origin, f1, f2, fn, contour, area, dims)


def nearest_rank(values, percentile) -> float:
    """k-th smallest value with k = ceil(p/100 * n)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if len(v) == 0:
        raise EmptyCloud("percentile of no values")
    k = max(1, math.ceil(percentile * len(v) / 100.0))
    return float(v[min(k, len(v)) - 1])


def wall_heights(wall_points, floor: FloorModel):
    """Heights above the floor along ``fn``, clamped at 0; also returns how many were clamped."""
    pts = as_points(wall_points)
    if len(pts) == 0:
        raise EmptyCloud("no wall points")
    h = (pts - floor.origin) @ floor.fn
    below = int(np.count_nonzero(h < 0))
    return np.maximum(h, 0.0), below


def room_height(wall_points, floor: FloorModel, percentile=HEIGHT_PERCENTILE) -> float:
    heights, _ = wall_heights(wall_points, floor)
    return nearest_rank(heights, percentile)


def build_envelope(scene: SegmentedScene, height_labels=("wall", "ceiling"),
                   percentile=HEIGHT_PERCENTILE) -> RoomEnvelope:
    """Floor from all ``floor`` instances, height from the ``height_labels`` instances.

    At least one ``wall`` instance is required; ``ceiling`` instances are used when present.
    """
    floors = scene.with_label("floor")
    if not floors:
        raise MissingCategory("floor")
    if not scene.with_label("wall"):
        raise MissingCategory("wall")
    floor_idx = np.concatenate([i.indices for i in floors])
    rest = np.setdiff1d(np.arange(len(scene.cloud)), floor_idx)
    floor = fit_floor(scene.cloud.points[floor_idx], scene.cloud.points[rest])
    heights, clamped = wall_heights(scene.merged(height_labels), floor)
    height = nearest_rank(heights, percentile)
    if height <= 0:
        raise DegenerateCloud("wall points do not rise above the floor")
    return RoomEnvelope(floor, height, floor.area * height, clamped)
