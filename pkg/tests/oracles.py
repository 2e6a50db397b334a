"""Slow, obviously-correct reference implementations used as test oracles."""
import itertools

import numpy as np
from scipy.optimize import linprog


def brute_nearest(points, queries):
    """Index and squared distance of the nearest point, lowest index on ties."""
    p = np.asarray(points, dtype=np.float64)
    out_i, out_d = [], []
    for q in np.atleast_2d(queries):
        d = ((p - q) ** 2).sum(axis=1)
        k = int(np.argmin(d))      # argmin returns the first minimum
        out_i.append(k)
        out_d.append(d[k])
    return np.array(out_i), np.array(out_d)


def brute_chamfer(a, b):
    """O(n*m) symmetric chamfer from the full pairwise distance matrix."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    d = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return 0.5 * (d.min(axis=1).mean() + d.min(axis=0).mean())


def central_difference(f, x, eps=1e-6):
    """Numerical gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        g[idx] = (f(xp) - f(xm)) / (2 * eps)
    return g


def boxes_intersect_lp(c1, axes1, h1, c2, axes2, h2):
    """Feasibility LP: is there a point inside both (closed) oriented boxes?"""
    rows, rhs = [], []
    for c, axes, h in ((c1, axes1, h1), (c2, axes2, h2)):
        for a, e in zip(np.asarray(axes), h):
            rows += [a, -a]
            rhs += [e + a @ c, e - a @ c]
    res = linprog(np.zeros(3), A_ub=np.array(rows), b_ub=np.array(rhs), bounds=[(None, None)] * 3,
                  method="highs")
    return res.status == 0


def polygon_area_triangles(poly):
    """Area of a convex polygon as a sum of fan triangles."""
    p = np.asarray(poly, dtype=np.float64)
    total = 0.0
    for i in range(1, len(p) - 1):
        u, v = p[i] - p[0], p[i + 1] - p[0]
        total += 0.5 * abs(u[0] * v[1] - u[1] * v[0])
    return total


def hull_contains_all(hull, points, tol=1e-9):
    """Every point is on the inner side of every edge of a counter-clockwise hull."""
    h = np.asarray(hull)
    for i in range(len(h)):
        a, b = h[i], h[(i + 1) % len(h)]
        e = b - a
        cross = e[0] * (points[:, 1] - a[1]) - e[1] * (points[:, 0] - a[0])
        if np.any(cross < -tol):
            return False
    return True


def nearest_rank_sorted(values, p):
    """Smallest value v such that at least p% of the data is <= v."""
    v = sorted(values)
    n = len(v)
    for k in range(1, n + 1):
        if 100 * k >= p * n:
            return v[k - 1]
    return v[-1]


def tsdf_reference(origin, dims, voxel, truncation, frames):
    """Per-voxel loop over frames: projective signed distance, running mean with unit weights."""
    tsdf = np.ones(dims)
    weight = np.zeros(dims)
    for fr in frames:
        r_wc = fr.pose.rotation.T
        t_wc = -r_wc @ fr.pose.translation
        fx, fy, cx, cy = fr.intrinsics
        h, w = fr.depth.shape
        for i, j, k in itertools.product(*(range(n) for n in dims)):
            p = origin + voxel * np.array([i, j, k])
            x, y, z = r_wc @ p + t_wc
            if z <= 0:
                continue
            u = int(np.floor(fx * x / z + cx + 0.5))
            v = int(np.floor(fy * y / z + cy + 0.5))
            if not (0 <= u < w and 0 <= v < h):
                continue
            d = fr.depth[v, u]
            if not d > 0:
                continue
            s = d - z
            if s < -truncation:
                continue
            sdf = min(1.0, s / truncation)
            tsdf[i, j, k] = (tsdf[i, j, k] * weight[i, j, k] + sdf) / (weight[i, j, k] + 1)
            weight[i, j, k] += 1
    return tsdf, weight


def brute_outside_distance(pt, poly, samples=20001):
    """Distance from ``pt`` to a polygon's boundary when outside it, else 0.

    Inside-ness by winding angle sum, distance by dense sampling of every edge.
    """
    p = np.asarray(pt, dtype=np.float64)
    a = np.asarray(poly, dtype=np.float64)
    b = np.roll(a, -1, axis=0)
    u, v = a - p, b - p
    ang = np.arctan2(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0], np.einsum("ij,ij->i", u, v))
    if abs(ang.sum()) > np.pi:
        return 0.0
    t = np.linspace(0.0, 1.0, samples)
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    return float(np.min(np.linalg.norm(pts - p, axis=2)))
