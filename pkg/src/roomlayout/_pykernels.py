"""Pure-Python fallbacks for the compiled kernels in ``_ckernels``.

Same signatures and results; used when the extension is not built or
``ROOMLAYOUT_PURE_PYTHON`` is set.
"""
import numpy as np
from scipy.spatial import cKDTree

_TIE_K = 8
_VOXEL_CHUNK = 1 << 20


class KdTree:
    """Exact nearest neighbor with lowest-index tie-breaking, backed by ``cKDTree``."""

    def __init__(self, points):
        points = np.ascontiguousarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] == 0:
            raise ValueError("KdTree needs a non-empty (n, 3) array")
        self._points = points
        self._tree = cKDTree(points)
        self.n = points.shape[0]

    def query(self, queries):
        q = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
        k = min(_TIE_K, self.n)
        _, cand = self._tree.query(q, k=k)
        cand = cand.reshape(len(q), k)
        # recompute with the same arithmetic as a direct scan, then pick (sqd, index) minimum
        diff = self._points[cand] - q[:, None, :]
        sqd = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1] + diff[..., 2] * diff[..., 2]
        order = np.lexsort((cand, sqd), axis=-1)
        rows = np.arange(len(q))
        best = order[:, 0]
        idx = cand[rows, best]
        out = sqd[rows, best]

        # more than k tied candidates: resolve with a ball query
        if k < self.n:
            crowded = np.flatnonzero(sqd.max(axis=1) <= out)
            for j in crowded:
                ball = np.asarray(self._tree.query_ball_point(q[j], np.sqrt(out[j]) * (1 + 1e-12) + 1e-300))
                dd = self._points[ball] - q[j]
                s = dd[:, 0] * dd[:, 0] + dd[:, 1] * dd[:, 1] + dd[:, 2] * dd[:, 2]
                pick = np.lexsort((ball, s))[0]
                idx[j] = ball[pick]
                out[j] = s[pick]
        return idx.astype(np.intp), out


def tsdf_integrate(tsdf, weight, color, origin, voxel_size, rot_wc, trans_wc, intrinsics,
                   depth, rgb, truncation):
    nx, ny, nz = tsdf.shape
    h, w = depth.shape
    fx, fy, cx, cy = (float(v) for v in intrinsics)
    origin = np.asarray(origin, dtype=np.float64)
    r = np.asarray(rot_wc, dtype=np.float64)
    t = np.asarray(trans_wc, dtype=np.float64)
    flat_tsdf = tsdf.reshape(-1)
    flat_weight = weight.reshape(-1)
    flat_color = color.reshape(-1, 3)
    total = nx * ny * nz
    updated = 0
    for lo in range(0, total, _VOXEL_CHUNK):
        lin = np.arange(lo, min(lo + _VOXEL_CHUNK, total))
        i, rem = np.divmod(lin, ny * nz)
        j, k = np.divmod(rem, nz)
        px = origin[0] + i * voxel_size
        py = origin[1] + j * voxel_size
        pz = origin[2] + k * voxel_size
        zc = r[2, 0] * px + r[2, 1] * py + r[2, 2] * pz + t[2]
        front = zc > 0
        lin, px, py, pz, zc = lin[front], px[front], py[front], pz[front], zc[front]
        xc = r[0, 0] * px + r[0, 1] * py + r[0, 2] * pz + t[0]
        yc = r[1, 0] * px + r[1, 1] * py + r[1, 2] * pz + t[1]
        col = np.floor(fx * xc / zc + cx + 0.5).astype(np.intp)
        row = np.floor(fy * yc / zc + cy + 0.5).astype(np.intp)
        inside = (col >= 0) & (row >= 0) & (col < w) & (row < h)
        lin, zc, col, row = lin[inside], zc[inside], col[inside], row[inside]
        d = depth[row, col]
        s = d - zc
        keep = (d > 0) & (s >= -truncation)
        lin, s, col, row = lin[keep], s[keep], col[keep], row[keep]
        sdf = np.clip(s / truncation, -1.0, 1.0)
        w_old = flat_weight[lin]
        w_new = w_old + 1.0
        flat_tsdf[lin] = (flat_tsdf[lin] * w_old + sdf) / w_new
        if rgb is not None:
            flat_color[lin] = (flat_color[lin] * w_old[:, None] + rgb[row, col]) / w_new[:, None]
        flat_weight[lin] = w_new
        updated += len(lin)
    return updated
