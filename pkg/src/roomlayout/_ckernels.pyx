# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: exact nearest-neighbor kd-tree and projective TSDF integration.

The pure-numpy equivalents live in ``_pykernels``; ``roomlayout.kernels`` picks one at import.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, INFINITY

cnp.import_array()

DEF LEAF_SIZE = 12


cdef void _select(const double[:, ::1] p, Py_ssize_t[::1] order, Py_ssize_t left, Py_ssize_t right,
                  Py_ssize_t k, Py_ssize_t dim) noexcept nogil:
    """Reorder ``order[left:right + 1]`` so position ``k`` holds its rank-k element along ``dim``,
    with no larger coordinate before it and no smaller one after it."""
    cdef Py_ssize_t i, j, t
    cdef double pivot
    while left < right:
        pivot = p[order[(left + right) // 2], dim]
        i = left
        j = right
        while i <= j:
            while p[order[i], dim] < pivot:
                i += 1
            while p[order[j], dim] > pivot:
                j -= 1
            if i <= j:
                t = order[i]
                order[i] = order[j]
                order[j] = t
                i += 1
                j -= 1
        if k <= j:
            right = j
        elif k >= i:
            left = i
        else:
            return


cdef class KdTree:
    """Static 3-d tree over a point array.

    ``query`` returns the exact minimizer of the squared Euclidean distance;
    ties go to the lowest original point index.
    """
    cdef double[:, ::1] pts
    cdef Py_ssize_t[::1] perm
    cdef Py_ssize_t[::1] n_start
    cdef Py_ssize_t[::1] n_end
    cdef Py_ssize_t[::1] n_left
    cdef Py_ssize_t[::1] n_right
    cdef Py_ssize_t[::1] n_dim
    cdef double[::1] n_split
    cdef readonly Py_ssize_t n
    cdef readonly Py_ssize_t n_nodes

    def __init__(self, points):
        points = np.ascontiguousarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] == 0:
            raise ValueError("KdTree needs a non-empty (n, 3) array")
        self.n = points.shape[0]
        # split nodes have children of at least LEAF_SIZE // 2 points, which bounds the node count
        cdef Py_ssize_t cap = 2 * (self.n // (LEAF_SIZE // 2) + 1) + 1
        order_arr = np.arange(self.n, dtype=np.intp)
        self.n_start = np.empty(cap, dtype=np.intp)
        self.n_end = np.empty(cap, dtype=np.intp)
        self.n_left = np.full(cap, -1, dtype=np.intp)
        self.n_right = np.full(cap, -1, dtype=np.intp)
        self.n_dim = np.full(cap, -1, dtype=np.intp)
        self.n_split = np.zeros(cap, dtype=np.float64)
        cdef const double[:, ::1] src = points
        cdef Py_ssize_t[::1] order = order_arr
        # median splits keep the depth near log2(n), so the pending-node stack stays small
        stack_arr = np.empty(256, dtype=np.intp)
        cdef Py_ssize_t[::1] stack = stack_arr
        cdef Py_ssize_t used
        with nogil:
            used = self._build(src, order, stack)
        self.perm = order_arr
        self.pts = np.ascontiguousarray(points[order_arr])
        self.n_nodes = used

    cdef Py_ssize_t _build(self, const double[:, ::1] p, Py_ssize_t[::1] order,
                           Py_ssize_t[::1] stack) noexcept nogil:
        cdef Py_ssize_t top = 0, used = 1, node, start, end, i, d, dim, mid
        cdef double lo[3]
        cdef double hi[3]
        cdef double v, best
        self.n_start[0] = 0
        self.n_end[0] = self.n
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            start = self.n_start[node]
            end = self.n_end[node]
            if end - start <= LEAF_SIZE:
                continue
            for d in range(3):
                lo[d] = INFINITY
                hi[d] = -INFINITY
            for i in range(start, end):
                for d in range(3):
                    v = p[order[i], d]
                    if v < lo[d]:
                        lo[d] = v
                    if v > hi[d]:
                        hi[d] = v
            dim = 0
            best = hi[0] - lo[0]
            for d in range(1, 3):
                if hi[d] - lo[d] > best:
                    best = hi[d] - lo[d]
                    dim = d
            if best == 0.0:
                continue
            mid = start + (end - start) // 2
            _select(p, order, start, end - 1, mid, dim)
            self.n_dim[node] = dim
            self.n_split[node] = p[order[mid], dim]
            self.n_left[node] = used
            self.n_start[used] = start
            self.n_end[used] = mid
            self.n_right[node] = used + 1
            self.n_start[used + 1] = mid
            self.n_end[used + 1] = end
            # right first so the left subtree gets the lower node ids, as a depth-first build would
            stack[top] = used + 1
            stack[top + 1] = used
            top += 2
            used += 2
        return used

    cdef void _search(self, Py_ssize_t node, double qx, double qy, double qz,
                      double* best, Py_ssize_t* best_idx) noexcept nogil:
        cdef Py_ssize_t i, idx, near, far
        cdef double dx, dy, dz, d, diff
        cdef Py_ssize_t dim = self.n_dim[node]
        if dim < 0:
            for i in range(self.n_start[node], self.n_end[node]):
                dx = self.pts[i, 0] - qx
                dy = self.pts[i, 1] - qy
                dz = self.pts[i, 2] - qz
                d = dx * dx + dy * dy + dz * dz
                idx = self.perm[i]
                if d < best[0] or (d == best[0] and idx < best_idx[0]):
                    best[0] = d
                    best_idx[0] = idx
            return
        if dim == 0:
            diff = qx - self.n_split[node]
        elif dim == 1:
            diff = qy - self.n_split[node]
        else:
            diff = qz - self.n_split[node]
        if diff <= 0:
            near = self.n_left[node]
            far = self.n_right[node]
        else:
            near = self.n_right[node]
            far = self.n_left[node]
        self._search(near, qx, qy, qz, best, best_idx)
        if diff * diff <= best[0]:
            self._search(far, qx, qy, qz, best, best_idx)

    def query(self, queries):
        """Nearest neighbor of every row of ``queries``; returns ``(indices, squared distances)``."""
        cdef const double[:, ::1] q = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
        cdef Py_ssize_t m = q.shape[0]
        idx_arr = np.empty(m, dtype=np.intp)
        sqd_arr = np.empty(m, dtype=np.float64)
        cdef Py_ssize_t[::1] out_idx = idx_arr
        cdef double[::1] out_sqd = sqd_arr
        cdef Py_ssize_t j, bi
        cdef double bd
        with nogil:
            for j in range(m):
                bd = INFINITY
                bi = self.n
                self._search(0, q[j, 0], q[j, 1], q[j, 2], &bd, &bi)
                out_idx[j] = bi
                out_sqd[j] = bd
        return idx_arr, sqd_arr


def tsdf_integrate(double[:, :, ::1] tsdf, double[:, :, ::1] weight, double[:, :, :, ::1] color,
                   origin, double voxel_size, rot_wc, trans_wc, intrinsics,
                   const double[:, ::1] depth, rgb, double truncation):
    """Fuse one depth image into the volume arrays in place.

    ``rot_wc``/``trans_wc`` map world to camera coordinates. Voxel ``(i, j, k)`` has its
    center at ``origin + (i, j, k) * voxel_size``. Returns the number of updated voxels.
    """
    cdef const double[::1] o = np.ascontiguousarray(origin, dtype=np.float64)
    cdef const double[:, ::1] r = np.ascontiguousarray(rot_wc, dtype=np.float64)
    cdef const double[::1] t = np.ascontiguousarray(trans_wc, dtype=np.float64)
    cdef double fx = intrinsics[0], fy = intrinsics[1], cx = intrinsics[2], cy = intrinsics[3]
    cdef bint has_rgb = rgb is not None
    cdef const double[:, :, ::1] img
    if has_rgb:
        img = np.ascontiguousarray(rgb, dtype=np.float64)
    else:
        img = np.zeros((1, 1, 3))
    cdef Py_ssize_t nx = tsdf.shape[0], ny = tsdf.shape[1], nz = tsdf.shape[2]
    cdef Py_ssize_t h = depth.shape[0], w = depth.shape[1]
    cdef Py_ssize_t i, j, k, c, row, col
    cdef Py_ssize_t updated = 0
    cdef double px, py, pz, xc, yc, zc, u, v, d, s, sdf, w_old, w_new
    with nogil:
        for i in range(nx):
            px = o[0] + i * voxel_size
            for j in range(ny):
                py = o[1] + j * voxel_size
                for k in range(nz):
                    pz = o[2] + k * voxel_size
                    zc = r[2, 0] * px + r[2, 1] * py + r[2, 2] * pz + t[2]
                    if zc <= 0:
                        continue
                    xc = r[0, 0] * px + r[0, 1] * py + r[0, 2] * pz + t[0]
                    yc = r[1, 0] * px + r[1, 1] * py + r[1, 2] * pz + t[1]
                    u = fx * xc / zc + cx
                    v = fy * yc / zc + cy
                    col = <Py_ssize_t>floor(u + 0.5)
                    row = <Py_ssize_t>floor(v + 0.5)
                    if col < 0 or row < 0 or col >= w or row >= h:
                        continue
                    d = depth[row, col]
                    if not d > 0:
                        continue
                    s = d - zc
                    if s < -truncation:
                        continue
                    sdf = s / truncation
                    if sdf > 1.0:
                        sdf = 1.0
                    elif sdf < -1.0:
                        sdf = -1.0
                    w_old = weight[i, j, k]
                    w_new = w_old + 1.0
                    tsdf[i, j, k] = (tsdf[i, j, k] * w_old + sdf) / w_new
                    if has_rgb:
                        for c in range(3):
                            color[i, j, k, c] = (color[i, j, k, c] * w_old + img[row, col, c]) / w_new
                    weight[i, j, k] = w_new
                    updated += 1
    return updated
