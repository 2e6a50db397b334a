"""Projective TSDF fusion of posed depth frames and zero-crossing point extraction."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from roomlayout import kernels
from roomlayout.errors import EmptyVolume, InvalidParameter, ParseError
from roomlayout.geometry import PointCloud

DEFAULT_VOXEL = 0.02
TRUNCATION_VOXELS = 5.0

_MAGIC = b"RLTSDF01"
_HEADER = struct.Struct("<8s3i3d2d?")


class TsdfVolume:
    """Dense voxel grid of truncated signed distances in [-1, 1].

    Voxel ``(i, j, k)`` is centered at ``origin + (i, j, k) * voxel_size``. Unobserved
    voxels have weight 0 and tsdf +1. Callers must serialize ``integrate`` calls.
    """

    def __init__(self, origin, dims, voxel_size=DEFAULT_VOXEL, truncation=None):
        if not voxel_size > 0:
            raise InvalidParameter("voxel_size must be positive")
        truncation = TRUNCATION_VOXELS * voxel_size if truncation is None else float(truncation)
        if truncation < voxel_size:
            raise InvalidParameter("truncation must be at least one voxel")
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3 or min(dims) < 1:
            raise InvalidParameter("dims must be three positive integers")
        self.origin = np.asarray(origin, dtype=np.float64).reshape(3)
        self.voxel_size = float(voxel_size)
        self.truncation = truncation
        self.dims = dims
        self.tsdf = np.ones(dims, dtype=np.float64)
        self.weight = np.zeros(dims, dtype=np.float64)
        self.color = np.zeros(dims + (3,), dtype=np.float64)
        self.has_color = False

    @classmethod
    def around_frames(cls, frames, voxel_size=DEFAULT_VOXEL, truncation=None):
        """Volume sized to the union of all frames' back-projected depth, padded by the truncation band."""
        truncation = TRUNCATION_VOXELS * voxel_size if truncation is None else truncation
        lo = np.full(3, np.inf)
        hi = np.full(3, -np.inf)
        for fr in frames:
            pts = fr.back_project().points
            if len(pts):
                lo = np.minimum(lo, pts.min(axis=0))
                hi = np.maximum(hi, pts.max(axis=0))
        if not np.all(np.isfinite(lo)):
            raise EmptyVolume("no valid depth in any frame")
        pad = truncation + voxel_size
        lo -= pad
        hi += pad
        dims = np.ceil((hi - lo) / voxel_size).astype(int) + 1
        return cls(lo, dims, voxel_size, truncation)

    def voxel_centers(self, index):
        return self.origin + np.asarray(index, dtype=np.float64) * self.voxel_size

    def save(self, path):
        """Binary blob: header (magic, dims, origin, voxel size, truncation, color flag) + float64 arrays."""
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, *self.dims, *self.origin, self.voxel_size, self.truncation,
                                  self.has_color))
            fh.write(self.tsdf.tobytes())
            fh.write(self.weight.tobytes())
            fh.write(self.color.tobytes())

    @classmethod
    def load(cls, path):
        raw = Path(path).read_bytes()
        if len(raw) < _HEADER.size or raw[:8] != _MAGIC:
            raise ParseError("not a TSDF volume file", path, offset=0)
        magic, nx, ny, nz, ox, oy, oz, vs, trunc, has_color = _HEADER.unpack_from(raw)
        vol = cls((ox, oy, oz), (nx, ny, nz), vs, trunc)
        n = nx * ny * nz
        need = _HEADER.size + 8 * 5 * n
        if len(raw) != need:
            raise ParseError(f"expected {need} bytes, found {len(raw)}", path, offset=len(raw))
        body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
        vol.tsdf[...] = body[:n].reshape(vol.dims)
        vol.weight[...] = body[n:2 * n].reshape(vol.dims)
        vol.color[...] = body[2 * n:].reshape(vol.dims + (3,))
        vol.has_color = bool(has_color)
        return vol


def integrate(volume: TsdfVolume, frame, backend=None) -> TsdfVolume:
    """Fuse one depth frame (weight 1 per observation); returns the same volume."""
    impl = backend or kernels
    world_to_cam = frame.pose.inverse()
    impl.tsdf_integrate(volume.tsdf, volume.weight, volume.color, volume.origin, volume.voxel_size,
                        world_to_cam.rotation, world_to_cam.translation, frame.intrinsics,
                        np.ascontiguousarray(frame.depth), frame.color, volume.truncation)
    if frame.color is not None:
        volume.has_color = True
    return volume


def fuse(frames, voxel_size=DEFAULT_VOXEL, truncation=None, volume=None) -> TsdfVolume:
    frames = list(frames)
    if volume is None:
        volume = TsdfVolume.around_frames(frames, voxel_size, truncation)
    for fr in frames:
        integrate(volume, fr)
    return volume


def extract_points(volume: TsdfVolume) -> PointCloud:
    """One point per voxel edge whose endpoints are observed and straddle zero.

    A value of exactly 0 counts as non-negative, so surfaces passing through voxel
    centers are still emitted.
    """
    pts, cols = [], []
    t, w, c = volume.tsdf, volume.weight, volume.color
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        t0, t1 = t[lo], t[hi]
        mask = (w[lo] > 0) & (w[hi] > 0) & ((t0 >= 0) != (t1 >= 0))
        idx = np.argwhere(mask)
        if not len(idx):
            continue
        a = t0[mask] / (t0[mask] - t1[mask])
        pos = idx.astype(np.float64)
        pos[:, axis] += a
        pts.append(volume.origin + pos * volume.voxel_size)
        c0, c1 = c[lo][mask], c[hi][mask]
        cols.append(c0 + a[:, None] * (c1 - c0))
    if not pts:
        raise EmptyVolume("volume has no observed zero crossings")
    colors = np.clip(np.concatenate(cols), 0.0, 1.0) if volume.has_color else None
    return PointCloud(np.concatenate(pts), colors)
