"""Normal-derivative and depth consistency losses over image buffers.

``normal_loss`` compares first-order pixel derivatives of a predicted normal map and a
rendered one; ``depth_loss`` is a masked mean absolute depth error; ``combined_loss``
adds both, weighted, to an externally computed base reconstruction loss.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from roomlayout.errors import DimensionMismatch, InvalidParameter, NoValidPixels, NonFinite, TooSmall

NORMAL_UNIT_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class NormalMap:
    normals: np.ndarray        # H x W x 3
    mask: np.ndarray           # H x W bool

    def __post_init__(self):
        n = np.asarray(self.normals, dtype=np.float64)
        if n.ndim != 3 or n.shape[2] != 3:
            raise InvalidParameter("normal map must be H x W x 3")
        m = np.asarray(self.mask, dtype=bool)
        if m.shape != n.shape[:2]:
            raise InvalidParameter("mask shape must match the normal map")
        norms = np.linalg.norm(n, axis=2)
        if np.any(np.abs(norms[m] - 1.0) > NORMAL_UNIT_TOL):
            raise InvalidParameter("valid normals must be unit length")
        object.__setattr__(self, "normals", n)
        object.__setattr__(self, "mask", m)

    @classmethod
    def from_array(cls, normals):
        """Validity inferred: zero vectors are invalid, everything else is renormalized."""
        n = np.asarray(normals, dtype=np.float64)
        norms = np.linalg.norm(n, axis=2)
        mask = np.isfinite(norms) & (norms > 1e-6)
        out = np.zeros_like(n)
        out[mask] = n[mask] / norms[mask][:, None]
        return cls(out, mask)

    @property
    def shape(self):
        return self.mask.shape


@dataclass(frozen=True, eq=False)
class DepthMap:
    depth: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=np.float64)
        m = np.asarray(self.mask, dtype=bool)
        if d.ndim != 2 or m.shape != d.shape:
            raise InvalidParameter("depth map and mask must be matching H x W arrays")
        if np.any(~np.isfinite(d[m])) or np.any(d[m] < 0):
            raise InvalidParameter("valid depths must be finite and >= 0")
        object.__setattr__(self, "depth", d)
        object.__setattr__(self, "mask", m)

    @classmethod
    def from_array(cls, depth):
        """Validity inferred: finite and strictly positive."""
        d = np.asarray(depth, dtype=np.float64)
        mask = np.isfinite(d) & (d > 0)
        return cls(np.where(mask, d, 0.0), mask)

    @property
    def shape(self):
        return self.depth.shape


@dataclass(frozen=True)
class LossWeights:
    lambda_n: float = 1.0
    lambda_d: float = 1.5

    def __post_init__(self):
        if not (math.isfinite(self.lambda_n) and math.isfinite(self.lambda_d)):
            raise NonFinite("loss weights must be finite")


def normal_derivative(nmap: NormalMap):
    """Pixel derivatives of a normal map.

    Returns ``(deriv, valid)`` with ``deriv`` shaped H x W x 2 x 3: index 0 along u
    (columns), 1 along v (rows). Forward differences, backward on the last column/row.
    An entry is valid only when both pixels it touches are valid.
    """
    n, m = nmap.normals, nmap.mask
    h, w = m.shape
    if h < 2 or w < 2:
        raise TooSmall(f"normal map must be at least 2x2, got {h}x{w}")
    deriv = np.zeros((h, w, 2, 3))
    valid = np.zeros((h, w, 2), dtype=bool)

    deriv[:, :-1, 0] = n[:, 1:] - n[:, :-1]
    deriv[:, -1, 0] = n[:, -1] - n[:, -2]
    valid[:, :-1, 0] = m[:, 1:] & m[:, :-1]
    valid[:, -1, 0] = m[:, -1] & m[:, -2]

    deriv[:-1, :, 1] = n[1:] - n[:-1]
    deriv[-1, :, 1] = n[-1] - n[-2]
    valid[:-1, :, 1] = m[1:] & m[:-1]
    valid[-1, :, 1] = m[-1] & m[-2]

    deriv[~valid] = 0.0
    return deriv, valid


def normal_loss_from_derivatives(d_est, valid_est, d_ren, valid_ren, as_written=False):
    """Mean per-pixel L1 distance (6 components) between two derivative fields.

    A pixel counts when both of its derivative entries are valid in both fields.
    """
    d_est, d_ren = np.asarray(d_est), np.asarray(d_ren)
    if d_est.shape != d_ren.shape:
        raise DimensionMismatch(f"derivative shapes differ: {d_est.shape} vs {d_ren.shape}")
    pix = np.all(valid_est, axis=2) & np.all(valid_ren, axis=2)
    count = int(pix.sum())
    if count == 0:
        raise NoValidPixels("no pixel is valid in both derivative fields")
    l1 = np.abs(d_est - d_ren).sum(axis=(2, 3))
    m = float(l1[pix].sum() / count)
    return 1.0 - m if as_written else m


def normal_loss(estimated: NormalMap, rendered: NormalMap, as_written=False) -> float:
    """Normal-derivative consistency loss.

    Default is the plain mean L1 (zero when derivatives agree). ``as_written=True``
    returns ``1 - mean L1`` instead, which grows as the fields agree.
    """
    if estimated.shape != rendered.shape:
        raise DimensionMismatch(f"normal maps differ in size: {estimated.shape} vs {rendered.shape}")
    de, ve = normal_derivative(estimated)
    dr, vr = normal_derivative(rendered)
    return normal_loss_from_derivatives(de, ve, dr, vr, as_written)


def _joint(rendered: DepthMap, captured: DepthMap):
    if rendered.shape != captured.shape:
        raise DimensionMismatch(f"depth maps differ in size: {rendered.shape} vs {captured.shape}")
    mask = rendered.mask & captured.mask
    count = int(mask.sum())
    if count == 0:
        raise NoValidPixels("no pixel is valid in both depth maps")
    return mask, count


def depth_loss(rendered: DepthMap, captured: DepthMap) -> float:
    mask, count = _joint(rendered, captured)
    return float(np.abs(rendered.depth[mask] - captured.depth[mask]).sum() / count)


def depth_loss_grad(rendered: DepthMap, captured: DepthMap) -> np.ndarray:
    """d depth_loss / d rendered depth: sign(residual) / N on jointly valid pixels, else 0."""
    mask, count = _joint(rendered, captured)
    g = np.zeros(rendered.shape)
    g[mask] = np.sign(rendered.depth[mask] - captured.depth[mask]) / count
    return g


def combined_loss(base, n_loss, d_loss, weights: LossWeights = LossWeights()) -> float:
    vals = (float(base), float(n_loss), float(d_loss))
    if not all(math.isfinite(v) for v in vals):
        raise NonFinite("loss terms must be finite")
    return vals[0] + weights.lambda_n * vals[1] + weights.lambda_d * vals[2]


# ---------------------------------------------------------------------------- buffer I/O

def decode_normal_rgb(rgb) -> NormalMap:
    """8-bit RGB in [0, 255] maps to [-1, 1]; pure black pixels are invalid."""
    rgb = np.asarray(rgb)
    black = np.all(rgb[..., :3] == 0, axis=2)
    n = rgb[..., :3].astype(np.float64) / 255.0 * 2.0 - 1.0
    n[black] = 0.0
    return NormalMap.from_array(n)


def encode_normal_rgb(nmap: NormalMap) -> np.ndarray:
    out = np.rint((nmap.normals + 1.0) / 2.0 * 255.0).astype(np.uint8)
    out[~nmap.mask] = 0
    return out
