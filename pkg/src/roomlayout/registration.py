"""Catalog model retrieval and placement by chamfer minimization.

A candidate model lives in a canonical z-up frame. A placement maps it into the scene as

    x_world = basis @ Rz(rotation_deg) @ S @ x_model + translation

where ``basis`` has columns (f1, f2, fn) of the floor and ``S`` scales along the model's
in-plane principal axes (at ``scale_axis_deg``) and its up axis.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from roomlayout.errors import EmptyCloud, InvalidParameter, UnknownCategory
from roomlayout.geometry import NnIndex, as_points, chamfer_distance, compute_pca, rot_z
from roomlayout.mesh import TriangleMesh, sample_surface
from roomlayout.sceneio import ModelDatabase, ModelEntry, SegmentedScene, read_mesh

DEFAULT_SAMPLES = 4096
DEFAULT_CANDIDATES = 5
DEFAULT_ANGLE_STEP = 20
STRUCTURAL_LABELS = frozenset({"wall", "floor", "ceiling"})

_Y_UP_TO_Z_UP = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True, eq=False)
class CandidateModel:
    model_id: str
    category: str
    mesh: TriangleMesh          # canonical frame, +z up
    samples: np.ndarray         # surface samples in the canonical frame


@dataclass(frozen=True, eq=False)
class Placement:
    model_id: str
    scale: tuple
    rotation_deg: float
    translation: np.ndarray
    score: float
    scale_axis_deg: float = 0.0
    basis: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        if min(self.scale) <= 0:
            raise InvalidParameter("scale components must be positive")
        if not 0.0 <= self.rotation_deg < 360.0:
            raise InvalidParameter("rotation_deg must lie in [0, 360)")

    @property
    def scale_matrix(self):
        return _scale_matrix(self.scale, self.scale_axis_deg)

    @property
    def linear(self):
        return self.basis @ rot_z(self.rotation_deg) @ self.scale_matrix

    def apply(self, model_points):
        return as_points(model_points) @ self.linear.T + self.translation

    def moved(self, offset) -> Placement:
        return Placement(self.model_id, self.scale, self.rotation_deg,
                         np.asarray(self.translation) + np.asarray(offset), self.score,
                         self.scale_axis_deg, self.basis)


def _scale_matrix(scale, axis_deg):
    r = rot_z(axis_deg)
    return r @ np.diag(np.asarray(scale, dtype=np.float64)) @ r.T


def _model_seed(model_id, seed):
    return [int(seed), zlib.crc32(model_id.encode("utf-8"))]


@lru_cache(maxsize=256)
def _load_canonical(mesh_path, up):
    mesh = read_mesh(mesh_path)
    if up == "y":
        mesh = mesh.transformed(_Y_UP_TO_Z_UP)
    return mesh


def canonical_mesh(entry: ModelEntry) -> TriangleMesh:
    """Database mesh rotated into the z-up canonical frame."""
    return _load_canonical(str(entry.mesh_path), entry.up)


def load_candidate(entry: ModelEntry, n_samples=DEFAULT_SAMPLES, seed=0) -> CandidateModel:
    mesh = canonical_mesh(entry)
    rng = np.random.default_rng(_model_seed(entry.id, seed))
    return CandidateModel(entry.id, entry.category, mesh, sample_surface(mesh, n_samples, rng))


def retrieve_candidates(db: ModelDatabase, category, m=DEFAULT_CANDIDATES, seed=0,
                        n_samples=DEFAULT_SAMPLES):
    """``min(m, available)`` distinct models of ``category``, drawn uniformly with a seeded generator."""
    entries = db.by_category(category)
    if not entries:
        raise UnknownCategory(category)
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(entries), size=min(int(m), len(entries)), replace=False)
    return [load_candidate(entries[i], n_samples, seed=0) for i in pick]


# ---------------------------------------------------------------------------- placement

def _major_angle(cov2):
    """Angle (deg) of the major eigenvector of a 2x2 covariance, sign fixed by its largest component."""
    _, vecs = np.linalg.eigh(cov2)
    major = vecs[:, 1]
    if major[np.argmax(np.abs(major))] < 0:
        major = -major
    return float(np.degrees(np.arctan2(major[1], major[0])))


def _surface_covariance(mesh: TriangleMesh):
    """Exact area-weighted covariance of a triangle mesh surface, or None if it has no area."""
    tri = mesh.vertices[mesh.triangles]                     # T x 3 x 3
    area = mesh.triangle_areas()
    total = area.sum()
    if total <= 0:
        return None
    s = tri.sum(axis=1)
    mean = (area[:, None] * s).sum(axis=0) / (3 * total)
    # integral of x x^T over a triangle: A/12 * (sum v v^T + s s^T)
    second = np.einsum("t,tij,tik->jk", area, tri, tri) + np.einsum("t,ti,tk->ik", area, s, s)
    return second / (12 * total) - np.outer(mean, mean)


def model_covariance(model: CandidateModel):
    """Surface covariance of the model: exact from its mesh, else from its samples."""
    cov = _surface_covariance(model.mesh) if len(model.mesh.triangles) else None
    if cov is None:
        c = model.samples - model.samples.mean(axis=0)
        cov = c.T @ c / len(c)
    return cov


def model_axis_deg(model: CandidateModel) -> float:
    """In-plane major principal direction of the model surface."""
    return _major_angle(model_covariance(model)[:2, :2])


def _axis_dirs(axis_deg):
    a = np.deg2rad(axis_deg)
    return np.array([[np.cos(a), np.sin(a), 0.0], [-np.sin(a), np.cos(a), 0.0], [0.0, 0.0, 1.0]])


def _ratio(target_extent, model_extent):
    if target_extent <= 1e-9 or model_extent <= 1e-9:
        return 1.0
    return float(target_extent / model_extent)


def _scale_from_extents(t_ext, m_ext, mode):
    if mode == "anisotropic":
        return tuple(_ratio(t, m) for t, m in zip(t_ext, m_ext))
    if mode == "uniform":
        s = _ratio(t_ext[0], m_ext[0])
        return (s, s, s)
    raise InvalidParameter(f"unknown scale mode {mode!r}")


def estimate_scale(target_floor_coords, model_points, mode="anisotropic"):
    """Scale from principal extents matched by descending in-plane eigenvalue.

    ``target_floor_coords`` are target points in floor-frame directions. Returns
    ``(scale, model_axis_deg)`` with ``scale`` along (major, minor, up) of the model.
    """
    def extents(p):
        c = p - p.mean(axis=0)
        axis = _major_angle(c[:, :2].T @ c[:, :2] / len(c))
        return axis, np.ptp(c @ _axis_dirs(axis).T, axis=0)
    _, t_ext = extents(np.asarray(target_floor_coords, dtype=np.float64))
    m_axis, m_ext = extents(np.asarray(model_points, dtype=np.float64))
    return _scale_from_extents(t_ext, m_ext, mode), m_axis


def baseline_placement(target, model: CandidateModel, floor, target_index=None) -> Placement:
    """Model up axis on the floor normal, no rotation, unit scale, centroids coincident."""
    pts = as_points(target)
    if len(pts) == 0:
        raise EmptyCloud("empty target cloud")
    basis = floor.basis
    translation = pts.mean(axis=0) - basis @ model.samples.mean(axis=0)
    placed = model.samples @ basis.T + translation
    index = target_index if target_index is not None else NnIndex(pts)
    score = chamfer_distance(placed, index)
    return Placement(model.model_id, (1.0, 1.0, 1.0), 0.0, translation, score, 0.0, basis)


def _check_step(angle_step_deg):
    step = int(angle_step_deg)
    if step != angle_step_deg or step <= 0 or 360 % step:
        raise InvalidParameter(f"angle step {angle_step_deg} must be a positive divisor of 360")
    return step


@dataclass
class Sweep:
    """Per-angle results of a rotation sweep."""
    angles: np.ndarray
    scores: np.ndarray
    scales: list                # scale triple used at each angle
    axis_deg: float
    translations: np.ndarray    # N x 3

    @property
    def best(self) -> int:
        return int(np.argmin(self.scores))      # first minimum: ties go to the smaller angle


SCALE_REFINE_STEPS = 3


def _axis_variances(cov, dirs):
    return np.einsum("ki,ij,kj->k", dirs, cov, dirs)


def _matched_scale(model: CandidateModel, axis_deg, m_var, mesh_var, t_var, mode):
    """Scale whose model sample variance along each model axis equals the target's.

    ``m_var`` comes from the model samples, which the chamfer scores against. Anisotropic
    scaling also reweights triangle areas, which a rescan of the scaled model would see, so
    the estimate is refined by the relative change in the exact mesh covariance
    (``mesh_var`` is that covariance at unit scale).
    """
    if mode == "uniform":
        s = _ratio(np.sqrt(t_var.sum()), np.sqrt(m_var.sum()))
        return (s, s, s)
    scale = np.array([_ratio(np.sqrt(t), np.sqrt(m)) for t, m in zip(t_var, m_var)])
    if mesh_var is None or np.all(scale == scale[0]):
        return tuple(scale)     # uniform scaling does not change relative areas
    dirs = _axis_dirs(axis_deg)
    for _ in range(SCALE_REFINE_STEPS):
        mat = _scale_matrix(scale, axis_deg)
        cov = _surface_covariance(TriangleMesh(model.mesh.vertices @ mat.T, model.mesh.triangles))
        if cov is None:
            break
        got = _axis_variances(cov, dirs) * m_var / mesh_var
        scale = scale * np.array([_ratio(np.sqrt(t), np.sqrt(g)) for t, g in zip(t_var, got)])
    return tuple(scale)


def sweep_scores(target, model: CandidateModel, floor, angle_step_deg=DEFAULT_ANGLE_STEP,
                 scale_mode="anisotropic", target_index=None, axis_matching="per_angle") -> Sweep:
    """Scale, rotate about the floor normal, and score every swept angle.

    ``axis_matching="per_angle"`` matches the target's variance along the directions the
    model's principal axes take at each angle, so scale and rotation hypotheses stay
    consistent. ``"eigen"`` fixes one scale up front from extents of principal axes
    paired in descending-eigenvalue order.
    """
    step = _check_step(angle_step_deg)
    if axis_matching not in ("per_angle", "eigen"):
        raise InvalidParameter(f"unknown axis matching {axis_matching!r}")
    if scale_mode not in ("anisotropic", "uniform"):
        raise InvalidParameter(f"unknown scale mode {scale_mode!r}")
    pts = as_points(target)
    compute_pca(pts)  # raises DegenerateCloud for < 3 or collinear points
    basis = floor.basis
    c_target = pts.mean(axis=0)
    target_index = target_index if target_index is not None else NnIndex(pts)
    local_target = (pts - c_target) @ basis     # target in floor-frame directions, centered

    if axis_matching == "eigen":
        fixed, axis_deg = estimate_scale(local_target, model.samples, scale_mode)
    else:
        mesh_cov = _surface_covariance(model.mesh) if len(model.mesh.triangles) else None
        c = model.samples - model.samples.mean(axis=0)
        sample_cov = c.T @ c / len(c)
        axis_deg = _major_angle((sample_cov if mesh_cov is None else mesh_cov)[:2, :2])
        dirs = _axis_dirs(axis_deg)
        m_var = _axis_variances(sample_cov, dirs)
        mesh_var = None if mesh_cov is None else _axis_variances(mesh_cov, dirs)
        if mesh_var is not None and np.any(mesh_var <= 0):
            mesh_var = None
        t_cov = local_target.T @ local_target / len(local_target)

    angles = np.arange(0, 360, step)
    scores = np.empty(len(angles))
    scales, translations = [], np.empty((len(angles), 3))
    cache = {}
    for k, theta in enumerate(angles):
        rz = rot_z(theta)
        if axis_matching == "eigen":
            scale = fixed
        else:
            d = dirs @ rz.T                         # model axes in floor-frame directions
            t_var = _axis_variances(t_cov, d)
            scale = _matched_scale(model, axis_deg, m_var, mesh_var, t_var, scale_mode)
        scale = tuple(float(v) for v in scale)
        if scale not in cache:
            scaled = model.samples @ _scale_matrix(scale, axis_deg).T
            cache = {scale: (scaled, scaled.mean(axis=0), NnIndex(scaled))}
        scaled, c_model, model_index = cache[scale]
        # target -> model: bring target into the scaled model's frame
        fwd = model_index.mean_distance(local_target @ rz + c_model)
        # model -> target
        bwd = target_index.mean_distance((scaled - c_model) @ (basis @ rz).T + c_target)
        scores[k] = 0.5 * (fwd + bwd)
        scales.append(scale)
        translations[k] = c_target - basis @ rz @ c_model
    return Sweep(angles, scores, scales, axis_deg, translations)


def fit_placement(target, model: CandidateModel, floor, angle_step_deg=DEFAULT_ANGLE_STEP,
                  scale_mode="anisotropic", target_index=None, axis_matching="per_angle") -> Placement:
    """Scale by principal-extent ratios and sweep rotations about the floor normal.

    Returns the angle with minimal chamfer distance (ties go to the smaller angle).
    """
    sw = sweep_scores(target, model, floor, angle_step_deg, scale_mode, target_index, axis_matching)
    k = sw.best
    return Placement(model.model_id, sw.scales[k], float(sw.angles[k]), sw.translations[k],
                     float(sw.scores[k]), sw.axis_deg % 360.0, floor.basis)


# ---------------------------------------------------------------------------- scene evaluation

@dataclass
class InstanceResult:
    instance_id: int
    category: str
    model_id: str
    score: float
    placement: Placement = field(repr=False)


@dataclass
class EvaluationReport:
    method: str
    rows: list
    skipped: list

    @property
    def scores(self):
        return np.array([r.score for r in self.rows])

    @property
    def mean(self):
        return float(self.scores.mean()) if self.rows else float("nan")

    @property
    def std(self):
        return float(self.scores.std()) if self.rows else float("nan")

    def summary(self):
        if not self.rows:
            return "n/a"
        return f"{self.mean:.4f} (±{self.std:.3f})"

    def to_dict(self):
        return {
            "method": self.method,
            "instances": [{"instance_id": r.instance_id, "category": r.category, "model_id": r.model_id,
                           "dist": r.score, "rotation_deg": r.placement.rotation_deg,
                           "scale": list(r.placement.scale)} for r in self.rows],
            "skipped": [{"instance_id": i, "category": c} for i, c in self.skipped],
            "count": len(self.rows),
            "mean": self.mean if self.rows else None,
            "std": self.std if self.rows else None,
        }


def furniture_instances(scene: SegmentedScene):
    return [i for i in scene.instances if i.label not in STRUCTURAL_LABELS]


def evaluate_scene(scene: SegmentedScene, db: ModelDatabase, floor, method="fitted",
                   m=DEFAULT_CANDIDATES, seed=0, n_samples=DEFAULT_SAMPLES,
                   angle_step_deg=DEFAULT_ANGLE_STEP, scale_mode="anisotropic",
                   axis_matching="per_angle") -> EvaluationReport:
    """Best placement over ``m`` retrieved candidates for every furniture instance.

    Candidates for an instance depend only on ``(seed, instance id)``, so both methods
    see the same models. Instances whose category is absent from ``db`` are skipped.
    """
    if method not in ("fitted", "baseline"):
        raise InvalidParameter(f"unknown method {method!r}")
    known = set(db.categories())
    rows, skipped = [], []
    for inst in furniture_instances(scene):
        if inst.label not in known:
            skipped.append((inst.id, inst.label))
            continue
        target = scene.points_of(inst).points
        index = NnIndex(target)
        best = None
        for cand in retrieve_candidates(db, inst.label, m, [int(seed), inst.id], n_samples):
            if method == "baseline":
                p = baseline_placement(target, cand, floor, index)
            else:
                p = fit_placement(target, cand, floor, angle_step_deg, scale_mode, index, axis_matching)
            if best is None or p.score < best.score:
                best = p
        rows.append(InstanceResult(inst.id, inst.label, best.model_id, best.score, best))
    return EvaluationReport(method, rows, skipped)


def format_table(reports, scene_name="scene"):
    """Table-style summary: one Dist row with mean (±std) per method, then per-instance rows."""
    by = {r.method: r for r in reports}
    methods = [m for m in ("baseline", "fitted") if m in by]
    head = f"{'Scene':<16}{'Metric':<8}" + "".join(f"{m.capitalize():<20}" for m in methods)
    line = f"{scene_name:<16}{'Dist':<8}" + "".join(f"{by[m].summary():<20}" for m in methods)
    out = [head, line, "", f"{'instance':<10}{'category':<12}" + "".join(f"{m:<22}" for m in methods)]
    first = by[methods[0]]
    for k, row in enumerate(first.rows):
        cells = "".join(f"{by[m].rows[k].score:<22.6g}" for m in methods)
        out.append(f"{row.instance_id:<10}{row.category:<12}{cells}")
    for inst_id, cat in first.skipped:
        out.append(f"{inst_id:<10}{cat:<12}skipped (category not in database)")
    return "\n".join(out) + "\n"
