"""Synthetic ground-truth rooms: labeled scans, rendered depth sequences, model databases, layouts.

Room frame: the floor spans [0, L] x [0, W] at z = 0 and the ceiling sits at z = H.
``SceneSpec.pose`` maps the room frame into world coordinates.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from roomlayout.errors import CameraOutsideRoom, InvalidSpec
from roomlayout.geometry import PointCloud, RigidTransform, rot_z
from roomlayout.mesh import TriangleMesh, box_mesh, cylinder_mesh, sample_surface
from roomlayout.sceneio import (
    DepthFrame,
    Instance,
    ModelDatabase,
    ModelEntry,
    SegmentedScene,
    write_mesh,
    write_model_index,
)

FLOOR_ID, CEILING_ID, FIRST_WALL_ID, FIRST_FURNITURE_ID = 0, 5, 1, 10

_COLORS = {
    "floor": (0.55, 0.40, 0.25), "wall": (0.85, 0.85, 0.80), "ceiling": (0.95, 0.95, 0.95),
    "chair": (0.2, 0.3, 0.7), "table": (0.6, 0.3, 0.1), "sofa": (0.3, 0.6, 0.3),
    "bed": (0.7, 0.2, 0.3), "shelf": (0.5, 0.5, 0.2),
}


def _color(label):
    return _COLORS.get(label, (0.5, 0.5, 0.5))


@dataclass
class FurnitureItem:
    category: str
    position: tuple                      # (x, y) of the footprint center in the room frame
    rotation_deg: float = 0.0
    scale: tuple = (1.0, 1.0, 1.0)       # along the model's canonical x, y, z
    model_id: str | None = None          # database model, or a primitive below
    shape: str | None = None             # "box" or "cylinder"
    size: tuple = (1.0, 1.0, 1.0)        # box (x, y, z) or cylinder (2r, 2r, h)


@dataclass
class SceneSpec:
    dims: tuple = (4.0, 3.0, 2.5)
    pose: RigidTransform = field(default_factory=RigidTransform.identity)
    furniture: list = field(default_factory=list)
    noise_sigma: float = 0.0
    outlier_fraction: float = 0.0
    points_per_surface: int = 5000
    furniture_points: int = 2000
    ceiling: bool = True
    seed: int = 0

    def validate(self):
        if len(self.dims) != 3 or min(self.dims) <= 0:
            raise InvalidSpec("room dims must be three positive lengths")
        if self.noise_sigma < 0:
            raise InvalidSpec("noise sigma must be >= 0")
        if not 0 <= self.outlier_fraction < 1:
            raise InvalidSpec("outlier fraction must lie in [0, 1)")
        if self.points_per_surface < 4 or self.furniture_points < 1:
            raise InvalidSpec("need at least 4 points per surface")
        for item in self.furniture:
            if item.model_id is None and item.shape not in ("box", "cylinder"):
                raise InvalidSpec(f"furniture {item.category!r} needs a model_id or a primitive shape")
            if min(item.scale) <= 0 or min(item.size) <= 0:
                raise InvalidSpec("furniture scale and size must be positive")

    def to_dict(self):
        return {
            "dims": list(self.dims),
            "pose": self.pose.matrix.tolist(),
            "furniture": [dict(vars(f), position=list(f.position), scale=list(f.scale), size=list(f.size))
                          for f in self.furniture],
            "noise_sigma": self.noise_sigma, "outlier_fraction": self.outlier_fraction,
            "points_per_surface": self.points_per_surface, "furniture_points": self.furniture_points,
            "ceiling": self.ceiling, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        try:
            spec = cls(
                dims=tuple(float(v) for v in d.get("dims", (4.0, 3.0, 2.5))),
                pose=RigidTransform.from_matrix(d["pose"]) if "pose" in d else RigidTransform.identity(),
                furniture=[FurnitureItem(
                    category=f["category"], position=tuple(f["position"]),
                    rotation_deg=float(f.get("rotation_deg", 0.0)), scale=tuple(f.get("scale", (1, 1, 1))),
                    model_id=f.get("model_id"), shape=f.get("shape"), size=tuple(f.get("size", (1, 1, 1))))
                    for f in d.get("furniture", [])],
                noise_sigma=float(d.get("noise_sigma", 0.0)),
                outlier_fraction=float(d.get("outlier_fraction", 0.0)),
                points_per_surface=int(d.get("points_per_surface", 5000)),
                furniture_points=int(d.get("furniture_points", 2000)),
                ceiling=bool(d.get("ceiling", True)), seed=int(d.get("seed", 0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidSpec(f"malformed scene spec: {exc}") from exc
        spec.validate()
        return spec

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class GroundTruth:
    area: float
    height: float
    volume: float
    dims: tuple
    placements: list            # dicts: instance_id, category, model_id, rotation_deg, scale, linear, translation
    outlier_indices: np.ndarray
    room_pose: RigidTransform

    def to_dict(self):
        return {"area": self.area, "height": self.height, "volume": self.volume, "dims": list(self.dims),
                "placements": self.placements, "outlier_indices": self.outlier_indices.tolist(),
                "room_pose": self.room_pose.matrix.tolist()}


def _rect_samples(n, origin, u, v, rng):
    """Corners of the rectangle origin + [0,1]u + [0,1]v, then n - 4 uniform samples."""
    corners = np.array([origin, origin + u, origin + u + v, origin + v])
    st = rng.random((n - 4, 2))
    return np.vstack([corners, origin + st[:, :1] * u + st[:, 1:] * v])


def room_surfaces(dims, ceiling=True):
    """(label, instance id, origin, u, v) for each rectangular room surface."""
    L, W, H = dims
    o = np.zeros(3)
    ex, ey, ez = np.array([L, 0, 0.0]), np.array([0, W, 0.0]), np.array([0, 0, H])
    out = [("floor", FLOOR_ID, o, ex, ey),
           ("wall", FIRST_WALL_ID, o, ex, ez),
           ("wall", FIRST_WALL_ID + 1, o + ey, ex, ez),
           ("wall", FIRST_WALL_ID + 2, o, ey, ez),
           ("wall", FIRST_WALL_ID + 3, o + ex, ey, ez)]
    if ceiling:
        out.append(("ceiling", CEILING_ID, o + ez, ex, ey))
    return out


def primitive_mesh(item: FurnitureItem) -> TriangleMesh:
    sx, sy, sz = item.size
    if item.shape == "box":
        return box_mesh((-sx / 2, -sy / 2, 0.0), (sx / 2, sy / 2, sz))
    return cylinder_mesh(sx / 2, sz).transformed(np.diag([1.0, sy / sx, 1.0]))


def furniture_mesh(item: FurnitureItem, db: ModelDatabase | None) -> TriangleMesh:
    if item.model_id is None:
        return primitive_mesh(item)
    if db is None:
        raise InvalidSpec(f"furniture model {item.model_id!r} needs a model database")
    from roomlayout.registration import canonical_mesh
    return canonical_mesh(db.entry(item.model_id))


def furniture_transform(item: FurnitureItem, mesh: TriangleMesh):
    """Linear map and offset (room frame) that scale, rotate, and stand the model at ``position``."""
    lin = rot_z(item.rotation_deg) @ np.diag(np.asarray(item.scale, dtype=np.float64))
    v = mesh.vertices @ lin.T
    lo, hi = v.min(axis=0), v.max(axis=0)
    offset = np.array([item.position[0] - (lo[0] + hi[0]) / 2, item.position[1] - (lo[1] + hi[1]) / 2, -lo[2]])
    return lin, offset


def generate_scene(spec: SceneSpec, db: ModelDatabase | None = None):
    """Labeled scan of the room and its furniture plus the ground truth that produced it."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    pts, cols, instances = [], [], []
    count = 0

    def add(label, inst_id, p):
        nonlocal count
        pts.append(p)
        cols.append(np.tile(_color(label), (len(p), 1)))
        instances.append(Instance(inst_id, label, np.arange(count, count + len(p))))
        count += len(p)

    for label, inst_id, o, u, v in room_surfaces(spec.dims, spec.ceiling):
        add(label, inst_id, _rect_samples(spec.points_per_surface, o, u, v, rng))

    gt_placements = []
    for k, item in enumerate(spec.furniture):
        mesh = furniture_mesh(item, db)
        lin, offset = furniture_transform(item, mesh)
        placed = TriangleMesh(mesh.vertices @ lin.T + offset, mesh.triangles)
        inst_id = FIRST_FURNITURE_ID + k
        add(item.category, inst_id, sample_surface(placed, spec.furniture_points, rng))
        world_lin = spec.pose.rotation @ lin
        gt_placements.append({
            "instance_id": inst_id, "category": item.category, "model_id": item.model_id or item.shape,
            "rotation_deg": float(item.rotation_deg % 360.0), "scale": [float(s) for s in item.scale],
            "linear": world_lin.tolist(), "translation": spec.pose.apply(offset).tolist()})

    points = np.vstack(pts)
    if spec.noise_sigma > 0:
        points = points + rng.normal(0.0, spec.noise_sigma, points.shape)
    n_out = int(round(spec.outlier_fraction * len(points)))
    outliers = np.sort(rng.choice(len(points), size=n_out, replace=False)) if n_out else np.zeros(0, dtype=int)
    if n_out:
        points[outliers] = rng.random((n_out, 3)) * np.asarray(spec.dims)

    cloud = PointCloud(spec.pose.apply(points), np.vstack(cols))
    L, W, H = spec.dims
    gt = GroundTruth(L * W, H, L * W * H, (L, W), gt_placements, outliers, spec.pose)
    return SegmentedScene(cloud, tuple(instances)), gt


# ---------------------------------------------------------------------------- depth rendering

def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> RigidTransform:
    """Camera-to-frame pose for a camera at ``eye`` looking at ``target`` (+z forward, +y down)."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    return RigidTransform(np.column_stack([right, down, fwd]), eye)


def orbit_camera_path(spec: SceneSpec, n=20, pitches=(-30.0, 0.0, 30.0)):
    """``n`` room-frame poses on a circle around the room center, cycling through ``pitches``."""
    L, W, H = spec.dims
    center = np.array([L / 2, W / 2, H / 2])
    radius = 0.25 * min(L, W)
    poses = []
    for k in range(n):
        yaw = 2 * np.pi * k / n
        pitch = np.deg2rad(pitches[k % len(pitches)])
        eye = center + radius * np.array([np.cos(yaw), np.sin(yaw), 0.0])
        look = np.array([np.cos(yaw) * np.cos(pitch), np.sin(yaw) * np.cos(pitch), np.sin(pitch)])
        poses.append(look_at(eye, eye + look))
    return poses


def default_intrinsics(width=320, height=240, hfov_deg=70.0):
    fx = 0.5 * width / np.tan(np.deg2rad(hfov_deg) / 2)
    return (fx, fx, (width - 1) / 2, (height - 1) / 2)


def render_depth_sequence(spec: SceneSpec, camera_path, intrinsics=None, size=(320, 240),
                          room_frame=True):
    """Ray-cast depth (and flat surface colors) of the empty room shell.

    ``camera_path`` holds camera-to-room poses (``room_frame=True``) or camera-to-world
    poses. Returned frames carry camera-to-world poses.
    """
    w, h = size
    fx, fy, cx, cy = intrinsics or default_intrinsics(w, h)
    hi = np.asarray(spec.dims, dtype=np.float64)
    u, v = np.meshgrid(np.arange(w), np.arange(h))
    rays = np.stack([(u - cx) / fx, (v - cy) / fy, np.ones_like(u, dtype=np.float64)], axis=-1).reshape(-1, 3)
    palette = np.array([_color("wall"), _color("floor"), _color("ceiling")])
    frames = []
    for k, pose in enumerate(camera_path):
        room_pose = pose if room_frame else spec.pose.inverse() @ pose
        eye = room_pose.translation
        if np.any(eye <= 0) or np.any(eye >= hi):
            raise CameraOutsideRoom(f"camera {k} at {eye.tolist()} is outside the room")
        d = rays @ room_pose.rotation.T
        with np.errstate(divide="ignore", invalid="ignore"):
            t_axes = np.where(d > 0, (hi - eye) / d, np.where(d < 0, -eye / d, np.inf))
        axis = np.argmin(t_axes, axis=1)
        t = t_axes[np.arange(len(d)), axis]
        depth = t.reshape(h, w)
        hit_z = eye[2] + t * d[:, 2]
        which = np.where(axis < 2, 0, np.where(hit_z < hi[2] / 2, 1, 2))
        if not spec.ceiling:
            which[which == 2] = 0
        color = palette[which].reshape(h, w, 3)
        frames.append(DepthFrame(depth, (fx, fy, cx, cy), spec.pose @ room_pose, color))
    return frames


def box_room_distance(points, dims, pose: RigidTransform = RigidTransform.identity()):
    """Unsigned distance from world points to the surface of the room box."""
    p = pose.inverse().apply(points)
    hi = np.asarray(dims, dtype=np.float64)
    inside = np.all((p >= 0) & (p <= hi), axis=1)
    d_in = np.minimum(p, hi - p).min(axis=1)
    q = np.maximum(np.maximum(-p, p - hi), 0.0)
    d_out = np.linalg.norm(q, axis=1)
    return np.where(inside, d_in, d_out)


# ---------------------------------------------------------------------------- model database

def _boxes_mesh(boxes):
    return TriangleMesh.merge(box_mesh(lo, hi) for lo, hi in boxes)


def _legs(w, d, h, t=0.04):
    xs, ys = (-w / 2, w / 2 - t), (-d / 2, d / 2 - t)
    return [((x, y, 0.0), (x + t, y + t, h)) for x in xs for y in ys]


def chair_model(rng):
    w, d = rng.uniform(0.42, 0.55), rng.uniform(0.42, 0.55)
    seat, back = rng.uniform(0.42, 0.48), rng.uniform(0.35, 0.5)
    boxes = _legs(w, d, seat) + [((-w / 2, -d / 2, seat), (w / 2, d / 2, seat + 0.05)),
                                 ((-w / 2, d / 2 - 0.05, seat + 0.05), (w / 2, d / 2, seat + 0.05 + back))]
    return _boxes_mesh(boxes)


def table_model(rng):
    w, d, h = rng.uniform(0.9, 1.6), rng.uniform(0.55, 0.85), rng.uniform(0.7, 0.76)
    return _boxes_mesh(_legs(w, d, h - 0.04) + [((-w / 2, -d / 2, h - 0.04), (w / 2, d / 2, h))])


def sofa_model(rng):
    w, d = rng.uniform(1.5, 2.2), rng.uniform(0.8, 0.95)
    seat, back, arm = 0.42, rng.uniform(0.75, 0.9), rng.uniform(0.12, 0.2)
    boxes = [((-w / 2, -d / 2, 0.0), (w / 2, d / 2, seat)),
             ((-w / 2, d / 2 - 0.2, seat), (w / 2, d / 2, back)),
             ((-w / 2, -d / 2, seat), (-w / 2 + arm, d / 2 - 0.2, seat + 0.2)),
             ((w / 2 - arm, -d / 2, seat), (w / 2, d / 2 - 0.2, seat + 0.2))]
    return _boxes_mesh(boxes)


def bed_model(rng):
    w, d = rng.uniform(1.0, 1.8), rng.uniform(1.95, 2.1)
    base, head = rng.uniform(0.4, 0.55), rng.uniform(0.9, 1.1)
    return _boxes_mesh([((-w / 2, -d / 2, 0.0), (w / 2, d / 2, base)),
                        ((-w / 2, d / 2 - 0.06, 0.0), (w / 2, d / 2, head))])


def shelf_model(rng):
    w, d, h = rng.uniform(0.6, 1.0), rng.uniform(0.28, 0.4), rng.uniform(1.2, 2.0)
    t = 0.025
    boxes = [((-w / 2, -d / 2, 0.0), (-w / 2 + t, d / 2, h)), ((w / 2 - t, -d / 2, 0.0), (w / 2, d / 2, h)),
             ((-w / 2, d / 2 - t, 0.0), (w / 2, d / 2, h))]
    for z in np.linspace(0.0, h - t, 5):
        boxes.append(((-w / 2, -d / 2, z), (w / 2, d / 2, z + t)))
    return _boxes_mesh(boxes)


MODEL_BUILDERS = {"chair": chair_model, "table": table_model, "sofa": sofa_model,
                  "bed": bed_model, "shelf": shelf_model}


def make_model_database(root, categories=tuple(MODEL_BUILDERS), per_category=4, seed=0) -> ModelDatabase:
    """Write a procedural furniture database (OBJ files + index.json) under ``root``."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    entries = []
    for cat in categories:
        (root / cat).mkdir(parents=True, exist_ok=True)
        for k in range(per_category):
            path = root / cat / f"{cat}_{k:03d}.obj"
            write_mesh(MODEL_BUILDERS[cat](rng), path)
            entries.append(ModelEntry(f"{cat}_{k:03d}", cat, path, "z"))
    write_model_index(root, entries)
    return ModelDatabase(root, tuple(entries))


def random_furniture_spec(db: ModelDatabase, seed, n_items=3, dims=(6.0, 5.0, 2.6), noise_sigma=0.01,
                          scale_range=(0.7, 1.4), points=2000, categories=None) -> SceneSpec:
    """Room holding ``n_items`` database models under random upright rotation and anisotropic scale."""
    rng = np.random.default_rng(seed)
    cats = list(categories or db.categories())
    L, W, _ = dims
    cols = int(np.ceil(np.sqrt(n_items)))
    items = []
    for k in range(n_items):
        entry = db.by_category(cats[rng.integers(len(cats))])
        entry = entry[rng.integers(len(entry))]
        cx = (k % cols + 0.5) * L / cols
        cy = (k // cols + 0.5) * W / cols
        items.append(FurnitureItem(
            category=entry.category, position=(cx, cy), rotation_deg=float(rng.uniform(0, 360)),
            scale=tuple(float(s) for s in rng.uniform(*scale_range, size=3)), model_id=entry.id))
    return SceneSpec(dims=dims, furniture=items, noise_sigma=noise_sigma, points_per_surface=2000,
                     furniture_points=points, seed=int(rng.integers(2**31)))
