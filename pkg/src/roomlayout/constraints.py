"""Interior placement constraints: objects rest on the floor, stay inside the walls, don't intersect."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from roomlayout.envelope import RoomEnvelope, convex_hull_2d
from roomlayout.errors import InvalidParameter, UnknownInstance
from roomlayout.geometry import Obb, PointCloud, obb_overlap, rot_z
from roomlayout.mesh import TriangleMesh
from roomlayout.registration import Placement
from roomlayout.sceneio import LayoutDocument, PlacementRecord, SegmentedScene

MAX_ROUNDS = 100
MARGIN = 1e-3
FLOOR_TOL = 1e-6
WALL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class PlacedObject:
    instance_id: int
    category: str
    placement: Placement
    samples: np.ndarray                 # canonical model samples
    mesh: TriangleMesh | None = None    # canonical model mesh, for export

    def world_points(self):
        return self.placement.apply(self.samples)

    def obb(self) -> Obb:
        p = self.placement
        frame = p.basis @ rot_z(p.rotation_deg + p.scale_axis_deg)
        return Obb.from_points(self.world_points(), frame.T)

    def moved(self, offset) -> PlacedObject:
        return replace(self, placement=self.placement.moved(offset))


@dataclass(frozen=True, eq=False)
class Layout:
    envelope: RoomEnvelope
    objects: tuple

    def __post_init__(self):
        objs = tuple(sorted(self.objects, key=lambda o: o.instance_id))
        ids = [o.instance_id for o in objs]
        if len(set(ids)) != len(ids):
            raise InvalidParameter("duplicate instance ids in layout")
        object.__setattr__(self, "objects", objs)


def min_height(obj: PlacedObject, envelope: RoomEnvelope) -> float:
    f = envelope.floor
    return float(np.min((obj.world_points() - f.origin) @ f.fn))


def snap_to_floor(obj: PlacedObject, envelope: RoomEnvelope) -> PlacedObject:
    """Shift along the floor normal so the lowest model sample sits at height 0."""
    return obj.moved(-min_height(obj, envelope) * envelope.floor.fn)


# ---------------------------------------------------------------------------- wall checks

def _point_in_polygon(pt, poly):
    x, y = pt
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xc:
                inside = not inside
    return inside


def _distance_to_polygon(pt, poly):
    p = np.asarray(pt, dtype=np.float64)
    a = np.asarray(poly, dtype=np.float64)
    b = np.roll(a, -1, axis=0)
    ab = b - a
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
    closest = a + t[:, None] * ab
    return float(np.min(np.linalg.norm(closest - p, axis=1)))


def outside_distance(pt, poly) -> float:
    """0 for points inside or on the polygon, else Euclidean distance to its boundary."""
    d = _distance_to_polygon(pt, poly)
    if d <= 1e-12 or _point_in_polygon(pt, poly):
        return 0.0
    return d


@dataclass(frozen=True)
class WallViolation:
    instance_id: int
    distance: float
    corner: int


def footprint(obj: PlacedObject, envelope: RoomEnvelope):
    """Floor-plane (f1, f2) coordinates of the object's 8 OBB corners."""
    return envelope.floor.to_plane(obj.obb().corners())[:, :2]


def check_wall_penetration(obj: PlacedObject, envelope: RoomEnvelope) -> WallViolation:
    """Largest distance by which a projected OBB corner lies outside the floor contour."""
    poly = envelope.floor.contour
    dists = [outside_distance(c, poly) for c in footprint(obj, envelope)]
    k = int(np.argmax(dists))
    return WallViolation(obj.instance_id, float(dists[k]), k)


def _wall_correction(obj, envelope, margin):
    """In-plane shift that moves the footprint inside every violated contour edge (convex contour)."""
    poly = envelope.floor.contour
    corners = footprint(obj, envelope)
    shift = np.zeros(2)
    for i in range(len(poly)):
        a, b = poly[i], poly[(i + 1) % len(poly)]
        e = b - a
        n = np.array([-e[1], e[0]]) / np.linalg.norm(e)   # inward for counter-clockwise contours
        depth = -float(np.min((corners - a) @ n))
        if depth > WALL_TOL:
            shift += (depth + margin) * n
    f = envelope.floor
    return shift[0] * f.f1 + shift[1] * f.f2


# ---------------------------------------------------------------------------- resolution

@dataclass
class ResolutionReport:
    rounds: int = 0
    resolved: bool = True
    residuals: list = field(default_factory=list)
    history: list = field(default_factory=list)    # violation count before each round

    def to_list(self):
        return list(self.residuals)


def find_violations(layout: Layout):
    env = layout.envelope
    walls = []
    for o in layout.objects:
        v = check_wall_penetration(o, env)
        if v.distance > WALL_TOL:
            walls.append(v)
    floating = []
    for o in layout.objects:
        h = min_height(o, env)
        if abs(h) > FLOOR_TOL:
            floating.append((o.instance_id, h))
    boxes = [o.obb() for o in layout.objects]
    overlaps = []
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            if obb_overlap(boxes[i], boxes[j]):
                overlaps.append((layout.objects[i].instance_id, layout.objects[j].instance_id))
    return walls, overlaps, floating


def _residuals(walls, overlaps, floating):
    out = [{"kind": "wall", "instances": [v.instance_id], "amount": v.distance} for v in walls]
    out += [{"kind": "overlap", "instances": [a, b], "amount": None} for a, b in overlaps]
    out += [{"kind": "floating", "instances": [i], "amount": h} for i, h in floating]
    return out


def _push_moves(a: PlacedObject, b: PlacedObject, envelope, margin):
    """Candidate separations of an overlapping pair, preferred first: equal split, then one-sided."""
    fn = envelope.floor.fn
    oa, ob = a.obb(), b.obb()
    d = ob.center - oa.center
    d = d - (d @ fn) * fn
    norm = np.linalg.norm(d)
    d = envelope.floor.f1 if norm < 1e-12 else d / norm
    depth = (oa.center @ d + oa.radius_along(d)) - (ob.center @ d - ob.radius_along(d))
    step = max(depth, 0.0) + margin
    return [(a.moved(-0.5 * step * d), b.moved(0.5 * step * d)),
            (a, b.moved(step * d)),
            (a.moved(-step * d), b)]


class _State:
    """Objects plus cached boxes, with violation counts restricted to a subset of objects."""

    def __init__(self, objs, envelope):
        self.objs = list(objs)
        self.env = envelope
        self.boxes = [o.obb() for o in self.objs]

    def local_count(self, ks, objs=None, boxes=None):
        objs = objs or {k: self.objs[k] for k in ks}
        boxes = boxes or {k: self.boxes[k] for k in ks}
        n = 0
        for k in ks:
            if check_wall_penetration(objs[k], self.env).distance > WALL_TOL:
                n += 1
            if abs(min_height(objs[k], self.env)) > FLOOR_TOL:
                n += 1
            for j in range(len(self.objs)):
                if j == k or (j in ks and j < k):
                    continue
                other = boxes[j] if j in ks else self.boxes[j]
                if obb_overlap(boxes[k], other):
                    n += 1
        return n

    def try_move(self, moved):
        """Apply ``{index: object}`` if it does not add violations among the moved objects."""
        ks = sorted(moved)
        moved = {k: snap_to_floor(o, self.env) for k, o in moved.items()}
        boxes = {k: o.obb() for k, o in moved.items()}
        if self.local_count(ks, moved, boxes) > self.local_count(ks):
            return False
        for k in ks:
            self.objs[k], self.boxes[k] = moved[k], boxes[k]
        return True


def _outward_lines(poly):
    """Unit outward normals and offsets of a counter-clockwise polygon: interior is n . x < c."""
    e = np.roll(poly, -1, axis=0) - poly
    n = np.column_stack([e[:, 1], -e[:, 0]])
    n /= np.linalg.norm(n, axis=1)[:, None]
    return n, np.einsum("ij,ij->i", n, poly)


def free_offset(state, k, margin):
    """Smallest in-plane offset that clears object ``k`` of every other object and the walls.

    Works on floor-plane footprints: translations that make two convex footprints collide
    form their Minkowski difference, and staying inside the convex contour is a set of
    half-planes. The nearest feasible offset lies at the origin, at the foot of the
    perpendicular to a boundary line, or where two boundary lines cross. Returns a world
    vector, or None when no placement exists.
    """
    env = state.env
    f = env.floor
    a = footprint(state.objs[k], env)
    obstacles = []
    for j, o in enumerate(state.objs):
        if j != k:
            b = footprint(o, env)
            mink = convex_hull_2d((b[:, None, :] - a[None, :, :]).reshape(-1, 2))
            n, c = _outward_lines(mink)
            obstacles.append((n, c + margin))
    wn, wc = _outward_lines(f.contour)
    # a + t inside the contour for every corner: wn . t <= wc - margin - max(wn . a)
    wc = wc - margin - np.max(a @ wn.T, axis=0)

    lines_n = np.vstack([wn] + [n for n, _ in obstacles])
    lines_c = np.concatenate([wc] + [c for _, c in obstacles])
    cands = [np.zeros((1, 2)), lines_n * lines_c[:, None]]
    i, j = np.triu_indices(len(lines_n), 1)
    det = lines_n[i, 0] * lines_n[j, 1] - lines_n[i, 1] * lines_n[j, 0]
    ok = np.abs(det) > 1e-12
    i, j, det = i[ok], j[ok], det[ok]
    x = (lines_c[i] * lines_n[j, 1] - lines_c[j] * lines_n[i, 1]) / det
    y = (lines_n[i, 0] * lines_c[j] - lines_n[j, 0] * lines_c[i]) / det
    cands.append(np.column_stack([x, y]))
    t = np.vstack(cands)

    tol = 1e-9
    feasible = np.all(t @ wn.T <= wc + tol, axis=1)
    for n, c in obstacles:
        feasible &= np.any(t @ n.T >= c - tol, axis=1)
    t = t[feasible]
    if not len(t):
        return None
    norm = np.linalg.norm(t, axis=1)
    best = t[np.lexsort((t[:, 1], t[:, 0], norm))[0]]
    return best[0] * f.f1 + best[1] * f.f2


def _count(state):
    return sum(len(v) for v in find_violations(Layout(state.env, tuple(state.objs))))


def _offenders(state):
    walls, overlaps, floating = find_violations(Layout(state.env, tuple(state.objs)))
    ids = {v.instance_id for v in walls} | {i for i, _ in floating} | {i for p in overlaps for i in p}
    return [k for k, o in enumerate(state.objs) if o.instance_id in ids]


def resolve_layout(layout: Layout, max_rounds=MAX_ROUNDS, margin=MARGIN):
    """Iteratively remove wall penetrations and pairwise overlaps, keeping objects on the floor.

    Each round visits wall violations, then overlapping pairs, in instance id order. A move
    is kept only if it does not add violations, so the violation count never increases
    between rounds. Returns ``(layout, report)``; violations still present when the round
    limit is hit, or when a round can no longer change anything, are listed in
    ``report.residuals``. A clean layout comes back unchanged.
    """
    env = layout.envelope
    state = _State(layout.objects, env)
    report = ResolutionReport()
    for rnd in range(max_rounds + 1):
        current = Layout(env, tuple(state.objs))
        walls, overlaps, floating = find_violations(current)
        report.history.append(len(walls) + len(overlaps) + len(floating))
        if not (walls or overlaps or floating):
            report.rounds = rnd
            return current, report
        if rnd == max_rounds:
            break
        changed = False
        pos = {o.instance_id: k for k, o in enumerate(state.objs)}
        for i, _ in floating:
            k = pos[i]
            changed |= state.try_move({k: state.objs[k]})
        for v in walls:
            k = pos[v.instance_id]
            o = state.objs[k]
            changed |= state.try_move({k: o.moved(_wall_correction(o, env, margin))})
        for ia, ib in overlaps:
            ka, kb = pos[ia], pos[ib]
            if not obb_overlap(state.boxes[ka], state.boxes[kb]):
                continue
            for na, nb in _push_moves(state.objs[ka], state.objs[kb], env, margin):
                if state.try_move({ka: na, kb: nb}):
                    changed = True
                    break
        if _count(state) >= report.history[-1]:
            # no net progress from local pushes: move each offending object to its nearest free spot
            for k in _offenders(state):
                t = free_offset(state, k, margin)
                if t is not None:
                    changed |= state.try_move({k: state.objs[k].moved(t)})
        if not changed:
            report.rounds = rnd + 1
            walls, overlaps, floating = find_violations(Layout(env, tuple(state.objs)))
            break
    else:
        report.rounds = max_rounds
    report.rounds = min(report.rounds or max_rounds, max_rounds)
    report.resolved = False
    report.residuals = _residuals(walls, overlaps, floating)
    return Layout(env, tuple(state.objs)), report


# ---------------------------------------------------------------------------- output

@dataclass
class LayoutExports:
    mesh: TriangleMesh
    groups: list                        # (name, slice of triangles)
    passthrough: PointCloud | None


def finalize_layout(layout: Layout, mode="virtual", keep=None, scene: SegmentedScene | None = None,
                    residuals=(), provenance=None):
    """Build the layout document and exportable geometry.

    ``virtual`` places a model for every object. ``hybrid`` places models only for the
    instance ids in ``keep``; the remaining furniture is passed through as scan points
    (needs ``scene``).
    """
    ids = [o.instance_id for o in layout.objects]
    if mode == "virtual":
        chosen = set(ids)
    elif mode == "hybrid":
        keep = set(int(k) for k in (keep or ()))
        unknown = sorted(keep - set(ids))
        if unknown:
            raise UnknownInstance(unknown[0])
        chosen = keep
    else:
        raise InvalidParameter(f"unknown mode {mode!r}")

    records, meshes, groups, tri = [], [], [], 0
    for o in layout.objects:
        if o.instance_id not in chosen:
            continue
        p = o.placement
        records.append(PlacementRecord(
            instance_id=o.instance_id, model_id=p.model_id, category=o.category,
            scale=tuple(float(s) for s in p.scale), rotation_deg=float(p.rotation_deg),
            translation=tuple(float(t) for t in p.translation), score=float(p.score),
            scale_axis_deg=float(p.scale_axis_deg)))
        if o.mesh is not None:
            m = TriangleMesh(p.apply(o.mesh.vertices), o.mesh.triangles)
            meshes.append(m)
            groups.append((f"instance_{o.instance_id}_{p.model_id}", slice(tri, tri + len(m.triangles))))
            tri += len(m.triangles)

    passthrough_ids = [i for i in ids if i not in chosen]
    passthrough = None
    if passthrough_ids:
        if scene is None:
            raise InvalidParameter("hybrid mode needs the segmented scene for pass-through points")
        idx = np.sort(np.concatenate([scene.instance(i).indices for i in passthrough_ids]))
        passthrough = scene.cloud.subset(idx)

    doc = LayoutDocument(
        envelope=layout.envelope.summary(), placements=records, mode=mode,
        passthrough=passthrough_ids, passthrough_cloud="passthrough.ply" if passthrough_ids else None,
        residuals=list(residuals), provenance=dict(provenance or {}))
    return doc, LayoutExports(TriangleMesh.merge(meshes), groups, passthrough)
