"""Readers and writers for every on-disk artifact.

Formats
-------
PLY point clouds
    ``ascii`` or ``binary_little_endian`` (big endian is read too). Vertex properties
    ``x y z`` are required, ``red green blue`` (uchar) are optional; anything else is skipped.
OBJ meshes
    ``v`` and ``f`` (``i``, ``i/j``, ``i//k``, ``i/j/k``, negative indices); polygons are
    fan-triangulated. ``vt vn o g s usemtl mtllib`` are accepted and ignored.
Frame manifest (JSON)
    ``{"depth_scale": 5000, "frames": [{"depth": "d/0.png", "color": "c/0.png",
    "intrinsics": [fx, fy, cx, cy], "pose": {"translation": [..], "quaternion": [qx, qy, qz, qw]}}]}``.
    ``pose`` may instead be ``{"matrix": 4x4}``. Poses are camera-to-world; the camera looks
    along +z with +x right and +y down. Paths are relative to the manifest.
Label file (text)
    One ``point_index instance_id category`` triple per line, ``#`` comments.
Model database
    ``<root>/index.json`` with ``{"models": [{"id", "category", "mesh", "up"}]}``;
    ``mesh`` is relative to the root, ``up`` is ``"z"`` (default) or ``"y"``.
Layout document (JSON)
    See :class:`LayoutDocument`; written with sorted keys so runs diff cleanly.
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from roomlayout.errors import (
    DuplicateAssignment,
    IndexOutOfRange,
    InvalidParameter,
    MissingFile,
    NonNormalizedQuaternion,
    ParseError,
    UnknownInstance,
    UnsupportedFeature,
)
from roomlayout.geometry import PointCloud, RigidTransform, matrix_to_quaternion
from roomlayout.mesh import TriangleMesh

DEFAULT_DEPTH_SCALE = 5000.0

# ---------------------------------------------------------------------------- PLY

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _require(path):
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such file: {path}")
    return path


def _parse_ply_header(raw, path):
    if not raw.startswith(b"ply"):
        raise ParseError("not a PLY file (missing 'ply' magic)", path, line=1)
    end = raw.find(b"end_header")
    if end < 0:
        raise ParseError("header has no 'end_header'", path)
    nl = raw.find(b"\n", end)
    body_offset = len(raw) if nl < 0 else nl + 1
    fmt = None
    elements = []
    for lineno, line in enumerate(raw[:end].decode("ascii", "replace").splitlines(), start=1):
        tok = line.split()
        if not tok or tok[0] in ("ply", "comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] not in ("ascii", "binary_little_endian", "binary_big_endian"):
                raise ParseError(f"unsupported format line {line.strip()!r}", path, line=lineno)
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise ParseError(f"malformed element declaration {line.strip()!r}", path, line=lineno)
            elements.append({"name": tok[1], "count": int(tok[2]), "props": []})
        elif tok[0] == "property":
            if not elements:
                raise ParseError(f"property before any element: {line.strip()!r}", path, line=lineno)
            el = elements[-1]
            if len(tok) == 5 and tok[1] == "list":
                if tok[2] not in _PLY_TYPES or tok[3] not in _PLY_TYPES:
                    raise ParseError(f"unknown list type in element {el['name']!r}: {line.strip()!r}",
                                     path, line=lineno)
                el["props"].append((tok[4], "list", _PLY_TYPES[tok[2]], _PLY_TYPES[tok[3]]))
            elif len(tok) == 3 and tok[1] in _PLY_TYPES:
                el["props"].append((tok[2], _PLY_TYPES[tok[1]]))
            else:
                raise ParseError(f"bad property in element {el['name']!r}: {line.strip()!r}",
                                 path, line=lineno)
        else:
            raise ParseError(f"unknown header keyword {tok[0]!r}", path, line=lineno)
    if fmt is None:
        raise ParseError("header has no format line", path)
    return fmt, elements, body_offset


def read_point_cloud(path) -> PointCloud:
    path = _require(path)
    raw = path.read_bytes()
    fmt, elements, offset = _parse_ply_header(raw, path)
    vertex = next((e for e in elements if e["name"] == "vertex"), None)
    if vertex is None:
        raise ParseError("no 'vertex' element", path)
    names = [p[0] for p in vertex["props"]]
    for axis in "xyz":
        if axis not in names:
            raise ParseError(f"element 'vertex' lacks property {axis!r}", path)
    if any(len(p) > 2 for p in vertex["props"]):
        raise ParseError("list properties in element 'vertex' are not supported", path)

    if fmt == "ascii":
        lines = raw[offset:].decode("ascii", "replace").splitlines()
        header_lines = raw[:offset].count(b"\n")
        # skip elements declared before 'vertex'
        start = 0
        for e in elements:
            if e is vertex:
                break
            start += e["count"]
        rows = []
        for i in range(vertex["count"]):
            k = start + i
            if k >= len(lines):
                raise ParseError(f"expected {vertex['count']} vertices, file ends after {i}",
                                 path, line=header_lines + k + 1)
            tok = lines[k].split()
            if len(tok) < len(names):
                raise ParseError(f"vertex row has {len(tok)} values, expected {len(names)}",
                                 path, line=header_lines + k + 1)
            try:
                rows.append([float(t) for t in tok[:len(names)]])
            except ValueError as exc:
                raise ParseError(f"bad number in vertex row: {exc}", path, line=header_lines + k + 1)
        data = np.array(rows, dtype=np.float64).reshape(-1, len(names))
        cols = {n: data[:, i] for i, n in enumerate(names)}
        types = {p[0]: p[1] for p in vertex["props"]}
    else:
        endian = "<" if fmt == "binary_little_endian" else ">"
        pos = offset
        for e in elements:
            if e is vertex:
                break
            if any(len(p) > 2 for p in e["props"]):
                raise ParseError(f"cannot skip list element {e['name']!r} preceding 'vertex'", path)
            pos += e["count"] * np.dtype([(p[0], endian + p[1]) for p in e["props"]]).itemsize
        dtype = np.dtype([(p[0], endian + p[1]) for p in vertex["props"]])
        need = pos + vertex["count"] * dtype.itemsize
        if need > len(raw):
            raise ParseError(f"binary vertex data truncated: need {need} bytes, have {len(raw)}",
                             path, offset=len(raw))
        arr = np.frombuffer(raw, dtype=dtype, count=vertex["count"], offset=pos)
        cols = {n: arr[n].astype(np.float64) for n in names}
        types = {p[0]: p[1] for p in vertex["props"]}

    pts = np.column_stack([cols["x"], cols["y"], cols["z"]])
    colors = None
    if all(c in cols for c in ("red", "green", "blue")):
        rgb = np.column_stack([cols["red"], cols["green"], cols["blue"]])
        colors = rgb / 255.0 if types["red"] == "u1" else rgb
    try:
        return PointCloud(pts, colors)
    except InvalidParameter as exc:
        raise ParseError(str(exc), path) from exc


def write_point_cloud(cloud: PointCloud, path, binary=True):
    path = Path(path)
    n = len(cloud)
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
              f"element vertex {n}", "property double x", "property double y", "property double z"]
    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    if cloud.colors is not None:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    header.append("end_header")
    arr = np.empty(n, dtype=fields)
    arr["x"], arr["y"], arr["z"] = cloud.points.T
    if cloud.colors is not None:
        rgb = np.rint(np.clip(cloud.colors, 0.0, 1.0) * 255).astype(np.uint8)
        arr["red"], arr["green"], arr["blue"] = rgb.T
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(arr.tobytes())
        else:
            for row in arr:
                vals = [repr(float(row["x"])), repr(float(row["y"])), repr(float(row["z"]))]
                if cloud.colors is not None:
                    vals += [str(int(row["red"])), str(int(row["green"])), str(int(row["blue"]))]
                fh.write((" ".join(vals) + "\n").encode("ascii"))


# ---------------------------------------------------------------------------- OBJ

_OBJ_IGNORED = {"vt", "vn", "vp", "o", "g", "s", "usemtl", "mtllib"}


def read_mesh(path) -> TriangleMesh:
    path = _require(path)
    verts, tris = [], []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            key = tok[0]
            if key == "v":
                if len(tok) < 4:
                    raise ParseError("vertex needs 3 coordinates", path, line=lineno)
                try:
                    verts.append([float(t) for t in tok[1:4]])
                except ValueError as exc:
                    raise ParseError(f"bad vertex coordinate: {exc}", path, line=lineno)
            elif key == "f":
                if len(tok) < 4:
                    raise ParseError("face needs at least 3 vertices", path, line=lineno)
                idx = []
                for t in tok[1:]:
                    try:
                        i = int(t.split("/")[0])
                    except ValueError:
                        raise ParseError(f"bad face index {t!r}", path, line=lineno)
                    i = i - 1 if i > 0 else len(verts) + i
                    if i < 0 or i >= len(verts):
                        raise ParseError(f"face index {t!r} out of range", path, line=lineno)
                    idx.append(i)
                for k in range(1, len(idx) - 1):
                    tris.append((idx[0], idx[k], idx[k + 1]))
            elif key in _OBJ_IGNORED:
                continue
            else:
                warnings.warn(f"{path}:{lineno}: unsupported OBJ directive {key!r} skipped",
                              UnsupportedFeature, stacklevel=2)
    return TriangleMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                        np.array(tris, dtype=np.int64).reshape(-1, 3))


def write_mesh(mesh: TriangleMesh, path, groups=None):
    """Write an OBJ. ``groups`` optionally maps a name to a triangle slice for ``g`` lines."""
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    if groups:
        for name, sl in groups:
            lines.append(f"g {name}")
            lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles[sl].tolist()]
    else:
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------- depth frames

@dataclass(frozen=True, eq=False)
class DepthFrame:
    depth: np.ndarray                      # H x W meters, 0 = invalid
    intrinsics: tuple                      # fx, fy, cx, cy (pixels)
    pose: RigidTransform                   # camera to world
    color: np.ndarray | None = None        # H x W x 3 in [0, 1]

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=np.float64)
        if d.ndim != 2 or min(d.shape) < 1:
            raise InvalidParameter("depth must be a non-empty H x W array")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise InvalidParameter("depths must be finite and >= 0")
        fx, fy, cx, cy = (float(v) for v in self.intrinsics)
        if fx <= 0 or fy <= 0:
            raise InvalidParameter("focal lengths must be positive")
        object.__setattr__(self, "depth", d)
        object.__setattr__(self, "intrinsics", (fx, fy, cx, cy))
        if self.color is not None:
            c = np.asarray(self.color, dtype=np.float64)
            if c.shape != d.shape + (3,):
                raise InvalidParameter("color must be H x W x 3 matching depth")
            object.__setattr__(self, "color", c)

    def back_project(self) -> PointCloud:
        """World-space points of every valid pixel: pose * ((u-cx)d/fx, (v-cy)d/fy, d)."""
        fx, fy, cx, cy = self.intrinsics
        v, u = np.nonzero(self.depth > 0)
        d = self.depth[v, u]
        cam = np.column_stack([(u - cx) * d / fx, (v - cy) * d / fy, d])
        colors = None if self.color is None else self.color[v, u]
        return PointCloud(self.pose.apply(cam), colors)


def read_depth_png(path, depth_scale=DEFAULT_DEPTH_SCALE) -> np.ndarray:
    path = _require(path)
    try:
        with Image.open(path) as im:
            raw = np.array(im)
    except OSError as exc:
        raise ParseError(f"cannot decode depth image: {exc}", path) from exc
    if raw.ndim != 2:
        raise ParseError("depth image must be single-channel 16-bit", path)
    return raw.astype(np.float64) / float(depth_scale)


def write_depth_png(depth, path, depth_scale=DEFAULT_DEPTH_SCALE):
    raw = np.rint(np.asarray(depth, dtype=np.float64) * depth_scale)
    if raw.max(initial=0) > 65535:
        raise InvalidParameter("depth exceeds 16-bit range at this depth scale")
    Image.fromarray(raw.astype(np.uint16)).save(path)


def read_color_png(path) -> np.ndarray:
    with Image.open(_require(path)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def _pose_from_json(obj, path, where):
    if "matrix" in obj:
        m = np.asarray(obj["matrix"], dtype=np.float64)
        if m.shape != (4, 4):
            raise ParseError(f"{where}: pose matrix must be 4x4", path)
        try:
            return RigidTransform.from_matrix(m)
        except InvalidParameter as exc:
            raise ParseError(f"{where}: {exc}", path) from exc
    try:
        q = np.asarray(obj["quaternion"], dtype=np.float64)
        t = np.asarray(obj["translation"], dtype=np.float64)
    except KeyError as exc:
        raise ParseError(f"{where}: pose needs 'matrix' or 'quaternion' + 'translation'", path) from exc
    if q.shape != (4,) or t.shape != (3,):
        raise ParseError(f"{where}: quaternion needs 4 values, translation 3", path)
    norm = np.linalg.norm(q)
    if norm == 0:
        raise ParseError(f"{where}: zero quaternion", path)
    if abs(norm - 1.0) > 1e-3:
        warnings.warn(f"{path}: {where}: quaternion norm {norm:.6f} renormalized",
                      NonNormalizedQuaternion, stacklevel=3)
    return RigidTransform.from_quaternion(q / norm, t)


def read_frame_manifest(path, load_color=True) -> list[DepthFrame]:
    path = _require(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, line=exc.lineno) from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("frames"), list):
        raise ParseError("manifest must be an object with a 'frames' list", path)
    base = path.parent
    default_scale = float(doc.get("depth_scale", DEFAULT_DEPTH_SCALE))
    frames = []
    for i, fr in enumerate(doc["frames"]):
        where = f"frame {i}"
        try:
            intr = [float(v) for v in fr["intrinsics"]]
            depth_rel = fr["depth"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{where}: needs 'depth' and 4 'intrinsics'", path) from exc
        if len(intr) != 4:
            raise ParseError(f"{where}: intrinsics must be [fx, fy, cx, cy]", path)
        pose = _pose_from_json(fr.get("pose", {}), path, where)
        depth = read_depth_png(base / depth_rel, float(fr.get("depth_scale", default_scale)))
        color = None
        if load_color and fr.get("color"):
            color = read_color_png(base / fr["color"])
        try:
            frames.append(DepthFrame(depth, tuple(intr), pose, color))
        except InvalidParameter as exc:
            raise ParseError(f"{where}: {exc}", path) from exc
    return frames


def write_frame_manifest(frames, directory, depth_scale=DEFAULT_DEPTH_SCALE, name="frames.json"):
    """Writes depth (and color) PNGs under ``directory`` and returns the manifest path."""
    directory = Path(directory)
    (directory / "depth").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, fr in enumerate(frames):
        rel = f"depth/{i:06d}.png"
        write_depth_png(fr.depth, directory / rel, depth_scale)
        entry = {
            "depth": rel,
            "intrinsics": list(fr.intrinsics),
            "pose": {"translation": fr.pose.translation.tolist(),
                     "quaternion": matrix_to_quaternion(fr.pose.rotation).tolist()},
        }
        if fr.color is not None:
            (directory / "color").mkdir(exist_ok=True)
            crel = f"color/{i:06d}.png"
            Image.fromarray(np.rint(np.clip(fr.color, 0, 1) * 255).astype(np.uint8)).save(directory / crel)
            entry["color"] = crel
        entries.append(entry)
    out = directory / name
    out.write_text(json.dumps({"depth_scale": depth_scale, "frames": entries}, indent=2) + "\n")
    return out


# ---------------------------------------------------------------------------- segmentation

@dataclass(frozen=True, eq=False)
class Instance:
    id: int
    label: str
    indices: np.ndarray


@dataclass(frozen=True, eq=False)
class SegmentedScene:
    cloud: PointCloud
    instances: tuple

    def __post_init__(self):
        n = len(self.cloud)
        seen = np.zeros(n, dtype=bool)
        insts = []
        for inst in self.instances:
            idx = np.asarray(inst.indices, dtype=np.intp)
            if len(idx) and (idx.min() < 0 or idx.max() >= n):
                raise IndexOutOfRange(f"instance {inst.id} references a point outside the cloud")
            if np.any(seen[idx]) or len(np.unique(idx)) != len(idx):
                raise InvalidParameter(f"instance {inst.id} overlaps another instance")
            seen[idx] = True
            insts.append(Instance(int(inst.id), str(inst.label), idx))
        object.__setattr__(self, "instances", tuple(insts))

    def with_label(self, label):
        return [i for i in self.instances if i.label == label]

    def labels(self):
        return sorted({i.label for i in self.instances})

    def instance(self, inst_id):
        for i in self.instances:
            if i.id == inst_id:
                return i
        raise UnknownInstance(inst_id)

    def points_of(self, inst: Instance) -> PointCloud:
        return self.cloud.subset(inst.indices)

    def merged(self, labels) -> PointCloud:
        labels = {labels} if isinstance(labels, str) else set(labels)
        idx = [i.indices for i in self.instances if i.label in labels]
        if not idx:
            return PointCloud(np.zeros((0, 3)))
        return self.cloud.subset(np.sort(np.concatenate(idx)))


def read_labels(path, cloud: PointCloud) -> SegmentedScene:
    path = _require(path)
    owner = {}
    label_of = {}
    order = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if len(tok) != 3:
                raise ParseError("expected 'point_index instance_id category'", path, line=lineno)
            try:
                p, inst = int(tok[0]), int(tok[1])
            except ValueError:
                raise ParseError("point index and instance id must be integers", path, line=lineno)
            if p < 0 or p >= len(cloud):
                raise IndexOutOfRange(f"{path}:{lineno}: point {p} outside cloud of {len(cloud)} points")
            if inst in label_of and label_of[inst] != tok[2]:
                raise ParseError(f"instance {inst} labeled both {label_of[inst]!r} and {tok[2]!r}",
                                 path, line=lineno)
            if p in owner:
                warnings.warn(f"{path}:{lineno}: point {p} already assigned; keeping first",
                              DuplicateAssignment, stacklevel=2)
                continue
            if inst not in label_of:
                label_of[inst] = tok[2]
                order.append(inst)
            owner[p] = inst
    members = {i: [] for i in order}
    for p, inst in owner.items():
        members[inst].append(p)
    instances = [Instance(i, label_of[i], np.array(sorted(members[i]), dtype=np.intp)) for i in sorted(order)]
    return SegmentedScene(cloud, tuple(instances))


def write_labels(scene: SegmentedScene, path):
    rows = []
    for inst in scene.instances:
        rows += [(int(p), inst.id, inst.label) for p in inst.indices]
    rows.sort()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# point_index instance_id category\n")
        fh.writelines(f"{p} {i} {lab}\n" for p, i, lab in rows)


# ---------------------------------------------------------------------------- model database

@dataclass(frozen=True)
class ModelEntry:
    id: str
    category: str
    mesh_path: Path
    up: str = "z"


@dataclass(frozen=True)
class ModelDatabase:
    root: Path
    entries: tuple

    def categories(self):
        return sorted({e.category for e in self.entries})

    def by_category(self, category):
        return [e for e in self.entries if e.category == category]

    def entry(self, model_id):
        for e in self.entries:
            if e.id == model_id:
                return e
        raise KeyError(model_id)


def load_model_database(root) -> ModelDatabase:
    root = Path(root)
    index = _require(root / "index.json")
    try:
        doc = json.loads(index.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, index, line=exc.lineno) from exc
    entries, ids = [], set()
    for i, m in enumerate(doc.get("models", [])):
        try:
            mid, cat, rel = str(m["id"]), str(m["category"]), m["mesh"]
        except KeyError as exc:
            raise ParseError(f"model {i} lacks {exc.args[0]!r}", index) from exc
        if not cat:
            raise ParseError(f"model {mid!r} has an empty category", index)
        if mid in ids:
            raise ParseError(f"duplicate model id {mid!r}", index)
        up = m.get("up", "z")
        if up not in ("y", "z"):
            raise ParseError(f"model {mid!r}: 'up' must be 'y' or 'z'", index)
        ids.add(mid)
        entries.append(ModelEntry(mid, cat, _require(root / rel), up))
    return ModelDatabase(root, tuple(entries))


def write_model_index(root, entries):
    root = Path(root)
    models = [{"id": e.id, "category": e.category, "up": e.up,
               "mesh": Path(e.mesh_path).relative_to(root).as_posix()} for e in entries]
    (root / "index.json").write_text(json.dumps({"models": models}, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------- layout document

def _vec(v):
    return tuple(float(x) for x in v)


@dataclass
class EnvelopeSummary:
    contour: list
    area: float
    height: float
    volume: float
    dims: tuple = (0.0, 0.0)
    origin: tuple = (0.0, 0.0, 0.0)
    f1: tuple = (1.0, 0.0, 0.0)
    f2: tuple = (0.0, 1.0, 0.0)
    fn: tuple = (0.0, 0.0, 1.0)


@dataclass
class PlacementRecord:
    instance_id: int
    model_id: str
    category: str
    scale: tuple
    rotation_deg: float
    translation: tuple
    score: float
    scale_axis_deg: float = 0.0


@dataclass
class LayoutDocument:
    envelope: EnvelopeSummary
    placements: list = field(default_factory=list)
    mode: str = "virtual"
    passthrough: list = field(default_factory=list)
    passthrough_cloud: str | None = None
    residuals: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for p in self.placements:
            if not 0.0 <= p.rotation_deg < 360.0:
                raise InvalidParameter(f"rotation {p.rotation_deg} outside [0, 360)")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        env = d["envelope"]
        envelope = EnvelopeSummary(
            contour=[_vec(p) for p in env["contour"]], area=float(env["area"]),
            height=float(env["height"]), volume=float(env["volume"]), dims=_vec(env["dims"]),
            origin=_vec(env["origin"]), f1=_vec(env["f1"]), f2=_vec(env["f2"]), fn=_vec(env["fn"]))
        placements = [PlacementRecord(
            instance_id=int(p["instance_id"]), model_id=str(p["model_id"]), category=str(p["category"]),
            scale=_vec(p["scale"]), rotation_deg=float(p["rotation_deg"]),
            translation=_vec(p["translation"]), score=float(p["score"]),
            scale_axis_deg=float(p.get("scale_axis_deg", 0.0))) for p in d.get("placements", [])]
        return cls(envelope, placements, d.get("mode", "virtual"), [int(i) for i in d.get("passthrough", [])],
                   d.get("passthrough_cloud"), list(d.get("residuals", [])), dict(d.get("provenance", {})))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if not math.isfinite(f):
            raise InvalidParameter("layout values must be finite")
        return f
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, Path):
        return obj.as_posix()
    return obj


def dumps_layout(doc: LayoutDocument) -> str:
    return json.dumps(_jsonable(doc.to_dict()), indent=2, sort_keys=True) + "\n"


def write_layout(doc: LayoutDocument, path):
    Path(path).write_text(dumps_layout(doc))


def read_layout(path) -> LayoutDocument:
    path = _require(path)
    try:
        return LayoutDocument.from_dict(json.loads(path.read_text()))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, line=exc.lineno) from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed layout document: {exc}", path) from exc


def write_contour(contour, path):
    """Closed 2-D polygon as ``x y`` rows (first vertex repeated at the end)."""
    pts = np.asarray(contour, dtype=np.float64)
    rows = [f"{x!r} {y!r}" for x, y in np.vstack([pts, pts[:1]]).tolist()]
    Path(path).write_text("# x y (floor frame, meters)\n" + "\n".join(rows) + "\n")


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
