"""Batch pipeline driver.

Every subcommand takes ``--config FILE`` (a JSON object keyed by the long flag names,
dashes or underscores) and explicit flags; flags win over the config, the config wins
over built-in defaults. Each run writes ``run.json`` into its output directory.

Exit codes
----------
0  success
1  unexpected internal error
2  invalid input: unreadable or malformed file, missing path, bad parameter
3  no usable data: empty extraction, empty or degenerate cloud, no valid pixels
4  layout finished with residual constraint violations (outputs are still written)
"""
from __future__ import annotations

import argparse
import json
import platform
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

import roomlayout
from roomlayout import kernels
from roomlayout.errors import (
    DegenerateCloud,
    DimensionMismatch,
    EmptyCloud,
    EmptyVolume,
    InvalidParameter,
    InvalidSpec,
    LayoutError,
    MissingCategory,
    NoValidPixels,
    ParseError,
    TooSmall,
    UnknownCategory,
    UnknownInstance,
)

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_EMPTY, EXIT_RESIDUAL = 0, 1, 2, 3, 4

_INPUT_ERRORS = (ParseError, InvalidParameter, InvalidSpec, MissingCategory, UnknownCategory,
                 UnknownInstance, DimensionMismatch, FileNotFoundError)
_EMPTY_ERRORS = (EmptyVolume, EmptyCloud, DegenerateCloud, NoValidPixels, TooSmall)


class Settings(dict):
    """Resolved parameters; attribute access for readability."""

    __getattr__ = dict.__getitem__


def _load_config(path):
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, p, line=exc.lineno) from exc
    if not isinstance(cfg, dict):
        raise ParseError("config must be a JSON object", p)
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def _resolve(args, defaults):
    cfg = _load_config(args.config)
    unknown = sorted(set(cfg) - set(defaults))
    if unknown:
        raise InvalidParameter(f"unknown config keys: {', '.join(unknown)}")
    out = Settings()
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else cfg.get(key, default)
    return out


def _require_paths(s, *keys):
    for k in keys:
        if s[k] is None:
            raise InvalidParameter(f"--{k.replace('_', '-')} is required")
        if not Path(s[k]).exists():
            raise FileNotFoundError(f"{k.replace('_', '-')} not found: {s[k]}")


def _positive(s, key):
    if s[key] is None or not float(s[key]) > 0:
        raise InvalidParameter(f"--{key.replace('_', '-')} must be > 0 (got {s[key]})")


def _versions():
    import scipy
    return {"roomlayout": roomlayout.__version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "kernels": kernels.BACKEND}


def _input_hashes(paths):
    from roomlayout.sceneio import file_sha256
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_file():
            out[p.as_posix()] = file_sha256(p)
        elif p.is_dir():
            for f in sorted(q for q in p.rglob("*") if q.is_file()):
                out[f.as_posix()] = file_sha256(f)
    return out


def _write_run(out_dir, command, settings, inputs, outputs):
    doc = {"command": command, "parameters": dict(settings), "inputs": _input_hashes(inputs),
           "outputs": sorted(outputs), "seed": settings.get("seed"), "versions": _versions()}
    (Path(out_dir) / "run.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _out_dir(s):
    if s.out is None:
        raise InvalidParameter("--out is required")
    d = Path(s.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load_scene(s):
    from roomlayout.sceneio import read_labels, read_point_cloud
    _require_paths(s, "cloud", "labels")
    return read_labels(s.labels, read_point_cloud(s.cloud))


# ---------------------------------------------------------------------------- subcommands

FUSE_DEFAULTS = {"manifest": None, "voxel": 0.02, "truncation": None, "save_volume": False, "out": None}


def cmd_fuse(args):
    from roomlayout import tsdf
    from roomlayout.sceneio import read_frame_manifest, write_point_cloud
    s = _resolve(args, FUSE_DEFAULTS)
    _positive(s, "voxel")
    if s.truncation is not None:
        _positive(s, "truncation")
    _require_paths(s, "manifest")
    out = _out_dir(s)
    frames = read_frame_manifest(s.manifest)
    volume = tsdf.fuse(frames, float(s.voxel), s.truncation)
    cloud = tsdf.extract_points(volume)
    if len(cloud) == 0:
        raise EmptyVolume("no surface crossings in the fused volume")
    write_point_cloud(cloud, out / "cloud.ply")
    outputs = ["cloud.ply"]
    if s.save_volume:
        volume.save(out / "volume.tsdf")
        outputs.append("volume.tsdf")
    _write_run(out, "fuse", s, [s.manifest] + _manifest_files(s.manifest), outputs)
    print(f"fused {len(frames)} frames -> {len(cloud)} points in {out / 'cloud.ply'}")
    return EXIT_OK


def _manifest_files(manifest):
    base = Path(manifest).parent
    frames = json.loads(Path(manifest).read_text())["frames"]
    return [base / fr[k] for fr in frames for k in ("depth", "color") if fr.get(k)]


ENVELOPE_DEFAULTS = {"cloud": None, "labels": None, "percentile": 95.0,
                     "height_labels": "wall,ceiling", "out": None}


def cmd_envelope(args):
    from roomlayout.envelope import build_envelope
    from roomlayout.sceneio import write_contour
    s = _resolve(args, ENVELOPE_DEFAULTS)
    if not 0 < float(s.percentile) <= 100:
        raise InvalidParameter("--percentile must lie in (0, 100]")
    scene = _load_scene(s)
    out = _out_dir(s)
    env = build_envelope(scene, tuple(_split(s.height_labels)), float(s.percentile))
    summary = env.summary()
    (out / "envelope.json").write_text(json.dumps(asdict(summary), indent=2, sort_keys=True) + "\n")
    write_contour(summary.contour, out / "contour.txt")
    _write_run(out, "envelope", s, [s.cloud, s.labels], ["envelope.json", "contour.txt"])
    print(f"area {summary.area:.4f} m^2  height {summary.height:.4f} m  volume {summary.volume:.4f} m^3")
    return EXIT_OK


REGISTER_DEFAULTS = {"cloud": None, "labels": None, "models": None, "m": 5, "angle_step": 20, "seed": 0,
                     "scale_mode": "anisotropic", "samples": 4096, "method": "both", "out": None}


def _check_registration(s):
    _require_paths(s, "models")
    if int(s.m) < 1:
        raise InvalidParameter("--m must be >= 1")
    if int(s.samples) < 3:
        raise InvalidParameter("--samples must be >= 3")
    if s.scale_mode not in ("anisotropic", "uniform"):
        raise InvalidParameter(f"unknown scale mode {s.scale_mode!r}")


def cmd_register(args):
    from roomlayout.envelope import build_envelope
    from roomlayout.registration import evaluate_scene, format_table
    from roomlayout.sceneio import load_model_database
    s = _resolve(args, REGISTER_DEFAULTS)
    _check_registration(s)
    if s.method not in ("both", "fitted", "baseline"):
        raise InvalidParameter(f"unknown method {s.method!r}")
    scene = _load_scene(s)
    db = load_model_database(s.models)
    out = _out_dir(s)
    env = build_envelope(scene)
    methods = ["baseline", "fitted"] if s.method == "both" else [s.method]
    reports = [evaluate_scene(scene, db, env.floor, m, int(s.m), int(s.seed), int(s.samples),
                              int(s.angle_step), s.scale_mode) for m in methods]
    (out / "report.json").write_text(json.dumps({r.method: r.to_dict() for r in reports},
                                                indent=2, sort_keys=True) + "\n")
    table = format_table(reports, Path(s.cloud).stem)
    (out / "report.txt").write_text(table)
    _write_run(out, "register", s, [s.cloud, s.labels, s.models], ["report.json", "report.txt"])
    print(table, end="")
    return EXIT_OK


LAYOUT_DEFAULTS = dict(REGISTER_DEFAULTS, method="fitted", mode="virtual", keep="", max_rounds=100)


def run_layout(s):
    """End-to-end: envelope, registration, constraints, export. Returns (doc, exports, reports)."""
    from roomlayout.constraints import Layout, PlacedObject, finalize_layout, resolve_layout, snap_to_floor
    from roomlayout.envelope import build_envelope
    from roomlayout.registration import evaluate_scene, load_candidate
    from roomlayout.sceneio import file_sha256, load_model_database
    _check_registration(s)
    if s.mode not in ("virtual", "hybrid"):
        raise InvalidParameter(f"unknown mode {s.mode!r}")
    scene = _load_scene(s)
    db = load_model_database(s.models)
    env = build_envelope(scene)
    args = (int(s.m), int(s.seed), int(s.samples), int(s.angle_step), s.scale_mode)
    fitted = evaluate_scene(scene, db, env.floor, "fitted", *args)
    baseline = evaluate_scene(scene, db, env.floor, "baseline", *args)
    objs = []
    for row in fitted.rows:
        cand = load_candidate(db.entry(row.model_id), int(s.samples), seed=0)
        obj = PlacedObject(row.instance_id, row.category, row.placement, cand.samples, cand.mesh)
        objs.append(snap_to_floor(obj, env))
    layout, report = resolve_layout(Layout(env, tuple(objs)), int(s.max_rounds))
    provenance = {
        "seed": int(s.seed), "m": int(s.m), "angle_step_deg": int(s.angle_step), "scale_mode": s.scale_mode,
        "samples": int(s.samples), "resolution_rounds": report.rounds,
        "inputs": {"cloud": file_sha256(s.cloud), "labels": file_sha256(s.labels)},
        "dist": {"fitted": fitted.to_dict()["mean"], "baseline": baseline.to_dict()["mean"]},
        "skipped": [i for i, _ in fitted.skipped],
    }
    keep = [int(k) for k in _split(s.keep)]
    doc, exports = finalize_layout(layout, s.mode, keep, scene, report.residuals, provenance)
    return doc, exports, (baseline, fitted)


def cmd_layout(args):
    from roomlayout.registration import format_table
    from roomlayout.sceneio import write_layout, write_mesh, write_point_cloud
    s = _resolve(args, LAYOUT_DEFAULTS)
    doc, exports, reports = run_layout(s)
    out = _out_dir(s)
    write_layout(doc, out / "layout.json")
    write_mesh(exports.mesh, out / "scene_models.obj", exports.groups)
    outputs = ["layout.json", "scene_models.obj", "report.txt"]
    if exports.passthrough is not None:
        write_point_cloud(exports.passthrough, out / "passthrough.ply")
        outputs.append("passthrough.ply")
    (out / "report.txt").write_text(format_table(reports, Path(s.cloud).stem))
    _write_run(out, "layout", s, [s.cloud, s.labels, s.models], outputs)
    print(f"{len(doc.placements)} placements, {len(doc.residuals)} residual violations -> {out / 'layout.json'}")
    if doc.residuals:
        for r in doc.residuals:
            print(f"residual {r['kind']}: instances {r['instances']}", file=sys.stderr)
        return EXIT_RESIDUAL
    return EXIT_OK


LOSSES_DEFAULTS = {"est_normals": None, "ren_normals": None, "rendered_depth": None, "captured_depth": None,
                   "depth_scale": 5000.0, "base": None, "lambda_n": 1.0, "lambda_d": 1.5,
                   "as_written": False, "out": None}


def _read_normals(path):
    from roomlayout.losses import NormalMap, decode_normal_rgb
    from roomlayout.sceneio import read_color_png
    p = Path(path)
    if p.suffix == ".npy":
        return NormalMap.from_array(np.load(p))
    return decode_normal_rgb(read_color_png(p))


def _read_depth(path, depth_scale):
    from roomlayout.losses import DepthMap
    from roomlayout.sceneio import read_depth_png
    p = Path(path)
    if p.suffix == ".npy":
        return DepthMap.from_array(np.load(p))
    return DepthMap.from_array(read_depth_png(p, depth_scale))


def cmd_losses(args):
    from roomlayout.losses import LossWeights, combined_loss, depth_loss, normal_loss
    s = _resolve(args, LOSSES_DEFAULTS)
    have_n = s.est_normals is not None or s.ren_normals is not None
    have_d = s.rendered_depth is not None or s.captured_depth is not None
    if not (have_n or have_d):
        raise InvalidParameter("give a normal-map pair and/or a depth-map pair")
    result = {}
    inputs = []
    if have_n:
        _require_paths(s, "est_normals", "ren_normals")
        inputs += [s.est_normals, s.ren_normals]
        result["normal_loss"] = normal_loss(_read_normals(s.est_normals), _read_normals(s.ren_normals),
                                            bool(s.as_written))
    if have_d:
        _require_paths(s, "rendered_depth", "captured_depth")
        inputs += [s.rendered_depth, s.captured_depth]
        scale = float(s.depth_scale)
        result["depth_loss"] = depth_loss(_read_depth(s.rendered_depth, scale),
                                          _read_depth(s.captured_depth, scale))
    if s.base is not None:
        weights = LossWeights(float(s.lambda_n), float(s.lambda_d))
        result["combined_loss"] = combined_loss(s.base, result.get("normal_loss", 0.0),
                                                result.get("depth_loss", 0.0), weights)
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    print(text, end="")
    if s.out is not None:
        out = _out_dir(s)
        (out / "losses.json").write_text(text)
        _write_run(out, "losses", s, inputs, ["losses.json"])
    return EXIT_OK


SYNTH_DEFAULTS = {"spec": None, "models": None, "make_models": 0, "random_furniture": 0, "frames": 0,
                  "seed": 0, "out": None}


def cmd_synth(args):
    from roomlayout import synth
    from roomlayout.sceneio import load_model_database, write_frame_manifest, write_labels, write_point_cloud
    s = _resolve(args, SYNTH_DEFAULTS)
    if int(s.frames) < 0 or int(s.make_models) < 0 or int(s.random_furniture) < 0:
        raise InvalidParameter("counts must be >= 0")
    out = _out_dir(s)
    outputs = []
    db = None
    if int(s.make_models) > 0:
        db = synth.make_model_database(out / "models", per_category=int(s.make_models), seed=int(s.seed))
        outputs.append("models/")
    elif s.models is not None:
        _require_paths(s, "models")
        db = load_model_database(s.models)
    if s.spec is not None:
        _require_paths(s, "spec")
        spec = synth.SceneSpec.load(s.spec)
    elif int(s.random_furniture) > 0:
        if db is None:
            raise InvalidParameter("--random-furniture needs --models or --make-models")
        spec = synth.random_furniture_spec(db, int(s.seed), n_items=int(s.random_furniture))
    else:
        spec = synth.SceneSpec(seed=int(s.seed))
    scene, gt = synth.generate_scene(spec, db)
    write_point_cloud(scene.cloud, out / "scene.ply")
    write_labels(scene, out / "labels.txt")
    (out / "scene_spec.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    (out / "ground_truth.json").write_text(json.dumps(gt.to_dict(), indent=2, sort_keys=True) + "\n")
    outputs += ["scene.ply", "labels.txt", "scene_spec.json", "ground_truth.json"]
    if int(s.frames) > 0:
        frames = synth.render_depth_sequence(spec, synth.orbit_camera_path(spec, int(s.frames)))
        write_frame_manifest(frames, out / "frames")
        outputs.append("frames/")
    _write_run(out, "synth", s, [p for p in (s.spec, s.models) if p is not None], outputs)
    print(f"wrote {len(scene.cloud)} points, {len(scene.instances)} instances to {out}")
    return EXIT_OK


def _split(value):
    if isinstance(value, (list, tuple)):
        return [str(v) for v in value]
    return [v.strip() for v in str(value or "").split(",") if v.strip()]


# ---------------------------------------------------------------------------- parser

def _registration_flags(p):
    p.add_argument("--cloud", help="labeled point cloud (PLY)")
    p.add_argument("--labels", help="per-point label file")
    p.add_argument("--models", help="model database root (holds index.json)")
    p.add_argument("--m", type=int, help="candidate models per instance (default 5)")
    p.add_argument("--angle-step", type=int, help="rotation sweep step in degrees, divides 360 (default 20)")
    p.add_argument("--seed", type=int, help="retrieval seed (default 0)")
    p.add_argument("--scale-mode", choices=("anisotropic", "uniform"), help="default anisotropic")
    p.add_argument("--samples", type=int, help="surface samples per model (default 4096)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="roomlayout", description="Room envelopes and furniture layouts from RGB-D and labeled point clouds.",
        epilog="exit codes: 0 ok, 1 internal error, 2 invalid input, 3 no usable data, 4 residual violations",
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="JSON file of defaults; explicit flags override it")
        p.add_argument("--out", help="output directory")
        return p

    p = add("fuse", "Fuse depth frames into a TSDF volume and extract a surface point cloud.")
    p.add_argument("--manifest", help="frame manifest (JSON)")
    p.add_argument("--voxel", type=float, help="voxel edge in meters (default 0.02)")
    p.add_argument("--truncation", type=float, help="truncation distance in meters (default 5 voxels)")
    p.add_argument("--save-volume", action="store_true", default=None, help="also write volume.tsdf")
    p.set_defaults(func=cmd_fuse)

    p = add("envelope", "Estimate floor frame, contour, height, area and volume.")
    p.add_argument("--cloud", help="labeled point cloud (PLY)")
    p.add_argument("--labels", help="per-point label file")
    p.add_argument("--percentile", type=float, help="height percentile (default 95)")
    p.add_argument("--height-labels", help="comma-separated labels used for the height (default wall,ceiling)")
    p.set_defaults(func=cmd_envelope)

    p = add("register", "Place catalog models on every furniture instance and report chamfer scores.")
    _registration_flags(p)
    p.add_argument("--method", choices=("both", "fitted", "baseline"), help="default both")
    p.set_defaults(func=cmd_register)

    p = add("layout", "End-to-end layout: envelope, placement, constraint resolution, export.")
    _registration_flags(p)
    p.add_argument("--mode", choices=("virtual", "hybrid"), help="default virtual")
    p.add_argument("--keep", help="hybrid mode: comma-separated instance ids to replace with models")
    p.add_argument("--max-rounds", type=int, help="constraint resolution rounds (default 100)")
    p.set_defaults(func=cmd_layout)

    p = add("losses", "Evaluate normal-derivative and depth losses on image buffers (PNG or .npy).")
    p.add_argument("--est-normals", help="estimated normal map")
    p.add_argument("--ren-normals", help="rendered normal map")
    p.add_argument("--rendered-depth", help="rendered depth map")
    p.add_argument("--captured-depth", help="captured depth map")
    p.add_argument("--depth-scale", type=float, help="PNG depth units per meter (default 5000)")
    p.add_argument("--base", type=float, help="base reconstruction loss; enables the combined value")
    p.add_argument("--lambda-n", type=float, help="normal loss weight (default 1)")
    p.add_argument("--lambda-d", type=float, help="depth loss weight (default 1.5)")
    p.add_argument("--as-written", action="store_true", default=None, help="report 1 - mean L1 for normals")
    p.set_defaults(func=cmd_losses)

    p = add("synth", "Generate a synthetic labeled room, optional depth frames and model database.")
    p.add_argument("--spec", help="scene spec (JSON); default is an empty 4 x 3 x 2.5 m room")
    p.add_argument("--models", help="existing model database for furniture")
    p.add_argument("--make-models", type=int, help="generate N procedural models per category into OUT/models")
    p.add_argument("--random-furniture", type=int, help="place N random database models (no --spec)")
    p.add_argument("--frames", type=int, help="render N depth frames into OUT/frames")
    p.add_argument("--seed", type=int, help="generator seed (default 0)")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except _EMPTY_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except LayoutError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - last-resort handler for the exit-code contract
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
