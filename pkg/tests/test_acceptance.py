"""Acceptance gate: each test checks one criterion and records a PASS/FAIL line.

The lines are printed in the pytest terminal summary under "acceptance criteria".
"""
import json
import time
from types import SimpleNamespace

import numpy as np
import pytest

from roomlayout import constraints as C
from roomlayout import envelope, kernels, registration, synth, tsdf
from roomlayout.cli import main
from roomlayout.geometry import NnIndex, RigidTransform, chamfer_distance, rot_z, rotation_about
from roomlayout.losses import DepthMap, NormalMap, combined_loss, depth_loss, depth_loss_grad, normal_loss
from roomlayout.mesh import TriangleMesh, sample_surface

from conftest import ACCEPTANCE
from oracles import brute_chamfer, central_difference


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def suite_db(tmp_path_factory):
    return synth.make_model_database(tmp_path_factory.mktemp("suite_models"), per_category=4, seed=0)


# ---------------------------------------------------------------------------- 1. placement trend

def test_fitted_placement_beats_baseline(suite_db):
    t0 = time.perf_counter()
    fitted, base = [], []
    for seed in range(20):
        spec = synth.random_furniture_spec(suite_db, seed, n_items=3, noise_sigma=0.01, scale_range=(0.7, 1.4))
        scene, _ = synth.generate_scene(spec, suite_db)
        floor = envelope.build_envelope(scene).floor
        f = registration.evaluate_scene(scene, suite_db, floor, "fitted", seed=seed)
        b = registration.evaluate_scene(scene, suite_db, floor, "baseline", seed=seed)
        assert [r.instance_id for r in f.rows] == [r.instance_id for r in b.rows]
        fitted += [r.score for r in f.rows]
        base += [r.score for r in b.rows]
    elapsed = time.perf_counter() - t0
    fitted, base = np.array(fitted), np.array(base)
    wins = float(np.mean(fitted < base))
    factor = base.mean() / fitted.mean()
    ok = wins >= 0.95 and factor >= 2.0 and elapsed < 120.0
    record(1, ok, f"{len(fitted)} instances, fitted better on {wins:.0%}, mean Dist {fitted.mean():.4f} vs "
                  f"{base.mean():.4f} ({factor:.1f}x), {elapsed:.0f} s with {kernels.BACKEND} kernels")


# ---------------------------------------------------------------------------- 2. rotation recovery

def _surface_centroid(mesh):
    area = mesh.triangle_areas()
    return (area[:, None] * mesh.vertices[mesh.triangles].mean(axis=1)).sum(axis=0) / area.sum()


def _rotation_symmetric(mesh, delta_deg, rng, n=3000):
    """Is the surface invariant under a rotation by ``delta_deg`` about its upright centroid axis?

    Compares the chamfer between a sampling and its rotated copy with the chamfer between
    two independent samplings of the same surface.
    """
    c = _surface_centroid(mesh)
    a = sample_surface(mesh, n, rng) - c
    b = sample_surface(mesh, n, rng) - c
    floor = chamfer_distance(a, b)
    return chamfer_distance(a, a @ rot_z(delta_deg).T) <= 1.5 * floor


def test_rotation_recovery(suite_db):
    rng = np.random.default_rng(2024)
    floor = SimpleNamespace(basis=np.eye(3))
    exact, symmetric, failed = 0, 0, []
    for _ in range(100):
        entry = suite_db.entries[rng.integers(len(suite_db.entries))]
        cand = registration.load_candidate(entry)
        theta = 20 * int(rng.integers(18))
        scale = rng.uniform(0.7, 1.4, 3)
        mesh = registration.canonical_mesh(entry)
        scaled = TriangleMesh(mesh.vertices * scale, mesh.triangles)
        placed = TriangleMesh(scaled.vertices @ rot_z(theta).T + rng.uniform(-3, 3, 3) * [1, 1, 0],
                              scaled.triangles)
        target = sample_surface(placed, 3000, rng) + rng.normal(0, 0.005, (3000, 3))
        sw = registration.sweep_scores(target, cand, floor)
        got = int(sw.angles[sw.best])
        if got == theta:
            exact += 1
            continue
        # near-tied scores flag a symmetry candidate; the model geometry must confirm it
        tied = sw.scores[list(sw.angles).index(theta)] <= 1.25 * sw.scores[sw.best]
        if tied and _rotation_symmetric(scaled, got - theta, rng):
            symmetric += 1
        else:
            failed.append((entry.id, theta, got))
    ok = exact + symmetric == 100
    record(2, ok, f"{exact} exact, {symmetric} symmetry-equivalent, {len(failed)} wrong {failed[:3]}")


# ---------------------------------------------------------------------------- 3. envelope accuracy

def test_envelope_accuracy():
    spec = synth.SceneSpec(dims=(4.0, 3.0, 2.5), noise_sigma=0.01, outlier_fraction=0.02,
                           points_per_surface=5000, seed=11)
    env = envelope.build_envelope(synth.generate_scene(spec)[0])
    err_a, err_h, err_v = abs(env.floor.area / 12 - 1), abs(env.height / 2.5 - 1), abs(env.volume / 30 - 1)
    noisy_ok = err_a <= 0.03 and err_h <= 0.02 and err_v <= 0.05

    exact_err = 0.0
    poses = [RigidTransform.identity(),
             RigidTransform(rotation_about([0.3, -0.2, 1.0], 1.1) @ rotation_about([1, 0, 0], 0.4),
                            np.array([3.0, -7.0, 1.5]))]
    for pose in poses:
        clean = envelope.build_envelope(synth.generate_scene(
            synth.SceneSpec(dims=(4.0, 3.0, 2.5), pose=pose, points_per_surface=5000, seed=12))[0])
        exact_err = max(exact_err, abs(clean.floor.area / 12 - 1), abs(clean.height / 2.5 - 1),
                        abs(clean.volume / 30 - 1))
    ok = noisy_ok and exact_err < 1e-6
    record(3, ok, f"noisy relative errors area {err_a:.2%} height {err_h:.2%} volume {err_v:.2%}; "
                  f"noiseless max relative error {exact_err:.1e}")


# ---------------------------------------------------------------------------- 4. TSDF fidelity

def test_tsdf_fidelity():
    spec = synth.SceneSpec(dims=(4.0, 3.0, 2.5))
    frames = synth.render_depth_sequence(spec, synth.orbit_camera_path(spec, 20))
    cloud = tsdf.extract_points(tsdf.fuse(frames, voxel_size=0.02))
    d = synth.box_room_distance(cloud.points, spec.dims)
    rms, p95 = float(np.sqrt(np.mean(d ** 2))), float(np.percentile(d, 95))
    ok = len(d) > 0 and rms < 0.02 and p95 < 0.03
    record(4, ok, f"{len(d)} points, RMS {rms * 100:.2f} cm, p95 {p95 * 100:.2f} cm")


# ---------------------------------------------------------------------------- 5. chamfer oracle

_CHAMFER_WORST = {}


def test_chamfer_matches_brute_force(backend, monkeypatch):
    monkeypatch.setattr(kernels, "KdTree", backend.KdTree)
    rng = np.random.default_rng(5)
    worst = 0.0
    for k in range(200):
        n, m = rng.integers(1, 501, 2)
        a = rng.normal(size=(n, 3)) * rng.uniform(0.01, 10)
        b = rng.normal(size=(m, 3)) * rng.uniform(0.01, 10) + rng.normal(size=3)
        if k % 4 == 0:  # coarse grid: exact distance ties
            a, b = np.round(a, 1), np.round(b, 1)
        got = chamfer_distance(a, NnIndex(b))
        worst = max(worst, abs(got - brute_chamfer(a, b)))
    _CHAMFER_WORST["cython" if backend is kernels.compiled_backend else "python"] = worst
    record(5, all(v <= 1e-12 for v in _CHAMFER_WORST.values()),
           "200 pairs per backend, max |accelerated - brute| " +
           ", ".join(f"{k} {v:.1e}" for k, v in sorted(_CHAMFER_WORST.items())))


# ---------------------------------------------------------------------------- 6. loss evaluators

def test_loss_evaluators():
    rng = np.random.default_rng(6)
    n = rng.normal(size=(12, 9, 3))
    nmap = NormalMap.from_array(n)
    d = DepthMap.from_array(rng.uniform(0.5, 4.0, (12, 9)))
    zero_ok = depth_loss(d, d) == 0.0 and normal_loss(nmap, nmap) == 0.0
    ln, ld = 0.37, 0.81
    weights_ok = combined_loss(2.0, ln, ld) == 2.0 + 1.0 * ln + 1.5 * ld

    worst = 0.0
    for _ in range(50):
        h, w = rng.integers(3, 17, 2)
        cap = rng.uniform(0.5, 4.0, (h, w))
        ren = cap + rng.choice([-1, 1], (h, w)) * rng.uniform(1e-3, 0.5, (h, w))
        mask_r = rng.random((h, w)) > 0.1
        mask_c = rng.random((h, w)) > 0.1
        mask_r[0, 0] = mask_c[0, 0] = True
        captured = DepthMap(cap, mask_c)
        grad = depth_loss_grad(DepthMap(ren, mask_r), captured)
        fd = central_difference(lambda x: depth_loss(DepthMap(x, mask_r), captured), ren, 1e-7)
        worst = max(worst, float(np.max(np.abs(grad - fd))))
    ok = zero_ok and weights_ok and worst <= 1e-5
    record(6, ok, f"identical inputs give 0: {zero_ok}; weights 1 and 1.5: {weights_ok}; "
                  f"max |analytic - finite difference| over 50 buffers {worst:.1e}")


# ---------------------------------------------------------------------------- 7. constraint suite

def _random_layout(rng, env, db, n, candidates):
    objs = []
    lo, hi = env.floor.contour.min(axis=0), env.floor.contour.max(axis=0)
    for k in range(n):
        e = db.entries[rng.integers(len(db.entries))]
        cand = candidates[e.id]
        p = registration.Placement(e.id, tuple(rng.uniform(0.7, 1.2, 3)), float(rng.integers(18) * 20),
                                   np.zeros(3), 0.0, 0.0, env.floor.basis)
        spot = np.append(rng.uniform(lo, hi), rng.uniform(-0.3, 0.5))
        p = p.moved(env.floor.from_plane(spot) - p.apply(cand.samples).mean(axis=0))
        objs.append(C.PlacedObject(k, e.category, p, cand.samples, cand.mesh))
    return C.Layout(env, tuple(objs))


def _violations(layout):
    env = layout.envelope
    floating = sum(abs(C.min_height(o, env)) > 1e-6 for o in layout.objects)
    walls = sum(C.check_wall_penetration(o, env).distance > 1e-6 for o in layout.objects)
    return floating, walls, len(C.find_violations(layout)[1])


def test_constraint_suite(suite_db):
    rng = np.random.default_rng(7)
    scene, _ = synth.generate_scene(synth.SceneSpec(dims=(6.0, 5.0, 2.6), points_per_surface=3000, seed=7))
    env = envelope.build_envelope(scene)
    candidates = {e.id: registration.load_candidate(e, 1024) for e in suite_db.entries}
    bad, nonmonotone = 0, 0
    for _ in range(50):
        out, rep = C.resolve_layout(_random_layout(rng, env, suite_db, 4, candidates))
        if not rep.resolved or any(_violations(out)):
            bad += 1
        nonmonotone += any(b > a for a, b in zip(rep.history, rep.history[1:]))

    # infeasible: too many objects for the floor, and one object longer than the room
    crowded = _random_layout(rng, env, suite_db, 40, candidates)
    _, rep_crowded = C.resolve_layout(crowded)
    # every sofa model is over 1.5 m long, so six times that exceeds the 6 m room
    sofa = suite_db.by_category("sofa")[0]
    c = candidates[sofa.id]
    big = registration.Placement(sofa.id, (6.0, 1.0, 1.0), 0.0, np.zeros(3), 0.0, 0.0, env.floor.basis)
    big = big.moved(env.floor.from_plane([0.0, 0.0, 0.0]) - big.apply(c.samples).mean(axis=0))
    _, rep_big = C.resolve_layout(C.Layout(env, (C.PlacedObject(0, "sofa", big, c.samples, c.mesh),)))
    infeasible_ok = all(not r.resolved and r.residuals for r in (rep_crowded, rep_big))
    ok = bad == 0 and nonmonotone == 0 and infeasible_ok
    record(7, ok, f"{50 - bad}/50 feasible layouts clean, {nonmonotone} with a rising violation count; "
                  f"infeasible fixtures report {len(rep_crowded.residuals)} and {len(rep_big.residuals)} residuals")


# ---------------------------------------------------------------------------- 8. determinism

def test_layout_determinism(tmp_path):
    data = tmp_path / "scene"
    assert main(["synth", "--out", str(data), "--make-models", "3", "--random-furniture", "4", "--seed", "8"]) == 0
    codes, blobs = [], []
    for run in ("a", "b"):
        out = tmp_path / run
        codes.append(main(["layout", "--cloud", str(data / "scene.ply"), "--labels", str(data / "labels.txt"),
                           "--models", str(data / "models"), "--seed", "3", "--out", str(out)]))
        blobs.append((out / "layout.json").read_bytes())
    doc = json.loads(blobs[0])
    ok = codes == [0, 0] and blobs[0] == blobs[1]
    record(8, ok, f"exit codes {codes}, {len(doc['placements'])} placements, "
                  f"layout.json identical: {blobs[0] == blobs[1]} ({len(blobs[0])} bytes)")
