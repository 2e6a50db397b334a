import numpy as np
import pytest

from roomlayout import constraints as C
from roomlayout import synth
from roomlayout.envelope import FloorModel, RoomEnvelope, build_envelope
from roomlayout.errors import InvalidParameter, UnknownInstance
from roomlayout.geometry import obb_overlap
from roomlayout.mesh import box_mesh
from roomlayout.registration import Placement

from oracles import brute_outside_distance


def rect_envelope(length=4.0, width=3.0, height=2.5):
    hx, hy = length / 2, width / 2
    contour = np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])
    e = np.eye(3)
    floor = FloorModel(np.zeros(3), e[0], e[1], e[2], contour, length * width, (length, width))
    return RoomEnvelope(floor, height, length * width * height)


def box_object(iid, center, size=(1.0, 1.0, 1.0), theta=0.0, z=0.0, category="box"):
    """Box with its footprint centered at ``center`` and its base at height ``z``."""
    sx, sy, sz = size
    mesh = box_mesh((-sx / 2, -sy / 2, 0.0), (sx / 2, sy / 2, sz))
    g = np.linspace(0, 1, 5)
    u, v, w = np.meshgrid(g, g, g, indexing="ij")
    grid = np.column_stack([u.ravel(), v.ravel(), w.ravel()])
    samples = grid * [sx, sy, sz] - [sx / 2, sy / 2, 0.0]
    p = Placement(f"m{iid}", (1.0, 1.0, 1.0), float(theta), np.array([center[0], center[1], z]), 0.0)
    return C.PlacedObject(iid, category, p, samples, mesh)


def assert_clean(layout):
    env = layout.envelope
    for o in layout.objects:
        assert abs(C.min_height(o, env)) <= 1e-6
        assert C.check_wall_penetration(o, env).distance <= 1e-6
    boxes = [o.obb() for o in layout.objects]
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            assert not obb_overlap(boxes[i], boxes[j])


# ---------------------------------------------------------------------------- floor snapping

@pytest.mark.parametrize("z", [0.3, -0.1, 0.0])
def test_snap_to_floor_moves_only_along_normal(z):
    env = rect_envelope()
    o = box_object(1, (0.2, -0.3), z=z)
    s = C.snap_to_floor(o, env)
    np.testing.assert_allclose(s.placement.translation, [0.2, -0.3, 0.0], atol=1e-12)
    assert abs(C.min_height(s, env)) <= 1e-6


def test_snap_is_idempotent():
    env = rect_envelope()
    o = C.snap_to_floor(box_object(1, (0, 0), theta=40, z=0.7), env)
    again = C.snap_to_floor(o, env)
    np.testing.assert_allclose(again.placement.translation, o.placement.translation, atol=1e-12)


# ---------------------------------------------------------------------------- walls

def test_centered_box_has_no_wall_penetration():
    v = C.check_wall_penetration(box_object(1, (0, 0)), rect_envelope())
    assert v.distance == 0.0


def test_corner_outside_contour_distance():
    # right face at x = 2.2 in a room whose wall is at x = 2
    v = C.check_wall_penetration(box_object(1, (1.7, 0)), rect_envelope())
    assert v.distance == pytest.approx(0.2, abs=1e-12)


def test_touching_box_is_not_penetrating():
    v = C.check_wall_penetration(box_object(1, (1.5, 1.0)), rect_envelope())
    assert v.distance <= 1e-9


def test_wall_distance_matches_brute_force(rng):
    env = rect_envelope()
    poly = env.floor.contour
    for _ in range(100):
        o = box_object(1, rng.uniform(-2.5, 2.5, 2), rng.uniform(0.2, 1.5, 3), rng.uniform(0, 360))
        corners = C.footprint(o, env)
        expect = max(brute_outside_distance(c, poly) for c in corners)
        assert C.check_wall_penetration(o, env).distance == pytest.approx(expect, abs=1e-6)


def test_outside_distance_on_pentagon_matches_brute_force(rng):
    poly = np.array([[0, 0], [3, 0], [4, 2], [2, 3.5], [-1, 2]], dtype=float)
    for p in rng.uniform(-2, 5, (200, 2)):
        assert C.outside_distance(p, poly) == pytest.approx(brute_outside_distance(p, poly), abs=1e-6)


# ---------------------------------------------------------------------------- resolution

def test_overlapping_pair_separated_to_margin():
    env = rect_envelope()
    layout = C.Layout(env, (box_object(1, (-0.4, 0)), box_object(2, (0.4, 0))))
    out, rep = C.resolve_layout(layout)
    assert rep.resolved and rep.rounds <= 3
    a, b = (o.placement.translation for o in out.objects)
    # each box moved half of (overlap + margin) along x
    np.testing.assert_allclose(a, [-0.5005, 0, 0], atol=1e-9)
    np.testing.assert_allclose(b, [0.5005, 0, 0], atol=1e-9)
    assert_clean(out)


def test_clean_layout_is_unchanged():
    env = rect_envelope()
    objs = (box_object(1, (-1, 0)), box_object(2, (1, 0), theta=20))
    out, rep = C.resolve_layout(C.Layout(env, objs))
    assert rep.resolved and rep.rounds == 0 and rep.residuals == []
    for a, b in zip(objs, out.objects):
        assert a.placement is b.placement


def test_wall_penetration_is_pushed_inside():
    env = rect_envelope()
    out, rep = C.resolve_layout(C.Layout(env, (box_object(1, (1.8, 1.4), theta=30, z=0.2),)))
    assert rep.resolved
    assert_clean(out)


def test_object_wider_than_room_is_reported():
    env = rect_envelope()
    out, rep = C.resolve_layout(C.Layout(env, (box_object(1, (0, 0), size=(5.0, 1.0, 1.0)),)))
    assert not rep.resolved
    assert rep.residuals and rep.residuals[0]["kind"] == "wall"
    assert rep.residuals[0]["instances"] == [1]


def test_overcrowded_room_is_reported():
    env = rect_envelope()
    objs = tuple(box_object(i, (0.1 * i, 0), size=(1.5, 1.5, 1.0)) for i in range(8))
    out, rep = C.resolve_layout(C.Layout(env, objs))
    assert not rep.resolved
    assert any(r["kind"] == "overlap" for r in rep.residuals)
    assert all(b <= a for a, b in zip(rep.history, rep.history[1:]))


def test_duplicate_ids_rejected():
    with pytest.raises(InvalidParameter):
        C.Layout(rect_envelope(), (box_object(1, (0, 0)), box_object(1, (1, 0))))


def random_layout(rng, env, n):
    objs = []
    for i in range(n):
        size = rng.uniform(0.4, 1.6, 3)
        center = rng.uniform(-2.2, 2.2, 2) * [1.0, 0.75]
        objs.append(box_object(i, center, size, rng.integers(18) * 20.0, rng.uniform(-0.2, 0.4)))
    return C.Layout(env, tuple(objs))


def test_random_feasible_layouts_resolve_monotonically(rng):
    env = rect_envelope(6.0, 5.0)
    for _ in range(20):
        out, rep = C.resolve_layout(random_layout(rng, env, 5))
        assert rep.resolved, rep.residuals
        assert_clean(out)
        assert all(b <= a for a, b in zip(rep.history, rep.history[1:]))


def test_resolution_is_idempotent(rng):
    env = rect_envelope(6.0, 5.0)
    out, _ = C.resolve_layout(random_layout(rng, env, 5))
    again, rep = C.resolve_layout(out)
    assert rep.rounds == 0
    for a, b in zip(out.objects, again.objects):
        np.testing.assert_array_equal(a.placement.translation, b.placement.translation)


def test_free_offset_clears_all_violations():
    env = rect_envelope(6.0, 5.0)
    objs = [box_object(0, (-1.0, 0)), box_object(1, (1.0, 0)), box_object(2, (0.0, 0.2))]
    state = C._State(objs, env)
    t = C.free_offset(state, 2, C.MARGIN)
    assert t is not None
    assert state.try_move({2: objs[2].moved(t)})
    assert_clean(C.Layout(env, tuple(state.objs)))
    # a fitting spot exists directly above or below, 0.8 m + margin away
    assert np.linalg.norm(t) == pytest.approx(0.801, abs=1e-9)


def test_free_offset_none_when_no_room():
    env = rect_envelope()
    objs = [box_object(0, (-1.0, 0)), box_object(1, (1.0, 0)), box_object(2, (0.0, 0.2))]
    assert C.free_offset(C._State(objs, env), 2, C.MARGIN) is None


# ---------------------------------------------------------------------------- finalize

@pytest.fixture(scope="module")
def three_box_scene():
    items = [synth.FurnitureItem("box", (1.0, 1.0), shape="box", size=(0.6, 0.6, 0.8)),
             synth.FurnitureItem("box", (3.0, 1.0), shape="box", size=(0.6, 0.6, 0.8)),
             synth.FurnitureItem("box", (2.0, 2.2), shape="box", size=(0.6, 0.6, 0.8))]
    spec = synth.SceneSpec(furniture=items, points_per_surface=800, furniture_points=300, seed=3)
    scene, _ = synth.generate_scene(spec)
    env = build_envelope(scene)
    ids = [i.id for i in scene.instances if i.label == "box"]
    objs = tuple(C.snap_to_floor(box_object(i, env.floor.to_plane(scene.points_of(scene.instance(i)).points)
                                            .mean(axis=0)[:2], (0.6, 0.6, 0.8)), env) for i in ids)
    return scene, C.Layout(env, objs), ids


def test_virtual_mode_places_every_instance(three_box_scene):
    scene, layout, ids = three_box_scene
    doc, ex = C.finalize_layout(layout, "virtual")
    assert [r.instance_id for r in doc.placements] == ids
    assert doc.passthrough == [] and doc.passthrough_cloud is None and ex.passthrough is None
    assert len(ex.groups) == 3
    assert len(ex.mesh.triangles) == 3 * 12


def test_hybrid_mode_passes_through_the_rest(three_box_scene):
    scene, layout, ids = three_box_scene
    doc, ex = C.finalize_layout(layout, "hybrid", keep=[ids[1]], scene=scene)
    assert [r.instance_id for r in doc.placements] == [ids[1]]
    assert doc.passthrough == [ids[0], ids[2]]
    assert doc.passthrough_cloud == "passthrough.ply"
    expect = sum(len(scene.instance(i).indices) for i in (ids[0], ids[2]))
    assert len(ex.passthrough) == expect


def test_hybrid_unknown_instance(three_box_scene):
    scene, layout, ids = three_box_scene
    with pytest.raises(UnknownInstance):
        C.finalize_layout(layout, "hybrid", keep=[999], scene=scene)


def test_unknown_mode(three_box_scene):
    _, layout, _ = three_box_scene
    with pytest.raises(InvalidParameter):
        C.finalize_layout(layout, "sketch")


def test_residuals_and_provenance_carried(three_box_scene):
    _, layout, _ = three_box_scene
    res = [{"kind": "wall", "instances": [1], "amount": 0.5}]
    doc, _ = C.finalize_layout(layout, residuals=res, provenance={"seed": 4})
    assert doc.residuals == res and doc.provenance == {"seed": 4}
