import numpy as np
import pytest

from roomlayout.errors import DimensionMismatch, InvalidParameter, NoValidPixels, NonFinite, TooSmall
from roomlayout.losses import (
    DepthMap,
    LossWeights,
    NormalMap,
    combined_loss,
    decode_normal_rgb,
    depth_loss,
    depth_loss_grad,
    encode_normal_rgb,
    normal_derivative,
    normal_loss,
)
from oracles import central_difference


def random_normals(rng, h=6, w=7):
    n = rng.normal(size=(h, w, 3))
    return n / np.linalg.norm(n, axis=2, keepdims=True)


def test_default_weights():
    assert LossWeights() == LossWeights(1.0, 1.5)


def test_derivative_scheme_by_hand():
    n = np.zeros((2, 3, 3))
    n[..., 2] = 1.0
    n[0, 1] = [1.0, 0, 0]
    d, valid = normal_derivative(NormalMap(n, np.ones((2, 3), bool)))
    assert valid.all()
    np.testing.assert_array_equal(d[0, 0, 0], [1, 0, -1])     # forward along u
    np.testing.assert_array_equal(d[0, 1, 0], [-1, 0, 1])
    np.testing.assert_array_equal(d[0, 2, 0], [-1, 0, 1])     # backward on the last column
    np.testing.assert_array_equal(d[0, 1, 1], [-1, 0, 1])     # forward along v
    np.testing.assert_array_equal(d[1, 1, 1], [-1, 0, 1])     # backward on the last row


def test_identical_normals_zero_loss(rng):
    n = NormalMap(random_normals(rng), np.ones((6, 7), bool))
    assert normal_loss(n, n) == 0.0
    assert normal_loss(n, n, as_written=True) == 1.0


def test_normal_loss_by_hand():
    ones = np.ones((2, 2), bool)
    flat = np.zeros((2, 2, 3))
    flat[..., 2] = 1
    bumped = flat.copy()
    bumped[0, 0] = [0, 1, 0]
    # each pixel's 6-component derivative differs from zero by |(0,1,-1)| summed over
    # the u and v entries that touch pixel (0, 0)
    loss = normal_loss(NormalMap(bumped, ones), NormalMap(flat, ones))
    expected = np.mean([2 + 2, 2 + 0, 0 + 2, 0 + 0])
    assert loss == pytest.approx(expected)


def test_normal_loss_masking(rng):
    a = random_normals(rng)
    b = random_normals(rng)
    mask = np.ones((6, 7), bool)
    mask[2, 3] = False
    da, va = normal_derivative(NormalMap(a, mask))
    assert not va[2, 3].any() and not va[2, 2, 0] and not va[1, 3, 1]
    # changing an invalid pixel does not change the loss
    a2 = a.copy()
    a2[2, 3] = [1, 0, 0]
    l1 = normal_loss(NormalMap(a, mask), NormalMap(b, np.ones((6, 7), bool)))
    l2 = normal_loss(NormalMap(a2, mask), NormalMap(b, np.ones((6, 7), bool)))
    assert l1 == l2


def test_normal_loss_errors(rng):
    ones = np.ones((6, 7), bool)
    a = NormalMap(random_normals(rng), ones)
    with pytest.raises(DimensionMismatch):
        normal_loss(a, NormalMap(random_normals(rng, 6, 8), np.ones((6, 8), bool)))
    with pytest.raises(TooSmall):
        normal_loss(NormalMap(random_normals(rng, 1, 7), np.ones((1, 7), bool)),
                    NormalMap(random_normals(rng, 1, 7), np.ones((1, 7), bool)))
    with pytest.raises(NoValidPixels):
        normal_loss(a, NormalMap(np.zeros((6, 7, 3)), np.zeros((6, 7), bool)))
    with pytest.raises(InvalidParameter):
        NormalMap(np.ones((6, 7, 3)), ones)


def test_normal_png_codec(rng):
    n = NormalMap.from_array(random_normals(rng))
    back = decode_normal_rgb(encode_normal_rgb(n))
    assert np.abs(back.normals - n.normals).max() < 0.01
    rgb = encode_normal_rgb(n)
    rgb[0, 0] = 0
    assert not decode_normal_rgb(rgb).mask[0, 0]


def test_depth_loss_identical_zero(rng):
    d = DepthMap.from_array(rng.uniform(0.5, 4, size=(8, 9)))
    assert depth_loss(d, d) == 0.0


def test_depth_loss_by_hand():
    a = DepthMap.from_array(np.array([[1.0, 2.0], [0.0, 4.0]]))
    b = DepthMap.from_array(np.array([[1.5, 1.0], [3.0, np.nan]]))
    # joint valid pixels: (0,0), (0,1)
    assert depth_loss(a, b) == pytest.approx(0.75)
    g = depth_loss_grad(a, b)
    np.testing.assert_array_equal(g, [[-0.5, 0.5], [0.0, 0.0]])


def test_depth_loss_errors():
    with pytest.raises(NoValidPixels):
        depth_loss(DepthMap.from_array(np.zeros((2, 2))), DepthMap.from_array(np.ones((2, 2))))
    with pytest.raises(DimensionMismatch):
        depth_loss(DepthMap.from_array(np.ones((2, 2))), DepthMap.from_array(np.ones((2, 3))))


def test_depth_gradient_matches_finite_differences(rng):
    for _ in range(10):
        cap = rng.uniform(0.5, 4, size=(5, 6))
        ren = cap + rng.choice([-1, 1], size=cap.shape) * rng.uniform(0.01, 0.5, size=cap.shape)
        ren[rng.random(ren.shape) < 0.2] = 0.0
        captured = DepthMap.from_array(cap)
        mask = DepthMap.from_array(ren).mask

        def f(x):
            return depth_loss(DepthMap(np.where(mask, x, 0.0), mask), captured)
        g = depth_loss_grad(DepthMap.from_array(ren), captured)
        np.testing.assert_allclose(g, central_difference(f, ren, 1e-6), atol=1e-5)


def test_combined_loss():
    assert combined_loss(0.5, 0.2, 0.1) == pytest.approx(0.5 + 0.2 + 0.15)
    assert combined_loss(1, 1, 1, LossWeights(2, 3)) == 6
    with pytest.raises(NonFinite):
        combined_loss(float("inf"), 0, 0)
    with pytest.raises(NonFinite):
        LossWeights(float("nan"), 1)
