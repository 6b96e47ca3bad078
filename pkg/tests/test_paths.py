import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_model, small_cnn
from pathattr import models, paths
from pathattr.errors import InvalidParameterError
from pathattr.tensor import blur


def img(values):
    return np.asarray(values, dtype=float).reshape(1, -1, 1)


def test_straight_path_two_steps():
    p = paths.straight_path(img([0, 0]), img([1, 2]), 2)
    np.testing.assert_array_equal(p.points[:, 0, :, 0], [[0, 0], [0.5, 1], [1, 2]])
    np.testing.assert_array_equal(p.alphas, [0, 0.5, 1])
    assert p.method == "ig"


def test_straight_path_degenerate_and_default_length():
    x = np.random.default_rng(0).random((3, 3, 2))
    p = paths.straight_path(x, x, 5)
    assert np.all(p.points == x)
    assert len(paths.straight_path(np.zeros_like(x), x)) == 201
    assert paths.DEFAULT_STEPS == 200


def test_straight_path_rejects_zero_steps_and_shape_mismatch():
    with pytest.raises(InvalidParameterError):
        paths.straight_path(img([0]), img([1]), 0)
    with pytest.raises(InvalidParameterError):
        paths.straight_path(img([0, 0]), img([1]), 3)


@given(st.integers(1, 40), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_straight_path_is_affine(n, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((2, 3, 4, 2))
    p = paths.straight_path(a, b, n)
    np.testing.assert_array_equal(p.points[-1], b)
    np.testing.assert_array_equal(p.points[0], a)
    if n >= 2:
        assert np.abs(np.diff(p.points, 2, axis=0)).max() <= 1e-12


def test_baselines():
    x = np.random.default_rng(0).random((2, 2, 3))
    assert np.all(paths.make_baseline("black", x) == 0)
    assert np.all(paths.make_baseline("white", x) == 1)
    np.testing.assert_array_equal(paths.make_baseline(x * 0.5, x), x * 0.5)
    with pytest.raises(InvalidParameterError):
        paths.make_baseline("grey", x)


def first_arrival(points, target):
    """Step index at which each coordinate first equals its target."""
    return np.argmax(points == target[None], axis=0)


def test_guided_path_moves_small_gradient_feature_first():
    # |w1| < |w2|: the greedy scheme must finish feature 1 strictly earlier
    m = models.linear_score(np.array([0.5, -3.0]))
    x = img([1.0, 1.0])
    p = paths.guided_path(m, 0, np.zeros_like(x), x, steps=4, fraction_per_step=0.5)
    arrive = first_arrival(p.points, x).ravel()
    assert arrive[0] < arrive[1]
    # hand trace: budget per step 2/4 = 0.5; chunk = ceil(0.5*2) = 1 coordinate
    np.testing.assert_allclose(p.points[:, 0, :, 0], [[0, 0], [0.5, 0], [1, 0], [1, 0.5], [1, 1]])


def test_guided_path_identical_endpoints():
    m = models.linear_score(np.ones(3))
    x = img([0.2, 0.4, 0.6])
    p = paths.guided_path(m, 0, x, x, steps=5)
    assert len(p) == 6
    assert np.all(p.points == x)


def test_guided_path_fraction_one_equals_straight_line():
    m = random_model("mlp", (3, 3, 1), 2, seed=1)
    x = np.random.default_rng(2).random((3, 3, 1))
    g = paths.guided_path(m, 0, np.zeros_like(x), x, steps=7, fraction_per_step=1.0)
    s = paths.straight_path(np.zeros_like(x), x, 7)
    np.testing.assert_allclose(g.points, s.points, atol=1e-12)


@pytest.mark.parametrize("frac", [0.0, 1.5])
def test_guided_path_rejects_bad_fraction(frac):
    m = models.linear_score(np.ones(2))
    with pytest.raises(InvalidParameterError):
        paths.guided_path(m, 0, img([0, 0]), img([1, 1]), 3, frac)


@given(st.integers(1, 25), st.floats(0.05, 1.0), st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_guided_path_monotone_and_exact_endpoint(n, frac, seed):
    m = small_cnn(seed % 5, shape=(4, 4, 1), classes=2)
    rng = np.random.default_rng(seed)
    x, ref = rng.random((2, 4, 4, 1))
    p = paths.guided_path(m, 1, ref, x, n, frac)
    np.testing.assert_array_equal(p.points[-1], x)
    dist = np.abs(p.points - x).sum(axis=(1, 2, 3))
    assert np.all(np.diff(dist) <= 1e-12)
    # each coordinate moves monotonically from ref to x
    step = np.diff(p.points, axis=0) * np.sign(x - ref)[None]
    assert step.min() >= -1e-12


def test_blur_schedule_quadratic():
    s = paths.BlurSchedule.quadratic(50.0, 4)
    np.testing.assert_allclose(s.sigmas ** 2, [2500, 1875, 1250, 625, 0])
    assert s.max_sigma == 50.0 and s.steps == 4


@pytest.mark.parametrize("sigmas", [[1, 2, 0], [2, 2, 0], [2, 1], [0, 0], [3]])
def test_blur_schedule_validation(sigmas):
    with pytest.raises(InvalidParameterError):
        paths.BlurSchedule(sigmas)


def test_blur_path_constant_image():
    x = np.full((6, 6, 3), 0.3)
    p = paths.blur_path(x, paths.BlurSchedule.quadratic(10.0, 5))
    np.testing.assert_allclose(p.points, np.broadcast_to(x, p.points.shape), atol=1e-15)


def test_blur_path_explicit_sigmas():
    x = np.random.default_rng(0).random((8, 8, 1))
    p = paths.blur_path(x, [2.0, 1.0, 0.0])
    assert len(p) == 3
    np.testing.assert_array_equal(p.points[-1], x)
    np.testing.assert_array_equal(p.points[0], blur(x, 2.0))
    assert p.alphas[0] == 0 and p.alphas[-1] == 1
    assert np.all(np.diff(p.alphas) > 0)


def test_blur_path_variance_increases_on_white_dot():
    x = np.zeros((21, 21, 1))
    x[10, 10] = 1.0
    p = paths.blur_path(x, paths.BlurSchedule.quadratic(6.0, 12))
    var = p.points.reshape(len(p), -1).var(axis=1)
    assert np.all(np.diff(var) > 0)


def test_blur_path_differences_telescope():
    x = np.random.default_rng(1).random((10, 9, 3))
    p = paths.blur_path(x, paths.BlurSchedule.quadratic(8.0, 30))
    total = np.diff(p.points, axis=0).sum(axis=0)
    np.testing.assert_allclose(total, x - blur(x, 8.0), atol=1e-9)


def test_path_points_validation():
    with pytest.raises(InvalidParameterError):
        paths.PathPoints(np.zeros((3, 2, 2, 1)), np.array([0, 0.5]), "ig")
    with pytest.raises(InvalidParameterError):
        paths.PathPoints(np.zeros((2, 2, 2, 1)), np.array([0.5, 0.2]), "ig")
