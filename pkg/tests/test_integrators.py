import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_model, small_cnn
from pathattr import integrators as I
from pathattr import models, paths
from pathattr.errors import ArtifactIOError, DegenerateStepError, FormatError, InvalidParameterError


def img(values):
    return np.asarray(values, dtype=float).reshape(1, -1, 1)


W = np.array([2.0, -1.0])


def test_riemann_linear_score_is_exact():
    m = models.linear_score(W)
    for n in (1, 2, 4, 7, 200):
        a = I.riemann_integrate(m, 0, paths.straight_path(img([0, 0]), img([1, 1]), n))
        np.testing.assert_allclose(a.values.ravel(), [2, -1], atol=1e-12)
    a = I.riemann_integrate(m, 0, paths.straight_path(img([0, 0]), img([1, 1]), 4))
    np.testing.assert_array_equal(a.values.ravel(), [2, -1])


def test_riemann_zero_segments_give_zero():
    m = random_model("mlp", (2, 2, 1), 2)
    x = np.random.default_rng(0).random((2, 2, 1))
    a = I.riemann_integrate(m, 0, paths.straight_path(x, x, 10))
    assert np.all(a.values == 0)


def test_riemann_approximately_complete_on_smooth_model():
    m = small_cnn(3)
    x = np.random.default_rng(1).random((8, 8, 2))
    ref = np.zeros_like(x)
    a = I.riemann_integrate(m, 2, paths.straight_path(ref, x, 200))
    delta = models.value(m, x, 2) - models.value(m, ref, 2)
    assert abs(a.values.sum() - delta) <= 0.01 * abs(delta)


@pytest.mark.parametrize("n", [10, 50, 200])
def test_riemann_matches_brute_force_loop(n):
    m = random_model("mlp", (3, 3, 2), 3, seed=n)
    x = np.random.default_rng(n).random((3, 3, 2))
    ref = np.zeros_like(x)
    expected = np.zeros_like(x)
    for j in range(n):
        xj = ref + (j / n) * (x - ref)
        xk = ref + ((j + 1) / n) * (x - ref) if j + 1 < n else x
        expected = expected + models.gradient(m, xj, 1) * (xk - xj)
    a = I.riemann_integrate(m, 1, paths.straight_path(ref, x, n))
    np.testing.assert_allclose(a.values, expected, atol=1e-12, rtol=0)


def test_riemann_rejects_short_or_mismatched_paths():
    m = models.linear_score(np.ones(3))
    with pytest.raises(InvalidParameterError):
        I.riemann_integrate(m, 0, "not a path")
    with pytest.raises(InvalidParameterError):
        I.riemann_integrate(m, 0, paths.straight_path(img([0, 0]), img([1, 1]), 3))


def test_idgi_single_step_substitution():
    rec = I.StepRecord(0, np.array([3.0, 4.0]), 1.0, np.zeros(2))
    np.testing.assert_allclose(rec.important(), [0.36, 0.64], atol=1e-15)
    with pytest.raises(DegenerateStepError):
        I.StepRecord(0, np.zeros(2), 1.0, np.zeros(2)).important()


def test_idgi_linear_closed_form():
    m = models.linear_score(W)
    a = I.idgi_integrate(m, 0, paths.straight_path(img([0, 0]), img([1, 1]), 17))
    np.testing.assert_allclose(a.values.ravel(), [0.8, 0.2], atol=1e-12)
    assert a.idgi and a.label == "IG+IDGI"


@given(st.integers(0, 10_000), st.sampled_from(["ig", "gig", "blurig"]), st.sampled_from(["black", "white", "rand"]))
@settings(max_examples=25, deadline=None)
def test_idgi_completeness(seed, method, base):
    m = small_cnn(seed % 4)
    rng = np.random.default_rng(seed)
    x = rng.random((8, 8, 2))
    baseline = rng.random((8, 8, 2)) if base == "rand" else base
    c = int(seed % 3)
    path = I.build_path(m, c, x, method, steps=12, baseline=baseline, max_sigma=5.0)
    a = I.idgi_integrate(m, c, path)
    delta = models.value(m, x, c) - models.value(m, path.start, c)
    assert abs(a.values.sum() - delta) <= 1e-8 * max(1.0, abs(delta))


def test_idgi_per_step_exactness():
    m = small_cnn(1)
    x = np.random.default_rng(0).random((8, 8, 2))
    for rec in I.step_records(m, 0, paths.straight_path(np.zeros_like(x), x, 30)):
        assert abs(rec.important().sum() - rec.d) <= 1e-12


def test_idgi_sign_follows_score_change():
    # a falling score yields nonpositive IDGI terms everywhere
    m = models.linear_score(np.array([1.0, -2.0]))
    a = I.idgi_integrate(m, 0, paths.straight_path(img([0, 0]), img([0, 1]), 5))
    assert np.all(a.values <= 0)


def test_idgi_zero_gradient_with_score_change_is_counted(caplog):
    f = models.CallableOracle(lambda x: float(x.sum()), (1, 2, 1), grad=lambda x: np.zeros_like(x))
    with caplog.at_level(logging.WARNING):
        a = I.idgi_integrate(f, 0, paths.straight_path(img([0, 0]), img([1, 1]), 4))
    assert a.degenerate_steps == 4
    assert np.all(a.values == 0)
    assert "zero-gradient" in caplog.text


def test_idgi_zero_gradient_without_score_change_is_silent(caplog):
    f = models.CallableOracle(lambda x: 0.5, (1, 2, 1), grad=lambda x: np.zeros_like(x))
    with caplog.at_level(logging.WARNING):
        a = I.idgi_integrate(f, 0, paths.straight_path(img([0, 0]), img([1, 1]), 4))
    assert a.degenerate_steps == 0
    assert caplog.text == ""


def test_projection_examples():
    np.testing.assert_array_equal(I.project_to_hyperplane(img([0, 0]), img([1, 0]), 0.5), img([0.5, 0]))
    x = np.random.default_rng(0).random((2, 2, 1))
    np.testing.assert_array_equal(I.project_to_hyperplane(x, np.ones_like(x), 0.0), x)
    xp = I.project_to_hyperplane(img([0, 0]), img(W), 1.0)
    np.testing.assert_allclose(xp.ravel(), [0.4, -0.2], atol=1e-15)
    assert float(np.sum(W * xp.ravel())) == pytest.approx(1.0, abs=1e-15)


def test_projection_zero_gradient_and_shape():
    with pytest.raises(DegenerateStepError):
        I.project_to_hyperplane(img([0, 0]), img([0, 0]), 1.0)
    with pytest.raises(InvalidParameterError):
        I.project_to_hyperplane(img([0, 0]), img([1]), 1.0)


def test_vanilla_gradient():
    m = models.linear_score(W)
    np.testing.assert_array_equal(I.vanilla_gradient(m, 0, img([3, 4])).values.ravel(), W)
    net = small_cnn(0)
    x = np.random.default_rng(0).random((8, 8, 2))
    a = I.attribute(net, 1, x, "vanilla")
    np.testing.assert_array_equal(a.values, models.gradient(net, x, 1))
    assert a.label == "VG"


def test_attribute_is_composition():
    m = small_cnn(2)
    x = np.random.default_rng(3).random((8, 8, 2))
    a = I.attribute(m, 0, x, "ig", steps=20)
    b = I.riemann_integrate(m, 0, paths.straight_path(np.zeros_like(x), x, 20))
    np.testing.assert_array_equal(a.values, b.values)
    a = I.attribute(m, 0, x, "blurig", idgi=True, steps=20, max_sigma=6.0)
    b = I.idgi_integrate(m, 0, paths.blur_path(x, paths.BlurSchedule.quadratic(6.0, 20)))
    np.testing.assert_array_equal(a.values, b.values)
    assert a.baseline == "blur:6"


def test_attribute_rejects_bad_combinations():
    m = models.linear_score(W)
    with pytest.raises(InvalidParameterError):
        I.attribute(m, 0, img([1, 1]), "vanilla", idgi=True)
    with pytest.raises(InvalidParameterError):
        I.attribute(m, 0, img([1, 1]), "smoothgrad")


@pytest.mark.parametrize("method", ["ig", "gig", "blurig"])
def test_attribute_pair_matches_separate_calls(method):
    m = small_cnn(5)
    x = np.random.default_rng(8).random((8, 8, 2))
    opts = dict(steps=15, max_sigma=4.0)
    plain, idgi = I.attribute_pair(m, 2, x, method, **opts)
    np.testing.assert_array_equal(plain.values, I.attribute(m, 2, x, method, False, **opts).values)
    np.testing.assert_array_equal(idgi.values, I.attribute(m, 2, x, method, True, **opts).values)
    name = {"ig": "IG", "gig": "GIG", "blurig": "BlurIG"}[method]
    assert (plain.label, idgi.label) == (name, name + "+IDGI")


def test_dead_feature_zero_under_every_method():
    w = models.init_weights("mlp", (3, 3, 1), 2, seed=4, hidden=(6,))
    w.layers[0]["W"][:, 4] = 0.0
    m = models.ToyModel(w)
    x = np.random.default_rng(0).random((3, 3, 1))
    for method in I.METHODS:
        for idgi in ([False] if method == "vanilla" else [False, True]):
            a = I.attribute(m, 0, x, method, idgi, steps=25, max_sigma=2.0)
            assert abs(a.values.reshape(-1)[4]) <= 1e-12


def test_attribution_serialization_round_trip(tmp_path):
    m = small_cnn(0)
    x = np.random.default_rng(0).random((8, 8, 2))
    a = I.attribute(m, 1, x, "gig", idgi=True, steps=8)
    I.save_attribution(a, tmp_path / "a")
    b = I.load_attribution(tmp_path / "a.bin")
    np.testing.assert_array_equal(a.values, b.values)
    assert b.metadata() == a.metadata()
    assert (tmp_path / "a.bin").stat().st_size == a.values.size * 8


def test_attribution_loading_errors(tmp_path):
    a = I.AttributionMap(np.ones((2, 2, 1)), "ig", steps=3)
    I.save_attribution(a, tmp_path / "a")
    meta = json.loads((tmp_path / "a.json").read_text())
    meta["version"] = 5
    (tmp_path / "a.json").write_text(json.dumps(meta))
    with pytest.raises(FormatError):
        I.load_attribution(tmp_path / "a")
    I.save_attribution(a, tmp_path / "b")
    (tmp_path / "b.bin").write_bytes(b"\0" * 8)
    with pytest.raises(FormatError):
        I.load_attribution(tmp_path / "b")
    with pytest.raises(ArtifactIOError):
        I.load_attribution(tmp_path / "missing")


def test_attribution_map_rejects_non_finite():
    with pytest.raises(InvalidParameterError):
        I.AttributionMap(np.array([[[np.inf]]]), "ig")
