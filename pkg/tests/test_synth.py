import hashlib
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from dualrain import files, synth
from dualrain.errors import DimensionMismatch, EmptyCorpus, InvalidParams
from dualrain.rain_model import compose, recover_background
from dualrain.synth import StreakParams, VaporParams


def test_zero_density_gives_empty_layer():
    layer, mask = synth.render_streak_layer(32, 32, StreakParams(density=0.0, seed=1))
    assert not layer.any() and not mask.any()


def test_streak_layer_is_deterministic():
    p = StreakParams(density=3.0, seed=99)
    a = synth.render_streak_layer(48, 40, p)
    b = synth.render_streak_layer(48, 40, p)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    c = synth.render_streak_layer(48, 40, replace(p, seed=100))
    assert not np.array_equal(a[0], c[0])


def test_streak_layer_range_and_mask():
    layer, mask = synth.render_streak_layer(64, 64, StreakParams(density=4.0, seed=3))
    assert layer.min() >= 0 and layer.max() <= 1
    assert np.array_equal(mask, layer > 0.1)


def test_vertical_streak_geometry():
    p = StreakParams(density=0.3, length_range=(9, 9), width_range=(1, 1),
                     angle_range=(0, 0), intensity_range=(0.5, 1.0), seed=7)
    _, mask = synth.render_streak_layer(128, 128, p)
    labels, n = ndimage.label(mask)
    assert n > 0
    for sl in ndimage.find_objects(labels):
        height = sl[0].stop - sl[0].start
        width = sl[1].stop - sl[1].start
        touches_border = sl[0].start == 0 or sl[0].stop == 128
        if not touches_border:
            assert height >= 9
        assert width <= 3


def test_streak_params_validation():
    with pytest.raises(InvalidParams):
        StreakParams(density=-1)
    with pytest.raises(InvalidParams):
        StreakParams(length_range=(10, 5))
    with pytest.raises(InvalidParams):
        synth.render_streak_layer(8, 32, StreakParams())


def test_screen_blend_examples():
    j = np.random.default_rng(0).random((4, 4, 3))
    assert np.array_equal(synth.screen_blend(j, np.zeros((4, 4))), j)
    np.testing.assert_array_equal(synth.screen_blend(j, np.ones((4, 4))), 1.0)
    out = synth.screen_blend(np.full((1, 1, 3), 0.5), np.full((1, 1), 0.5))
    np.testing.assert_allclose(out, 0.75)
    with pytest.raises(DimensionMismatch):
        synth.screen_blend(j, np.zeros((3, 4)))


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_screen_blend_commutative_and_monotone(x, y):
    a = synth.screen_blend(np.full((1, 1, 3), x), np.full((1, 1), y))
    b = synth.screen_blend(np.full((1, 1, 3), y), np.full((1, 1), x))
    np.testing.assert_allclose(a, b, atol=1e-15)
    assert a.min() >= max(x, y) - 1e-15


def test_vapor_zero_strength():
    v = synth.render_vapor_map(32, 32, VaporParams(strength_range=(0, 0), seed=2))
    assert not v.any()


def test_vapor_deterministic_and_smooth():
    p = VaporParams(octaves=3, base_scale=16, strength_range=(0.9, 1.0), seed=5)
    v1 = synth.render_vapor_map(64, 48, p)
    v2 = synth.render_vapor_map(64, 48, p)
    assert np.array_equal(v1, v2)
    assert np.abs(np.diff(v1, axis=0)).mean() < 0.05
    assert np.abs(np.diff(v1, axis=1)).mean() < 0.05


@pytest.mark.parametrize("seed", range(5))
def test_vapor_single_octave_bounds(seed):
    p = VaporParams(octaves=1, base_scale=32, strength_range=(0.3, 0.7), seed=seed)
    v = synth.render_vapor_map(32, 32, p)
    assert v.min() >= 0 and v.max() <= 0.7
    adjacency = np.concatenate([np.abs(np.diff(v, axis=0)).ravel(), np.abs(np.diff(v, axis=1)).ravel()])
    assert adjacency.mean() < 0.05


def test_model_scene_clear_sky():
    j = np.random.default_rng(1).random((32, 32, 3))
    scene = synth.make_model_scene(j, StreakParams(density=0.0), VaporParams(strength_range=(0, 0)),
                                   (0.9, 0.9, 0.9), alpha=0.4)
    np.testing.assert_allclose(scene.t_streak + scene.t_vapor, 1.0, atol=1e-15)
    np.testing.assert_allclose(scene.rainy, j, atol=1e-12)


def test_model_scene_opaque_streaks():
    # s == 1 and v == 0 everywhere: Ts = 0, Tv = alpha
    j = np.random.default_rng(2).random((16, 16, 3))
    a = np.array([0.9, 0.8, 0.7])
    ts = np.zeros((16, 16))
    tv = np.full((16, 16), 0.4)
    np.testing.assert_allclose(compose(j, ts, tv, a), 0.4 * j + 0.6 * a, atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_model_scene_round_trip(seed):
    rng = np.random.default_rng(seed)
    j = synth.procedural_background(32, 32, rng)
    scene = synth.make_model_scene(j, StreakParams(density=4, seed=seed),
                                   VaporParams(strength_range=(0.2, 0.8), seed=seed), (0.9, 0.85, 0.95), 0.4)
    total = scene.t_streak + scene.t_vapor
    assert total.max() <= 1.0
    v = 1 - scene.t_vapor / 0.4
    assert total.min() >= 0.4 * (1 - v.max()) - 1e-12
    np.testing.assert_allclose(compose(scene.background, scene.t_streak, scene.t_vapor, scene.atmosphere),
                               scene.rainy, atol=1e-6)
    j_rec = recover_background(scene.rainy, scene.t_streak, scene.t_vapor, scene.atmosphere, eps=0.05)
    np.testing.assert_allclose(j_rec, j, atol=1e-5)


def test_model_scene_alpha_validation():
    with pytest.raises(InvalidParams):
        synth.make_model_scene(np.zeros((16, 16, 3)), StreakParams(), VaporParams(), (1, 1, 1), alpha=1.0)


def _hashes(d):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(d.iterdir())}


def test_blend_dataset_empty(tmp_path):
    m = synth.make_blend_dataset(None, 0, 32, StreakParams(), VaporParams(), tmp_path, seed=0)
    assert m.entries == []
    assert files.DatasetManifest.load(tmp_path / "manifest.json").entries == []


def test_blend_dataset_deterministic(tmp_path):
    args = (None, 4, 32, StreakParams(), VaporParams())
    synth.make_blend_dataset(*args, tmp_path / "a", seed=11)
    synth.make_blend_dataset(*args, tmp_path / "b", seed=11)
    ha, hb = _hashes(tmp_path / "a"), _hashes(tmp_path / "b")
    assert ha == hb and len(ha) == 13


def test_blend_dataset_identity_path(tmp_path):
    sp = StreakParams(density=0.0)
    vp = VaporParams(strength_range=(0.0, 0.0))
    m = synth.make_blend_dataset(None, 3, 32, sp, vp, tmp_path, seed=4)
    for e in m.entries:
        assert np.array_equal(files.read_image(m.resolve(e.rainy_path)),
                              files.read_image(m.resolve(e.clean_path)))


def test_blend_dataset_from_corpus(tmp_path):
    corpus = tmp_path / "clean"
    corpus.mkdir()
    rng = np.random.default_rng(0)
    files.write_image(corpus / "a.png", rng.random((40, 50, 3)))
    files.write_image(corpus / "b.png", rng.random((20, 24, 3)))
    m = synth.make_blend_dataset(corpus, 5, 32, StreakParams(), VaporParams(), tmp_path / "out", seed=1)
    for e in m.entries:
        assert files.read_image(m.resolve(e.rainy_path)).shape == (32, 32, 3)
        assert files.read_mask(m.resolve(e.mask_path)).shape == (32, 32)


def test_blend_dataset_empty_corpus(tmp_path):
    (tmp_path / "clean").mkdir()
    with pytest.raises(EmptyCorpus):
        synth.make_blend_dataset(tmp_path / "clean", 1, 32, StreakParams(), VaporParams(), tmp_path, seed=0)


def test_scene_dataset_round_trip(tmp_path):
    m = synth.make_scene_dataset(None, 3, 32, StreakParams(), VaporParams(), tmp_path, seed=2)
    for e in m.entries:
        scene = synth.RainScene.load_npz(m.resolve(e.scene_path))
        j = recover_background(scene.rainy, scene.t_streak, scene.t_vapor, scene.atmosphere)
        np.testing.assert_allclose(j, scene.background, atol=1e-5)
        ts_png = files.read_map(m.resolve(e.ts_path))
        np.testing.assert_allclose(ts_png, scene.t_streak, atol=1 / 65535)
