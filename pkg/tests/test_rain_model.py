import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dualrain.errors import DimensionMismatch, InvalidParams, TransmissionRangeViolation
from dualrain.rain_model import compose, effective_transmission, recover_background

from oracles import compose_pixel


def _const(h, w, v):
    return np.full((h, w, 3), v, dtype=np.float64)


def test_compose_full_transmission_passes_background():
    j = _const(4, 5, 0.5)
    ts = np.full((4, 5), 0.3)
    out = compose(j, ts, 1.0 - ts, (1, 1, 1))
    np.testing.assert_allclose(out, 0.5, atol=1e-15)


def test_compose_zero_transmission_is_atmosphere():
    j = np.random.default_rng(0).random((6, 6, 3))
    z = np.zeros((6, 6))
    out = compose(j, z, z, (0.8, 0.8, 0.8))
    assert np.array_equal(out, np.full((6, 6, 3), 0.8))


def test_compose_single_pixel_matches_scalar_oracle():
    expected = compose_pixel([0.2] * 3, 0.25, 0.0, [1, 1, 1])
    out = compose(_const(1, 1, 0.2), [[0.25]], [[0.0]], (1, 1, 1))
    np.testing.assert_allclose(out[0, 0], expected, atol=1e-15)
    np.testing.assert_allclose(out[0, 0], 0.8, atol=1e-15)


def test_compose_rejects_oversubscribed_transmission():
    with pytest.raises(TransmissionRangeViolation):
        compose(_const(2, 2, 0.5), np.full((2, 2), 0.8), np.full((2, 2), 0.8), (1, 1, 1))


def test_compose_accepts_sum_within_tolerance():
    ts = np.full((2, 2), 0.5)
    compose(_const(2, 2, 0.5), ts, ts + 1e-10, (1, 1, 1))


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        compose(_const(2, 2, 0.5), np.zeros((2, 3)), np.zeros((2, 2)), (1, 1, 1))
    with pytest.raises(DimensionMismatch):
        recover_background(_const(2, 2, 0.5), np.zeros((3, 2)), np.zeros((3, 2)), (1, 1, 1))
    with pytest.raises(DimensionMismatch):
        effective_transmission(np.zeros((2, 2)), np.zeros((2, 1)))


def test_recover_full_transmission_is_identity():
    i = np.random.default_rng(1).random((5, 4, 3))
    ts = np.full((5, 4), 0.6)
    assert np.array_equal(recover_background(i, ts, 1.0 - ts, (0.3, 0.4, 0.5)), i)


def test_recover_inverts_scalar_example():
    j = recover_background(_const(1, 1, 0.8), [[0.25]], [[0.0]], (1, 1, 1))
    np.testing.assert_allclose(j, 0.2, atol=1e-12)


def test_recover_clamps_denominator():
    a = np.array([0.7, 0.8, 0.9])
    i = np.broadcast_to(a, (3, 3, 3)).copy()
    z = np.zeros((3, 3))
    j = recover_background(i, z, z, a, eps=0.05)
    np.testing.assert_allclose(j, i, atol=1e-12)


def test_recover_rejects_bad_eps():
    with pytest.raises(InvalidParams):
        recover_background(_const(2, 2, 0.5), np.ones((2, 2)), np.zeros((2, 2)), (1, 1, 1), eps=0.0)


@pytest.mark.parametrize(
    "ts, tv, eps, expected",
    [(0.3, 0.4, 0.05, 0.7), (0.0, 0.0, 0.05, 0.05), (0.8, 0.8, 0.05, 1.0)],
)
def test_effective_transmission(ts, tv, eps, expected):
    out = effective_transmission(np.full((2, 2), ts), np.full((2, 2), tv), eps)
    np.testing.assert_allclose(out, expected, atol=1e-15)


def test_maps_with_trailing_channel_are_accepted():
    j = _const(3, 3, 0.4)
    ts = np.full((3, 3, 1), 0.5)
    out = compose(j, ts, np.zeros((3, 3, 1)), (1, 1, 1))
    np.testing.assert_allclose(out, 0.7)


@st.composite
def scenes(draw):
    h = draw(st.integers(1, 8))
    w = draw(st.integers(1, 8))
    unit = st.floats(0, 1)
    j = draw(arrays(np.float64, (h, w, 3), elements=unit))
    total = draw(arrays(np.float64, (h, w), elements=st.floats(0.05, 1)))
    share = draw(arrays(np.float64, (h, w), elements=unit))
    a = draw(arrays(np.float64, (3,), elements=unit))
    return j, total * share, total * (1 - share), a


@settings(max_examples=200, deadline=None)
@given(scenes())
def test_round_trip_property(scene):
    j, ts, tv, a = scene
    i = compose(j, ts, tv, a)
    np.testing.assert_allclose(recover_background(i, ts, tv, a, eps=0.05), j, atol=1e-5)


@settings(max_examples=100, deadline=None)
@given(scenes(), st.floats(0, 1))
def test_compose_is_affine_in_background(scene, alpha):
    j1, ts, tv, a = scene
    j2 = 1.0 - j1
    lhs = compose(alpha * j1 + (1 - alpha) * j2, ts, tv, a)
    rhs = alpha * compose(j1, ts, tv, a) + (1 - alpha) * compose(j2, ts, tv, a)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(scenes())
def test_outputs_stay_in_unit_range(scene):
    j, ts, tv, a = scene
    i = compose(j, ts, tv, a)
    assert i.min() >= 0 and i.max() <= 1
    # recovering with the wrong maps must still be bounded
    r = recover_background(i, ts * 0.5, tv * 0.1, a[::-1], eps=0.05)
    assert r.min() >= 0 and r.max() <= 1
