import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dvdkit.core import CompressionRate, ImageTensor, PatchGrid, Rng, kl_divergence, log_softmax, softmax
from dvdkit.errors import InvalidInput, ShapeError, SupportMismatch


def test_rate_properties():
    q, s = CompressionRate.QUARTER, CompressionRate.SIXTEENTH
    assert (q.factor, q.tokens_per_tile, q.value_ratio) == (2, 256, 0.25)
    assert (s.factor, s.tokens_per_tile, s.value_ratio) == (4, 64, 0.0625)
    # tokens per tile follow from the 32x32 grid and the per-edge factor
    for r in CompressionRate:
        assert (32 // r.factor) ** 2 == r.tokens_per_tile
        assert CompressionRate.from_code(r.code) is r
    with pytest.raises(InvalidInput):
        CompressionRate.from_code(7)


@pytest.mark.parametrize("logits,expected", [
    ([0.0, 0.0], [0.5, 0.5]),
    ([1000.0, 1000.0], [0.5, 0.5]),
    ([math.log(1), math.log(3)], [0.25, 0.75]),
])
def test_softmax_examples(logits, expected):
    np.testing.assert_allclose(softmax(logits), expected, rtol=1e-12)


def test_softmax_rejects_bad_input():
    with pytest.raises(InvalidInput):
        softmax([1.0])
    with pytest.raises(InvalidInput):
        softmax([0.0, float("nan")])


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=12))
def test_softmax_is_distribution_and_shift_invariant(xs):
    p = softmax(xs)
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.all(p >= 0)
    np.testing.assert_allclose(softmax(np.array(xs) + 7.5), p, rtol=1e-9, atol=1e-15)
    np.testing.assert_allclose(np.exp(log_softmax(xs)), p, rtol=1e-9, atol=1e-300)


@pytest.mark.parametrize("p,q,expected", [
    ([0.5, 0.5], [0.5, 0.5], 0.0),
    ([0.75, 0.25], [0.5, 0.5], 0.75 * math.log(1.5) + 0.25 * math.log(0.5)),
    ([1.0, 0.0], [0.5, 0.5], math.log(2)),
])
def test_kl_examples(p, q, expected):
    assert kl_divergence(p, q) == pytest.approx(expected, abs=1e-12)


def test_kl_hand_value_matches_rounded_constant():
    assert kl_divergence([0.75, 0.25], [0.5, 0.5]) == pytest.approx(0.130812, abs=1e-6)


def test_kl_errors():
    with pytest.raises(ShapeError):
        kl_divergence([0.5, 0.5], [1 / 3] * 3)
    with pytest.raises(SupportMismatch):
        kl_divergence([0.5, 0.5], [1.0, 0.0])


@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=8), st.data())
def test_kl_nonnegative_and_zero_on_self(raw, data):
    p = np.array(raw) / sum(raw)
    q_raw = data.draw(st.lists(st.floats(0.01, 1.0), min_size=len(raw), max_size=len(raw)))
    q = np.array(q_raw) / sum(q_raw)
    assert kl_divergence(p, q) >= 0.0
    assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-12)


def test_image_tensor_validation():
    with pytest.raises(ShapeError):
        ImageTensor(2, 2, np.zeros((2, 3, 3)))
    with pytest.raises(InvalidInput):
        ImageTensor(1, 1, np.full((1, 1, 3), 1.5))
    img = ImageTensor(2, 2, np.zeros((2, 2, 3)))
    with pytest.raises(ValueError):
        img.pixels[0, 0, 0] = 1.0


def test_image_uint8_round_trip():
    u8 = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3) * 7
    assert np.array_equal(ImageTensor.from_uint8(u8).to_uint8(), u8)


def test_patch_grid_shape_checks():
    with pytest.raises(ShapeError):
        PatchGrid(3, 1, np.zeros(9))
    with pytest.raises(ShapeError):
        PatchGrid(4, 2, np.zeros(16))
    g = PatchGrid(2, 1, np.arange(4.0))
    assert g.tokens().shape == (4, 1)
    assert g == PatchGrid(2, 1, np.arange(4.0))


def test_rng_streams_depend_only_on_seed_and_path():
    a = Rng(5).split(1).split(2).generator().standard_normal(4)
    b = Rng(5).split(1).split(2).generator().standard_normal(4)
    c = Rng(5).split(2).split(1).generator().standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
