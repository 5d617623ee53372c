import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dvdkit.core import CompressionRate, ImageTensor, PatchGrid, Rng
from dvdkit.errors import InvalidInput, ShapeError
from dvdkit.vision import (
    GRID_SIDE,
    RouterParams,
    choose_grid,
    encode_tile,
    mlp_project,
    pixel_shuffle,
    pixel_unshuffle,
    process_tile,
    resize_bilinear,
    route_tile,
    tile_image,
)

Q, S = CompressionRate.QUARTER, CompressionRate.SIXTEENTH


def _img(h, w, seed=0):
    return ImageTensor(h, w, np.random.default_rng(seed).random((h, w, 3)))


@pytest.mark.parametrize("h,w,grid", [(448, 448, (1, 1)), (896, 448, (2, 1)), (1344, 1344, (3, 3))])
def test_choose_grid_examples(h, w, grid):
    assert choose_grid(h, w, 448, 12) == grid


def test_tile_counts():
    assert len(tile_image(_img(448, 448)).tiles) == 1
    assert len(tile_image(_img(896, 448)).tiles) == 2
    assert len(tile_image(_img(1344, 1344)).tiles) == 9


@given(st.integers(16, 4000), st.integers(16, 4000), st.integers(1, 12))
def test_choose_grid_respects_budget(h, w, m):
    r, c = choose_grid(h, w, 448, m)
    assert 1 <= r * c <= m


def test_exact_multiple_tiles_are_crops():
    img = _img(896, 448, seed=3)
    ts = tile_image(img, 448)
    np.testing.assert_array_equal(ts.tiles[0].pixels, img.pixels[:448])
    np.testing.assert_array_equal(ts.tiles[1].pixels, img.pixels[448:])


def test_resize_identity_and_constant():
    px = np.random.default_rng(1).random((5, 7, 3))
    np.testing.assert_array_equal(resize_bilinear(px, 5, 7), px)
    out = resize_bilinear(np.full((3, 3, 3), 0.25), 8, 5)
    np.testing.assert_allclose(out, 0.25)


def test_encode_tile_examples():
    enc = Rng(7)
    grid = encode_tile(_img(448, 448), enc, 8)
    assert (grid.side, grid.token_count) == (GRID_SIDE, 1024)
    zero = encode_tile(ImageTensor(448, 448, np.zeros((448, 448, 3))), enc, 8)
    assert not zero.data.any()
    assert encode_tile(_img(448, 448), Rng(7), 8) == grid


def test_encode_tile_rejects_wrong_size():
    with pytest.raises(ShapeError):
        encode_tile(_img(440, 448), Rng(0))


def test_pixel_shuffle_shapes():
    g = PatchGrid(32, 3, np.random.default_rng(0).random(32 * 32 * 3))
    q, s = pixel_shuffle(g, Q), pixel_shuffle(g, S)
    assert (q.side, q.token_count, q.dim) == (16, 256, 12)
    assert (s.side, s.token_count, s.dim) == (8, 64, 48)


def test_pixel_shuffle_hand_trace():
    g = PatchGrid(4, 1, np.arange(16.0))
    out = pixel_shuffle(g, Q)
    np.testing.assert_array_equal(out.data[0, 0], [0, 1, 4, 5])
    np.testing.assert_array_equal(out.data[1, 1], [10, 11, 14, 15])


def _shuffle_oracle(data, f):
    # explicit loops: token (i, j) gathers the f x f block row-major
    s, _, d = data.shape
    out = np.empty((s // f, s // f, f * f * d))
    for i in range(s // f):
        for j in range(s // f):
            out[i, j] = np.concatenate([data[i * f + a, j * f + b] for a in range(f) for b in range(f)])
    return out


@given(st.sampled_from([4, 8, 16, 32]), st.integers(1, 4), st.sampled_from([Q, S]), st.integers(0, 2**31))
def test_pixel_shuffle_matches_loop_oracle_and_inverts(side, dim, rate, seed):
    if side < rate.factor:
        return
    data = np.random.default_rng(seed).standard_normal((side, side, dim))
    g = PatchGrid(side, dim, data)
    out = pixel_shuffle(g, rate)
    np.testing.assert_array_equal(out.data, _shuffle_oracle(data, rate.factor))
    assert pixel_unshuffle(out, rate) == g


def test_unshuffle_single_token():
    g = PatchGrid(2, 1, np.array([1.0, 2.0, 3.0, 4.0]))
    one = pixel_shuffle(g, Q)
    assert one.side == 1
    assert pixel_unshuffle(one, Q) == g


def test_shuffle_rejects_too_small_grid():
    with pytest.raises(ShapeError):
        pixel_shuffle(PatchGrid(2, 1, np.zeros(4)), S)


def test_mlp_project_averages_sub_tokens():
    g = PatchGrid(4, 2, np.random.default_rng(2).random(32))
    proj = mlp_project(pixel_shuffle(g, Q), Q)
    assert proj.shape == (4, 2)
    np.testing.assert_allclose(proj[0], g.data[:2, :2].reshape(4, 2).mean(axis=0))


def test_route_tile_examples():
    g = PatchGrid(32, 2, np.random.default_rng(0).random(32 * 32 * 2))
    r = route_tile(g, RouterParams.zeros(2), 0.5)
    assert r.router_score == 0.5 and r.rate is Q
    # bias only: sigma(z) = 0.9 and 0.1
    hi = RouterParams(np.array([0.0, 0.0, np.log(9.0)]))
    lo = RouterParams(np.array([0.0, 0.0, -np.log(9.0)]))
    assert route_tile(g, hi).router_score == pytest.approx(0.9)
    assert route_tile(g, hi).tokens.token_count == 256
    assert route_tile(g, lo).rate is S and route_tile(g, lo).tokens.token_count == 64


def test_route_tile_errors():
    g = PatchGrid(32, 2, np.zeros(32 * 32 * 2))
    with pytest.raises(ShapeError):
        route_tile(g, RouterParams.zeros(3))
    with pytest.raises(InvalidInput):
        route_tile(g, RouterParams.zeros(2), threshold=1.0)


def test_pinned_router_and_process_tile():
    tile = _img(448, 448, 4)
    for rate in (Q, S):
        got, tokens, _ = process_tile(tile, Rng(1), 4, RouterParams.pinned(4, rate))
        assert got is rate and tokens.shape == (rate.tokens_per_tile, 4)
    got, tokens, score = process_tile(tile, Rng(1), 4)
    assert got is Q and score is None and tokens.shape == (256, 4)
