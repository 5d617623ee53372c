import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dvdkit.core import CompressionRate, Rng
from dvdkit.errors import DegenerateDenominator, EmptyWindow, InvalidInput, ShapeError
from dvdkit.vico import (
    LossRatioWindow,
    ToyLM,
    assign_label,
    consistency_train,
    label_patches,
    load_router,
    loss_ratio,
    percentile_threshold,
    router_accuracy,
    save_router,
    train_router,
    vico_expected_loss,
    vico_loss,
)
from dvdkit.vision import RouterParams

Q, S = CompressionRate.QUARTER, CompressionRate.SIXTEENTH


def bias_lm(logits):
    v = len(logits)
    w = np.zeros((v, 3))
    w[:, 1] = logits
    return ToyLM(w, np.zeros((v, 1)))


def random_lm(seed, vocab=5, e=2):
    g = np.random.default_rng(seed)
    return ToyLM(g.standard_normal((vocab, 2 + e)), g.standard_normal((vocab, e)))


def visual(seed, n=16, d=3):
    return np.random.default_rng(seed).standard_normal((n, d))


def test_vico_identical_conditionals_zero():
    lm = random_lm(0)
    vq, vc = visual(1), visual(2, n=4)
    assert vico_loss(lm, lm, [1, 2, 0], vq, vc, Q) == 0.0


def test_vico_hand_value():
    ref, pol = bias_lm([math.log(3), 0.0]), bias_lm([0.0, 0.0])
    v = visual(0)
    assert vico_loss(ref, pol, [0], v, v, Q) == pytest.approx(0.130812, abs=1e-6)


def test_vico_mean_over_steps():
    ref, pol = bias_lm([math.log(3), 0.0]), bias_lm([0.0, 0.0])
    v = visual(0)
    # logits ignore the previous token, so every step has the same KL
    assert vico_loss(ref, pol, [0, 1, 0, 1], v, v, S) == pytest.approx(vico_loss(ref, pol, [0, 1], v, v, S))


@given(st.integers(0, 10_000))
def test_vico_nonnegative(seed):
    ref, pol = random_lm(seed), random_lm(seed + 1)
    for xi in (Q, S):
        assert vico_loss(ref, pol, [0, 3, 2], visual(seed), visual(seed + 7, n=4), xi) >= 0.0


def test_vico_vocab_mismatch():
    with pytest.raises(ShapeError):
        vico_loss(random_lm(0, vocab=4), random_lm(1, vocab=5), [0], visual(0), visual(1), Q)


def test_expected_loss_modes():
    ref, pol = random_lm(3), random_lm(4)
    sample = ([1, 2], visual(5), visual(6, n=4))
    lq, ls = (vico_loss(ref, pol, *sample, xi) for xi in (Q, S))
    assert vico_expected_loss(ref, pol, sample, exhaustive=True) == pytest.approx((lq + ls) / 2)
    a = vico_expected_loss(ref, pol, sample, Rng(9))
    assert a == vico_expected_loss(ref, pol, sample, Rng(9))
    assert min(lq, ls) <= a <= max(lq, ls)
    assert vico_expected_loss(ref, ref, sample, exhaustive=True) >= 0.0
    with pytest.raises(InvalidInput):
        vico_expected_loss(ref, pol, sample)


def test_consistency_training_reduces_loss():
    ref = random_lm(10)
    samples = [([1, 2, 3], visual(k), visual(k + 50, n=4)) for k in range(6)]
    before = np.mean([vico_expected_loss(ref, ref, s, exhaustive=True) for s in samples])
    pol = consistency_train(ref, ref, samples, lr=0.5, steps=40)
    after = np.mean([vico_expected_loss(ref, pol, s, exhaustive=True) for s in samples])
    assert after < before


@pytest.mark.parametrize("l16,l4,r", [(0.9, 0.6, 1.5), (0.6, 0.6, 1.0), (0.0, 0.5, 0.0)])
def test_loss_ratio_examples(l16, l4, r):
    assert loss_ratio(l16, l4) == pytest.approx(r)


def test_loss_ratio_errors():
    with pytest.raises(DegenerateDenominator):
        loss_ratio(1.0, 1e-9)
    with pytest.raises(InvalidInput):
        loss_ratio(-1.0, 1.0)


@pytest.mark.parametrize("values,k,tau", [([1.0, 1.1, 1.2, 1.3], 50, 1.1), ([2.0], 37, 2.0), ([1, 2, 3, 4, 5], 100, 5)])
def test_percentile_examples(values, k, tau):
    assert percentile_threshold(LossRatioWindow(k=k, values=values)) == tau


def test_percentile_empty_and_capacity():
    with pytest.raises(EmptyWindow):
        percentile_threshold(LossRatioWindow())
    w = LossRatioWindow(capacity=3, values=[5.0, 1.0, 2.0, 3.0])
    assert sorted(w.snapshot()) == [1.0, 2.0, 3.0]


def test_assign_label_examples():
    assert assign_label(1.5, 1.2) == 1
    assert assign_label(1.0, 1.2) == 0
    assert assign_label(1.2, 1.2) == 1


@given(st.floats(0, 1e3), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(0.01, 100))
def test_label_scale_invariant(l16, l4, c, tau):
    a = assign_label(loss_ratio(l16, l4), tau)
    r_scaled = loss_ratio(c * l16, c * l4)
    if math.isclose(r_scaled, tau, rel_tol=1e-12):
        return
    assert assign_label(r_scaled, tau) == a


@given(st.sets(st.floats(0.01, 100), min_size=1, max_size=200))
def test_balanced_labels(values):
    w = LossRatioWindow(values=values)
    tau = percentile_threshold(w)
    ones = sum(assign_label(r, tau) for r in values)
    assert abs(ones - len(values) / 2) <= 1


def test_label_patches_skips_degenerate():
    pairs = [(0.9, 0.6), (0.5, 0.0), (0.2, 0.4), (1.0, 0.5)]
    labels = label_patches(pairs)
    assert labels[1] is None
    # ratios 1.5, 0.5, 2.0 -> tau = 1.5
    assert [labels[0], labels[2], labels[3]] == [1, 0, 1]


def test_label_patches_streaming_uses_running_window():
    labels = label_patches([(1.0, 1.0), (3.0, 1.0), (2.0, 1.0)], streaming=True)
    assert labels == [1, 1, 1]


def separable_fixture():
    g = np.random.default_rng(42)
    x1 = g.normal([1.5, 1.0], 0.4, size=(10, 2))
    x0 = g.normal([-1.0, -1.5], 0.4, size=(10, 2))
    return [(x, 1) for x in x1] + [(x, 0) for x in x0]


def linearly_separable_by_sweep(data, n_angles=720):
    x = np.array([f for f, _ in data])
    y = np.array([lab for _, lab in data])
    for theta in np.linspace(0, 2 * np.pi, n_angles, endpoint=False):
        proj = x @ np.array([np.cos(theta), np.sin(theta)])
        if proj[y == 1].min() > proj[y == 0].max():
            return True
    return False


def test_router_separable_fixture():
    data = separable_fixture()
    assert linearly_separable_by_sweep(data)
    params = train_router(data, epochs=500, lr=0.5)
    assert router_accuracy(params, data) == 1.0


def test_router_degenerate_and_zero_epochs():
    data = [(np.array([float(i), 1.0]), 1) for i in range(5)]
    params = train_router(data, epochs=200)
    assert router_accuracy(params, data) == 1.0
    init = RouterParams(np.array([0.3, -0.2, 0.1]))
    assert train_router(data, epochs=0, init=init) == init


def test_router_loss_decreases():
    hist = []
    train_router(separable_fixture(), epochs=50, history=hist)
    assert len(hist) == 51 and hist[-1] < hist[0]
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))


def test_checkpoint_round_trip(tmp_path):
    p = RouterParams(np.array([0.5, -1.25, 3.0]))
    path = tmp_path / "r.ckpt"
    save_router(p, path)
    assert path.read_bytes()[:4] == b"VIRC"
    assert len(path.read_bytes()) == 10 + 8 * 3
    assert load_router(path) == p
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(InvalidInput):
        load_router(path)
