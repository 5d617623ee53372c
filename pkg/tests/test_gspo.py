import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dvdkit.core import Rng
from dvdkit.errors import EmptyResponse, InvalidInput
from dvdkit.rl import (
    RolloutGroup,
    ToyPolicy,
    clipped_term,
    filter_rollouts,
    gspo_advantages,
    gspo_objective,
    gspo_ratio,
    select_best_of_n,
)


def test_advantage_examples():
    np.testing.assert_allclose(gspo_advantages([1.0, 0.0], eps_std=0.0), [1.0, -1.0])
    np.testing.assert_array_equal(gspo_advantages([3.0, 3.0, 3.0]), [0.0, 0.0, 0.0])
    np.testing.assert_allclose(gspo_advantages([1, 0, 1, 0], eps_std=0.0), [1, -1, 1, -1])


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=16))
def test_advantages_normalised(rewards):
    r = np.array(rewards)
    a = gspo_advantages(r, eps_std=0.0)
    assert abs(a.mean()) <= 1e-12 * max(1.0, np.abs(a).max())
    if r.std() > 1e-6:
        assert a.std() == pytest.approx(1.0, abs=1e-9)


def test_ratio_examples():
    lp = np.array([-0.3, -1.2, -0.7])
    assert gspo_ratio(lp, lp) == 1.0
    assert gspo_ratio([0.2, -0.2], [0.0, 0.0]) == pytest.approx(1.0)
    assert gspo_ratio([math.log(2)] * 2, [0.0, 0.0], 2) == pytest.approx(2.0)
    with pytest.raises(EmptyResponse):
        gspo_ratio([], [])


@given(st.lists(st.floats(-5, 0), min_size=1, max_size=10), st.randoms())
def test_ratio_permutation_invariant(new, rnd):
    old = [x - 0.1 * i for i, x in enumerate(new)]
    perm = list(range(len(new)))
    rnd.shuffle(perm)
    a = gspo_ratio(new, old)
    b = gspo_ratio([new[i] for i in perm], [old[i] for i in perm])
    assert a == pytest.approx(b, rel=1e-12)


def test_clip_examples():
    assert clipped_term(1.5, 1.0, 0.2) == pytest.approx(1.2)
    assert clipped_term(0.5, -1.0, 0.2) == pytest.approx(-0.8)


@given(st.floats(0, 10), st.floats(-5, 5), st.floats(0.01, 0.9))
def test_clip_upper_bound(s, adv, eps):
    assert clipped_term(s, adv, eps) <= (1 + eps) * abs(adv) + 1e-12


@given(st.floats(0, 10), st.floats(0, 5), st.floats(0.01, 0.9))
def test_clip_magnitude_bound_for_nonnegative_advantage(s, adv, eps):
    assert abs(clipped_term(s, adv, eps)) <= (1 + eps) * adv + 1e-12


def test_pessimistic_branch_is_unclipped_for_negative_advantage():
    # min() keeps s*A when A < 0 and s > 1 + eps, so the magnitude can exceed (1+eps)|A|
    assert clipped_term(2.0, -1.0, 0.5) == -2.0


def _groups(pol, n=3, g=4):
    gen = Rng(11).generator()
    out = []
    for q in range(n):
        resp = [tuple(gen.integers(0, pol.vocab, gen.integers(1, 5))) for _ in range(g)]
        rewards = gen.random(g)
        out.append(RolloutGroup.from_policy(q, resp, rewards, pol))
    return out


def test_objective_zero_at_snapshot():
    pol = ToyPolicy.random(Rng(1))
    loss, _ = gspo_objective(_groups(pol), pol)
    assert loss == pytest.approx(0.0, abs=1e-12)


def test_objective_uses_snapshot():
    pol = ToyPolicy.random(Rng(1))
    other = ToyPolicy.random(Rng(2))
    groups = _groups(pol)
    a, _ = gspo_objective(groups, other)
    b, _ = gspo_objective(groups, other, old_snapshot=pol)
    assert a == pytest.approx(b)


def test_group_validation():
    with pytest.raises(InvalidInput):
        RolloutGroup(0, [(1,)], [1.0], [[-0.1]])
    with pytest.raises(InvalidInput):
        gspo_objective([], ToyPolicy.random(Rng(0)))


def test_filter_examples():
    assert filter_rollouts([0.1, 0.2, 0.5, 0.8, 0.9]) == [0.2, 0.5, 0.8]
    assert filter_rollouts([0.0] * 4) == []
    assert filter_rollouts([0.5] * 3) == [0.5] * 3
    items = [("a", 0.19), ("b", 0.2)]
    assert filter_rollouts(items, key=lambda t: t[1]) == [("b", 0.2)]
    with pytest.raises(InvalidInput):
        filter_rollouts([1.5])


def test_best_of_n():
    assert select_best_of_n("abc", [0.1, 0.9, 0.4]) == 1
    assert select_best_of_n(["x"], [0.3]) == 0
    assert select_best_of_n("ab", [0.5, 0.5]) == 0
    with pytest.raises(InvalidInput):
        select_best_of_n([], [])


# scores on a 1/8 grid so both transforms stay strictly increasing in floating point
@given(st.lists(st.integers(-80, 80).map(lambda k: k / 8), min_size=1, max_size=8))
def test_best_of_n_monotone_invariant(scores):
    idx = select_best_of_n(scores, scores)
    assert select_best_of_n(scores, [math.exp(s / 4) for s in scores]) == idx
    assert select_best_of_n(scores, [3 * s + 1 for s in scores]) == idx
