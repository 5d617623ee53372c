"""Central finite-difference checks of every analytic gradient in the kit.

The numerical side only ever evaluates the scalar loss, so it is
independent of the gradient code it checks.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..core import CompressionRate, Rng
from ..vico import ToyLM, vico_loss, vico_loss_grad
from . import gspo, losses
from .policy import ToyPolicy

H = 1e-5
TOLERANCE = 1e-4


def central_difference(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = H) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        orig = x.flat[i]
        x.flat[i] = orig + h
        fp = f(x)
        x.flat[i] = orig - h
        fm = f(x)
        x.flat[i] = orig
        grad.flat[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||), 0 when both vanish."""
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


@dataclass
class CheckResult:
    name: str
    fixtures: int
    max_rel_error: float
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return self.fixtures > 0 and self.max_rel_error <= self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name:<6} fixtures={self.fixtures} max_rel_err={self.max_rel_error:.3e} tol={self.tolerance:.0e}"


def _random_seq(g, vocab, lo=2, hi=6):
    return [int(t) for t in g.integers(0, vocab - 1, size=int(g.integers(lo, hi + 1)))]


def _pair(g, policy: ToyPolicy, ref: ToyPolicy) -> losses.PreferencePair:
    c = _random_seq(g, policy.vocab)
    r = _random_seq(g, policy.vocab)
    while r == c:
        r = _random_seq(g, policy.vocab)
    q = int(g.integers(0, policy.query_embed.shape[0]))
    return losses.PreferencePair(
        c, r, ref_logprob_chosen=ref.sequence_logprob(q, c),
        ref_logprob_rejected=ref.sequence_logprob(q, r), query_id=q,
    ).with_policy(policy)


def _check(policy: ToyPolicy, loss_fn, grad) -> float:
    def f(w):
        return loss_fn(policy.with_weights(w))

    return relative_error(grad, central_difference(f, policy.weights))


def check_ntp(fx: int, g) -> float:
    policy = ToyPolicy.random(Rng(int(g.integers(2**32))))
    samples = []
    for sid in range(int(g.integers(1, 4))):
        seq = _random_seq(g, policy.vocab, 3, 8)
        mask = g.random(len(seq)) < 0.6
        mask[-1] = True
        samples.append((sid, seq, mask))

    def loss(p):
        per = []
        for sid, seq, mask in samples:
            per.extend((sid, v) for v in losses.ntp_loss(p, seq, mask))
        return losses.square_average_reweight(per)

    sizes = {sid: int(m.sum()) for sid, _, m in samples}
    ids = [sid for sid, _, m in samples for _ in range(int(m.sum()))]
    w = losses.square_average_weights(ids, sizes)
    grad = np.zeros_like(policy.weights)
    k = 0
    for sid, seq, mask in samples:
        n = int(mask.sum())
        grad += losses.ntp_loss_grad(policy, seq, mask, w[k : k + n])
        k += n
    return _check(policy, loss, grad)


def check_dpo(fx: int, g) -> float:
    policy = ToyPolicy.random(Rng(int(g.integers(2**32))))
    ref = ToyPolicy.random(Rng(int(g.integers(2**32))))
    pair = _pair(g, policy, ref)
    beta = float(g.uniform(0.05, 2.0))
    grad = losses.dpo_loss_grad(policy, pair, beta)
    return _check(policy, lambda p: losses.dpo_loss(pair.with_policy(p), beta), grad)


def check_bco(fx: int, g) -> float:
    policy = ToyPolicy.random(Rng(int(g.integers(2**32))))
    ref = ToyPolicy.random(Rng(int(g.integers(2**32))))
    pair = _pair(g, policy, ref)
    beta = float(g.uniform(0.05, 2.0))
    delta = float(g.normal(0, 0.5))
    w = losses.MpoWeights(0.0, 1.0, 0.0)
    grad = losses.mpo_loss_grad([pair], w, policy, beta, delta)
    return _check(policy, lambda p: losses.mpo_loss([pair], w, p, beta, delta), grad)


def check_mpo(fx: int, g) -> float:
    policy = ToyPolicy.random(Rng(int(g.integers(2**32))))
    ref = ToyPolicy.random(Rng(int(g.integers(2**32))))
    pairs = [_pair(g, policy, ref) for _ in range(int(g.integers(1, 4)))]
    beta = float(g.uniform(0.05, 2.0))
    w = losses.MpoWeights(*g.uniform(0.1, 1.5, size=3))
    # the BCO shift is a detached running statistic: freeze it at the current policy
    delta = losses.bco_delta(pairs, beta)
    grad = losses.mpo_loss_grad(pairs, w, policy, beta, delta)
    return _check(policy, lambda p: losses.mpo_loss(pairs, w, p, beta, delta), grad)


def _random_lm(g, vocab=6, embed_dim=3) -> ToyLM:
    return ToyLM(g.standard_normal((vocab, 2 + embed_dim)) * 0.7, g.standard_normal((vocab, embed_dim)))


def check_vico(fx: int, g) -> float:
    ref = _random_lm(g)
    policy = ref.with_weights(ref.weights + g.standard_normal(ref.weights.shape) * 0.3)
    vq = g.standard_normal((16, 4))
    vc = g.standard_normal((4, 4)) * 0.5
    tokens = _random_seq(g, ref.vocab, 1, 5)
    rate = CompressionRate.QUARTER if fx % 2 else CompressionRate.SIXTEENTH
    grad = vico_loss_grad(ref, policy, tokens, vq, vc, rate)

    def f(w):
        return vico_loss(ref, policy.with_weights(w), tokens, vq, vc, rate)

    return relative_error(grad, central_difference(f, policy.weights))


def check_gspo(fx: int, g) -> float:
    policy = ToyPolicy.random(Rng(int(g.integers(2**32))))
    old = policy.with_weights(policy.weights + g.standard_normal(policy.weights.shape) * 0.15)
    groups = []
    for _ in range(int(g.integers(1, 3))):
        q = int(g.integers(0, policy.query_embed.shape[0]))
        size = int(g.integers(2, 5))
        responses = [_random_seq(g, policy.vocab) for _ in range(size)]
        rewards = g.normal(size=size)
        groups.append(gspo.RolloutGroup.from_policy(q, responses, rewards, old))
    eps = float(g.uniform(0.1, 0.4))
    _, grad = gspo.gspo_objective(groups, policy, clip_eps=eps)
    return _check(policy, lambda p: gspo.gspo_objective(groups, p, clip_eps=eps)[0], grad)


CHECKS = {
    "NTP": check_ntp,
    "DPO": check_dpo,
    "BCO": check_bco,
    "MPO": check_mpo,
    "ViCO": check_vico,
    "GSPO": check_gspo,
}


def run_suite(n_fixtures: int = 20, seed: int = 0, names=None) -> list[CheckResult]:
    results = []
    for idx, (name, fn) in enumerate(CHECKS.items()):
        if names and name not in names:
            continue
        g = Rng(seed).split(idx).generator()
        errs = [fn(fx, g) for fx in range(n_fixtures)]
        results.append(CheckResult(name, n_fixtures, max(errs) if errs else float("inf")))
    return results
