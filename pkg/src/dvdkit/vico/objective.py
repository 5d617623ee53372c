"""Visual consistency objective: mean per-token KL between a frozen
reference (always fed the 1/4 tokens) and the policy fed tokens at the
sampled compression rate."""
from __future__ import annotations

import numpy as np

from ..core import CompressionRate, Rng
from ..errors import InvalidInput, ShapeError
from .lm import ToyLM


def _policy_visual(image_tokens_q, image_tokens_c, xi: CompressionRate):
    return image_tokens_q if xi is CompressionRate.QUARTER else image_tokens_c


def _check(ref: ToyLM, policy: ToyLM, tokens) -> None:
    if ref.vocab != policy.vocab:
        raise ShapeError(f"vocabulary mismatch: {ref.vocab} vs {policy.vocab}")
    if len(tokens) < 1:
        raise InvalidInput("need at least one response token")


def _step_kl(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    # Softmax outputs are strictly positive unless they underflow; treat 0*log0 as 0.
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
    return np.maximum(terms.sum(axis=1), 0.0)


def vico_loss(ref: ToyLM, policy: ToyLM, tokens, image_tokens_q, image_tokens_c,
              xi: CompressionRate) -> float:
    _check(ref, policy, tokens)
    p = ref.distributions(image_tokens_q, tokens)
    q = policy.distributions(_policy_visual(image_tokens_q, image_tokens_c, xi), tokens)
    return float(_step_kl(p, q).mean())


def vico_loss_grad(ref: ToyLM, policy: ToyLM, tokens, image_tokens_q, image_tokens_c,
                   xi: CompressionRate) -> np.ndarray:
    """d vico_loss / d policy.weights.

    For KL(p || softmax(z)) the logit gradient is softmax(z) - p.
    """
    _check(ref, policy, tokens)
    visual = _policy_visual(image_tokens_q, image_tokens_c, xi)
    p = ref.distributions(image_tokens_q, tokens)
    h = policy.contexts(visual, tokens)
    q = policy.distributions(visual, tokens)
    return (q - p).T @ h / len(tokens)


def vico_expected_loss(ref: ToyLM, policy: ToyLM, sample, rng: Rng | None = None,
                       n_draws: int = 16, exhaustive: bool = False) -> float:
    """Expectation over xi ~ Uniform{1/4, 1/16}.

    ``sample`` is (tokens, image_tokens_q, image_tokens_c). With
    ``exhaustive`` both branches are evaluated and averaged exactly;
    otherwise ``n_draws`` rates are drawn from ``rng``.
    """
    tokens, vq, vc = sample
    branch = {
        rate: vico_loss(ref, policy, tokens, vq, vc, rate)
        for rate in (CompressionRate.QUARTER, CompressionRate.SIXTEENTH)
    }
    if exhaustive:
        return 0.5 * (branch[CompressionRate.QUARTER] + branch[CompressionRate.SIXTEENTH])
    if rng is None:
        raise InvalidInput("sampling mode needs an Rng")
    draws = rng.generator().integers(0, 2, size=n_draws)
    picks = [CompressionRate.QUARTER if d == 0 else CompressionRate.SIXTEENTH for d in draws]
    return float(np.mean([branch[r] for r in picks]))


def consistency_train(ref: ToyLM, policy: ToyLM, samples, lr: float = 0.5, steps: int = 20) -> ToyLM:
    """Full-batch gradient descent of the exhaustive objective on the policy head."""
    w = policy.weights.copy()
    current = policy
    for _ in range(steps):
        grad = np.zeros_like(w)
        for tokens, vq, vc in samples:
            for rate in (CompressionRate.QUARTER, CompressionRate.SIXTEENTH):
                grad += 0.5 * vico_loss_grad(ref, current, tokens, vq, vc, rate)
        w = w - lr * grad / max(1, len(samples))
        current = policy.with_weights(w)
    return current
