"""Offline-stage objectives: next-token loss with square-average weighting,
DPO preference loss, BCO quality loss and their weighted MPO combination."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInput, NoLossTokens
from .policy import ToyPolicy

DEFAULT_BETA = 0.1


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def ntp_loss(policy: ToyPolicy, sequence, loss_mask, query_id: int = 0) -> np.ndarray:
    """-log p(x_i | x_<i) at every masked (response) position."""
    mask = np.asarray(loss_mask, dtype=bool)
    if mask.shape != (len(sequence),):
        raise InvalidInput("loss_mask must match the sequence length")
    if not mask.any():
        raise NoLossTokens("no response tokens in loss mask")
    return -policy.token_logprobs(query_id, sequence)[mask]


def ntp_loss_grad(policy: ToyPolicy, sequence, loss_mask, coeffs, query_id: int = 0) -> np.ndarray:
    """Gradient of sum_i coeffs[i] * L_i over the masked positions."""
    mask = np.asarray(loss_mask, dtype=bool)
    full = np.zeros(len(sequence))
    full[mask] = coeffs
    return -policy.weighted_logprob_grad(query_id, sequence, full)


def square_average_weights(sample_ids, sample_sizes=None) -> np.ndarray:
    """Normalised per-token weights N^-0.5 / sum_j N_j^-0.5."""
    ids = list(sample_ids)
    sizes = dict(sample_sizes) if sample_sizes is not None else Counter(ids)
    w = np.array([sizes[s] ** -0.5 for s in ids], dtype=np.float64)
    if np.any(~np.isfinite(w)):
        raise InvalidInput("every sample needs at least one loss token")
    return w / w.sum()


def square_average_reweight(per_token, sample_sizes=None) -> float:
    """Combine (sample_id, L_i) pairs from a batch into one scalar loss."""
    per_token = list(per_token)
    if not per_token:
        raise NoLossTokens("empty batch")
    ids = [sid for sid, _ in per_token]
    losses = np.array([loss for _, loss in per_token], dtype=np.float64)
    return float(square_average_weights(ids, sample_sizes) @ losses)


@dataclass(frozen=True)
class PreferencePair:
    chosen: tuple
    rejected: tuple
    policy_logprob_chosen: float = 0.0
    policy_logprob_rejected: float = 0.0
    ref_logprob_chosen: float = 0.0
    ref_logprob_rejected: float = 0.0
    query_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "chosen", tuple(int(t) for t in self.chosen))
        object.__setattr__(self, "rejected", tuple(int(t) for t in self.rejected))
        if self.chosen == self.rejected:
            raise InvalidInput("chosen and rejected responses must differ")
        for v in (self.policy_logprob_chosen, self.policy_logprob_rejected,
                  self.ref_logprob_chosen, self.ref_logprob_rejected):
            if v > 0:
                raise InvalidInput("log-probabilities must be <= 0")

    def with_policy(self, policy: ToyPolicy) -> "PreferencePair":
        """Copy with policy log-probs recomputed from ``policy``."""
        return PreferencePair(
            self.chosen,
            self.rejected,
            policy.sequence_logprob(self.query_id, self.chosen),
            policy.sequence_logprob(self.query_id, self.rejected),
            self.ref_logprob_chosen,
            self.ref_logprob_rejected,
            self.query_id,
        )

    @property
    def margin(self) -> float:
        return (self.policy_logprob_chosen - self.ref_logprob_chosen) - (
            self.policy_logprob_rejected - self.ref_logprob_rejected
        )


def _check_beta(beta):
    if not beta > 0:
        raise InvalidInput("beta must be positive")


def dpo_loss(pair: PreferencePair, beta: float = DEFAULT_BETA) -> float:
    _check_beta(beta)
    return float(-_log_sigmoid(beta * pair.margin))


def dpo_loss_grad(policy: ToyPolicy, pair: PreferencePair, beta: float = DEFAULT_BETA) -> np.ndarray:
    _check_beta(beta)
    pair = pair.with_policy(policy)
    dmargin = -beta * _sigmoid(-beta * pair.margin)
    g_c = policy.weighted_logprob_grad(pair.query_id, pair.chosen, np.ones(len(pair.chosen)))
    g_r = policy.weighted_logprob_grad(pair.query_id, pair.rejected, np.ones(len(pair.rejected)))
    return dmargin * (g_c - g_r)


def bco_loss(logratio: float, good: bool, beta: float = DEFAULT_BETA, delta: float = 0.0) -> float:
    """Binary classifier loss on a single response's reward beta*logratio - delta."""
    _check_beta(beta)
    z = beta * logratio - delta
    return float(-_log_sigmoid(z if good else -z))


def bco_dloss(logratio: float, good: bool, beta: float = DEFAULT_BETA, delta: float = 0.0) -> float:
    z = beta * logratio - delta
    return -beta * _sigmoid(-z) if good else beta * _sigmoid(z)


def bco_delta(pairs, beta: float = DEFAULT_BETA) -> float:
    """Reward shift: mean of beta*logratio over all responses in the batch.

    Treated as a constant (no gradient flows through it).
    """
    vals = []
    for p in pairs:
        vals.append(beta * (p.policy_logprob_chosen - p.ref_logprob_chosen))
        vals.append(beta * (p.policy_logprob_rejected - p.ref_logprob_rejected))
    return float(np.mean(vals)) if vals else 0.0


@dataclass(frozen=True)
class MpoWeights:
    w_p: float = 1.0
    w_q: float = 1.0
    w_g: float = 1.0

    def __post_init__(self):
        ws = (self.w_p, self.w_q, self.w_g)
        if min(ws) < 0 or max(ws) <= 0:
            raise InvalidInput("MPO weights must be non-negative with at least one positive")

    def scaled(self, c: float) -> "MpoWeights":
        return MpoWeights(self.w_p * c, self.w_q * c, self.w_g * c)


def mpo_components(pairs, policy: ToyPolicy | None = None, beta: float = DEFAULT_BETA,
                   delta: float | None = None) -> tuple[float, float, float]:
    """(preference, quality, generation) losses for a batch of pairs.

    With ``policy`` the policy log-probs are recomputed; otherwise the
    stored values are used and the generation loss needs per-token data,
    so it is reported as 0.
    """
    pairs = list(pairs)
    if not pairs:
        raise InvalidInput("empty preference batch")
    if policy is not None:
        pairs = [p.with_policy(policy) for p in pairs]
    if delta is None:
        delta = bco_delta(pairs, beta)
    l_p = float(np.mean([dpo_loss(p, beta) for p in pairs]))
    q_terms = []
    for p in pairs:
        q_terms.append(bco_loss(p.policy_logprob_chosen - p.ref_logprob_chosen, True, beta, delta))
        q_terms.append(bco_loss(p.policy_logprob_rejected - p.ref_logprob_rejected, False, beta, delta))
    l_q = float(np.mean(q_terms))
    l_g = 0.0
    if policy is not None:
        per_token = []
        for i, p in enumerate(pairs):
            losses = ntp_loss(policy, p.chosen, np.ones(len(p.chosen), bool), p.query_id)
            per_token.extend((i, float(v)) for v in losses)
        l_g = square_average_reweight(per_token)
    return l_p, l_q, l_g


def mpo_combine(components, weights: MpoWeights) -> float:
    l_p, l_q, l_g = components
    return weights.w_p * l_p + weights.w_q * l_q + weights.w_g * l_g


def mpo_loss(pairs, weights: MpoWeights = MpoWeights(), policy: ToyPolicy | None = None,
             beta: float = DEFAULT_BETA, delta: float | None = None) -> float:
    return mpo_combine(mpo_components(pairs, policy, beta, delta), weights)


def mpo_loss_grad(pairs, weights: MpoWeights, policy: ToyPolicy, beta: float = DEFAULT_BETA,
                  delta: float | None = None) -> np.ndarray:
    pairs = [p.with_policy(policy) for p in pairs]
    if delta is None:
        delta = bco_delta(pairs, beta)
    n = len(pairs)
    grad = np.zeros_like(policy.weights)
    sizes = {i: len(p.chosen) for i, p in enumerate(pairs)}
    norm = sum(sizes[i] * sizes[i] ** -0.5 for i in sizes)
    for i, p in enumerate(pairs):
        ones_c = np.ones(len(p.chosen))
        g_c = policy.weighted_logprob_grad(p.query_id, p.chosen, ones_c)
        g_r = policy.weighted_logprob_grad(p.query_id, p.rejected, np.ones(len(p.rejected)))
        if weights.w_p:
            grad += weights.w_p / n * (-beta * _sigmoid(-beta * p.margin)) * (g_c - g_r)
        if weights.w_q:
            lr_c = p.policy_logprob_chosen - p.ref_logprob_chosen
            lr_r = p.policy_logprob_rejected - p.ref_logprob_rejected
            grad += weights.w_q / (2 * n) * (
                bco_dloss(lr_c, True, beta, delta) * g_c + bco_dloss(lr_r, False, beta, delta) * g_r
            )
        if weights.w_g:
            grad += weights.w_g * ntp_loss_grad(
                policy, p.chosen, ones_c.astype(bool), ones_c * sizes[i] ** -0.5 / norm, p.query_id
            )
    return grad
