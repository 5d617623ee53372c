"""Online-stage pieces: group-normalised advantages, the sequence-level
(geometric mean) importance ratio, the clipped GSPO objective, rollout
filtering by query accuracy, and Best-of-N selection."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import EmptyResponse, InvalidInput, ShapeError
from .policy import ToyPolicy

DEFAULT_CLIP_EPS = 0.2
DEFAULT_EPS_STD = 1e-8


@dataclass(frozen=True)
class RolloutGroup:
    query_id: int
    responses: tuple
    rewards: np.ndarray
    old_logprobs: tuple

    def __post_init__(self):
        responses = tuple(tuple(int(t) for t in r) for r in self.responses)
        rewards = np.asarray(self.rewards, dtype=np.float64)
        old = tuple(np.asarray(lp, dtype=np.float64) for lp in self.old_logprobs)
        if len(responses) < 2:
            raise InvalidInput("a rollout group needs G >= 2 responses")
        if rewards.shape != (len(responses),) or not np.all(np.isfinite(rewards)):
            raise InvalidInput("need one finite reward per response")
        if len(old) != len(responses) or any(o.shape != (len(r),) for o, r in zip(old, responses)):
            raise ShapeError("old_logprobs must match response lengths")
        object.__setattr__(self, "responses", responses)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "old_logprobs", old)

    @property
    def size(self) -> int:
        return len(self.responses)

    @classmethod
    def from_policy(cls, query_id: int, responses, rewards, snapshot: ToyPolicy) -> "RolloutGroup":
        old = [snapshot.token_logprobs(query_id, r) for r in responses]
        return cls(query_id, responses, rewards, old)


def gspo_advantages(group_or_rewards, eps_std: float = DEFAULT_EPS_STD) -> np.ndarray:
    """(r - mean) / (std + eps_std) with population std; zeros if all rewards tie."""
    rewards = group_or_rewards.rewards if isinstance(group_or_rewards, RolloutGroup) else group_or_rewards
    r = np.asarray(rewards, dtype=np.float64)
    if r.size < 2:
        raise InvalidInput("need at least two rewards")
    if np.all(r == r[0]):
        return np.zeros_like(r)
    centred = r - r.mean()
    centred -= centred.mean()  # second pass absorbs rounding in the first mean
    std = math.sqrt(float(np.mean(centred * centred)))
    if std == 0.0:
        return np.zeros_like(r)
    return centred / (std + eps_std)


def gspo_ratio(new_logprobs, old_logprobs, length: int | None = None) -> float:
    """exp(mean_t(log pi_new - log pi_old)) for one response."""
    new = np.asarray(new_logprobs, dtype=np.float64)
    old = np.asarray(old_logprobs, dtype=np.float64)
    if new.shape != old.shape:
        raise ShapeError("log-prob arrays differ in length")
    n = new.size if length is None else length
    if n == 0 or new.size == 0:
        raise EmptyResponse("response has no tokens")
    if n != new.size:
        raise ShapeError(f"length {n} != {new.size} log-probs")
    return math.exp(float(np.sum(new - old)) / n)


def clipped_term(s: float, adv: float, clip_eps: float = DEFAULT_CLIP_EPS) -> float:
    return min(s * adv, min(max(s, 1.0 - clip_eps), 1.0 + clip_eps) * adv)


def gspo_objective(groups, policy: ToyPolicy, old_snapshot: ToyPolicy | None = None,
                   clip_eps: float = DEFAULT_CLIP_EPS, eps_std: float = DEFAULT_EPS_STD):
    """Return (loss, gradient) where loss is the negated clipped objective.

    Old log-probs come from ``old_snapshot`` when given, otherwise from the
    groups themselves. No reference-model KL penalty is applied.
    """
    if not 0.0 < clip_eps < 1.0:
        raise InvalidInput("clip_eps must lie in (0, 1)")
    groups = list(groups)
    if not groups:
        raise InvalidInput("no rollout groups")
    total = 0.0
    grad = np.zeros_like(policy.weights)
    for group in groups:
        adv = gspo_advantages(group, eps_std)
        g = group.size
        for i, resp in enumerate(group.responses):
            if len(resp) == 0:
                raise EmptyResponse("response has no tokens")
            new = policy.token_logprobs(group.query_id, resp)
            old = (old_snapshot.token_logprobs(group.query_id, resp)
                   if old_snapshot is not None else group.old_logprobs[i])
            if old.shape != new.shape:
                raise ShapeError("old/new log-prob lengths differ")
            s = gspo_ratio(new, old)
            total += clipped_term(s, adv[i], clip_eps) / g
            if s * adv[i] <= min(max(s, 1.0 - clip_eps), 1.0 + clip_eps) * adv[i]:
                # unclipped branch is active: d(s*A) = A * s * mean_t grad log pi
                coeff = adv[i] * s / len(resp) / g
                grad += coeff * policy.weighted_logprob_grad(group.query_id, resp, np.ones(len(resp)))
    n = len(groups)
    return -total / n, -grad / n


def query_accuracy(rewards, threshold: float = 0.5) -> float:
    return float(np.mean(np.asarray(rewards, dtype=np.float64) >= threshold))


def filter_rollouts(queries, low: float = 0.2, high: float = 0.8, key=None) -> list:
    """Keep queries whose accuracy lies in [low, high] (bounds inclusive).

    ``queries`` may be plain accuracies or arbitrary items with ``key``
    extracting the accuracy.
    """
    kept = []
    for q in queries:
        acc = float(q if key is None else key(q))
        if not 0.0 <= acc <= 1.0:
            raise InvalidInput(f"accuracy {acc} outside [0, 1]")
        if low <= acc <= high:
            kept.append(q)
    return kept


def select_best_of_n(candidates, scores) -> int:
    """Index of the highest score; the lowest index wins ties."""
    scores = list(scores)
    if not scores or len(candidates) != len(scores):
        raise InvalidInput("need one score per candidate and at least one candidate")
    return int(np.argmax(np.asarray(scores, dtype=np.float64)))
