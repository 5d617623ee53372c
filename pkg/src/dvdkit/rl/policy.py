"""Linear-softmax toy policy with closed-form log-prob gradients."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..core import Rng, log_softmax
from ..errors import ShapeError


@dataclass(frozen=True, eq=False)
class ToyPolicy:
    """pi(y_t | x, y_<t) = softmax(weights @ [q_embed[x], t_embed[y_{t-1}], 1])."""

    weights: np.ndarray  # (vocab, q_dim + t_dim + 1)
    query_embed: np.ndarray  # (n_queries, q_dim)
    token_embed: np.ndarray  # (vocab, t_dim)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        feat = self.query_embed.shape[1] + self.token_embed.shape[1] + 1
        if w.shape != (self.token_embed.shape[0], feat):
            raise ShapeError(f"weights shape {w.shape} != {(self.token_embed.shape[0], feat)}")
        object.__setattr__(self, "weights", w)

    @classmethod
    def random(cls, rng: Rng, vocab: int = 6, n_queries: int = 4, q_dim: int = 3,
               t_dim: int = 3, scale: float = 0.5) -> "ToyPolicy":
        g = rng.generator()
        return cls(
            g.standard_normal((vocab, q_dim + t_dim + 1)) * scale,
            g.standard_normal((n_queries, q_dim)),
            g.standard_normal((vocab, t_dim)),
        )

    @property
    def vocab(self) -> int:
        return self.weights.shape[0]

    @property
    def bos(self) -> int:
        return self.vocab - 1

    def with_weights(self, weights) -> "ToyPolicy":
        return replace(self, weights=np.array(weights, dtype=np.float64))

    def contexts(self, query_id: int, sequence) -> np.ndarray:
        seq = np.asarray(sequence, dtype=np.int64)
        prev = np.concatenate(([self.bos], seq[:-1])) if seq.size else seq
        n = prev.size
        q = self.query_embed[query_id % self.query_embed.shape[0]]
        return np.hstack([np.tile(q, (n, 1)), self.token_embed[prev], np.ones((n, 1))])

    def token_logprobs(self, query_id: int, sequence) -> np.ndarray:
        seq = np.asarray(sequence, dtype=np.int64)
        lp = log_softmax(self.contexts(query_id, seq) @ self.weights.T)
        return lp[np.arange(seq.size), seq]

    def weighted_logprob_grad(self, query_id: int, sequence, coeffs) -> np.ndarray:
        """Gradient of sum_t coeffs[t] * log pi(y_t) with respect to weights."""
        seq = np.asarray(sequence, dtype=np.int64)
        h = self.contexts(query_id, seq)
        p = np.exp(log_softmax(h @ self.weights.T))
        err = -p
        err[np.arange(seq.size), seq] += 1.0
        return (err * np.asarray(coeffs, dtype=np.float64)[:, None]).T @ h

    def sequence_logprob(self, query_id: int, sequence) -> float:
        return float(self.token_logprobs(query_id, sequence).sum())
