"""A linear-softmax language model conditioned on visual tokens.

The visual context is a single statistic of the fused tokens (their RMS
spread around the mean), so it reacts to how much spatial detail survives
compression. Next-token logits are ``weights @ [spread / scale, 1, embed[prev]]``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..core import PatchGrid, log_softmax, softmax
from ..errors import ShapeError


def as_tokens(x) -> np.ndarray:
    if isinstance(x, PatchGrid):
        return x.tokens()
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError("visual tokens must be a (count, dim) array or a PatchGrid")
    return arr


def token_spread(tokens) -> float:
    """Root-mean-square distance of tokens from their centroid."""
    t = as_tokens(tokens)
    return float(np.sqrt(np.mean(np.sum((t - t.mean(axis=0)) ** 2, axis=1))))


@dataclass(frozen=True, eq=False)
class ToyLM:
    weights: np.ndarray  # (vocab, 2 + embed_dim)
    embed: np.ndarray  # (vocab, embed_dim)
    scale: float = 1.0
    bos: int | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        e = np.asarray(self.embed, dtype=np.float64)
        if w.ndim != 2 or e.ndim != 2 or w.shape[0] != e.shape[0] or w.shape[1] != 2 + e.shape[1]:
            raise ShapeError(f"weights {w.shape} incompatible with embed {e.shape}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "embed", e)
        if self.bos is None:
            object.__setattr__(self, "bos", w.shape[0] - 1)

    @property
    def vocab(self) -> int:
        return self.weights.shape[0]

    def with_weights(self, weights: np.ndarray) -> "ToyLM":
        return replace(self, weights=np.array(weights, dtype=np.float64))

    def contexts(self, visual, response) -> np.ndarray:
        """Feature rows h_i for predicting response[i] (teacher forcing)."""
        s = token_spread(visual) / self.scale
        prev = [self.bos, *list(response)[:-1]]
        n = len(prev)
        h = np.empty((n, self.weights.shape[1]))
        h[:, 0] = s
        h[:, 1] = 1.0
        h[:, 2:] = self.embed[np.asarray(prev, dtype=np.int64)]
        return h

    def logits(self, visual, response) -> np.ndarray:
        return self.contexts(visual, response) @ self.weights.T

    def distributions(self, visual, response) -> np.ndarray:
        return softmax(self.logits(visual, response))

    def log_probs(self, visual, response) -> np.ndarray:
        return log_softmax(self.logits(visual, response))

    def greedy(self, visual, length: int) -> list[int]:
        out: list[int] = []
        s = token_spread(visual) / self.scale
        prev = self.bos
        for _ in range(length):
            h = np.concatenate(([s, 1.0], self.embed[prev]))
            prev = int(np.argmax(self.weights @ h))
            out.append(prev)
        return out
