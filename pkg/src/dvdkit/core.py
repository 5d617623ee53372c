"""Shared value types, seeded randomness and the two numeric primitives
(softmax and KL divergence) every other module builds on.

All internal arithmetic is float64. BF16 only exists at the wire boundary
(see :mod:`dvdkit.transport`).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, ShapeError, SupportMismatch


class CompressionRate(enum.Enum):
    """Token compression applied by pixel shuffle: 1/4 keeps 256 tokens per
    tile, 1/16 keeps 64."""

    QUARTER = 1
    SIXTEENTH = 2

    @property
    def value_ratio(self) -> float:
        return 0.25 if self is CompressionRate.QUARTER else 0.0625

    @property
    def factor(self) -> int:
        """Spatial downsampling factor per edge."""
        return 2 if self is CompressionRate.QUARTER else 4

    @property
    def tokens_per_tile(self) -> int:
        return 256 if self is CompressionRate.QUARTER else 64

    @property
    def code(self) -> int:
        return self.value

    @classmethod
    def from_code(cls, code: int) -> "CompressionRate":
        try:
            return cls(code)
        except ValueError:
            raise InvalidInput(f"unknown compression rate code {code}") from None


@dataclass(frozen=True, eq=False)
class ImageTensor:
    """Row-major H x W x C image with values in [0, 1]."""

    height: int
    width: int
    pixels: np.ndarray
    channels: int = 3

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3:
            px = px.reshape(self.height, self.width, self.channels)
        if px.shape != (self.height, self.width, self.channels):
            raise ShapeError(
                f"pixel array shape {px.shape} != {(self.height, self.width, self.channels)}"
            )
        if not np.all(np.isfinite(px)) or px.min(initial=0.0) < 0.0 or px.max(initial=0.0) > 1.0:
            raise InvalidInput("pixels must be finite and within [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_uint8(cls, data: np.ndarray) -> "ImageTensor":
        data = np.asarray(data, dtype=np.uint8)
        h, w, c = data.shape
        return cls(h, w, data.astype(np.float64) / 255.0, c)

    def to_uint8(self) -> np.ndarray:
        return np.rint(self.pixels * 255.0).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class PatchGrid:
    """A side x side lattice of tokens, each a ``dim``-vector."""

    side: int
    dim: int
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.size != self.side * self.side * self.dim:
            raise ShapeError(
                f"data has {arr.size} values, expected {self.side}*{self.side}*{self.dim}"
            )
        if self.side < 1 or self.side & (self.side - 1):
            raise ShapeError(f"side must be a power of two, got {self.side}")
        arr = arr.reshape(self.side, self.side, self.dim)
        if not np.all(np.isfinite(arr)):
            raise InvalidInput("PatchGrid values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def token_count(self) -> int:
        return self.side * self.side

    def tokens(self) -> np.ndarray:
        """Tokens as a (side*side, dim) array in row-major order."""
        return self.data.reshape(self.token_count, self.dim)

    def __eq__(self, other):
        if not isinstance(other, PatchGrid):
            return NotImplemented
        return (
            self.side == other.side
            and self.dim == other.dim
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True)
class Rng:
    """Seeded counter-based generator (Philox).

    Streams depend only on ``seed`` and the ``path`` of split keys, so two
    instances built the same way produce identical draws on any platform.
    """

    seed: int
    path: tuple[int, ...] = field(default=())

    def split(self, key: int) -> "Rng":
        return Rng(self.seed, self.path + (int(key),))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence([self.seed & (2**64 - 1), *self.path])
        return np.random.Generator(np.random.Philox(ss))


def softmax(logits) -> np.ndarray:
    """Stable softmax over the last axis."""
    x = np.asarray(logits, dtype=np.float64)
    if x.shape[-1] < 2:
        raise InvalidInput("softmax needs at least two logits")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("softmax input must be finite")
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    x = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InvalidInput("log_softmax input must be finite")
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def kl_divergence(p, q) -> float:
    """KL(p || q) = sum p * ln(p / q), with 0 * ln(0 / q) taken as 0.

    Everywhere in dvdkit the first argument is the reference distribution
    and the second the policy distribution.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeError(f"vocabulary mismatch: {p.shape} vs {q.shape}")
    mask = p > 0
    if np.any(q[mask] <= 0):
        raise SupportMismatch("q has zero mass where p is positive")
    pm = p[mask]
    return float(max(0.0, np.sum(pm * (np.log(pm) - np.log(q[mask])))))
