"""Synthetic labelled task used to train and evaluate the resolution router.

Each tile is either *flat* (a tinted colour, class 0) or *textured* (a grey
checkerboard whose cells span 2x2 encoder tokens, class 1..3 by contrast).
1/4 compression keeps the checkerboard intact; 1/16 averages it away, so
only textured tiles lose their answer under heavy compression. The tint
makes content type visible in mean-pooled features, which is all the
router sees.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .core import CompressionRate, ImageTensor, Rng
from .vico import (
    LossRatioWindow,
    ToyLM,
    consistency_train,
    label_patches,
    train_router,
    vico_loss,
)
from .vision import (
    DEFAULT_FEATURE_DIM,
    GRID_SIDE,
    RouterParams,
    encode_tile,
    mlp_project,
    pixel_shuffle,
    pooled_feature,
)

CONTRASTS = (0.0, 0.1, 0.2, 0.3)
N_CLASSES = len(CONTRASTS)
VOCAB = 16
EMBED_DIM = 4
RESPONSE_LEN = 4
TEMPERATURE = 1.0 / 30.0
TINT = np.array([1.0, 0.55, 0.25])
NOISE = 0.02


@dataclass(frozen=True)
class TaskSpec:
    tile_size: int = 448
    dim: int = DEFAULT_FEATURE_DIM
    encoder_seed: int = 7
    flat_fraction: float = 0.5

    @property
    def encoder(self) -> Rng:
        return Rng(self.encoder_seed)


def make_tile(g: np.random.Generator, label: int, tile_size: int = 448, noise: float = NOISE) -> np.ndarray:
    """Pixels (tile, tile, 3) in [0, 1], quantised to 8 bits."""
    if label == 0:
        v = g.uniform(0.3, 0.9)
        base = np.broadcast_to(v * TINT, (tile_size, tile_size, 3)).copy()
    else:
        b = g.uniform(0.4, 0.6)
        c = CONTRASTS[label]
        cell = 2 * (tile_size // GRID_SIDE)
        idx = np.arange(tile_size) // cell
        sign = np.where((idx[:, None] + idx[None, :]) % 2 == 0, 1.0, -1.0)
        base = np.repeat((b + c * sign)[:, :, None], 3, axis=2)
    if noise:
        base = base + g.uniform(-noise, noise, size=base.shape)
    return np.rint(np.clip(base, 0.0, 1.0) * 255.0) / 255.0


def sample_labels(g: np.random.Generator, n: int, flat_fraction: float = 0.5) -> list[int]:
    flat = g.random(n) < flat_fraction
    return [0 if f else int(g.integers(1, N_CLASSES)) for f in flat]


def make_image(rng: Rng, rows: int, cols: int, tile_size: int = 448,
               flat_fraction: float = 0.5) -> tuple[ImageTensor, list[int]]:
    """Compose a rows x cols image of task tiles; returns (image, tile labels)."""
    g = rng.generator()
    labels = sample_labels(g, rows * cols, flat_fraction)
    px = np.empty((rows * tile_size, cols * tile_size, 3))
    for k, lab in enumerate(labels):
        r, c = divmod(k, cols)
        px[r * tile_size : (r + 1) * tile_size, c * tile_size : (c + 1) * tile_size] = make_tile(
            g, lab, tile_size
        )
    return ImageTensor(rows * tile_size, cols * tile_size, px), labels


def fused_tokens(tile: ImageTensor, spec: TaskSpec, rate: CompressionRate):
    grid = encode_tile(tile, spec.encoder, spec.dim)
    return grid, mlp_project(pixel_shuffle(grid, rate), rate)


@functools.lru_cache(maxsize=8)
def reference_lm(spec: TaskSpec = TaskSpec()) -> ToyLM:
    """Frozen answer model: nearest-centroid over RMS token spread.

    Centroids are calibrated on noiseless prototype tiles, so class k sits
    at spread k/3 after normalisation.
    """
    from .vico import token_spread

    g = Rng(spec.encoder_seed).split(1).generator()
    spreads = []
    for label in range(N_CLASSES):
        tile = ImageTensor(spec.tile_size, spec.tile_size,
                           make_tile(Rng(label).generator(), label, spec.tile_size, noise=0.0))
        _, q = fused_tokens(tile, spec, CompressionRate.QUARTER)
        spreads.append(token_spread(q))
    scale = spreads[-1]
    mu = np.array(spreads) / scale
    weights = np.zeros((VOCAB, 2 + EMBED_DIM))
    weights[:N_CLASSES, 0] = 2.0 * mu / TEMPERATURE
    weights[:N_CLASSES, 1] = -(mu ** 2) / TEMPERATURE
    weights[N_CLASSES:, 1] = -4.0
    weights[:, 2:] = g.standard_normal((VOCAB, EMBED_DIM)) * 0.1
    embed = g.standard_normal((VOCAB, EMBED_DIM))
    return ToyLM(weights, embed, scale=scale)


def answer(lm: ToyLM, tokens) -> int:
    return lm.greedy(tokens, 1)[0]


@dataclass
class RouterDataset:
    features: list[np.ndarray]
    labels: list[int | None]
    tile_labels: list[int]
    loss_pairs: list[tuple[float, float]]

    def pairs(self) -> list[tuple[np.ndarray, int]]:
        return [(f, lab) for f, lab in zip(self.features, self.labels) if lab is not None]


def build_router_dataset(n_tiles: int = 96, seed: int = 0, spec: TaskSpec = TaskSpec(),
                         k: float = 50.0, consistency_steps: int = 10) -> RouterDataset:
    """Consistency-train a policy, then label tiles by their loss ratio."""
    g = Rng(seed).split(2).generator()
    ref = reference_lm(spec)
    tile_labels = sample_labels(g, n_tiles, spec.flat_fraction)
    features, samples = [], []
    for lab in tile_labels:
        tile = ImageTensor(spec.tile_size, spec.tile_size, make_tile(g, lab, spec.tile_size))
        grid, q = fused_tokens(tile, spec, CompressionRate.QUARTER)
        c = mlp_project(pixel_shuffle(grid, CompressionRate.SIXTEENTH), CompressionRate.SIXTEENTH)
        features.append(pooled_feature(grid))
        samples.append((ref.greedy(q, RESPONSE_LEN), q, c))
    policy = consistency_train(ref, ref, samples, lr=0.05, steps=consistency_steps)
    pairs = [
        (vico_loss(ref, policy, y, q, c, CompressionRate.SIXTEENTH),
         vico_loss(ref, policy, y, q, c, CompressionRate.QUARTER))
        for y, q, c in samples
    ]
    labels = label_patches(pairs, LossRatioWindow(k=k))
    return RouterDataset(features, labels, tile_labels, pairs)


def fit_task_router(n_tiles: int = 96, seed: int = 0, spec: TaskSpec = TaskSpec(),
                    epochs: int = 500, lr: float = 0.5) -> RouterParams:
    return train_router(build_router_dataset(n_tiles, seed, spec).pairs(), epochs=epochs, lr=lr)
