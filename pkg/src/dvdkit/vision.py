"""Image -> tiles -> toy patch features -> pixel shuffle -> router decision.

The encoder is a seeded linear projection standing in for a ViT: it keeps
the 32x32 = 1024 token lattice per tile and nothing else.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .core import CompressionRate, ImageTensor, PatchGrid, Rng
from .errors import InvalidConfig, InvalidInput, ShapeError

GRID_SIDE = 32
DEFAULT_FEATURE_DIM = 8


@dataclass(frozen=True)
class TileSet:
    tiles: tuple[ImageTensor, ...]
    grid_rows: int
    grid_cols: int

    def __len__(self):
        return len(self.tiles)


def choose_grid(height: int, width: int, tile_size: int, max_tiles: int) -> tuple[int, int]:
    """Pick (rows, cols) with rows*cols <= max_tiles.

    Primary key: aspect-ratio distortion |log(w/h) - log(cols/rows)|.
    Then scale distortion |log(rows*cols*tile^2 / (h*w))|, then fewer tiles.
    """
    if max_tiles < 1:
        raise InvalidConfig("max_tiles must be >= 1")
    log_ar = math.log(width / height)
    log_area = math.log(height * width / (tile_size * tile_size))
    best = None
    for r in range(1, max_tiles + 1):
        for c in range(1, max_tiles // r + 1):
            key = (
                round(abs(log_ar - math.log(c / r)), 12),
                round(abs(log_area - math.log(r * c)), 12),
                r * c,
                r,
            )
            if best is None or key < best[0]:
                best = (key, (r, c))
    return best[1]


def resize_bilinear(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centres (identity at equal size)."""
    h, w = pixels.shape[:2]
    if (h, w) == (out_h, out_w):
        return pixels.copy()

    def axis(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, wy = axis(h, out_h)
    x0, x1, wx = axis(w, out_w)
    wy = wy[:, None, None]
    wx = wx[None, :, None]
    top = pixels[y0][:, x0] * (1 - wx) + pixels[y0][:, x1] * wx
    bot = pixels[y1][:, x0] * (1 - wx) + pixels[y1][:, x1] * wx
    return np.clip(top * (1 - wy) + bot * wy, 0.0, 1.0)


def tile_image(img: ImageTensor, tile_size: int = 448, max_tiles: int = 12) -> TileSet:
    if max_tiles < 1:
        raise InvalidConfig("max_tiles must be >= 1")
    if tile_size <= 0:
        raise InvalidConfig("tile_size must be positive")
    if img.height < tile_size or img.width < tile_size:
        raise InvalidInput(f"image {img.height}x{img.width} smaller than tile {tile_size}")
    rows, cols = choose_grid(img.height, img.width, tile_size, max_tiles)
    resized = resize_bilinear(img.pixels, rows * tile_size, cols * tile_size)
    tiles = []
    for r in range(rows):
        for c in range(cols):
            block = resized[r * tile_size : (r + 1) * tile_size, c * tile_size : (c + 1) * tile_size]
            tiles.append(ImageTensor(tile_size, tile_size, block, img.channels))
    return TileSet(tuple(tiles), rows, cols)


@functools.lru_cache(maxsize=32)
def _projection(seed: int, path: tuple, in_dim: int, dim: int) -> np.ndarray:
    g = Rng(seed, path).generator()
    mat = g.standard_normal((in_dim, dim)) / math.sqrt(in_dim)
    mat.setflags(write=False)
    return mat


def encode_tile(tile: ImageTensor, seed: Rng, dim: int = DEFAULT_FEATURE_DIM) -> PatchGrid:
    """Project each of the 32x32 sub-patches to a ``dim``-vector (no bias)."""
    if tile.height != tile.width:
        raise ShapeError("tile must be square")
    side = tile.height
    if side % GRID_SIDE:
        raise ShapeError(f"tile side {side} not divisible by {GRID_SIDE}")
    p = side // GRID_SIDE
    patches = (
        tile.pixels.reshape(GRID_SIDE, p, GRID_SIDE, p, tile.channels)
        .transpose(0, 2, 1, 3, 4)
        .reshape(GRID_SIDE * GRID_SIDE, p * p * tile.channels)
    )
    mat = _projection(seed.seed, seed.path, p * p * tile.channels, dim)
    return PatchGrid(GRID_SIDE, dim, patches @ mat)


def pixel_shuffle(grid: PatchGrid, rate: CompressionRate) -> PatchGrid:
    """Space-to-depth: each f x f block of tokens becomes one token."""
    f = rate.factor
    if grid.side % f:
        raise ShapeError(f"side {grid.side} not divisible by {f}")
    s = grid.side // f
    out = grid.data.reshape(s, f, s, f, grid.dim).transpose(0, 2, 1, 3, 4)
    return PatchGrid(s, grid.dim * f * f, out.reshape(s, s, f * f * grid.dim))


def pixel_unshuffle(grid: PatchGrid, rate: CompressionRate) -> PatchGrid:
    f = rate.factor
    if grid.dim % (f * f):
        raise ShapeError(f"dim {grid.dim} not divisible by {f * f}")
    d = grid.dim // (f * f)
    s = grid.side
    out = grid.data.reshape(s, s, f, f, d).transpose(0, 2, 1, 3, 4)
    return PatchGrid(s * f, d, out.reshape(s * f, s * f, d))


def mlp_project(grid: PatchGrid, rate: CompressionRate) -> np.ndarray:
    """Fixed projector after pixel shuffle: average the f*f concatenated
    sub-tokens back to the encoder dim. Returns (token_count, dim)."""
    f2 = rate.factor ** 2
    if grid.dim % f2:
        raise ShapeError(f"dim {grid.dim} not divisible by {f2}")
    d = grid.dim // f2
    return grid.tokens().reshape(grid.token_count, f2, d).mean(axis=1)


@dataclass(frozen=True, eq=False)
class RouterParams:
    """Logistic router weights; the last entry is the bias."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).ravel()
        if w.size < 2 or not np.all(np.isfinite(w)):
            raise InvalidInput("router weights must be finite with at least one feature")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.weights.size - 1

    def score(self, features) -> np.ndarray | float:
        x = np.asarray(features, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ShapeError(f"router expects dim {self.dim}, got {x.shape[-1]}")
        z = x @ self.weights[:-1] + self.weights[-1]
        return 0.5 * (1.0 + np.tanh(0.5 * z))

    @classmethod
    def zeros(cls, dim: int) -> "RouterParams":
        return cls(np.zeros(dim + 1))

    @classmethod
    def pinned(cls, dim: int, rate: CompressionRate) -> "RouterParams":
        """A router that always picks ``rate`` for any threshold in (0.01, 0.99)."""
        w = np.zeros(dim + 1)
        w[-1] = 50.0 if rate is CompressionRate.QUARTER else -50.0
        return cls(w)

    def __eq__(self, other):
        return isinstance(other, RouterParams) and np.array_equal(self.weights, other.weights)


@dataclass(frozen=True)
class RoutedTile:
    rate: CompressionRate
    tokens: PatchGrid
    router_score: float


def pooled_feature(grid: PatchGrid) -> np.ndarray:
    return grid.tokens().mean(axis=0)


def route_tile(grid: PatchGrid, params: RouterParams, threshold: float = 0.5) -> RoutedTile:
    if grid.dim != params.dim:
        raise ShapeError(f"grid dim {grid.dim} != router dim {params.dim}")
    if not 0.0 < threshold < 1.0:
        raise InvalidInput("threshold must lie in (0, 1)")
    score = float(params.score(pooled_feature(grid)))
    rate = CompressionRate.QUARTER if score >= threshold else CompressionRate.SIXTEENTH
    return RoutedTile(rate, pixel_shuffle(grid, rate), score)


def process_tile(
    tile: ImageTensor,
    encoder: Rng,
    dim: int = DEFAULT_FEATURE_DIM,
    router: RouterParams | None = None,
    threshold: float = 0.5,
) -> tuple[CompressionRate, np.ndarray, float | None]:
    """Full vision path for one tile: encode, route (optional), shuffle, project.

    Without a router the rate is fixed at 1/4 (256 tokens).
    """
    grid = encode_tile(tile, encoder, dim)
    if router is None:
        rate, shuffled, score = CompressionRate.QUARTER, pixel_shuffle(grid, CompressionRate.QUARTER), None
    else:
        routed = route_tile(grid, router, threshold)
        rate, shuffled, score = routed.rate, routed.tokens, routed.router_score
    return rate, mlp_project(shuffled, rate), score
