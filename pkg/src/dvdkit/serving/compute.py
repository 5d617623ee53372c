"""Shared vision/language compute used by every topology.

Keeping one implementation of fusion, checksum and toy decode is what makes
monolith and split deployments produce bit-identical tokens.
"""
from __future__ import annotations

import functools
import hashlib
import struct
import time

import numpy as np

from .. import kernels
from ..core import CompressionRate, ImageTensor, Rng
from ..task import TaskSpec, answer, reference_lm
from ..transport import bf16_decode_array, bf16_encode_array
from ..vico import load_router
from ..vision import RouterParams, process_tile, tile_image
from .config import ServingConfig

_RID = struct.Struct("<QQ")


def now_ns() -> int:
    return time.monotonic_ns()


def task_spec(cfg: ServingConfig) -> TaskSpec:
    return TaskSpec(cfg.tile_size, cfg.feature_dim, cfg.encoder_seed)


@functools.lru_cache(maxsize=8)
def _router_for(router: str, checkpoint: str, dim: int, tile_size: int, encoder_seed: int,
                seed: int) -> RouterParams:
    if checkpoint:
        return load_router(checkpoint)
    if router == "pinned":
        return RouterParams.pinned(dim, CompressionRate.QUARTER)
    if router == "task":
        from ..task import fit_task_router

        return fit_task_router(seed=seed, spec=TaskSpec(tile_size, dim, encoder_seed))
    return load_router(router)


def resolve_router(cfg: ServingConfig) -> RouterParams | None:
    """Router for dvd_vir; None (fixed 1/4 rate) for other topologies."""
    if cfg.topology != "dvd_vir":
        return None
    return _router_for(cfg.router, cfg.router_checkpoint, cfg.feature_dim, cfg.tile_size,
                       cfg.encoder_seed, cfg.seed)


def request_fields(meta: dict) -> tuple[int, list[int], int]:
    """(request_id, prompt, decode_len) from a SUBMIT header, validated."""
    rid = int(meta["request_id"])
    prompt = [int(t) for t in meta["prompt"]]
    decode_len = int(meta["decode_len"])
    if not prompt:
        raise ValueError("prompt must be non-empty")
    if decode_len < 1:
        raise ValueError("decode_len must be >= 1")
    if not 0 <= rid < 2**64:
        raise ValueError("request_id must fit in 64 bits")
    return rid, prompt, decode_len


def tiles_of(pixels_u8: np.ndarray, cfg: ServingConfig):
    return tile_image(ImageTensor.from_uint8(pixels_u8), cfg.tile_size, cfg.max_tiles).tiles


def vision_tile(tile: ImageTensor, cfg: ServingConfig, router: RouterParams | None):
    """Encode/route/shuffle/project one tile and burn its vision budget.

    Returns (rate, bf16 payload bits, token_count).
    """
    rate, tokens, _ = process_tile(tile, Rng(cfg.encoder_seed), cfg.feature_dim, router,
                                   cfg.router_threshold)
    payload = bf16_encode_array(tokens)
    kernels.burn(cfg.profile.vision_work_per_tile, cfg.backend)
    return rate, payload, tokens.shape[0]


def fused_checksum(prompt, tiles) -> bytes:
    """8-byte digest over prompt ids and, per tile in index order, the rate
    code and BF16 payload. ``tiles`` is a sequence of (rate, payload)."""
    h = hashlib.blake2b(digest_size=8)
    h.update(np.asarray(prompt, dtype="<u4").tobytes())
    for rate, payload in tiles:
        h.update(bytes([rate.code]))
        h.update(np.asarray(payload, dtype="<u2").tobytes())
    return h.digest()


def decode_token(request_id: int, step: int, checksum: bytes, vocab: int) -> int:
    digest = hashlib.blake2b(_RID.pack(request_id, step) + checksum, digest_size=8).digest()
    return int.from_bytes(digest, "little") % vocab


def language_compute(request_id: int, prompt, decode_len: int, tiles, cfg: ServingConfig):
    """Fuse visual tokens with the prompt, prefill, decode.

    ``tiles``: list of (rate, payload, dim) in tile order. Returns a dict
    with output tokens, per-tile answers, the fused position count and
    prefill/decode spans.
    """
    lm = reference_lm(task_spec(cfg))
    answers = []
    n_visual = 0
    for rate, payload, dim in tiles:
        feats = bf16_decode_array(payload).reshape(-1, dim)
        n_visual += feats.shape[0]
        answers.append(answer(lm, feats))
    fused = n_visual + len(prompt)
    checksum = fused_checksum(prompt, [(r, p) for r, p, _ in tiles])
    t0 = now_ns()
    kernels.burn(fused * cfg.profile.prefill_work_per_token, cfg.backend)
    t1 = now_ns()
    out = []
    for step in range(decode_len):
        kernels.burn(cfg.profile.decode_work_per_token, cfg.backend)
        out.append(decode_token(request_id, step, checksum, cfg.vocab))
    t2 = now_ns()
    return {
        "output_tokens": out,
        "answers": answers,
        "fused_positions": fused,
        "visual_tokens": n_visual,
        "prefill_done": t1,
        "decode_done": t2,
        "spans": [["prefill", t0, t1], ["decode", t1, t2]],
    }
