"""FeatureFrame wire format (version 1). Byte layout is in docs/wire.md."""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..core import CompressionRate
from ..errors import BadMagic, InconsistentShape, InvalidFrame, Truncated, UnsupportedVersion

FRAME_MAGIC = b"DVDF"
FRAME_VERSION = 1

_HEADER = struct.Struct("<4sHI")
_FIELDS = struct.Struct("<QIIBII")
HEADER_SIZE = _HEADER.size  # 10
FIXED_FIELDS_SIZE = _FIELDS.size  # 25

# Upper bound on body size accepted from the wire (one 1024-token tile at dim 4096).
MAX_BODY = FIXED_FIELDS_SIZE + 2 * 1024 * 4096


@dataclass(frozen=True, eq=False)
class FeatureFrame:
    """Visual features of one tile, BF16-encoded."""

    request_id: int
    tile_index: int
    tile_count: int
    rate: CompressionRate
    token_count: int
    dim: int
    payload: np.ndarray  # uint16 BF16 bit patterns, token_count * dim

    def __post_init__(self):
        object.__setattr__(self, "payload", np.ascontiguousarray(self.payload, dtype=np.uint16).ravel())

    def validate(self) -> None:
        if not 0 <= self.request_id < 2**64:
            raise InvalidFrame("request_id out of range")
        if not 0 <= self.tile_index < self.tile_count < 2**32:
            raise InvalidFrame("need 0 <= tile_index < tile_count")
        if not isinstance(self.rate, CompressionRate):
            raise InvalidFrame("rate must be a CompressionRate")
        if self.token_count != self.rate.tokens_per_tile:
            raise InvalidFrame(f"token_count {self.token_count} does not match {self.rate.name}")
        if not 0 < self.dim < 2**32:
            raise InvalidFrame("dim must be positive")
        if self.payload.size != self.token_count * self.dim:
            raise InvalidFrame("payload size != token_count * dim")

    def features(self) -> np.ndarray:
        """Decoded float64 features, shape (token_count, dim)."""
        from .bf16 import bf16_decode_array

        return bf16_decode_array(self.payload).reshape(self.token_count, self.dim)

    def __eq__(self, other):
        if not isinstance(other, FeatureFrame):
            return NotImplemented
        return (
            self.request_id == other.request_id
            and self.tile_index == other.tile_index
            and self.tile_count == other.tile_count
            and self.rate is other.rate
            and self.token_count == other.token_count
            and self.dim == other.dim
            and np.array_equal(self.payload, other.payload)
        )


def encode_frame(frame: FeatureFrame) -> bytes:
    frame.validate()
    body_len = FIXED_FIELDS_SIZE + 2 * frame.payload.size
    fields = _FIELDS.pack(
        frame.request_id,
        frame.tile_index,
        frame.tile_count,
        frame.rate.code,
        frame.token_count,
        frame.dim,
    )
    return b"".join(
        (
            _HEADER.pack(FRAME_MAGIC, FRAME_VERSION, body_len),
            fields,
            frame.payload.astype("<u2", copy=False).tobytes(),
        )
    )


def parse_header(buf) -> int:
    """Validate a frame header and return the body length."""
    if len(buf) < HEADER_SIZE:
        raise Truncated(f"header needs {HEADER_SIZE} bytes, got {len(buf)}")
    magic, version, body_len = _HEADER.unpack_from(buf, 0)
    if magic != FRAME_MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != FRAME_VERSION:
        raise UnsupportedVersion(f"frame version {version}")
    if body_len < FIXED_FIELDS_SIZE or body_len > MAX_BODY:
        raise InconsistentShape(f"implausible body length {body_len}")
    return body_len


def decode_frame(data) -> FeatureFrame:
    buf = memoryview(bytes(data) if not isinstance(data, (bytes, bytearray, memoryview)) else data)
    body_len = parse_header(buf)
    if len(buf) < HEADER_SIZE + body_len:
        raise Truncated(f"frame needs {HEADER_SIZE + body_len} bytes, got {len(buf)}")
    request_id, tile_index, tile_count, rate_code, token_count, dim = _FIELDS.unpack_from(
        buf, HEADER_SIZE
    )
    try:
        rate = CompressionRate(rate_code)
    except ValueError:
        raise InconsistentShape(f"unknown rate code {rate_code}") from None
    if token_count != rate.tokens_per_tile:
        raise InconsistentShape(f"token_count {token_count} inconsistent with {rate.name}")
    if tile_index >= tile_count:
        raise InconsistentShape(f"tile_index {tile_index} >= tile_count {tile_count}")
    if dim == 0 or body_len != FIXED_FIELDS_SIZE + 2 * token_count * dim:
        raise InconsistentShape("body length does not match token_count * dim")
    start = HEADER_SIZE + FIXED_FIELDS_SIZE
    payload = np.frombuffer(buf[start : HEADER_SIZE + body_len], dtype="<u2").astype(np.uint16)
    return FeatureFrame(request_id, tile_index, tile_count, rate, token_count, dim, payload)
