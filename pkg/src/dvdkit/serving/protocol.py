"""Control messages between the load client and the servers.

Every message uses the same ``magic | u16 version | u32 length | body``
header as feature frames. Bodies are JSON, except SUBMIT which carries raw
8-bit pixels after its JSON part::

    SUBMIT  b"DVDQ"  u32 json_len | json | pixels (h*w*c bytes)
    VISDONE b"DVDV"  json   vision server -> client, per request
    RESULT  b"DVDA"  json   language/monolith server -> client, per request
    CANCEL  b"DVDC"  json   client -> language server
"""
from __future__ import annotations

import json
import struct
import threading

import numpy as np

from ..errors import InvalidInput
from ..transport.stream import pack_message

SUBMIT = b"DVDQ"
VISDONE = b"DVDV"
RESULT = b"DVDA"
CANCEL = b"DVDC"
VERSION = 1

_JLEN = struct.Struct("<I")


def encode_submit(meta: dict, pixels: np.ndarray | None) -> bytes:
    body_json = json.dumps(meta, separators=(",", ":")).encode()
    pix = b"" if pixels is None else np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()
    return pack_message(SUBMIT, VERSION, _JLEN.pack(len(body_json)) + body_json + pix)


def decode_submit(body: bytes) -> tuple[dict, np.ndarray | None]:
    if len(body) < _JLEN.size:
        raise InvalidInput("submit message too short")
    (n,) = _JLEN.unpack_from(body)
    meta = json.loads(body[_JLEN.size : _JLEN.size + n])
    rest = body[_JLEN.size + n :]
    h, w, c = meta.get("height", 0), meta.get("width", 0), meta.get("channels", 3)
    if h == 0 or w == 0:
        return meta, None
    if len(rest) != h * w * c:
        raise InvalidInput(f"pixel payload {len(rest)} bytes, expected {h * w * c}")
    return meta, np.frombuffer(rest, dtype=np.uint8).reshape(h, w, c)


def peek_request_id(body: bytes) -> int | None:
    """Best-effort request id from a SUBMIT body that failed to decode."""
    try:
        (n,) = _JLEN.unpack_from(body)
        return int(json.loads(body[_JLEN.size : _JLEN.size + n])["request_id"])
    except (struct.error, ValueError, KeyError, TypeError):
        return None


def encode_json(magic: bytes, obj: dict) -> bytes:
    return pack_message(magic, VERSION, json.dumps(obj, separators=(",", ":")).encode())


class Connection:
    """A socket plus a write lock so several threads can reply on it."""

    def __init__(self, sock):
        self.sock = sock
        self._lock = threading.Lock()
        self.closed = False

    def send(self, data: bytes) -> bool:
        with self._lock:
            if self.closed:
                return False
            try:
                self.sock.sendall(data)
                return True
            except OSError:
                self.closed = True
                return False

    def close(self):
        with self._lock:
            self.closed = True
            try:
                self.sock.close()
            except OSError:
                pass
