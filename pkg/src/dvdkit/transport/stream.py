"""Length-prefixed frame streams over a connected TCP socket.

The feature stream is one-way: the vision side only writes, the language
side only reads. Each frame is written with a single ``sendall`` from one
sender thread, so frames never interleave on the wire.
"""
from __future__ import annotations

import logging
import queue
import socket
import struct
import threading
from typing import Callable, Iterator

from ..errors import TransportClosed, Truncated
from .frame import HEADER_SIZE, FeatureFrame, decode_frame, encode_frame, parse_header

log = logging.getLogger(__name__)

_GENERIC_HEADER = struct.Struct("<4sHI")

DEFAULT_WINDOW = 64


def recv_exact(sock: socket.socket, n: int) -> bytes:
    """Read exactly ``n`` bytes. Returns b"" on clean EOF before any byte."""
    chunks = []
    got = 0
    while got < n:
        try:
            chunk = sock.recv(min(n - got, 1 << 20))
        except (ConnectionResetError, ConnectionAbortedError, OSError) as exc:
            raise TransportClosed(str(exc)) from exc
        if not chunk:
            if got == 0:
                return b""
            raise TransportClosed(f"connection closed after {got}/{n} bytes")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_message(sock: socket.socket) -> tuple[bytes, int, bytes] | None:
    """Read one ``magic | version | length | body`` message.

    Returns (magic, version, body) or None on clean EOF at a message boundary.
    """
    head = recv_exact(sock, _GENERIC_HEADER.size)
    if not head:
        return None
    magic, version, length = _GENERIC_HEADER.unpack(head)
    body = recv_exact(sock, length) if length else b""
    if len(body) != length:
        raise TransportClosed("connection closed mid-message")
    return magic, version, body


def pack_message(magic: bytes, version: int, body: bytes) -> bytes:
    return _GENERIC_HEADER.pack(magic, version, len(body)) + body


def configure(sock: socket.socket, nodelay: bool = True) -> None:
    if nodelay:
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)


class FeatureSender:
    """Ordered, backpressured frame writer for one connection.

    ``send`` blocks once ``window`` frames are queued but not yet written.
    """

    _STOP = object()

    def __init__(self, sock: socket.socket, window: int = DEFAULT_WINDOW, nodelay: bool = True,
                 on_error: Callable[[Exception], None] | None = None):
        configure(sock, nodelay)
        self.sock = sock
        self._q: queue.Queue = queue.Queue(maxsize=max(1, window))
        self._error: Exception | None = None
        self._on_error = on_error
        self._aborted = False
        self._thread = threading.Thread(target=self._run, name="feature-sender", daemon=True)
        self._thread.start()

    @property
    def error(self) -> Exception | None:
        return self._error

    def send(self, frame: FeatureFrame) -> None:
        if self._error is not None:
            raise TransportClosed(f"sender failed: {self._error}")
        data = encode_frame(frame)
        self._q.put(data)

    def send_raw(self, data: bytes) -> None:
        if self._error is not None:
            raise TransportClosed(f"sender failed: {self._error}")
        self._q.put(data)

    def _run(self):
        while True:
            item = self._q.get()
            if item is self._STOP:
                return
            if self._error is not None:
                continue
            try:
                self.sock.sendall(item)
            except OSError as exc:
                self._error = TransportClosed(str(exc))
                if not self._aborted:
                    log.warning("feature stream write failed: %s", exc)
                if self._on_error is not None:
                    self._on_error(self._error)

    def close(self, shutdown: bool = True) -> None:
        """Flush queued frames, then half-close the write side."""
        self._q.put(self._STOP)
        self._thread.join()
        if shutdown:
            try:
                self.sock.shutdown(socket.SHUT_WR)
            except OSError:
                pass


    def abort(self) -> None:
        """Drop the connection without flushing; queued frames are lost."""
        self._aborted = True
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.close(shutdown=False)
        self.sock.close()


def feature_stream_send(sock: socket.socket, frames, window: int = DEFAULT_WINDOW) -> None:
    """Send ``frames`` in order and half-close the connection."""
    sender = FeatureSender(sock, window=window)
    try:
        for frame in frames:
            sender.send(frame)
    finally:
        sender.close()
    if sender.error is not None:
        raise sender.error


class FeatureReceiver:
    """Iterate decoded frames from a connection in arrival order.

    Tracks which tiles of each request have arrived. When the peer goes
    away, requests that were only partially received are reported through
    ``incomplete`` (and the iterator raises TransportClosed if the stream
    ended mid-frame or ``strict`` is set and partial requests remain).
    """

    def __init__(self, sock: socket.socket, strict: bool = False):
        self.sock = sock
        self.strict = strict
        self._seen: dict[int, set[int]] = {}
        self._counts: dict[int, int] = {}

    @property
    def incomplete(self) -> list[int]:
        return sorted(rid for rid, got in self._seen.items() if len(got) < self._counts[rid])

    def is_complete(self, request_id: int) -> bool:
        return request_id in self._counts and len(self._seen[request_id]) == self._counts[request_id]

    def forget(self, request_id: int) -> None:
        self._seen.pop(request_id, None)
        self._counts.pop(request_id, None)

    def recv_frame(self) -> FeatureFrame | None:
        head = recv_exact(self.sock, HEADER_SIZE)
        if not head:
            return None
        body_len = parse_header(head)
        body = recv_exact(self.sock, body_len)
        if len(body) < body_len:
            raise TransportClosed("stream ended mid-frame")
        try:
            frame = decode_frame(head + body)
        except Truncated as exc:  # pragma: no cover - lengths already checked
            raise TransportClosed(str(exc)) from exc
        self._counts[frame.request_id] = frame.tile_count
        self._seen.setdefault(frame.request_id, set()).add(frame.tile_index)
        return frame

    def __iter__(self) -> Iterator[FeatureFrame]:
        while True:
            frame = self.recv_frame()
            if frame is None:
                if self.strict and self.incomplete:
                    raise TransportClosed(f"incomplete requests at close: {self.incomplete}")
                return
            yield frame


def feature_stream_recv(sock: socket.socket, strict: bool = False) -> Iterator[FeatureFrame]:
    return iter(FeatureReceiver(sock, strict=strict))
