"""Vision server: tiles, encodes, routes and ships features downstream."""
from __future__ import annotations

import logging
import queue
import socket
import threading
import time
from concurrent.futures import ThreadPoolExecutor

from ..errors import TransportClosed
from ..transport import FeatureFrame, FeatureSender
from ..transport.stream import read_message
from . import protocol
from .base import TcpServer
from .compute import now_ns, request_fields, resolve_router, tiles_of, vision_tile
from .config import ServingConfig

log = logging.getLogger(__name__)


class _Pending:
    __slots__ = ("request_id", "tile_count", "done", "tokens", "spans", "failed", "conn", "start")

    def __init__(self, request_id, tile_count, conn):
        self.request_id = request_id
        self.tile_count = tile_count
        self.done = 0
        self.tokens = 0
        self.spans = []
        self.failed = None
        self.conn = conn
        self.start = now_ns()


class VisionServer(TcpServer):
    """Accepts SUBMIT messages carrying images; emits one FeatureFrame per
    tile to the language server as soon as that tile is finished."""

    name = "vision"

    def __init__(self, cfg: ServingConfig, language_addr: tuple[str, int] | None = None):
        super().__init__(cfg.host, cfg.vision_port, cfg.tcp_nodelay)
        self.cfg = cfg
        self.router = resolve_router(cfg)
        self.language_addr = language_addr or (cfg.language_host, cfg.language_port)
        self._sender: FeatureSender | None = None
        self._sender_lock = threading.Lock()
        self._pending: dict[int, _Pending] = {}
        self._pending_lock = threading.Lock()
        self._tiles: queue.Queue = queue.Queue()
        self._pool = ThreadPoolExecutor(cfg.vision_workers, thread_name_prefix="vision-worker")
        self._batcher = threading.Thread(target=self._batch_loop, name="vision-batcher", daemon=True)
        self._batcher.start()

    def _downstream(self) -> FeatureSender:
        with self._sender_lock:
            if self._sender is not None and self._sender.error is None:
                return self._sender
            sock = socket.create_connection(self.language_addr, timeout=5.0)
            sock.settimeout(None)
            self._sender = FeatureSender(sock, window=self.cfg.inflight_window, nodelay=self.cfg.tcp_nodelay)
            return self._sender

    def handle(self, sock: socket.socket) -> None:
        conn = protocol.Connection(sock)
        while True:
            msg = read_message(sock)
            if msg is None:
                return
            magic, _, body = msg
            if magic != protocol.SUBMIT:
                log.warning("vision: ignoring message %r", magic)
                continue
            try:
                meta, pixels = protocol.decode_submit(body)
            except ValueError as exc:
                rid = protocol.peek_request_id(body)
                log.warning("vision: malformed submit for request %s: %s", rid, exc)
                if rid is not None:
                    conn.send(protocol.encode_json(protocol.VISDONE, {
                        "request_id": rid, "ok": False, "error": f"malformed request: {exc}"}))
                continue
            self._admit(meta, pixels, conn)

    def _admit(self, meta, pixels, conn) -> None:
        rid = int(meta.get("request_id", -1))
        try:
            request_fields(meta)
            if pixels is None:
                raise ValueError("request has no image")
            tiles = tiles_of(pixels, self.cfg)
            self._downstream()
        except (OSError, ValueError, KeyError, TransportClosed) as exc:
            conn.send(protocol.encode_json(protocol.VISDONE, {
                "request_id": rid, "ok": False, "error": str(exc)}))
            return
        pending = _Pending(rid, len(tiles), conn)
        with self._pending_lock:
            self._pending[rid] = pending
        for idx, tile in enumerate(tiles):
            self._tiles.put((pending, idx, tile))

    def _batch_loop(self):
        window = self.cfg.batch_window_ms / 1000.0
        while not self._stopping.is_set():
            try:
                first = self._tiles.get(timeout=0.1)
            except queue.Empty:
                continue
            batch = [first]
            deadline = time.monotonic() + window
            while len(batch) < self.cfg.batch_max_tiles:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                try:
                    batch.append(self._tiles.get(timeout=remaining))
                except queue.Empty:
                    break
            try:
                self._pool.submit(self._run_batch, batch)
            except RuntimeError:
                return

    def _run_batch(self, batch):
        for pending, idx, tile in batch:
            if pending.failed:
                continue
            t0 = now_ns()
            try:
                rate, payload, ntok = vision_tile(tile, self.cfg, self.router)
            except Exception as exc:  # pragma: no cover - defensive
                log.exception("vision: tile failed")
                self._finish(pending, error=str(exc))
                continue
            t1 = now_ns()
            frame = FeatureFrame(pending.request_id, idx, pending.tile_count, rate, ntok,
                                 self.cfg.feature_dim, payload)
            try:
                self._downstream().send(frame)
            except (OSError, TransportClosed) as exc:
                self._finish(pending, error=f"downstream unreachable: {exc}")
                continue
            self._tile_done(pending, ntok, ["vision", t0, t1])

    def _tile_done(self, pending: _Pending, ntok: int, span) -> None:
        with self._pending_lock:
            pending.done += 1
            pending.tokens += ntok
            pending.spans.append(span)
            complete = pending.done == pending.tile_count
        if complete:
            self._finish(pending)

    def _finish(self, pending: _Pending, error: str | None = None) -> None:
        with self._pending_lock:
            if pending.failed or self._pending.pop(pending.request_id, None) is None:
                return
            if error:
                pending.failed = error
        msg = {
            "request_id": pending.request_id,
            "ok": error is None,
            "tile_count": pending.tile_count,
            "visual_tokens": pending.tokens,
            "vision_done": max((s[2] for s in pending.spans), default=now_ns()),
            "spans": pending.spans,
        }
        if error:
            msg["error"] = error
        pending.conn.send(protocol.encode_json(protocol.VISDONE, msg))

    def on_stop(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)
        with self._sender_lock:
            if self._sender is not None:
                self._sender.abort()
