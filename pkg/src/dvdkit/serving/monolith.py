"""Single-server baseline: every stage of a request runs back to back on
one worker of a shared pool."""
from __future__ import annotations

import logging
import socket
from concurrent.futures import ThreadPoolExecutor

from ..transport.stream import read_message
from . import protocol
from .base import TcpServer
from .compute import language_compute, now_ns, request_fields, tiles_of, vision_tile
from .config import ServingConfig

log = logging.getLogger(__name__)


def serve_request(meta: dict, pixels, cfg: ServingConfig) -> dict:
    """Run one request end to end (no router: every tile at 1/4)."""
    rid, prompt, decode_len = request_fields(meta)
    t0 = now_ns()
    if pixels is None:
        raise ValueError("request has no image")
    tiles = tiles_of(pixels, cfg)
    encoded = []
    spans = []
    for tile in tiles:
        s0 = now_ns()
        rate, payload, _ = vision_tile(tile, cfg, None)
        s1 = now_ns()
        spans.append(["vision", s0, s1])
        encoded.append((rate, payload, cfg.feature_dim))
    vision_done = now_ns()
    result = language_compute(rid, prompt, decode_len, encoded, cfg)
    result.update(
        request_id=rid,
        ok=True,
        vision_start=t0,
        vision_done=vision_done,
        features_received=vision_done,
        tile_tokens=[int(p.size // d) for _, p, d in encoded],
        spans=spans + result["spans"],
    )
    return result


class MonolithServer(TcpServer):
    name = "monolith"

    def __init__(self, cfg: ServingConfig):
        super().__init__(cfg.host, cfg.monolith_port, cfg.tcp_nodelay)
        self.cfg = cfg
        self._pool = ThreadPoolExecutor(cfg.monolith_workers, thread_name_prefix="monolith-worker")

    def handle(self, sock: socket.socket) -> None:
        conn = protocol.Connection(sock)
        while True:
            msg = read_message(sock)
            if msg is None:
                return
            magic, _, body = msg
            if magic != protocol.SUBMIT:
                log.warning("monolith: ignoring message %r", magic)
                continue
            try:
                meta, pixels = protocol.decode_submit(body)
            except ValueError as exc:
                rid = protocol.peek_request_id(body)
                log.warning("monolith: malformed submit for request %s: %s", rid, exc)
                if rid is not None:
                    conn.send(protocol.encode_json(protocol.RESULT, {
                        "request_id": rid, "ok": False, "error": f"malformed request: {exc}"}))
                continue
            try:
                self._pool.submit(self._run, meta, pixels, conn)
            except RuntimeError:
                return

    def _run(self, meta, pixels, conn) -> None:
        try:
            result = serve_request(meta, pixels, self.cfg)
        except Exception as exc:
            result = {"request_id": int(meta.get("request_id", 0)), "ok": False, "error": str(exc)}
        conn.send(protocol.encode_json(protocol.RESULT, result))

    def on_stop(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)
