"""Language server: joins feature frames with prompts, then prefills and
decodes. It never sends anything back to the vision server."""
from __future__ import annotations

import json
import logging
import socket
import threading
from concurrent.futures import ThreadPoolExecutor

from ..errors import DvdError, TransportClosed
from ..transport import FeatureReceiver
from ..transport.frame import FRAME_MAGIC
from ..transport.stream import read_message, recv_exact
from . import protocol
from .base import TcpServer
from .compute import language_compute, now_ns, request_fields
from .config import ServingConfig

log = logging.getLogger(__name__)


class _State:
    __slots__ = ("request_id", "prompt", "decode_len", "conn", "tiles", "tile_count",
                 "received_at", "failed", "dispatched")

    def __init__(self, request_id):
        self.request_id = request_id
        self.prompt = None
        self.decode_len = 0
        self.conn = None
        self.tiles = {}
        self.tile_count = None
        self.received_at = None
        self.failed = None
        self.dispatched = False

    def ready(self) -> bool:
        return (self.prompt is not None and self.tile_count is not None
                and len(self.tiles) == self.tile_count)


class _Peeked:
    """Socket wrapper that replays bytes already read while sniffing."""

    def __init__(self, sock, prefix: bytes):
        self._sock = sock
        self._buf = prefix

    def recv(self, n):
        if self._buf:
            out, self._buf = self._buf[:n], self._buf[n:]
            return out
        return self._sock.recv(n)


class LanguageServer(TcpServer):
    """One port for both peers: connections starting with the frame magic
    are feature streams, everything else is a client."""

    name = "language"

    def __init__(self, cfg: ServingConfig):
        super().__init__(cfg.host, cfg.language_port, cfg.tcp_nodelay)
        self.cfg = cfg
        self._states: dict[int, _State] = {}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(cfg.language_workers, thread_name_prefix="language-worker")

    def _state(self, rid: int) -> _State:
        st = self._states.get(rid)
        if st is None:
            st = self._states[rid] = _State(rid)
        return st

    def handle(self, sock: socket.socket) -> None:
        head = recv_exact(sock, 4)
        if not head:
            return
        wrapped = _Peeked(sock, head)
        if head == FRAME_MAGIC:
            self._feature_loop(wrapped)
        else:
            self._client_loop(wrapped, protocol.Connection(sock))

    def _feature_loop(self, sock) -> None:
        receiver = FeatureReceiver(sock)
        try:
            for frame in receiver:
                self._on_frame(frame)
        except (TransportClosed, DvdError) as exc:
            log.warning("language: feature stream broke: %s", exc)
        # whatever is still partial can never complete on this stream
        for rid in receiver.incomplete:
            self._fail(rid, "feature stream closed before all tiles arrived")

    def _on_frame(self, frame) -> None:
        with self._lock:
            st = self._state(frame.request_id)
            st.tile_count = frame.tile_count
            st.tiles[frame.tile_index] = (frame.rate, frame.payload, frame.dim)
            if len(st.tiles) == st.tile_count:
                st.received_at = now_ns()
            go = self._take_if_ready(st)
        if go:
            self._dispatch(st)

    def _client_loop(self, sock, conn: protocol.Connection) -> None:
        while True:
            msg = read_message(sock)
            if msg is None:
                return
            magic, _, body = msg
            if magic == protocol.SUBMIT:
                try:
                    meta, _ = protocol.decode_submit(body)
                    self._on_prompt(meta, conn)
                except (ValueError, KeyError) as exc:
                    rid = protocol.peek_request_id(body)
                    log.warning("language: malformed prompt for request %s: %s", rid, exc)
                    if rid is not None:
                        conn.send(protocol.encode_json(protocol.RESULT, {
                            "request_id": rid, "ok": False, "error": f"malformed request: {exc}"}))
            elif magic == protocol.CANCEL:
                self._fail(int(json.loads(body)["request_id"]), "cancelled by client")
            else:
                log.warning("language: ignoring message %r", magic)

    def _on_prompt(self, meta, conn) -> None:
        rid, prompt, decode_len = request_fields(meta)
        with self._lock:
            st = self._state(rid)
            st.prompt = prompt
            st.decode_len = decode_len
            st.conn = conn
            if st.failed:
                self._states.pop(rid, None)
                failed = st.failed
            else:
                failed = None
            go = self._take_if_ready(st)
        if failed:
            conn.send(protocol.encode_json(protocol.RESULT, {"request_id": rid, "ok": False, "error": failed}))
        elif go:
            self._dispatch(st)

    def _take_if_ready(self, st: _State) -> bool:
        # caller holds the lock; ownership moves to exactly one worker
        if st.ready() and not st.dispatched and not st.failed:
            st.dispatched = True
            self._states.pop(st.request_id, None)
            return True
        return False

    def _fail(self, rid: int, reason: str) -> None:
        with self._lock:
            st = self._states.get(rid)
            if st is None or st.dispatched:
                return
            st.failed = reason
            conn = st.conn
            if conn is not None:
                self._states.pop(rid, None)
        if conn is not None:
            conn.send(protocol.encode_json(protocol.RESULT, {"request_id": rid, "ok": False, "error": reason}))

    def _dispatch(self, st: _State) -> None:
        try:
            self._pool.submit(self._run, st)
        except RuntimeError:
            pass

    def _run(self, st: _State) -> None:
        tiles = [st.tiles[i] for i in range(st.tile_count)]
        try:
            result = language_compute(st.request_id, st.prompt, st.decode_len, tiles, self.cfg)
        except Exception as exc:  # pragma: no cover - defensive
            log.exception("language: request %s failed", st.request_id)
            st.conn.send(protocol.encode_json(protocol.RESULT, {
                "request_id": st.request_id, "ok": False, "error": str(exc)}))
            return
        result.update(request_id=st.request_id, ok=True, features_received=st.received_at,
                      tile_tokens=[int(t[1].size // t[2]) for t in tiles])
        st.conn.send(protocol.encode_json(protocol.RESULT, result))

    def on_stop(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)
