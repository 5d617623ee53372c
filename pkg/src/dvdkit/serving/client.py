"""Client side of a deployment: submits requests, gathers responses."""
from __future__ import annotations

import json
import logging
import socket
import threading
from typing import Callable

from ..errors import DvdError, TransportClosed
from ..transport.stream import configure, read_message
from . import protocol
from .compute import now_ns
from .records import Request, Response
from .trace import TraceLog

log = logging.getLogger(__name__)


class PipelineClient:
    """Talks to either a monolith server or a vision+language pair.

    For split deployments the prompt goes straight to the language server
    and the image to the vision server; the language server answers.
    """

    def __init__(self, topology: str, addresses: dict, nodelay: bool = True,
                 on_complete: Callable[[Response], None] | None = None):
        self.topology = topology
        self.on_complete = on_complete
        self.trace = TraceLog()
        self._responses: dict[int, Response] = {}
        self._submitted: dict[int, int] = {}
        self._vision: dict[int, dict] = {}
        self._results: dict[int, dict] = {}
        self._lock = threading.Condition()
        self._threads = []
        self._closed = False
        if topology == "monolith":
            self._main = self._connect(addresses["monolith"], nodelay)
            self._vis = None
        else:
            self._main = self._connect(addresses["language"], nodelay)
            self._vis = self._connect(addresses["vision"], nodelay)
        for conn in (self._main, self._vis):
            if conn is not None:
                t = threading.Thread(target=self._reader, args=(conn,), name="client-reader", daemon=True)
                t.start()
                self._threads.append(t)

    @staticmethod
    def _connect(addr, nodelay) -> protocol.Connection:
        sock = socket.create_connection(tuple(addr), timeout=10.0)
        sock.settimeout(None)
        configure(sock, nodelay)
        return protocol.Connection(sock)

    def submit(self, req: Request) -> None:
        with self._lock:
            self._submitted[req.request_id] = now_ns()
        if self._vis is None:
            ok = self._main.send(protocol.encode_submit(req.meta(), req.pixels_u8()))
        else:
            ok = self._main.send(protocol.encode_submit(req.meta(with_image=False), None))
            ok = ok and self._vis.send(protocol.encode_submit(req.meta(), req.pixels_u8()))
        if not ok:
            self._complete(Response(req.request_id, False, error="connection lost on submit"))

    def _reader(self, conn: protocol.Connection) -> None:
        try:
            while True:
                msg = read_message(conn.sock)
                if msg is None:
                    break
                magic, _, body = msg
                obj = json.loads(body)
                if magic == protocol.VISDONE:
                    self._on_vision(obj)
                elif magic == protocol.RESULT:
                    self._on_result(obj)
        except (TransportClosed, DvdError, OSError, ValueError) as exc:
            if not self._closed:
                log.warning("client: connection lost: %s", exc)
        finally:
            if not self._closed:
                self._fail_outstanding("server connection closed")

    def _on_vision(self, obj: dict) -> None:
        rid = int(obj["request_id"])
        if not obj.get("ok"):
            self._main.send(protocol.encode_json(protocol.CANCEL, {"request_id": rid}))
            self._complete(Response(rid, False, error=obj.get("error", "vision failed")))
            return
        with self._lock:
            self._vision[rid] = obj
            result = self._results.pop(rid, None)
        if result is not None:
            self._complete(Response.from_result(result, obj))

    def _on_result(self, obj: dict) -> None:
        rid = int(obj["request_id"])
        if not obj.get("ok") or self._vis is None:
            self._complete(Response.from_result(obj))
            return
        with self._lock:
            vision = self._vision.get(rid)
            if vision is None:
                self._results[rid] = obj
                return
        self._complete(Response.from_result(obj, vision))

    def _complete(self, resp: Response) -> None:
        with self._lock:
            if resp.request_id in self._responses:
                return
            resp.submitted_ns = self._submitted.get(resp.request_id, 0)
            resp.completed_ns = now_ns()
            self._responses[resp.request_id] = resp
            self._vision.pop(resp.request_id, None)
            self._lock.notify_all()
        self.trace.extend(resp.spans)
        if self.on_complete is not None:
            self.on_complete(resp)

    def _fail_outstanding(self, reason: str) -> None:
        with self._lock:
            missing = [rid for rid in self._submitted if rid not in self._responses]
        for rid in missing:
            self._complete(Response(rid, False, error=reason))

    def wait(self, count: int | None = None, timeout: float | None = None) -> bool:
        """Block until ``count`` (default: all submitted) responses arrived."""
        with self._lock:
            target = len(self._submitted) if count is None else count
            return self._lock.wait_for(lambda: len(self._responses) >= target, timeout)

    def responses(self) -> dict[int, Response]:
        with self._lock:
            return dict(self._responses)

    def outstanding(self) -> int:
        with self._lock:
            return len(self._submitted) - len(self._responses)

    def close(self) -> None:
        self._closed = True
        for conn in (self._main, self._vis):
            if conn is not None:
                try:
                    conn.sock.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
                conn.close()
