"""Listening-socket plumbing shared by the three server kinds."""
from __future__ import annotations

import logging
import socket
import threading

from ..transport.stream import configure

log = logging.getLogger(__name__)


class TcpServer:
    """Accept loop running on a daemon thread; one handler thread per peer."""

    name = "server"

    def __init__(self, host: str, port: int, nodelay: bool = True):
        self.nodelay = nodelay
        self._listener = socket.create_server((host, port), reuse_port=False)
        self._listener.listen(64)
        self.address = self._listener.getsockname()[:2]
        self._stopping = threading.Event()
        self._threads: list[threading.Thread] = []
        self._peers: list[socket.socket] = []
        self._peers_lock = threading.Lock()
        self._accept_thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.address[1]

    def start(self) -> "TcpServer":
        self._accept_thread = threading.Thread(target=self._accept_loop, name=f"{self.name}-accept",
                                               daemon=True)
        self._accept_thread.start()
        return self

    def serve_forever(self) -> None:
        self.start()
        try:
            self._stopping.wait()
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def _accept_loop(self):
        while not self._stopping.is_set():
            try:
                sock, _ = self._listener.accept()
            except OSError:
                return
            configure(sock, self.nodelay)
            with self._peers_lock:
                self._peers.append(sock)
            t = threading.Thread(target=self._guard, args=(sock,), name=f"{self.name}-peer", daemon=True)
            t.start()
            self._threads.append(t)

    def _guard(self, sock):
        try:
            self.handle(sock)
        except Exception:  # a broken peer must not take the server down
            if not self._stopping.is_set():
                log.exception("%s: peer handler failed", self.name)
        finally:
            try:
                sock.close()
            except OSError:
                pass

    def handle(self, sock: socket.socket) -> None:  # pragma: no cover - abstract
        raise NotImplementedError

    def stop(self) -> None:
        if self._stopping.is_set():
            return
        self._stopping.set()
        try:
            self._listener.close()
        except OSError:
            pass
        with self._peers_lock:
            peers = list(self._peers)
        for sock in peers:
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                sock.close()
            except OSError:
                pass
        self.on_stop()

    def on_stop(self) -> None:
        pass
