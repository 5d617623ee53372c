"""Start a topology on loopback and drive requests through it."""
from __future__ import annotations

import logging
import multiprocessing as mp
import time
from dataclasses import dataclass, field

from ..errors import InvalidConfig
from .client import PipelineClient
from .config import TOPOLOGIES, ComputeProfile, ServingConfig
from .language_server import LanguageServer
from .monolith import MonolithServer
from .records import Request, Response
from .trace import TraceLog
from .vision_server import VisionServer

log = logging.getLogger(__name__)

_KINDS = {"vision": VisionServer, "language": LanguageServer, "monolith": MonolithServer}


def _build(kind: str, cfg: ServingConfig, language_addr=None):
    if kind == "vision":
        return VisionServer(cfg, language_addr)
    return _KINDS[kind](cfg)


def _child(kind, cfg, language_addr, pipe):  # runs in a spawned process
    try:
        server = _build(kind, cfg, language_addr).start()
    except Exception as exc:
        pipe.send(("error", repr(exc)))
        return
    pipe.send(("ok", tuple(server.address)))
    try:
        pipe.recv()
    except (EOFError, KeyboardInterrupt):
        pass
    server.stop()


class _ThreadHandle:
    def __init__(self, server):
        self.server = server
        self.address = tuple(server.address)

    def stop(self):
        self.server.stop()


class _ProcessHandle:
    def __init__(self, kind, cfg, language_addr, startup_timeout):
        ctx = mp.get_context("spawn")
        self._pipe, child_end = ctx.Pipe()
        self.proc = ctx.Process(target=_child, args=(kind, cfg, language_addr, child_end),
                                name=f"dvd-{kind}", daemon=True)
        self.proc.start()
        child_end.close()
        if not self._pipe.poll(startup_timeout):
            self.proc.kill()
            raise RuntimeError(f"{kind} server did not start within {startup_timeout}s")
        status, value = self._pipe.recv()
        if status != "ok":
            self.proc.join(1)
            raise RuntimeError(f"{kind} server failed to start: {value}")
        self.address = tuple(value)

    def stop(self):
        try:
            self._pipe.send("stop")
        except (BrokenPipeError, OSError):
            pass
        self.proc.join(5)
        if self.proc.is_alive():
            self.proc.kill()
            self.proc.join(1)


@dataclass
class Deployment:
    topology: str
    addresses: dict
    handles: list = field(default_factory=list)

    def client(self, **kw) -> PipelineClient:
        return PipelineClient(self.topology, self.addresses, **kw)

    def stop(self) -> None:
        # upstream first so the language server sees a clean end of stream
        for h in self.handles:
            h.stop()
        self.handles = []

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()


def launch_topology(topology: str, cfg: ServingConfig, mode: str = "thread",
                    startup_timeout: float = 60.0) -> Deployment:
    """Start the servers of ``topology`` on ephemeral loopback ports.

    ``mode="process"`` puts every server in its own interpreter, the way a
    real deployment would; ``"thread"`` keeps them in this process.
    """
    if topology not in TOPOLOGIES:
        raise InvalidConfig(f"unknown topology {topology!r}")
    if mode not in ("thread", "process"):
        raise InvalidConfig(f"mode must be 'thread' or 'process', got {mode!r}")
    cfg = cfg.replace(topology=topology, vision_port=0, language_port=0, monolith_port=0)

    def start(kind, language_addr=None):
        if mode == "thread":
            return _ThreadHandle(_build(kind, cfg, language_addr).start())
        return _ProcessHandle(kind, cfg, language_addr, startup_timeout)

    if topology == "monolith":
        h = start("monolith")
        return Deployment(topology, {"monolith": h.address}, [h])
    lang = start("language")
    try:
        vis = start("vision", lang.address)
    except Exception:
        lang.stop()
        raise
    return Deployment(topology, {"vision": vis.address, "language": lang.address}, [vis, lang])


def run_pipeline(requests, topology: str, profile: ComputeProfile | None = None,
                 config: ServingConfig | None = None, mode: str = "thread",
                 paced: bool = False, timeout: float = 300.0):
    """Serve ``requests`` on a fresh deployment; returns (responses, trace).

    ``responses`` is ordered like ``requests``. With ``paced`` the
    requests' arrival times are honoured, otherwise all are sent at once.
    """
    cfg = config or ServingConfig()
    if profile is not None:
        cfg = cfg.replace(profile=profile)
    requests = list(requests)
    with launch_topology(topology, cfg, mode) as dep:
        client = dep.client(nodelay=cfg.tcp_nodelay)
        try:
            t0 = time.monotonic()
            for req in requests:
                if paced:
                    delay = t0 + req.arrival_time - time.monotonic()
                    if delay > 0:
                        time.sleep(delay)
                client.submit(req)
            client.wait(timeout=timeout)
            got = client.responses()
        finally:
            client.close()
    trace = TraceLog()
    trace.extend(client.trace.spans())
    responses = [got.get(r.request_id) or Response(r.request_id, False, error="timed out")
                 for r in requests]
    return responses, trace


def run_monolith(requests, profile=None, config=None, **kw):
    return run_pipeline(requests, "monolith", profile, config, **kw)
