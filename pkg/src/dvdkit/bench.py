"""Open-loop load generation and throughput reporting across topologies."""
from __future__ import annotations

import csv
import io
import logging
import math
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .core import Rng
from .errors import InvalidConfig
from .serving.config import TOPOLOGIES, ServingConfig
from .serving.pipeline import launch_topology
from .serving.records import Request, Response
from .serving.trace import TraceLog
from .task import make_image

log = logging.getLogger(__name__)

TIERS = (448, 896, 1344)
TRIM = 0.10
PROMPT_LEN = 8
IMAGE_POOL = 16  # distinct synthetic images per load; requests cycle through them
COLUMNS = ("topology", "tier", "throughput", "speedup", "p50", "p99", "failures")

_ARRIVALS, _IMAGES, _PROMPTS = 1, 2, 3


@dataclass(frozen=True)
class LoadSpec:
    requests_per_second: float
    duration: float
    resolution_tier: int = 896
    decode_len: int = 16
    seed: int = 0

    def __post_init__(self):
        if not self.requests_per_second > 0:
            raise InvalidConfig("requests_per_second must be > 0")
        if self.duration < 0:
            raise InvalidConfig("duration must be >= 0")
        if self.resolution_tier not in TIERS:
            raise InvalidConfig(f"resolution_tier must be one of {TIERS}")
        if self.decode_len < 1:
            raise InvalidConfig("decode_len must be >= 1")


def arrival_times(rate: float, duration: float, rng: Rng) -> list[float]:
    g = rng.generator()
    out, t = [], 0.0
    while True:
        t += g.exponential(1.0 / rate)
        if t >= duration:
            return out
        out.append(t)


def generate_load(spec: LoadSpec, tile_size: int = 448, vocab: int = 65536) -> list[Request]:
    """Seeded Poisson arrivals with synthetic task images at tier size."""
    root = Rng(spec.seed)
    times = arrival_times(spec.requests_per_second, spec.duration, root.split(_ARRIVALS))
    side = spec.resolution_tier // tile_size
    pool = []
    for k in range(min(IMAGE_POOL, len(times))):
        img, labels = make_image(root.split(_IMAGES).split(k), side, side, tile_size)
        pool.append((img.to_uint8(), tuple(labels)))
    prompts = root.split(_PROMPTS).generator().integers(0, vocab, size=(len(times), PROMPT_LEN))
    return [
        Request(i, pool[i % len(pool)][0], prompts[i], spec.decode_len, arrival_time=t,
                tile_labels=pool[i % len(pool)][1])
        for i, t in enumerate(times)
    ]


@dataclass
class RunResult:
    topology: str
    spec: LoadSpec
    responses: dict
    generated: int
    elapsed: float
    trace: TraceLog
    t0_ns: int

    @property
    def completed(self) -> int:
        return sum(r.ok for r in self.responses.values())

    @property
    def failed(self) -> int:
        return sum(not r.ok for r in self.responses.values())

    @property
    def in_flight(self) -> int:
        return self.generated - len(self.responses)

    def steady_throughput(self, trim: float = TRIM) -> float:
        """Completions per second inside [trim, 1 - trim] of the load window."""
        d = self.spec.duration
        if d <= 0 or self.generated == 0:
            return 0.0
        lo = self.t0_ns + trim * d * 1e9
        hi = self.t0_ns + (1.0 - trim) * d * 1e9
        n = sum(1 for r in self.responses.values() if r.ok and lo <= r.completed_ns < hi)
        return n / ((1.0 - 2 * trim) * d)

    def latencies(self) -> list[float]:
        return sorted(r.latency_s for r in self.responses.values() if r.ok)


WARMUP_ID = 2**62


def warm(dep, like: Request, timeout: float = 120.0) -> None:
    """One throwaway request so lazy setup (router fit, reference model,
    first connections) happens before the clock starts."""
    client = dep.client()
    try:
        client.submit(Request(WARMUP_ID, like.pixels, like.prompt_tokens, like.decode_len))
        client.wait(timeout=timeout)
    finally:
        client.close()


def run_load(topology: str, requests: list[Request], spec: LoadSpec, cfg: ServingConfig,
             mode: str = "process", drain: float | None = None) -> RunResult:
    """Replay ``requests`` open-loop, then wait ``drain`` seconds before the cutoff."""
    drain = max(1.0, 0.25 * spec.duration) if drain is None else drain
    with launch_topology(topology, cfg, mode) as dep:
        if requests:
            warm(dep, requests[0])
        client = dep.client(nodelay=cfg.tcp_nodelay)
        try:
            t0 = time.monotonic()
            t0_ns = time.monotonic_ns()
            for req in requests:
                delay = t0 + req.arrival_time - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                client.submit(req)
            client.wait(timeout=max(0.0, t0 + spec.duration + drain - time.monotonic()))
            elapsed = time.monotonic() - t0
            responses = client.responses()
        finally:
            client.close()
    trace = TraceLog()
    trace.extend(s for r in responses.values() for s in r.spans)
    return RunResult(topology, spec, responses, len(requests), elapsed, trace, t0_ns)


def percentile(sorted_values, q: float) -> float:
    if not sorted_values:
        return float("nan")
    return float(np.percentile(sorted_values, q))


@dataclass
class BenchReport:
    topology: str
    tier: int
    request_throughput: float
    speedup_vs_baseline: float | None = None
    p50_latency: float = float("nan")
    p99_latency: float = float("nan")
    failure_count: int = 0
    valid: bool = True
    runs: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.request_throughput < 0:
            raise InvalidConfig("throughput must be >= 0")

    @classmethod
    def from_run(cls, run: RunResult) -> "BenchReport":
        lat = run.latencies()
        return cls(run.topology, run.spec.resolution_tier, run.steady_throughput(),
                   p50_latency=percentile(lat, 50), p99_latency=percentile(lat, 99),
                   failure_count=run.failed, runs=[run])


def calibrate_rate(tier: int, cfg: ServingConfig, mode: str = "process", seed: int = 0,
                   burst: int | None = None, factor: float = 2.0) -> float:
    """``factor`` x the monolith's measured closed-burst capacity at ``tier``."""
    burst = burst or 4 * cfg.monolith_workers
    reqs = generate_load(LoadSpec(1e6, 1.0, tier, seed=seed), cfg.tile_size, cfg.vocab)[:burst]
    with launch_topology("monolith", cfg, mode) as dep:
        warm(dep, reqs[0])
        client = dep.client()
        try:
            t = time.monotonic()
            for r in reqs:
                client.submit(r)
            client.wait(timeout=600)
            dt = time.monotonic() - t
        finally:
            client.close()
    return factor * len(reqs) / dt


def _median_report(runs: list[RunResult]) -> BenchReport:
    reports = sorted((BenchReport.from_run(r) for r in runs), key=lambda b: b.request_throughput)
    mid = reports[len(reports) // 2]
    mid.request_throughput = statistics.median(b.request_throughput for b in reports)
    mid.runs = runs
    return mid


def run_benchmark(spec: LoadSpec, topologies=TOPOLOGIES, cfg: ServingConfig | None = None,
                  runs: int = 1, mode: str = "process", drain: float | None = None) -> list[BenchReport]:
    """Same seeded load against each topology; median throughput over ``runs``.

    Runs are interleaved across topologies so slow drift in machine load
    hits all of them alike. A topology that fails to start is reported
    invalid with zero throughput; the others still run.
    """
    cfg = cfg or ServingConfig()
    requests = generate_load(spec, cfg.tile_size, cfg.vocab)
    results: dict[str, list] = {t: [] for t in topologies}
    broken: set = set()
    for _ in range(runs):
        for topo in topologies:
            if topo in broken:
                continue
            try:
                results[topo].append(run_load(topo, requests, spec, cfg, mode, drain))
            except (OSError, RuntimeError) as exc:
                log.error("bench: %s failed to start: %s", topo, exc)
                broken.add(topo)
    reports = []
    for topo in topologies:
        if topo in broken or not results[topo]:
            reports.append(BenchReport(topo, spec.resolution_tier, 0.0, valid=False))
        else:
            reports.append(_median_report(results[topo]))
    return with_speedups(reports)


def with_speedups(reports: list[BenchReport]) -> list[BenchReport]:
    base = {r.tier: r.request_throughput for r in reports if r.topology == "monolith" and r.valid}
    for r in reports:
        b = base.get(r.tier)
        if r.topology == "monolith" or not b or not r.valid:
            r.speedup_vs_baseline = None
        else:
            r.speedup_vs_baseline = r.request_throughput / b
    return reports


def _fmt(x, digits=2) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.{digits}f}"


def _row(r: BenchReport) -> list[str]:
    return [r.topology, str(r.tier), _fmt(r.request_throughput), _fmt(r.speedup_vs_baseline),
            _fmt(r.p50_latency, 4), _fmt(r.p99_latency, 4), str(r.failure_count)]


def emit_report(reports, fmt: str = "table") -> str:
    if not reports:
        raise InvalidConfig("no reports to emit")
    rows = [_row(r) for r in reports]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(COLUMNS)
        w.writerows(rows)
        return buf.getvalue()
    if fmt != "table":
        raise InvalidConfig(f"unknown format {fmt!r}")
    widths = [max(len(c), *(len(row[i]) for row in rows)) for i, c in enumerate(COLUMNS)]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(COLUMNS, widths)))]
    for row in rows:
        lines.append("  ".join(v.ljust(w) if i == 0 else v.rjust(w)
                               for i, (v, w) in enumerate(zip(row, widths))))
    return "\n".join(lines) + "\n"


def parse_csv_report(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def task_score(responses, requests) -> float:
    """Fraction of tiles whose answer equals the tile's label."""
    by_id = {r.request_id: r for r in requests}
    hit = total = 0
    for resp in responses:
        labels = by_id[resp.request_id].tile_labels
        total += len(labels)
        if resp.ok:
            hit += sum(int(a == b) for a, b in zip(resp.answers, labels))
    return hit / total if total else 0.0
