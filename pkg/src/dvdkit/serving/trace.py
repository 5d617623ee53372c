"""Per-stage timing spans collected from all servers."""
from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass

VISION_STAGES = ("vision",)
LANGUAGE_STAGES = ("prefill", "decode")


@dataclass(frozen=True)
class Span:
    request_id: int
    stage: str
    start_ns: int
    end_ns: int

    def overlaps(self, other: "Span") -> bool:
        return self.start_ns < other.end_ns and other.start_ns < self.end_ns

    @classmethod
    def from_list(cls, request_id: int, item) -> "Span":
        stage, start, end = item
        return cls(request_id, stage, int(start), int(end))


class TraceLog:
    """Append-only span log; safe for concurrent writers."""

    def __init__(self):
        self._spans: list[Span] = []
        self._lock = threading.Lock()

    def add(self, span: Span) -> None:
        with self._lock:
            self._spans.append(span)

    def extend(self, spans) -> None:
        with self._lock:
            self._spans.extend(spans)

    def spans(self) -> list[Span]:
        with self._lock:
            return sorted(self._spans, key=lambda s: (s.start_ns, s.end_ns, s.request_id, s.stage))

    def __len__(self):
        return len(self._spans)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(s)) + "\n" for s in self.spans())

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())


def cross_request_overlaps(spans, first=VISION_STAGES, second=LANGUAGE_STAGES) -> list[tuple[Span, Span]]:
    """Pairs (a, b) with a in ``first`` stages, b in ``second`` stages,
    different requests, and intersecting time intervals."""
    a_spans = sorted((s for s in spans if s.stage in first), key=lambda s: s.start_ns)
    b_spans = sorted((s for s in spans if s.stage in second), key=lambda s: s.start_ns)
    out = []
    for a in a_spans:
        for b in b_spans:
            if b.start_ns >= a.end_ns:
                break
            if b.request_id != a.request_id and a.overlaps(b):
                out.append((a, b))
    return out
