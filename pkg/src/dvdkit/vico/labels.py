"""Router targets: loss ratio per patch, sliding-window percentile
threshold, and the binary keep/compress label."""
from __future__ import annotations

import logging
import math
import threading
from collections import deque

from ..errors import DegenerateDenominator, EmptyWindow, InvalidInput

log = logging.getLogger(__name__)

EPS_DEN = 1e-8
DEFAULT_CAPACITY = 4096
DEFAULT_PERCENTILE = 50.0


def loss_ratio(loss_16: float, loss_4: float, eps_den: float = EPS_DEN) -> float:
    """Relative loss increase from 1/4 to 1/16 tokens."""
    if loss_16 < 0 or loss_4 < 0:
        raise InvalidInput("losses must be non-negative")
    if loss_4 <= eps_den:
        raise DegenerateDenominator(f"reference loss {loss_4!r} <= {eps_den}")
    return loss_16 / loss_4


class LossRatioWindow:
    """Ring buffer of recent loss ratios.

    Writers call ``push``; ``snapshot`` gives readers a consistent copy.
    """

    def __init__(self, capacity: int = DEFAULT_CAPACITY, k: float = DEFAULT_PERCENTILE, values=()):
        if capacity < 1:
            raise InvalidInput("capacity must be >= 1")
        if not 0 < k <= 100:
            raise InvalidInput("k must lie in (0, 100]")
        self.capacity = capacity
        self.k = float(k)
        self._buf: deque[float] = deque(maxlen=capacity)
        self._lock = threading.Lock()
        for v in values:
            self.push(v)

    def push(self, r: float) -> None:
        if not r > 0 or not math.isfinite(r):
            raise InvalidInput(f"loss ratios must be positive and finite, got {r}")
        with self._lock:
            self._buf.append(float(r))

    def snapshot(self) -> list[float]:
        with self._lock:
            return list(self._buf)

    def __len__(self):
        return len(self._buf)


def nearest_rank(values, k: float) -> float:
    if not values:
        raise EmptyWindow("no loss ratios recorded")
    ordered = sorted(values)
    n = len(ordered)
    idx = min(max(math.ceil(k / 100.0 * n) - 1, 0), n - 1)
    return ordered[idx]


def percentile_threshold(window: LossRatioWindow) -> float:
    return nearest_rank(window.snapshot(), window.k)


def assign_label(r: float, tau: float) -> int:
    """1 keeps the tile at 1/4 (compression hurts), 0 compresses to 1/16."""
    return 1 if r >= tau else 0


def label_patches(loss_pairs, window: LossRatioWindow | None = None, streaming: bool = False):
    """Label (loss_16, loss_4) pairs; returns one label or None per pair.

    Pairs with a degenerate denominator are skipped (None). In batch mode
    every ratio enters the window before the threshold is read; in
    streaming mode each patch is labelled against the window as it stood
    right after its own ratio was pushed.
    """
    window = window or LossRatioWindow()
    ratios: list[float | None] = []
    labels: list[int | None] = []
    for l16, l4 in loss_pairs:
        try:
            r = loss_ratio(l16, l4)
        except DegenerateDenominator:
            log.info("skipping patch with degenerate reference loss %.3g", l4)
            ratios.append(None)
            labels.append(None)
            continue
        ratios.append(r)
        if r > 0.0:
            window.push(r)
        labels.append(assign_label(r, percentile_threshold(window)) if streaming and len(window) else None)
    if streaming:
        return [0 if (lab is None and r is not None) else lab for lab, r in zip(labels, ratios)]
    if not len(window):
        return [None if r is None else 0 for r in ratios]
    tau = percentile_threshold(window)
    return [None if r is None else assign_label(r, tau) for r in ratios]
