"""KadaneDial span extraction over a relevance-score sequence.

Scores are z-normalized (population sigma), shifted by tau into gains, and the
maximum-gain contiguous span is extracted repeatedly. Each extracted span is
masked out; extraction continues while the previously extracted gain is at
least theta, so the first span is always returned for non-empty input.

Ties follow the strict comparisons of the sequential scan: among spans with
the largest gain the one ending earliest wins, and for that end the latest
start (the scan restarts whenever its running sum is not positive).
``oracle_kadane_dial`` is the exhaustive O(m^2)-per-iteration reference used by
the tests and applies the same order.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from src.config import PruneConfig
from src.models.data_models import MASKED, ScoreSequence, Span, SpanSet

EPS_STD = 1e-12
ORACLE_MAX_LEN = 4096
_ORACLE_GRID_MAX = 512


def zscore_normalize(raw: Sequence[float]) -> ScoreSequence:
    """Population z-scores of ``raw``; all zeros when sigma <= EPS_STD."""
    values = np.asarray(raw, dtype=np.float64)
    if values.size == 0:
        return ScoreSequence(raw=())
    mean = float(values.mean())
    std = float(values.std())
    if std > EPS_STD:
        z = ((values - mean) / std).tolist()
    else:
        z = [0.0] * values.size
    return ScoreSequence(raw=tuple(values.tolist()), mean=mean, std=std, z=tuple(z))


def gains_from(seq: ScoreSequence, tau: float) -> ScoreSequence:
    return replace(seq, gains=tuple(z - tau for z in seq.z))


def _scan(gains: Sequence[Optional[float]], lo: int, hi: int) -> tuple[int, int, float] | None:
    """Kadane over gains[lo:hi] (0-based). Masked entries reset the running sum."""
    m = 0.0
    best = -math.inf
    i_temp = lo
    found: tuple[int, int] | None = None
    for j in range(lo, hi):
        g = gains[j]
        if g is MASKED:
            m = 0.0
            continue
        if m + g > g:
            m = m + g
        else:
            m = g
            i_temp = j
        if m > best:
            best = m
            found = (i_temp, j)
    if found is None:
        return None
    return found[0], found[1], best


def max_subarray(gains: Sequence[Optional[float]]) -> Span | None:
    """Maximum-sum contiguous span, 1-based; None if empty or fully masked.

    Ties go to the earliest end, then to the latest start for that end.
    """
    result = _scan(gains, 0, len(gains))
    if result is None:
        return None
    start, end, gain = result
    return Span(start + 1, end + 1, gain)


def kadane_dial(scores: Sequence[float], config: PruneConfig | None = None) -> SpanSet:
    """Extract spans in gain order until the last extracted gain falls below theta.

    Unmasked regions are independent, so each region's best span is cached in
    a heap keyed by (-gain, region start) and only the two pieces left by an
    extraction are rescanned. Popping the heap yields exactly what a full
    left-to-right rescan would return.
    """
    cfg = config or PruneConfig()
    seq = gains_from(zscore_normalize(scores), cfg.tau)
    gains: list[Optional[float]] = list(seq.gains)
    cap = cfg.span_cap(len(gains))

    heap: list[tuple[float, int, int, int, int]] = []

    def push(lo: int, hi: int) -> None:
        if lo >= hi:
            return
        found = _scan(gains, lo, hi)
        if found is not None:
            s, e, gain = found
            heapq.heappush(heap, (-gain, lo, s, e, hi))

    push(0, len(gains))

    spans: list[Span] = []
    last_gain = math.inf
    while last_gain >= cfg.theta and heap and (cap is None or len(spans) < cap):
        neg_gain, lo, s, e, hi = heapq.heappop(heap)
        last_gain = -neg_gain
        spans.append(Span(s + 1, e + 1, last_gain))
        for k in range(s, e + 1):
            gains[k] = MASKED
        push(lo, s)
        push(e + 1, hi)

    return SpanSet(tuple(spans))


def _unmasked_runs(gains: Sequence[Optional[float]]) -> list[tuple[int, int]]:
    runs: list[tuple[int, int]] = []
    lo = None
    for i, g in enumerate(gains):
        if g is MASKED:
            if lo is not None:
                runs.append((lo, i))
                lo = None
        elif lo is None:
            lo = i
    if lo is not None:
        runs.append((lo, len(gains)))
    return runs


def _exhaustive_best(gains: Sequence[Optional[float]]) -> tuple[float, int, int] | None:
    """Best (sum, start, end) over all unmasked contiguous spans.

    Sums accumulate left to right from each start, matching the running sum
    Kadane keeps. Ties go to the earlier end, then the later start.
    """
    best: tuple[float, int, int] | None = None
    for lo, hi in _unmasked_runs(gains):
        block = np.asarray(gains[lo:hi], dtype=np.float64)
        n = block.size
        if n <= _ORACLE_GRID_MAX:
            grid = np.cumsum(np.triu(np.broadcast_to(block, (n, n))), axis=1)
            grid[np.tril_indices(n, -1)] = -np.inf
            top = grid == grid.max()
            e = int(np.argmax(top.any(axis=0)))
            s = n - 1 - int(np.argmax(top[::-1, e]))
            candidate = (float(grid[s, e]), lo + s, lo + e)
        else:
            candidate = None
            for s in range(n):
                sums = np.cumsum(block[s:])
                e = int(np.argmax(sums))
                value, end = float(sums[e]), lo + s + e
                if candidate is None or value > candidate[0] or (value == candidate[0] and end <= candidate[2]):
                    candidate = (value, lo + s, end)
        # runs are disjoint and ordered, so an earlier run has the earlier end
        if best is None or candidate[0] > best[0]:
            best = candidate
    return best


def oracle_kadane_dial(scores: Sequence[float], config: PruneConfig | None = None) -> SpanSet:
    """Same contract as ``kadane_dial`` using exhaustive span enumeration."""
    if len(scores) > ORACLE_MAX_LEN:
        raise ValueError(f"oracle supports at most {ORACLE_MAX_LEN} scores, got {len(scores)}")
    cfg = config or PruneConfig()
    gains: list[Optional[float]] = list(gains_from(zscore_normalize(scores), cfg.tau).gains)
    cap = cfg.span_cap(len(gains))

    spans: list[Span] = []
    last_gain = math.inf
    while last_gain >= cfg.theta and (cap is None or len(spans) < cap):
        best = _exhaustive_best(gains)
        if best is None:
            break
        last_gain, s, e = best
        spans.append(Span(s + 1, e + 1, last_gain))
        for k in range(s, e + 1):
            gains[k] = MASKED
    return SpanSet(tuple(spans))
