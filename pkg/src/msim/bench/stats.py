"""Latency statistics: median (lower of two for even n) and nearest-rank p95."""

from __future__ import annotations

import math

from ..errors import EmptyInput


def compute_stats(latencies) -> tuple[float, float]:
    """Return (median, p95) of a non-empty latency sample.

    median: the middle element of the sorted list, lower of the two middles
    for even n. p95: nearest-rank, i.e. the element at ceil(0.95 * n),
    1-indexed on the ascending sort.
    """
    if not latencies:
        raise EmptyInput("latency list is empty")
    ordered = sorted(latencies)
    n = len(ordered)
    median = ordered[(n + 1) // 2 - 1]
    p95 = ordered[math.ceil(0.95 * n) - 1]
    return median, p95
