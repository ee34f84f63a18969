"""Success rate and the paired Wilcoxon signed-rank test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels

EXACT_MAX_N = 25


class DegenerateSampleError(ValueError):
    """Every paired difference is zero, so there is nothing to rank."""


def success_rate(outcomes: Iterable) -> float:
    """Fraction of sessions that ended in a purchase.

    Accepts booleans or objects with a ``purchased`` attribute.
    """
    flags = [bool(getattr(o, "purchased", o)) for o in outcomes]
    if not flags:
        raise ValueError("success rate of an empty sample is undefined")
    return sum(flags) / len(flags)


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks, ties sharing the mean of the ranks they span."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        for t in range(i, j + 1):
            ranks[order[t]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # W+, the sum of ranks of positive differences
    p_value: float
    n: int  # nonzero differences used
    method: str  # "exact" | "normal"


def _exact_p(doubled: list[int], w2: int) -> float:
    counts = kernels.signed_rank_null(np.asarray(doubled, dtype=np.int64))
    total = math.fsum(counts)
    lower = math.fsum(counts[: w2 + 1]) / total
    upper = math.fsum(counts[w2:]) / total
    return min(1.0, 2.0 * min(lower, upper))


def _normal_p(ranks: list[float], w: float) -> float:
    n = len(ranks)
    mean = n * (n + 1) / 4.0
    ties: dict[float, int] = {}
    for r in ranks:
        ties[r] = ties.get(r, 0) + 1
    var = n * (n + 1) * (2 * n + 1) / 24.0 - sum(t**3 - t for t in ties.values()) / 48.0
    diff = w - mean
    if diff == 0:
        return 1.0
    z = (abs(diff) - 0.5) / math.sqrt(var)
    return min(1.0, math.erfc(max(z, 0.0) / math.sqrt(2.0)))


def wilcoxon_signed_rank(paired: Sequence[tuple[float, float]]) -> WilcoxonResult:
    """Two-sided signed-rank test on ``x - y`` over the pairs.

    Zero differences are dropped. With at most 25 nonzero differences the
    p-value comes from the exact null distribution (average ranks for tied
    magnitudes); above that a normal approximation with tie and continuity
    corrections is used.
    """
    diffs = [float(x) - float(y) for x, y in paired]
    diffs = [d for d in diffs if d != 0.0]
    if not diffs:
        raise DegenerateSampleError("all paired differences are zero")
    ranks = average_ranks([abs(d) for d in diffs])
    w_plus = math.fsum(r for r, d in zip(ranks, diffs) if d > 0)
    if len(diffs) <= EXACT_MAX_N:
        doubled = [int(round(2 * r)) for r in ranks]
        p = _exact_p(doubled, int(round(2 * w_plus)))
        return WilcoxonResult(w_plus, p, len(diffs), "exact")
    return WilcoxonResult(w_plus, _normal_p(ranks, w_plus), len(diffs), "normal")
