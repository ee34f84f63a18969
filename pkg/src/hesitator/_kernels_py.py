"""Pure-Python implementations of the hot numerical kernels.

These mirror ``_kernels.pyx`` one for one and are used whenever the compiled
extension is unavailable (or ``HESITATOR_PURE_PYTHON=1`` is set).
"""

import numpy as np


def wadd_scores(matrix, weights):
    """Row-wise weighted sums ``matrix @ weights``."""
    matrix = np.asarray(matrix, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    out = np.empty(matrix.shape[0], dtype=np.float64)
    for i in range(matrix.shape[0]):
        acc = 0.0
        row = matrix[i]
        for j in range(weights.shape[0]):
            acc += weights[j] * row[j]
        out[i] = acc
    return out


def dominance_profile(matrix):
    """Return ``(has_dominant, tradeoff_rate)`` for an items x attributes matrix.

    ``has_dominant`` is true when one row is >= every other row on all columns
    and strictly greater somewhere against each of them. ``tradeoff_rate`` is
    the fraction of (item pair, attribute pair) combinations whose orderings
    oppose each other.
    """
    m = np.asarray(matrix, dtype=np.float64)
    n, k = m.shape
    if n <= 1:
        return True, 0.0
    has_dominant = False
    for i in range(n):
        dominates_all = True
        for r in range(n):
            if r == i:
                continue
            strictly = False
            for j in range(k):
                if m[i, j] < m[r, j]:
                    dominates_all = False
                    break
                if m[i, j] > m[r, j]:
                    strictly = True
            if not dominates_all or not strictly:
                dominates_all = False
                break
        if dominates_all:
            has_dominant = True
            break

    opposing = 0
    total = 0
    for i in range(n):
        for r in range(i + 1, n):
            for j in range(k):
                dj = m[i, j] - m[r, j]
                for l in range(j + 1, k):
                    total += 1
                    if dj * (m[i, l] - m[r, l]) < 0.0:
                        opposing += 1
    rate = opposing / total if total else 0.0
    return has_dominant, rate


def signed_rank_null(doubled_ranks):
    """Exact null counts of the doubled W+ statistic.

    ``doubled_ranks`` are the (integer) ranks times two, so average ranks of
    ties stay integral. Entry ``s`` of the result is the number of the ``2**n``
    sign assignments whose doubled positive-rank sum equals ``s``.
    """
    ranks = [int(r) for r in doubled_ranks]
    total = sum(ranks)
    counts = [0.0] * (total + 1)
    counts[0] = 1.0
    reach = 0
    for r in ranks:
        for s in range(reach, -1, -1):
            if counts[s]:
                counts[s + r] += counts[s]
        reach += r
    return np.asarray(counts, dtype=np.float64)


def sq_distances(points, origin):
    """Squared Euclidean distance from every row of ``points`` to ``origin``."""
    pts = np.asarray(points, dtype=np.float64)
    o = np.asarray(origin, dtype=np.float64)
    out = np.empty(pts.shape[0], dtype=np.float64)
    for i in range(pts.shape[0]):
        acc = 0.0
        for j in range(pts.shape[1]):
            d = pts[i, j] - o[j]
            acc += d * d
        out[i] = acc
    return out
