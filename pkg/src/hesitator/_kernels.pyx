# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels. See ``_kernels_py`` for semantics."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def wadd_scores(const double[:, :] matrix, const double[:] weights):
    cdef Py_ssize_t n = matrix.shape[0]
    cdef Py_ssize_t k = weights.shape[0]
    cdef Py_ssize_t i, j
    cdef double acc
    out = np.empty(n, dtype=np.float64)
    cdef double[:] o = out
    for i in range(n):
        acc = 0.0
        for j in range(k):
            acc += weights[j] * matrix[i, j]
        o[i] = acc
    return out


def dominance_profile(const double[:, :] m):
    cdef Py_ssize_t n = m.shape[0]
    cdef Py_ssize_t k = m.shape[1]
    cdef Py_ssize_t i, r, j, l
    cdef bint has_dominant = False
    cdef bint dominates_all, strictly
    cdef long opposing = 0, total = 0
    cdef double dj
    if n <= 1:
        return True, 0.0
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
    for i in range(n):
        for r in range(i + 1, n):
            for j in range(k):
                dj = m[i, j] - m[r, j]
                for l in range(j + 1, k):
                    total += 1
                    if dj * (m[i, l] - m[r, l]) < 0.0:
                        opposing += 1
    if total == 0:
        return bool(has_dominant), 0.0
    return bool(has_dominant), opposing / <double>total


def signed_rank_null(doubled_ranks):
    cdef long[:] ranks = np.ascontiguousarray(doubled_ranks, dtype=np.int_)
    cdef Py_ssize_t n = ranks.shape[0]
    cdef long total = 0
    cdef Py_ssize_t i
    cdef long s, r, reach = 0
    for i in range(n):
        total += ranks[i]
    counts = np.zeros(total + 1, dtype=np.float64)
    cdef double[:] c = counts
    c[0] = 1.0
    for i in range(n):
        r = ranks[i]
        s = reach
        while s >= 0:
            if c[s] != 0.0:
                c[s + r] += c[s]
            s -= 1
        reach += r
    return counts


def sq_distances(const double[:, :] points, const double[:] origin):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t k = points.shape[1]
    cdef Py_ssize_t i, j
    cdef double acc, d
    out = np.empty(n, dtype=np.float64)
    cdef double[:] o = out
    for i in range(n):
        acc = 0.0
        for j in range(k):
            d = points[i, j] - origin[j]
            acc += d * d
        o[i] = acc
    return out
