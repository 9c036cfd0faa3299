# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled DTW kernel.  Arithmetic mirrors ``_fallback`` operation for operation."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()


cdef inline double _dist(const double[:, ::1] a, const double[:, ::1] b,
                         Py_ssize_t i, Py_ssize_t j, Py_ssize_t c) noexcept nogil:
    cdef double s = 0.0, diff
    cdef Py_ssize_t k
    for k in range(c):
        diff = a[i, k] - b[j, k]
        s = s + diff * diff
    return sqrt(s)


def accumulated_cost(const double[:, ::1] a, const double[:, ::1] b):
    """Cumulative cost matrix D with D[i, j] = d(i, j) + min(diag, up, left)."""
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], c = a.shape[1]
    cdef Py_ssize_t i, j
    cdef double best, cand
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] D = out
    with nogil:
        for i in range(n):
            for j in range(m):
                if i == 0 and j == 0:
                    D[i, j] = _dist(a, b, i, j, c)
                    continue
                best = INFINITY
                if i > 0 and j > 0:
                    best = D[i - 1, j - 1]
                if i > 0:
                    cand = D[i - 1, j]
                    if cand < best:
                        best = cand
                if j > 0:
                    cand = D[i, j - 1]
                    if cand < best:
                        best = cand
                D[i, j] = _dist(a, b, i, j, c) + best
    return out


def backtrack(const double[:, ::1] D):
    """Walk back from the end; ties prefer diagonal, then (i-1, j), then (i, j-1)."""
    cdef Py_ssize_t i = D.shape[0] - 1, j = D.shape[1] - 1, k
    cdef Py_ssize_t cap = D.shape[0] + D.shape[1] - 1
    path = np.empty((cap, 2), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] P = path
    cdef double best, cand
    cdef int move
    k = 0
    with nogil:
        P[k, 0] = i
        P[k, 1] = j
        k += 1
        while i > 0 or j > 0:
            if i == 0:
                j -= 1
            elif j == 0:
                i -= 1
            else:
                best = D[i - 1, j - 1]
                move = 0
                cand = D[i - 1, j]
                if cand < best:
                    best = cand
                    move = 1
                cand = D[i, j - 1]
                if cand < best:
                    move = 2
                if move == 0:
                    i -= 1
                    j -= 1
                elif move == 1:
                    i -= 1
                else:
                    j -= 1
            P[k, 0] = i
            P[k, 1] = j
            k += 1
    return path[:k][::-1].copy()
