# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scalar-loop kernels; see ``_kernels_py`` for the reference twin."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def hungarian(cost):
    """Minimum-cost perfect matching on a square matrix.

    Returns ``col`` with ``col[i]`` the column assigned to row ``i``.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u = np.zeros(n + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v = np.zeros(n + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] minv = np.empty(n + 1)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] p = np.zeros(n + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] way = np.zeros(n + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] used = np.zeros(n + 1, dtype=np.uint8)
    cdef Py_ssize_t i, j, j0, j1, i0
    cdef double delta, cur
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(n + 1):
            minv[j] = INFINITY
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            delta = INFINITY
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = a[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[:] colv = col
    for j in range(1, n + 1):
        colv[p[j] - 1] = j - 1
    return col


def contingency(pred, true, Py_ssize_t n_pred, Py_ssize_t n_true):
    cdef cnp.int64_t[:] a = np.ascontiguousarray(pred, dtype=np.int64)
    cdef cnp.int64_t[:] b = np.ascontiguousarray(true, dtype=np.int64)
    out = np.zeros((n_pred, n_true), dtype=np.int64)
    cdef cnp.int64_t[:, :] c = out
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        c[a[i], b[i]] += 1
    return out


def lloyd_assign(X, C):
    """Nearest centroid per row and the squared distance to it."""
    cdef cnp.float64_t[:, :] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.float64_t[:, :] c = np.ascontiguousarray(C, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], k = c.shape[0], d = x.shape[1]
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n)
    cdef cnp.int64_t[:] lab = labels
    cdef cnp.float64_t[:] dist = dists
    cdef Py_ssize_t i, j, t, best
    cdef double s, diff, bestd
    for i in range(n):
        best = 0
        bestd = INFINITY
        for j in range(k):
            s = 0.0
            for t in range(d):
                diff = x[i, t] - c[j, t]
                s += diff * diff
            if s < bestd:
                bestd = s
                best = j
        lab[i] = best
        dist[i] = bestd
    return labels, dists
