"""Pure-Python/numpy versions of the compiled kernels (same signatures)."""

import numpy as np


def hungarian(cost):
    """Minimum-cost perfect matching on a square matrix.

    Shortest-augmenting-path form with row/column potentials, O(n^3).
    Returns ``col`` with ``col[i]`` the column assigned to row ``i``.
    """
    a = np.asarray(cost, dtype=np.float64)
    n = a.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = a[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
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
    col[p[1:] - 1] = np.arange(n)
    return col


def contingency(pred, true, n_pred, n_true):
    out = np.zeros((n_pred, n_true), dtype=np.int64)
    np.add.at(out, (np.asarray(pred, dtype=np.int64), np.asarray(true, dtype=np.int64)), 1)
    return out


def lloyd_assign(X, C):
    """Nearest centroid per row and the squared distance to it."""
    X = np.asarray(X, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    d2 = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    return labels.astype(np.int64), d2[np.arange(len(X)), labels]
