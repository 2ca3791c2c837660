"""Independent reference implementations used only by the tests."""

import itertools
import math

import numpy as np


def acc_bruteforce(pred, true):
    """Best accuracy over every injective cluster -> label mapping."""
    pred, true = list(pred), list(true)
    ps, ts = sorted(set(pred)), sorted(set(true))
    k = max(len(ps), len(ts))
    ts_pad = ts + [None] * (k - len(ts))
    best = 0
    for perm in itertools.permutations(ts_pad, len(ps)):
        m = dict(zip(ps, perm))
        best = max(best, sum(m[p] == t for p, t in zip(pred, true)))
    return best / len(pred)


def nmi_formula(c):
    """I(U;V) / ((H(U) + H(V)) / 2) from a contingency table, natural logs."""
    c = np.asarray(c, dtype=float)
    n = c.sum()
    mi = 0.0
    for i in range(c.shape[0]):
        for j in range(c.shape[1]):
            if c[i, j] > 0:
                mi += c[i, j] / n * math.log(n * c[i, j] / (c[i].sum() * c[:, j].sum()))
    hu = -sum(a / n * math.log(a / n) for a in c.sum(axis=1) if a > 0)
    hv = -sum(b / n * math.log(b / n) for b in c.sum(axis=0) if b > 0)
    return mi / ((hu + hv) / 2)


def ari_formula(c):
    """Hubert-Arabie adjusted Rand index written out with binomials."""
    c = np.asarray(c, dtype=int)
    n = int(c.sum())
    s = sum(math.comb(int(v), 2) for v in c.ravel())
    a = sum(math.comb(int(v), 2) for v in c.sum(axis=1))
    b = sum(math.comb(int(v), 2) for v in c.sum(axis=0))
    e = a * b / math.comb(n, 2)
    return (s - e) / ((a + b) / 2 - e)


def ari_pairs(pred, true):
    """Rand-index agreement counted pair by pair, then chance-corrected."""
    n = len(pred)
    both = same_p = same_t = 0
    for i in range(n):
        for j in range(i + 1, n):
            sp, st = pred[i] == pred[j], true[i] == true[j]
            both += sp and st
            same_p += sp
            same_t += st
    pairs = n * (n - 1) / 2
    e = same_p * same_t / pairs
    return (both - e) / ((same_p + same_t) / 2 - e)


def labels_from_table(c):
    pred, true = [], []
    for i in range(c.shape[0]):
        for j in range(c.shape[1]):
            pred += [i] * int(c[i, j])
            true += [j] * int(c[i, j])
    return np.array(pred), np.array(true)
