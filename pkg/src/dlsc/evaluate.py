"""Cluster assignment, clustering metrics, a K-means baseline and embedding export.

NMI is normalised by the arithmetic mean of the two entropies (natural
logs).  ACC is accuracy under the best one-to-one cluster/label mapping;
plain purity is available separately as :func:`purity`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigError, DimensionError, FormatError
from .nets import NetworkParams, encoder_forward

NMI_NORMALIZATION = "arithmetic"


def _pair(pred, true) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.int64).ravel()
    true = np.asarray(true, dtype=np.int64).ravel()
    if pred.shape != true.shape:
        raise DimensionError(f"label vectors differ in length ({pred.size} vs {true.size})")
    return pred, true


def _relabel(a: np.ndarray) -> tuple[np.ndarray, int]:
    uniq, inv = np.unique(a, return_inverse=True)
    return inv.astype(np.int64), len(uniq)


def contingency_matrix(pred, true) -> np.ndarray:
    """Counts of (predicted id, true id) pairs, both relabelled to 0..n-1."""
    pred, true = _pair(pred, true)
    p, kp = _relabel(pred)
    t, kt = _relabel(true)
    return kernels.contingency(p, t, kp, kt)


def hungarian(cost) -> np.ndarray:
    """Exact minimum-cost assignment; returns the column for each row."""
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise DimensionError(f"hungarian needs a square matrix, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise DimensionError("hungarian needs finite costs")
    if c.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    return kernels.hungarian(c)


def _square(c: np.ndarray) -> np.ndarray:
    n = max(c.shape)
    out = np.zeros((n, n), dtype=c.dtype)
    out[: c.shape[0], : c.shape[1]] = c
    return out


def _acc_from_table(c: np.ndarray) -> tuple[float, np.ndarray]:
    sq = _square(c)
    col = hungarian(-sq.astype(np.float64))
    return float(sq[np.arange(sq.shape[0]), col].sum()) / c.sum(), col


def acc(pred, true) -> float:
    """Fraction correct under the best one-to-one mapping of clusters to labels."""
    pred, true = _pair(pred, true)
    if pred.size == 0:
        return 0.0
    return _acc_from_table(contingency_matrix(pred, true))[0]


def purity(pred, true) -> float:
    """Each cluster votes for its majority label (many-to-one)."""
    c = contingency_matrix(pred, true)
    return float(c.max(axis=1).sum()) / c.sum() if c.size else 0.0


def _entropy(counts: np.ndarray) -> float:
    n = counts.sum()
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi_from_table(c: np.ndarray) -> float:
    c = np.asarray(c, dtype=np.float64)
    n = c.sum()
    a, b = c.sum(axis=1), c.sum(axis=0)
    ha, hb = _entropy(a), _entropy(b)
    if ha == 0.0 or hb == 0.0:
        # a constant partition; identical only if both are constant
        return 1.0 if ha == hb else 0.0
    nz = c > 0
    pij = c[nz] / n
    mi = float((pij * np.log(c[nz] * n / np.outer(a, b)[nz])).sum())
    return max(0.0, min(1.0, mi / ((ha + hb) / 2.0)))


def nmi(pred, true) -> float:
    return nmi_from_table(contingency_matrix(pred, true))


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1.0) / 2.0


def ari_from_table(c: np.ndarray) -> float:
    c = np.asarray(c, dtype=np.float64)
    n = c.sum()
    sum_ij = _comb2(c).sum()
    sa, sb = _comb2(c.sum(axis=1)).sum(), _comb2(c.sum(axis=0)).sum()
    total = _comb2(n)
    expected = sa * sb / total if total > 0 else 0.0
    max_index = (sa + sb) / 2.0
    if max_index == expected:
        # both partitions trivial (all singletons or a single cluster)
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def ari(pred, true) -> float:
    return ari_from_table(contingency_matrix(pred, true))


@dataclass
class ClusterReport:
    contingency: np.ndarray
    acc: float
    nmi: float
    ari: float
    purity: float
    assignment: dict[int, int]
    pred_ids: list[int] = field(default_factory=list)
    true_ids: list[int] = field(default_factory=list)
    dead_clusters: list[int] = field(default_factory=list)
    nmi_normalization: str = NMI_NORMALIZATION

    @property
    def n(self) -> int:
        return int(self.contingency.sum())

    def row(self) -> str:
        return f"ACC={self.acc:.4f}  NMI={self.nmi:.4f}  ARI={self.ari:.4f}"

    def to_text(self) -> str:
        lines = [
            f"n = {self.n}",
            f"acc = {float(self.acc)!r}",
            f"nmi = {float(self.nmi)!r}",
            f"ari = {float(self.ari)!r}",
            f"purity = {float(self.purity)!r}",
            f"nmi_normalization = {self.nmi_normalization}",
            "pred_ids = " + " ".join(map(str, self.pred_ids)),
            "true_ids = " + " ".join(map(str, self.true_ids)),
            "dead_clusters = " + " ".join(map(str, self.dead_clusters)),
            "assignment = " + " ".join(f"{k}:{v}" for k, v in sorted(self.assignment.items())),
        ]
        for i, r in enumerate(self.contingency):
            lines.append(f"contingency.{i} = " + " ".join(str(int(v)) for v in r))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ClusterReport":
        kv: dict[str, str] = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            if " = " not in line and not line.rstrip().endswith("="):
                raise FormatError(f"report line without '=': {line!r}")
            k, _, v = line.partition("=")
            kv[k.strip()] = v.strip()

        def ints(s):
            return [int(t) for t in s.split()] if s else []

        rows = sorted((k for k in kv if k.startswith("contingency.")), key=lambda k: int(k[12:]))
        try:
            table = np.array([ints(kv[k]) for k in rows], dtype=np.int64)
            return cls(
                contingency=table,
                acc=float(kv["acc"]),
                nmi=float(kv["nmi"]),
                ari=float(kv["ari"]),
                purity=float(kv["purity"]),
                assignment={
                    int(a): int(b) for a, b in (p.split(":") for p in kv["assignment"].split())
                },
                pred_ids=ints(kv.get("pred_ids", "")),
                true_ids=ints(kv.get("true_ids", "")),
                dead_clusters=ints(kv.get("dead_clusters", "")),
                nmi_normalization=kv.get("nmi_normalization", NMI_NORMALIZATION),
            )
        except KeyError as exc:
            raise FormatError(f"report is missing field {exc.args[0]}") from None


def cluster_report(pred, true, n_clusters: int | None = None) -> ClusterReport:
    """All metrics plus the optimal predicted->true mapping.

    Clusters in ``range(n_clusters)`` that received no points are listed as
    dead; the table is zero-padded to square before matching.
    """
    pred, true = _pair(pred, true)
    pred_ids = np.unique(pred)
    true_ids = np.unique(true)
    c = contingency_matrix(pred, true)
    score, col = _acc_from_table(c)
    assignment = {
        int(pred_ids[i]): int(true_ids[col[i]])
        for i in range(len(pred_ids))
        if col[i] < len(true_ids)
    }
    dead = []
    if n_clusters is not None:
        dead = sorted(set(range(n_clusters)) - set(pred_ids.tolist()))
    return ClusterReport(
        contingency=c,
        acc=score,
        nmi=nmi_from_table(c),
        ari=ari_from_table(c),
        purity=float(c.max(axis=1).sum()) / c.sum(),
        assignment=assignment,
        pred_ids=pred_ids.tolist(),
        true_ids=true_ids.tolist(),
        dead_clusters=dead,
    )


# ---------------------------------------------------------------------------
# encoder-based assignment

def encode(E: NetworkParams, X: np.ndarray, chunk: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """``(zc_prob, zn)`` for every row of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != E.spec.input_dim:
        raise DimensionError(f"encoder expects width {E.spec.input_dim}, got shape {X.shape}")
    probs, zns = [], []
    w = E.constants()
    for s in range(0, X.shape[0], chunk):
        p, zn = encoder_forward(E, X[s : s + chunk], w)
        probs.append(p.data)
        zns.append(zn.data)
    if not probs:
        k = E.spec.n_clusters
        return np.empty((0, k)), np.empty((0, E.spec.output_dim - k))
    return np.vstack(probs), np.vstack(zns)


def assign(E: NetworkParams, X: np.ndarray) -> np.ndarray:
    """Argmax of the cluster probabilities; ties go to the lowest index."""
    probs, _ = encode(E, X)
    return np.argmax(probs, axis=1)


def export_embeddings(E: NetworkParams, X: np.ndarray, path, labels=None) -> None:
    """CSV with index, zn values, cluster probabilities, argmax id and optional label."""
    probs, zn = encode(E, X)
    ids = np.argmax(probs, axis=1) if len(probs) else np.empty(0, dtype=np.int64)
    head = ["index"]
    head += [f"zn{j}" for j in range(zn.shape[1])]
    head += [f"p{j}" for j in range(probs.shape[1])]
    head.append("cluster")
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape[0] != probs.shape[0]:
            raise DimensionError("label count does not match row count")
        head.append("label")
    try:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(head)
            for i in range(probs.shape[0]):
                row = [str(i)]
                row += [f"{v:.17g}" for v in zn[i]]
                row += [f"{v:.17g}" for v in probs[i]]
                row.append(str(int(ids[i])))
                if labels is not None:
                    row.append(str(int(labels[i])))
                w.writerow(row)
    except OSError as exc:
        raise FormatError(f"cannot write embeddings to {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# K-means baseline

@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int
    inertia_trace: list[float]


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.uniform(0, total)))
            idx = min(idx, n - 1)
        centers[j] = X[idx]
        d2 = np.minimum(d2, ((X - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(X, centers, max_iters, tol):
    trace = []
    labels, d2 = kernels.lloyd_assign(X, centers)
    trace.append(float(d2.sum()))
    it = 0
    for it in range(1, max_iters + 1):
        new = np.empty_like(centers)
        counts = np.bincount(labels, minlength=len(centers))
        for j in range(len(centers)):
            if counts[j]:
                new[j] = X[labels == j].mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its centroid
                far = int(np.argmax(d2))
                new[j] = X[far]
                d2[far] = 0.0
        labels_new, d2_new = kernels.lloyd_assign(X, new)
        inertia = float(d2_new.sum())
        shift = float(((new - centers) ** 2).sum())
        centers, labels, d2 = new, labels_new, d2_new
        trace.append(inertia)
        if shift <= tol:
            break
    return labels, centers, trace, it


def kmeans(
    X, n_clusters: int, max_iters: int = 300, n_init: int = 10,
    rng: np.random.Generator | None = None, tol: float = 1e-10,
) -> KMeansResult:
    """Lloyd iterations from k-means++ seeds; the best of ``n_init`` runs by inertia."""
    X = np.asarray(X, dtype=np.float64)
    if n_clusters > X.shape[0]:
        raise ConfigError(f"K={n_clusters} exceeds the number of points ({X.shape[0]})")
    if n_clusters < 1:
        raise ConfigError("K must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    best = None
    for _ in range(max(1, n_init)):
        centers = _kmeans_pp(X, n_clusters, rng)
        labels, centers, trace, it = _lloyd(X, centers, max_iters, tol)
        if best is None or trace[-1] < best.inertia:
            best = KMeansResult(labels, centers, trace[-1], it, trace)
    return best
