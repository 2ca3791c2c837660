"""Dataset loading (CSV, IDX), synthetic mixtures, scaling and minibatching."""

from __future__ import annotations

import csv
import hashlib
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, ParseError
from .prior import make_rng

SCALINGS = ("none", "minmax", "standardize", "isotropic")
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    X: np.ndarray
    labels: np.ndarray | None = None
    scaling: str = "none"
    offset: np.ndarray | None = None
    scale: np.ndarray | None = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise FormatError(f"dataset matrix must be 2-D, got shape {self.X.shape}")
        if not np.all(np.isfinite(self.X)):
            raise FormatError("dataset contains NaN or Inf")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.X.shape[0],):
                raise FormatError("label count does not match row count")
            if self.labels.size and self.labels.min() < 0:
                raise FormatError("labels must be non-negative")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def unlabeled(self) -> "Dataset":
        return replace(self, labels=None)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        if self.labels is not None:
            h.update(self.labels.tobytes())
        return h.hexdigest()

    def scaling_state(self) -> dict:
        return {
            "scaling": self.scaling,
            "offset": None if self.offset is None else self.offset.tolist(),
            "scale": None if self.scale is None else self.scale.tolist(),
        }


def fit_scaling(X: np.ndarray, kind: str) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature ``(offset, scale)`` with ``scaled = (X - offset) / scale``."""
    if kind not in SCALINGS:
        raise ConfigError(f"unknown scaling '{kind}' (expected one of {SCALINGS})")
    d = X.shape[1]
    if kind == "none":
        return np.zeros(d), np.ones(d)
    if kind == "minmax":
        lo, hi = X.min(axis=0), X.max(axis=0)
        half = (hi - lo) / 2.0
        half[half == 0] = 1.0
        return lo + (hi - lo) / 2.0, half
    mu, sd = X.mean(axis=0), X.std(axis=0)
    if kind == "isotropic":
        # one shared scale keeps distance ratios, so cluster geometry is unchanged
        s = float(np.sqrt(np.mean(sd**2)))
        return mu, np.full(d, s if s > 0 else 1.0)
    sd[sd == 0] = 1.0
    return mu, sd


def apply_scaling(X: np.ndarray, offset: np.ndarray, scale: np.ndarray) -> np.ndarray:
    return (X - offset) / scale


def descale(X: np.ndarray, offset: np.ndarray, scale: np.ndarray) -> np.ndarray:
    return X * scale + offset


def scale_dataset(ds: Dataset, kind: str) -> Dataset:
    """Return a scaled copy; ``minmax`` maps each feature to [-1, 1].

    ``isotropic`` centres each feature and divides all of them by one RMS
    standard deviation; unlike ``standardize`` it keeps Euclidean geometry.
    """
    offset, scale = fit_scaling(ds.X, kind)
    return replace(
        ds, X=apply_scaling(ds.X, offset, scale), scaling=kind, offset=offset, scale=scale
    )


def with_scaling(ds: Dataset, state: dict) -> Dataset:
    """Apply previously fitted scaling stats (e.g. from a checkpoint)."""
    kind = state.get("scaling", "none")
    if kind == "none" or state.get("offset") is None:
        return replace(ds, scaling="none", offset=None, scale=None)
    offset = np.asarray(state["offset"], dtype=np.float64)
    scale = np.asarray(state["scale"], dtype=np.float64)
    if offset.shape != (ds.dim,):
        raise ConfigError(f"scaling stats are for {offset.size} features, dataset has {ds.dim}")
    return replace(ds, X=apply_scaling(ds.X, offset, scale), scaling=kind, offset=offset, scale=scale)


# ---------------------------------------------------------------------------
# CSV

def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_csv(
    path, has_label_column: bool = True, delimiter: str = ",", header: bool | None = None
) -> Dataset:
    """Read a rectangular numeric CSV.

    ``header=None`` skips the first row only if it is not numeric.  When
    ``has_label_column`` is set the last column is parsed as an integer label.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter)]
    start = 0
    while start < len(rows) and not any(c.strip() for c in rows[start]):
        start += 1
    if start < len(rows):
        first = rows[start]
        skip = header if header is not None else not all(_is_number(c) for c in first)
        if skip:
            start += 1
    body = [(i + 1, r) for i, r in enumerate(rows) if i >= start and any(c.strip() for c in r)]
    if not body:
        raise ParseError(f"{path}: no data rows")
    width = len(body[0][1])
    min_width = 2 if has_label_column else 1
    if width < min_width:
        raise ParseError(f"{path}: row {body[0][0]} has too few columns")
    X = np.empty((len(body), width - (1 if has_label_column else 0)))
    labels = np.empty(len(body), dtype=np.int64) if has_label_column else None
    for k, (lineno, r) in enumerate(body):
        if len(r) != width:
            raise ParseError(f"{path}: row {lineno} has {len(r)} columns, expected {width}")
        try:
            vals = [float(c) for c in r]
        except ValueError:
            raise ParseError(f"{path}: row {lineno} has a non-numeric cell") from None
        if has_label_column:
            lab = vals.pop()
            if lab != int(lab):
                raise ParseError(f"{path}: row {lineno} label {lab} is not an integer")
            labels[k] = int(lab)
        X[k] = vals
    if not np.all(np.isfinite(X)):
        raise ParseError(f"{path}: non-finite value")
    return Dataset(X, labels, name=path.name)


def write_csv(ds: Dataset, path, delimiter: str = ",") -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        head = [f"x{j}" for j in range(ds.dim)]
        if ds.labels is not None:
            head.append("label")
        w.writerow(head)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.X[i]]
            if ds.labels is not None:
                row.append(str(int(ds.labels[i])))
            w.writerow(row)


# ---------------------------------------------------------------------------
# IDX

def _read_idx(path, expect_magic: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise FormatError(f"{path}: too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expect_magic:
        raise FormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expect_magic:08x}")
    ndim = magic & 0xFF
    hdr = 4 + 4 * ndim
    if len(raw) < hdr:
        raise FormatError(f"{path}: truncated dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:hdr])
    count = int(np.prod(dims))
    if len(raw) - hdr != count:
        raise FormatError(f"{path}: payload has {len(raw) - hdr} bytes, header implies {count}")
    return np.frombuffer(raw, dtype=np.uint8, offset=hdr).reshape(dims)


def load_idx(images_path, labels_path=None, downscale: int | None = None) -> Dataset:
    """MNIST-style IDX images (+ optional labels), pixels mapped to [-1, 1].

    ``downscale=2`` mean-pools 2x2 blocks before flattening (28x28 -> 14x14).
    """
    imgs = _read_idx(images_path, IDX_IMAGES_MAGIC).astype(np.float64)
    labels = None
    if labels_path is not None:
        labels = _read_idx(labels_path, IDX_LABELS_MAGIC).astype(np.int64)
        if labels.shape[0] != imgs.shape[0]:
            raise FormatError(
                f"label file has {labels.shape[0]} entries but image file has {imgs.shape[0]}"
            )
    if downscale and downscale > 1:
        f = int(downscale)
        n, h, w = imgs.shape
        if h % f or w % f:
            raise FormatError(f"image size {h}x{w} not divisible by {f}")
        imgs = imgs.reshape(n, h // f, f, w // f, f).mean(axis=(2, 4))
    X = imgs.reshape(imgs.shape[0], -1) / 127.5 - 1.0
    return Dataset(X, labels, scaling="none", name=Path(images_path).name)


# ---------------------------------------------------------------------------
# synthetic mixtures

def synth_gmm(
    n_clusters: int,
    dim: int,
    n_per_cluster: int,
    mean_scale: float = 6.0,
    cluster_std: float = 1.0,
    seed: int = 0,
) -> Dataset:
    """Isotropic Gaussian clusters whose means are pairwise >= ``mean_scale`` apart."""
    if n_clusters < 1 or dim < 1 or n_per_cluster < 1:
        raise ConfigError("synth_gmm sizes must be >= 1")
    rng = make_rng(seed, 7)
    radius = mean_scale * max(1.0, n_clusters ** (1.0 / dim))
    means: list[np.ndarray] = []
    tries = 0
    while len(means) < n_clusters:
        cand = rng.uniform(-radius, radius, size=dim)
        if all(np.linalg.norm(cand - m) >= mean_scale for m in means):
            means.append(cand)
        tries += 1
        if tries % 1000 == 0:
            radius *= 1.5
    M = np.array(means)
    labels = np.repeat(np.arange(n_clusters), n_per_cluster)
    X = M[labels] + rng.normal(0.0, cluster_std, size=(labels.size, dim))
    return Dataset(
        X, labels, name=f"synth_gmm_K{n_clusters}_d{dim}_s{seed}", meta={"means": M}
    )


# ---------------------------------------------------------------------------
# batching

@dataclass
class BatchStream:
    """Epoch-wise shuffled minibatches; the short tail of each epoch is dropped."""

    n: int
    batch_size: int
    rng: np.random.Generator
    perm: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    pos: int = 0

    def __post_init__(self):
        if self.batch_size > self.n:
            raise ConfigError(f"batch size {self.batch_size} exceeds dataset size {self.n}")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")

    @property
    def per_epoch(self) -> int:
        return self.n // self.batch_size

    def next_indices(self) -> np.ndarray:
        if self.pos + self.batch_size > self.perm.size:
            self.perm = self.rng.permutation(self.n)
            self.pos = 0
        idx = self.perm[self.pos : self.pos + self.batch_size]
        self.pos += self.batch_size
        return idx

    def epoch(self) -> list[np.ndarray]:
        """One full epoch of index batches from a fresh shuffle."""
        self.perm = self.rng.permutation(self.n)
        self.pos = 0
        return [self.next_indices() for _ in range(self.per_epoch)]

    def state(self) -> dict:
        return {"rng": self.rng.bit_generator.state, "perm": self.perm.tolist(), "pos": self.pos}

    def restore(self, state: dict) -> None:
        self.rng.bit_generator.state = state["rng"]
        self.perm = np.asarray(state["perm"], dtype=np.int64)
        self.pos = int(state["pos"])


def batches(ds: Dataset, batch_size: int, rng: np.random.Generator):
    """Endless stream of ``batch_size``-row matrices."""
    stream = BatchStream(ds.n, batch_size, rng)
    while True:
        yield ds.X[stream.next_indices()]
