"""Alternating critic / generator+encoder training with Adam.

Each outer step runs ``critic_iters`` critic updates followed by one joint
update of the generator and encoder.  In ``dls`` mode the joint step builds
the full dataflow::

    x_g  = G(z_c, z_n)          (zc_hat, zn_hat)   = E(x_g)
    (zc_r, zn_r) = E(x_r)       x_rec = G(zc_r, zn_r)
    x_g' = G(z_c, zn_r)         (zc_hat', zn_hat_r) = E(x_g')

and one backward pass over ``adv + rest`` serves both updates: the
adversarial term never reaches the encoder, so the encoder gradient is that
of ``rest`` alone.
"""

from __future__ import annotations

import json
import logging
import math
import struct
import time
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .data import BatchStream, Dataset
from .errors import ConfigError, DivergenceError, DimensionError, FormatError
from .losses import (
    LossWeights,
    MODES,
    ce_onehot,
    critic_loss,
    default_bandwidth,
    generator_adversarial,
    mmd_rbf,
    recon_mse,
    total_objective,
    zn_consistency,
)
from .nets import (
    DEFAULT_HIDDEN,
    DEFAULT_INIT_STD,
    NetworkParams,
    MlpSpec,
    discriminator_spec,
    encoder_forward,
    encoder_spec,
    generator_forward,
    generator_spec,
    init_params,
)
from .prior import LatentBatch, compose, make_rng, sample_prior, swap
from .tensor import Tape, Tensor, concat, grad

log = logging.getLogger(__name__)

OBJECTIVES = ("dls", "clustergan", "gan_only")
ABLATIONS = ("AE", "n", "MMD", "CE", "c")
_ABLATION_ATTR = {"AE": "ae", "n": "beta2", "MMD": "beta1", "CE": "beta3", "c": "beta4"}


@dataclass
class TrainConfig:
    n_clusters: int = 10
    zn_dim: int = 5
    sigma: float = 0.10
    batch_size: int = 64
    critic_iters: int = 5
    weights: LossWeights = field(default_factory=LossWeights)
    lr: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.9
    adam_eps: float = 1e-8
    total_steps: int = 2000
    seed: int = 0
    objective_mode: str = "dls"
    adversarial: str = "wasserstein_gp"
    ablation_mask: tuple[str, ...] = ()
    gen_out_activation: str = "linear"
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    init_std: float = DEFAULT_INIT_STD
    mmd_bandwidth: float | None = None
    eval_every: int = 500
    data_dim: int | None = None

    def validate(self) -> "TrainConfig":
        problems = []
        if self.n_clusters < 1:
            problems.append("n_clusters must be >= 1")
        if self.zn_dim < 1:
            problems.append("zn_dim must be >= 1")
        if self.batch_size < 2:
            problems.append("batch_size must be >= 2")
        if self.critic_iters < 1:
            problems.append("critic_iters must be >= 1")
        if not self.lr > 0:
            problems.append("lr must be > 0")
        if not self.sigma > 0:
            problems.append("sigma must be > 0")
        if self.total_steps < 0:
            problems.append("total_steps must be >= 0")
        if self.objective_mode not in OBJECTIVES:
            problems.append(f"objective_mode must be one of {OBJECTIVES}")
        if self.adversarial not in MODES:
            problems.append(f"adversarial must be one of {MODES}")
        bad = [a for a in self.ablation_mask if a not in ABLATIONS]
        if bad:
            problems.append(f"unknown ablation terms {bad} (allowed {ABLATIONS})")
        if self.gen_out_activation not in ("tanh", "linear"):
            problems.append("gen_out_activation must be tanh or linear")
        if self.mmd_bandwidth is not None and not self.mmd_bandwidth > 0:
            problems.append("mmd_bandwidth must be > 0")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    @property
    def bandwidth(self) -> float:
        if self.mmd_bandwidth is not None:
            return self.mmd_bandwidth
        return default_bandwidth(self.zn_dim, self.sigma)

    def effective_weights(self) -> LossWeights:
        """Loss weights with every ablated term zeroed."""
        w = asdict(self.weights)
        for term in self.ablation_mask:
            w[_ABLATION_ATTR[term]] = 0.0
        return LossWeights(**w)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["ablation_mask"] = list(self.ablation_mask)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown trainer keys: {', '.join(unknown)}")
        d = dict(d)
        if "weights" in d and not isinstance(d["weights"], LossWeights):
            d["weights"] = LossWeights(**d["weights"])
        if "hidden" in d:
            d["hidden"] = tuple(int(h) for h in d["hidden"])
        if "ablation_mask" in d:
            d["ablation_mask"] = tuple(d["ablation_mask"])
        return cls(**d)


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_update(
    params: NetworkParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
) -> tuple[NetworkParams, AdamState]:
    """One bias-corrected Adam step, in place."""
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for name, g in grads.items():
        p = params.arrays[name]
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, param {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


# ---------------------------------------------------------------------------
# history

@dataclass
class TrainHistory:
    records: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, step: int, wall: float, terms: dict[str, float]) -> None:
        if self.records and step <= self.records[-1]["step"]:
            raise ValueError("history steps must increase")
        self.records.append({"step": step, "wall": wall, **terms})

    def values(self, term: str) -> np.ndarray:
        return np.array([r.get(term, np.nan) for r in self.records])

    def losses(self) -> list[dict]:
        """Records without wall-clock, for determinism comparisons."""
        return [{k: v for k, v in r.items() if k != "wall"} for r in self.records]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("step,term,value\n")
            for r in self.records:
                for k, v in r.items():
                    if k == "step":
                        continue
                    fh.write(f"{r['step']},{k},{v!r}\n")


# ---------------------------------------------------------------------------
# steps

def _check(name: str, value: float, step: int | None):
    if not math.isfinite(value):
        raise DivergenceError(name, step)


def _grads_of(loss: Tensor, bound: dict[str, Tensor]) -> dict[str, np.ndarray]:
    names = list(bound)
    gs = grad(loss, [bound[k] for k in names])
    return {k: g.data for k, g in zip(names, gs)}


def critic_step(
    D: NetworkParams,
    G: NetworkParams,
    x_r: np.ndarray,
    prior: LatentBatch,
    config: TrainConfig,
    state: AdamState,
    rng: np.random.Generator,
    step: int | None = None,
) -> float:
    """One Adam update of the critic; the generator is evaluated as a constant."""
    x_g = generator_forward(G, compose(prior)).data
    if x_r.shape != x_g.shape:
        raise DimensionError(f"real batch {x_r.shape} vs generated {x_g.shape}")
    with Tape() as tape:
        wD = D.bind(tape)
        loss = critic_loss(
            config.adversarial, D, x_r, x_g, config.weights.lambda_gp, rng, wD
        )
        value = loss.item()
        _check("critic", value, step)
        grads = _grads_of(loss, wD)
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"critic gradient {k}", step)
    adam_update(D, grads, state, config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps)
    return value


def joint_terms(
    G: NetworkParams,
    E: NetworkParams,
    D: NetworkParams,
    x_r: np.ndarray,
    prior: LatentBatch,
    config: TrainConfig,
    wG: dict[str, Tensor],
    wE: dict[str, Tensor],
    adversarial: bool = True,
) -> tuple[dict[str, Tensor], Tensor, Tensor | None]:
    """Build the joint-step graph; returns ``(terms, gen_total, enc_total)``.

    ``enc_total`` is None when the encoder receives no loss (``gan_only``).
    """
    w = config.effective_weights()
    if not adversarial:
        w.adv = 0.0
    wD = D.constants()
    x_g = generator_forward(G, compose(prior), wG)
    terms: dict[str, Tensor] = {}
    if w.adv:
        terms["adv"] = generator_adversarial(config.adversarial, D, x_g, wD)

    if config.objective_mode == "gan_only":
        total = terms.get("adv", Tensor(0.0))
        return terms, total, None

    zc_hat, zn_hat = encoder_forward(E, x_g, wE)

    if config.objective_mode == "clustergan":
        terms["zn_rec"] = zn_consistency(prior.zn, zn_hat)
        terms["ce"] = ce_onehot(prior.zc, zc_hat)
        cycle = None
        for key, lam in (("zn_rec", w.lambda_n), ("ce", w.lambda_c)):
            if lam:
                part = terms[key] * lam
                cycle = part if cycle is None else cycle + part
        cycle = cycle if cycle is not None else Tensor(0.0)
        total = terms["adv"] + cycle if "adv" in terms else cycle
        return terms, total, cycle

    zc_r, zn_r = encoder_forward(E, x_r, wE)
    x_g2 = generator_forward(G, swap(prior.zc, zn_r), wG)
    x_rec = generator_forward(G, concat([zc_r, zn_r], axis=1), wG)
    zc_hat2, zn_hat_r = encoder_forward(E, x_g2, wE)
    terms["ae"] = recon_mse(x_r, x_rec)
    terms["mmd"] = mmd_rbf(zn_r, prior.zn, config.bandwidth)
    terms["l_n"] = zn_consistency(zn_r, zn_hat_r)
    terms["l_ce"] = ce_onehot(prior.zc, zc_hat)
    terms["l_c"] = ce_onehot(prior.zc, zc_hat2)
    rest = total_objective(w, {k: v for k, v in terms.items() if k != "adv"})
    total = terms["adv"] + rest if "adv" in terms else rest
    return terms, total, rest


def joint_step(
    G: NetworkParams,
    E: NetworkParams,
    D: NetworkParams,
    x_r: np.ndarray,
    prior: LatentBatch,
    config: TrainConfig,
    g_state: AdamState,
    e_state: AdamState,
    step: int | None = None,
    adversarial: bool = True,
) -> dict[str, float]:
    """One Adam update each for the generator and the encoder."""
    with Tape() as tape:
        wG = G.bind(tape)
        wE = E.bind(tape)
        terms, total, enc_total = joint_terms(
            G, E, D, x_r, prior, config, wG, wE, adversarial=adversarial
        )
        values = {k: t.item() for k, t in terms.items()}
        for k, v in values.items():
            _check(k, v, step)
        values["total"] = total.item()
        _check("total", values["total"], step)
        if total.node is None:
            g_grads = {k: np.zeros_like(v) for k, v in G.arrays.items()}
            e_grads = {k: np.zeros_like(v) for k, v in E.arrays.items()}
        else:
            names = [("G", k) for k in wG] + [("E", k) for k in wE]
            gs = grad(total, [wG[k] if n == "G" else wE[k] for n, k in names])
            g_grads = {k: g.data for (n, k), g in zip(names, gs) if n == "G"}
            e_grads = {k: g.data for (n, k), g in zip(names, gs) if n == "E"}
    for label, gd in (("generator", g_grads), ("encoder", e_grads)):
        for k, g in gd.items():
            if not np.all(np.isfinite(g)):
                raise DivergenceError(f"{label} gradient {k}", step)
    lr, b1, b2, eps = config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps
    adam_update(G, g_grads, g_state, lr, b1, b2, eps)
    if enc_total is not None:
        adam_update(E, e_grads, e_state, lr, b1, b2, eps)
    return values


# ---------------------------------------------------------------------------
# trainer

def _to_json(obj):
    if isinstance(obj, np.ndarray):
        return {"__nd__": str(obj.dtype), "shape": list(obj.shape), "data": obj.ravel().tolist()}
    if isinstance(obj, dict):
        return {k: _to_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_json(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _from_json(obj):
    if isinstance(obj, dict):
        if "__nd__" in obj:
            return np.array(obj["data"], dtype=obj["__nd__"]).reshape(obj["shape"])
        return {k: _from_json(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_from_json(v) for v in obj]
    return obj


class Trainer:
    """Owns the three networks, their optimiser states and the random streams."""

    def __init__(self, config: TrainConfig, dataset: Dataset, init: bool = True):
        config.validate()
        if config.data_dim is not None and config.data_dim != dataset.dim:
            raise ConfigError(
                f"config data_dim={config.data_dim} but dataset has {dataset.dim} features"
            )
        if config.batch_size > dataset.n:
            raise ConfigError(f"batch_size {config.batch_size} exceeds dataset size {dataset.n}")
        self.config = config
        self.X = dataset.X  # labels stay with the caller
        self.scaling = dataset.scaling_state()
        self.step = 0
        self.history = TrainHistory()
        self.rng = make_rng(config.seed, 0)
        self.stream = BatchStream(dataset.n, config.batch_size, make_rng(config.seed, 1))
        K, dn, d = config.n_clusters, config.zn_dim, dataset.dim
        self.G = init_params(
            generator_spec(K, dn, d, config.hidden, config.gen_out_activation),
            config.init_std, self.rng,
        )
        self.E = init_params(encoder_spec(K, dn, d, config.hidden), config.init_std, self.rng)
        self.D = init_params(discriminator_spec(d, config.hidden), config.init_std, self.rng)
        self.opt = {"G": AdamState(), "E": AdamState(), "D": AdamState()}

    @property
    def nets(self) -> dict[str, NetworkParams]:
        return {"G": self.G, "E": self.E, "D": self.D}

    def sample_prior(self) -> LatentBatch:
        c = self.config
        return sample_prior(c.batch_size, c.n_clusters, c.zn_dim, c.sigma, self.rng)

    def real_batch(self) -> np.ndarray:
        return self.X[self.stream.next_indices()]

    def train_step(self) -> dict[str, float]:
        c = self.config
        step = self.step + 1
        t0 = time.perf_counter()
        crit = 0.0
        for _ in range(c.critic_iters):
            prior = self.sample_prior()
            x_r = self.real_batch()
            crit = critic_step(self.D, self.G, x_r, prior, c, self.opt["D"], self.rng, step)
        prior = self.sample_prior()
        x_r = self.real_batch()
        vals = joint_step(
            self.G, self.E, self.D, x_r, prior, c, self.opt["G"], self.opt["E"], step
        )
        vals = {"critic": crit, **vals}
        self.step = step
        self.history.append(step, time.perf_counter() - t0, vals)
        return vals

    def run(
        self,
        n_steps: int,
        hooks: Iterable[Callable[["Trainer"], None]] = (),
        checkpoint_path=None,
        checkpoint_every: int = 0,
    ) -> TrainHistory:
        hooks = list(hooks)
        for _ in range(n_steps):
            self.train_step()
            if hooks and self.config.eval_every and self.step % self.config.eval_every == 0:
                for h in hooks:
                    h(self)
            if checkpoint_path and checkpoint_every and self.step % checkpoint_every == 0:
                save_checkpoint(checkpoint_path, self)
        return self.history

    def snapshot(self) -> dict[str, NetworkParams]:
        return {k: v.copy() for k, v in self.nets.items()}

    # -- persistence ------------------------------------------------------
    def state_dict(self) -> tuple[dict, dict[str, np.ndarray]]:
        arrays: dict[str, np.ndarray] = {}
        for n, net in self.nets.items():
            for k, a in net.arrays.items():
                arrays[f"{n}/{k}"] = a
            st = self.opt[n]
            for k in st.m:
                arrays[f"{n}/adam_m/{k}"] = st.m[k]
                arrays[f"{n}/adam_v/{k}"] = st.v[k]
        meta = {
            "config": self.config.to_dict(),
            "step": self.step,
            "specs": {n: net.spec.to_dict() for n, net in self.nets.items()},
            "adam_t": {n: s.t for n, s in self.opt.items()},
            "rng": _to_json(self.rng.bit_generator.state),
            "stream": _to_json(self.stream.state()),
            "scaling": self.scaling,
            "history": self.history.records,
        }
        return meta, arrays

    @classmethod
    def from_state(cls, meta: dict, arrays: dict[str, np.ndarray], dataset: Dataset | None):
        config = TrainConfig.from_dict(meta["config"])
        self = cls.__new__(cls)
        self.config = config
        self.X = dataset.X if dataset is not None else None
        self.scaling = meta.get("scaling", {"scaling": "none"})
        self.step = int(meta["step"])
        self.history = TrainHistory([dict(r) for r in meta.get("history", [])])
        self.rng = make_rng(config.seed, 0)
        self.rng.bit_generator.state = _from_json(meta["rng"])
        n_rows = dataset.n if dataset is not None else max(config.batch_size, 1)
        self.stream = BatchStream(n_rows, config.batch_size, make_rng(config.seed, 1))
        self.stream.restore(_from_json(meta["stream"]))
        self.opt = {}
        nets = {}
        for n in ("G", "E", "D"):
            spec = MlpSpec.from_dict(meta["specs"][n])
            pa = {
                k.split("/", 1)[1]: v
                for k, v in arrays.items()
                if k.startswith(n + "/") and "/adam_" not in k
            }
            nets[n] = NetworkParams(spec, pa)
            st = AdamState(t=int(meta["adam_t"][n]))
            for k, v in arrays.items():
                if k.startswith(f"{n}/adam_m/"):
                    st.m[k.rsplit("/", 1)[1]] = v
                elif k.startswith(f"{n}/adam_v/"):
                    st.v[k.rsplit("/", 1)[1]] = v
            self.opt[n] = st
        self.G, self.E, self.D = nets["G"], nets["E"], nets["D"]
        return self


@dataclass
class TrainResult:
    G: NetworkParams
    E: NetworkParams
    D: NetworkParams
    history: TrainHistory
    trainer: Trainer


def train(
    config: TrainConfig,
    dataset: Dataset,
    hooks: Iterable[Callable[[Trainer], None]] = (),
    checkpoint_path=None,
    checkpoint_every: int = 0,
) -> TrainResult:
    """Initialise and run ``config.total_steps`` outer steps."""
    tr = Trainer(config, dataset)
    tr.run(config.total_steps, hooks, checkpoint_path, checkpoint_every)
    return TrainResult(tr.G, tr.E, tr.D, tr.history, tr)


# ---------------------------------------------------------------------------
# checkpoint file
#
#   "DLSC" | u32 version | u64 manifest length | manifest (JSON, utf-8)
#   | float64 little-endian arrays | u32 CRC32 of all preceding bytes

MAGIC = b"DLSC"
VERSION = 1
_HEAD = struct.Struct("<4sIQ")


def save_checkpoint(path, trainer: Trainer, extra: dict | None = None) -> None:
    meta, arrays = trainer.state_dict()
    directory = []
    offset = 0
    blobs = []
    for name, a in arrays.items():
        a = np.ascontiguousarray(a, dtype="<f8")
        directory.append({"name": name, "shape": list(a.shape), "offset": offset, "count": a.size})
        blobs.append(a.tobytes())
        offset += a.size * 8
    meta["tensors"] = directory
    if extra:
        meta["extra"] = extra
    manifest = json.dumps(meta, sort_keys=True).encode("utf-8")
    body = _HEAD.pack(MAGIC, VERSION, len(manifest)) + manifest + b"".join(blobs)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))
    tmp.replace(path)


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse and verify a checkpoint file; raises FormatError naming the bad field."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEAD.size + 4:
        raise FormatError("header: file too short")
    magic, version, mlen = _HEAD.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"magic: expected {MAGIC!r}, found {magic!r}")
    if version != VERSION:
        raise FormatError(f"version: unsupported checkpoint version {version}")
    if _HEAD.size + mlen + 4 > len(raw):
        raise FormatError(f"manifest_length: {mlen} bytes exceed the file size")
    (crc,) = struct.unpack_from("<I", raw, len(raw) - 4)
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != crc:
        raise FormatError("crc32: checksum mismatch (file truncated or corrupt)")
    try:
        meta = json.loads(raw[_HEAD.size : _HEAD.size + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"manifest: not valid JSON ({exc})") from None
    data = raw[_HEAD.size + mlen : -4]
    arrays = {}
    for entry in meta.get("tensors", []):
        name = entry["name"]
        off, count = int(entry["offset"]), int(entry["count"])
        if count != int(np.prod(entry["shape"])) or off < 0 or off + 8 * count > len(data):
            raise FormatError(f"tensor {name}: extent outside the data section")
        arrays[name] = (
            np.frombuffer(data, dtype="<f8", count=count, offset=off)
            .astype(np.float64)
            .reshape(entry["shape"])
        )
    for key in ("config", "step", "specs", "adam_t", "rng", "stream"):
        if key not in meta:
            raise FormatError(f"{key}: missing from manifest")
    return meta, arrays


def load_checkpoint(path, dataset: Dataset | None = None) -> Trainer:
    """Restore a trainer; pass the dataset to continue training."""
    meta, arrays = read_checkpoint(path)
    try:
        return Trainer.from_state(meta, arrays, dataset)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"manifest: inconsistent content ({exc})") from None
