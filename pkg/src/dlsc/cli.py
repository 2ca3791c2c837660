"""Command-line entry point: ``dlsc {train,eval,ablate,generate,synth,kmeans}``.

Run configuration is an INI file with ``[trainer]``, ``[losses]``, ``[nets]``
and ``[data]`` sections.  ``--set key=value`` (or ``section.key=value``)
overrides a file value; the resolved values are written to the run manifest.

Exit codes: 0 success, 2 configuration/usage error, 3 data or file format
error, 4 numerical divergence.
"""

from __future__ import annotations

import argparse
import configparser
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .data import Dataset, load_csv, load_idx, scale_dataset, synth_gmm, with_scaling, write_csv
from .errors import ConfigError, DivergenceError, FormatError, UsageError
from .evaluate import assign, cluster_report, kmeans
from .losses import LossWeights
from .nets import generator_forward
from .prior import make_rng, one_hot
from .tensor import Tensor
from .trainer import (
    TrainConfig,
    Trainer,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
)

log = logging.getLogger("dlsc")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4
OUTPUT_ROOT_ENV = "DLSC_OUTPUT_ROOT"

CHECKPOINT = "checkpoint.dlsc"
HISTORY = "history.csv"
MANIFEST = "manifest.json"
RESOLVED = "config.ini"
REPORT = "report.txt"


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none", "auto") else float(s)


def _opt_int(s: str):
    return None if s.strip().lower() in ("", "none") else int(s)


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(t) for t in s.replace(",", " ").split())


def _words(s: str) -> tuple[str, ...]:
    return tuple(t for t in s.replace(",", " ").split())


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return str(v)


_T = TrainConfig()
_W = LossWeights()

# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "trainer": {
        "n_clusters": (int, _T.n_clusters),
        "zn_dim": (int, _T.zn_dim),
        "sigma": (float, _T.sigma),
        "batch_size": (int, _T.batch_size),
        "critic_iters": (int, _T.critic_iters),
        "lr": (float, _T.lr),
        "adam_beta1": (float, _T.adam_beta1),
        "adam_beta2": (float, _T.adam_beta2),
        "adam_eps": (float, _T.adam_eps),
        "total_steps": (int, _T.total_steps),
        "seed": (int, _T.seed),
        "objective_mode": (str, _T.objective_mode),
        "adversarial": (str, _T.adversarial),
        "ablation_mask": (_words, _T.ablation_mask),
        "mmd_bandwidth": (_opt_float, _T.mmd_bandwidth),
        "eval_every": (int, _T.eval_every),
        "checkpoint_every": (int, 0),
    },
    "losses": {k: (float, v) for k, v in _W.to_dict().items()},
    "nets": {
        "hidden": (_ints, _T.hidden),
        "init_std": (float, _T.init_std),
        "gen_out_activation": (str, "auto"),
    },
    "data": {
        "source": (str, "csv"),
        "path": (str, ""),
        "labels_path": (str, ""),
        "has_label_column": (_bool, True),
        "delimiter": (str, ","),
        "scaling": (str, "standardize"),
        "downscale": (_opt_int, None),
        "synth_k": (int, 3),
        "synth_dim": (int, 2),
        "synth_n": (int, 500),
        "synth_mean_scale": (float, 6.0),
        "synth_std": (float, 1.0),
        "synth_seed": (int, 0),
    },
}
SECTIONS = tuple(SCHEMA)


def defaults() -> dict[str, dict]:
    return {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}


def _locate(key: str) -> tuple[str, str]:
    """``section.key`` or a bare key resolved in section order."""
    if "." in key:
        sec, _, k = key.partition(".")
        return sec, k
    for sec in SECTIONS:
        if key in SCHEMA[sec]:
            return sec, key
    return "", key


def resolve_config(path=None, overrides=()) -> dict[str, dict]:
    """Defaults < config file < overrides, parsed to typed values."""
    cfg = defaults()
    raw: list[tuple[str, str, str]] = []
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except configparser.Error as exc:
            raise ConfigError(f"config file {path}: {exc}") from None
        for sec in cp.sections():
            for k, v in cp.items(sec):
                raw.append((sec, k, v))
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r} is not key=value")
        k, _, v = ov.partition("=")
        sec, k = _locate(k.strip())
        raw.append((sec, k, v.strip()))
    bad = []
    for sec, k, v in raw:
        if sec not in SCHEMA or k not in SCHEMA[sec]:
            bad.append(f"{sec}.{k}" if sec else k)
            continue
        try:
            cfg[sec][k] = SCHEMA[sec][k][0](v)
        except ValueError as exc:
            bad.append(f"{sec}.{k} ({exc})")
    if bad:
        raise ConfigError("invalid config keys: " + ", ".join(bad))
    return cfg


def gen_activation(cfg: dict) -> str:
    """``auto``: tanh for data living in [-1, 1] (IDX pixels, minmax), else linear."""
    act = cfg["nets"]["gen_out_activation"]
    if act != "auto":
        return act
    d = cfg["data"]
    return "tanh" if d["source"] == "idx" or d["scaling"] == "minmax" else "linear"


def train_config(cfg: dict, data_dim: int | None = None) -> TrainConfig:
    t = {k: v for k, v in cfg["trainer"].items() if k != "checkpoint_every"}
    tc = TrainConfig(
        **t,
        weights=LossWeights(**cfg["losses"]),
        hidden=tuple(cfg["nets"]["hidden"]),
        init_std=cfg["nets"]["init_std"],
        gen_out_activation=gen_activation(cfg),
        data_dim=data_dim,
    )
    return tc.validate()


def write_ini(cfg: dict, path) -> None:
    cp = configparser.ConfigParser(interpolation=None)
    for sec, keys in cfg.items():
        cp[sec] = {k: _fmt(v) for k, v in keys.items()}
    with open(path, "w") as fh:
        cp.write(fh)


def check_data_paths(d: dict) -> None:
    """Fail before anything is written when input files are missing."""
    if d["source"] not in ("csv", "idx", "synth"):
        raise ConfigError(f"data.source must be csv, idx or synth, got {d['source']!r}")
    if d["source"] == "synth":
        return
    if not d["path"]:
        raise ConfigError("data.path is required")
    for key in ("path", "labels_path"):
        if d[key] and not Path(d[key]).is_file():
            raise ConfigError(f"data.{key}: file not found: {d[key]}")


def load_dataset(d: dict) -> Dataset:
    check_data_paths(d)
    if d["source"] == "synth":
        ds = synth_gmm(
            d["synth_k"], d["synth_dim"], d["synth_n"],
            d["synth_mean_scale"], d["synth_std"], seed=d["synth_seed"],
        )
    elif d["source"] == "idx":
        ds = load_idx(d["path"], d["labels_path"] or None, d["downscale"])
    else:
        ds = load_csv(d["path"], d["has_label_column"], d["delimiter"])
    return scale_dataset(ds, d["scaling"])


def describe_dataset(ds: Dataset, d: dict) -> dict:
    return {
        "source": d["source"],
        "path": str(Path(d["path"]).resolve()) if d["path"] else None,
        "name": ds.name,
        "n": ds.n,
        "dim": ds.dim,
        "labelled": ds.labels is not None,
        "scaling": ds.scaling,
        "sha256": ds.content_hash(),
    }


def output_dir(explicit, name: str) -> Path:
    if explicit:
        return Path(explicit)
    root = os.environ.get(OUTPUT_ROOT_ENV) or "runs"
    return Path(root) / name


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def run_one(cfg: dict, ds: Dataset, out: Path, label: str = "train") -> dict:
    """Train one configuration into ``out``; returns the manifest dict.

    A :class:`DivergenceError` is re-raised after the partial history and a
    manifest with ``status = diverged`` have been written.
    """
    tc = train_config(cfg, ds.dim)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": label,
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "seed": tc.seed,
        "started": _now(),
        "config": cfg,
        "train_config": tc.to_dict(),
        "dataset": describe_dataset(ds, cfg["data"]),
        "status": "running",
    }
    mpath = out / MANIFEST
    mpath.write_text(json.dumps(manifest, indent=2, default=list) + "\n")
    write_ini(cfg, out / RESOLVED)
    tr = Trainer(tc, ds)
    every = cfg["trainer"]["checkpoint_every"]
    try:
        tr.run(tc.total_steps, checkpoint_path=out / CHECKPOINT, checkpoint_every=every)
    except DivergenceError as exc:
        tr.history.to_csv(out / HISTORY)
        manifest.update(status="diverged", error=str(exc), steps_done=tr.step)
        mpath.write_text(json.dumps(manifest, indent=2, default=list) + "\n")
        raise
    save_checkpoint(out / CHECKPOINT, tr, extra={"data": cfg["data"]})
    tr.history.to_csv(out / HISTORY)
    manifest.update(status="done", finished=_now(), steps_done=tr.step)
    if ds.labels is not None:
        rep = cluster_report(assign(tr.E, ds.X), ds.labels, tc.n_clusters)
        (out / REPORT).write_text(rep.to_text())
        manifest["metrics"] = {"acc": rep.acc, "nmi": rep.nmi, "ari": rep.ari}
    mpath.write_text(json.dumps(manifest, indent=2, default=list) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# commands

def cmd_train(args) -> int:
    cfg = resolve_config(args.config, args.set)
    check_data_paths(cfg["data"])
    ds = load_dataset(cfg["data"])
    train_config(cfg, ds.dim)
    out = output_dir(args.out, f"train-seed{cfg['trainer']['seed']}")
    m = run_one(cfg, ds, out)
    print(f"wrote {out}")
    if "metrics" in m:
        mt = m["metrics"]
        print(f"ACC={mt['acc']:.4f}  NMI={mt['nmi']:.4f}  ARI={mt['ari']:.4f}")
    return EXIT_OK


def _eval_dataset(args, meta: dict) -> Dataset:
    if args.data:
        d = defaults()["data"]
        d.update(source=args.source, path=args.data, labels_path=args.labels or "")
        d["has_label_column"] = not args.no_label_column
        check_data_paths(d)
        if d["source"] == "idx":
            ds = load_idx(d["path"], d["labels_path"] or None, args.downscale)
        else:
            ds = load_csv(d["path"], d["has_label_column"], d["delimiter"])
    else:
        d = meta.get("extra", {}).get("data")
        if d is None:
            raise UsageError("checkpoint does not record its dataset; pass --data")
        check_data_paths(d)
        ds = load_dataset({**d, "scaling": "none"})
    return with_scaling(ds, meta.get("scaling", {"scaling": "none"}))


def cmd_eval(args) -> int:
    meta, _ = read_checkpoint(args.checkpoint)
    tr = load_checkpoint(args.checkpoint)
    ds = _eval_dataset(args, meta)
    if ds.labels is None:
        raise FormatError("evaluation needs ground-truth labels; the dataset has none")
    rep = cluster_report(assign(tr.E, ds.X), ds.labels, tr.config.n_clusters)
    out = Path(args.out) if args.out else Path(args.checkpoint).with_name(REPORT)
    out.write_text(rep.to_text())
    print(rep.row())
    if rep.dead_clusters:
        print("dead clusters: " + " ".join(map(str, rep.dead_clusters)))
    return EXIT_OK


ABLATION_GRID: list[tuple[str, tuple[str, ...]]] = [("full", ())] + [
    (f"no-{a}", (a,)) for a in ("AE", "n", "MMD", "CE", "c")
]


def ablation_table(rows: list[dict]) -> str:
    lines = [f"{'setting':<8}  {'ACC':>7}  {'NMI':>7}  {'ARI':>7}"]
    for r in rows:
        if r["status"] == "done":
            lines.append(f"{r['name']:<8}  {r['acc']:7.4f}  {r['nmi']:7.4f}  {r['ari']:7.4f}")
        elif r["status"] == "diverged":
            lines.append(f"{r['name']:<8}  did not converge")
        else:
            lines.append(f"{r['name']:<8}  failed: {r['error']}")
    return "\n".join(lines) + "\n"


def cmd_ablate(args) -> int:
    base = resolve_config(args.config, args.set)
    if base["trainer"]["ablation_mask"]:
        raise ConfigError("ablate: base config must not set trainer.ablation_mask")
    ds = load_dataset(base["data"])
    if ds.labels is None:
        raise FormatError("ablation needs ground-truth labels; the dataset has none")
    train_config(base, ds.dim)
    root = output_dir(args.out, f"ablate-seed{base['trainer']['seed']}")
    rows = []
    for name, mask in ABLATION_GRID:
        cfg = json.loads(json.dumps(base, default=list))
        cfg["trainer"]["ablation_mask"] = mask
        cfg["nets"]["hidden"] = tuple(cfg["nets"]["hidden"])
        row = {"name": name}
        try:
            m = run_one(cfg, ds, root / name, label="ablate")
            row.update(status="done", **m["metrics"])
        except DivergenceError as exc:
            row.update(status="diverged", error=str(exc))
        except Exception as exc:  # one bad run must not stop the grid
            log.exception("ablation run %s failed", name)
            row.update(status="failed", error=str(exc))
        rows.append(row)
        print(ablation_table([row]).splitlines()[1], flush=True)
    table = ablation_table(rows)
    root.mkdir(parents=True, exist_ok=True)
    (root / "ablation.txt").write_text(table)
    (root / "ablation.json").write_text(json.dumps(rows, indent=2) + "\n")
    print(table, end="")
    return EXIT_OK


def generate_samples(tr: Trainer, cluster_id: int, count: int, seed: int) -> np.ndarray:
    K = tr.config.n_clusters
    if not 0 <= cluster_id < K:
        raise UsageError(f"cluster_id must be in [0, {K}), got {cluster_id}")
    if count < 0:
        raise UsageError(f"count must be >= 0, got {count}")
    rng = make_rng(seed, 2)
    zn = rng.normal(0.0, tr.config.sigma, size=(count, tr.config.zn_dim))
    zc = one_hot(np.full(count, cluster_id), K)
    if count == 0:
        return np.empty((0, tr.G.spec.output_dim))
    x = generator_forward(tr.G, Tensor(np.hstack([zc, zn]))).data
    sc = tr.scaling
    if sc.get("scaling", "none") != "none":
        x = x * np.asarray(sc["scale"]) + np.asarray(sc["offset"])
    return x


def cmd_generate(args) -> int:
    tr = load_checkpoint(args.checkpoint)
    x = generate_samples(tr, args.cluster, args.count, args.seed)
    write_csv(Dataset(x, name="generated"), args.out)
    print(f"wrote {x.shape[0]} samples to {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    ds = synth_gmm(args.k, args.d, args.n, args.mean_scale, args.std, seed=args.seed)
    write_csv(ds, args.out)
    print(f"wrote {ds.n} rows to {args.out}")
    return EXIT_OK


def cmd_kmeans(args) -> int:
    cfg = resolve_config(args.config, args.set)
    ds = load_dataset(cfg["data"])
    if ds.labels is None:
        raise FormatError("kmeans baseline needs ground-truth labels; the dataset has none")
    res = kmeans(ds.X, cfg["trainer"]["n_clusters"], rng=make_rng(cfg["trainer"]["seed"], 3))
    print(cluster_report(res.labels, ds.labels).row())
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dlsc", description="Disentangled latent space clustering")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", "-c", help="INI file with trainer/losses/nets/data sections")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value (repeatable)")
        sp.add_argument("--out", "-o", help=f"output directory (default under ${OUTPUT_ROOT_ENV})")

    sp = sub.add_parser("train", help="train a model")
    with_config(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="score a checkpoint against labels")
    sp.add_argument("checkpoint")
    sp.add_argument("--data", help="dataset file (default: the one recorded at training)")
    sp.add_argument("--source", choices=("csv", "idx"), default="csv")
    sp.add_argument("--labels", help="IDX label file")
    sp.add_argument("--downscale", type=int)
    sp.add_argument("--no-label-column", action="store_true")
    sp.add_argument("--out", "-o", help="report path (default: next to the checkpoint)")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ablate", help="run the loss-term ablation grid")
    with_config(sp)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("generate", help="sample one cluster from a trained generator")
    sp.add_argument("checkpoint")
    sp.add_argument("--cluster", type=int, required=True)
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", "-o", required=True)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("synth", help="write a synthetic Gaussian mixture CSV")
    sp.add_argument("--k", type=int, default=3)
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--n", type=int, default=500, help="points per cluster")
    sp.add_argument("--mean-scale", type=float, default=6.0)
    sp.add_argument("--std", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", "-o", required=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("kmeans", help="K-means baseline on the configured dataset")
    with_config(sp)
    sp.set_defaults(func=cmd_kmeans)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
