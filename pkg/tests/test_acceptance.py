"""Acceptance criteria, one test per criterion.

Each test records a one-line PASS/FAIL verdict that is repeated in the
terminal summary.  The synthetic training runs (criteria 5 and 7) use a step
budget of ``DLSC_ACCEPT_STEPS`` outer steps (default 3000).
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from dlsc import tensor as T
from dlsc.data import load_csv, scale_dataset, synth_gmm
from dlsc.errors import DivergenceError, FormatError
from dlsc.evaluate import acc, ari, assign, contingency_matrix, kmeans, nmi
from dlsc.losses import critic_loss, gradient_penalty, mmd_rbf
from dlsc.nets import NetworkParams, discriminator_spec, init_params
from dlsc.prior import make_rng, sample_prior
from dlsc.tensor import Tape, Tensor, grad, rel_error
from dlsc.trainer import (
    TrainConfig,
    Trainer,
    joint_terms,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
)
from oracles import acc_bruteforce, ari_formula, labels_from_table, nmi_formula
from test_losses import _gp_first_order, mmd_oracle
from test_tensor import BINARY, UNARY, rand

STEPS = int(os.environ.get("DLSC_ACCEPT_STEPS", "3000"))
SEEDS = (0, 1, 2, 3, 4)
CPU_BUDGET_S = 300.0


def fd_grad(f, x0, h=1e-6):
    flat = x0.reshape(-1)
    out = np.empty(flat.size)
    for i in range(flat.size):
        p, m = flat.copy(), flat.copy()
        p[i] += h
        m[i] -= h
        out[i] = (f(p.reshape(x0.shape)) - f(m.reshape(x0.shape))) / (2 * h)
    return out.reshape(x0.shape)


# ---------------------------------------------------------------------------
# 1. gradient correctness

def _toy():
    cfg = TrainConfig(n_clusters=2, zn_dim=2, batch_size=8, hidden=(8,), init_std=0.3, seed=0)
    tr = Trainer(cfg, synth_gmm(2, 4, 8, seed=0))
    return tr, tr.real_batch(), tr.sample_prior()


def _objective_errors():
    tr, x_r, prior = _toy()
    errs = {}
    for net_name in ("G", "E"):
        net = tr.nets[net_name]
        with Tape() as tape:
            wG = tr.G.bind(tape) if net_name == "G" else tr.G.constants()
            wE = tr.E.bind(tape) if net_name == "E" else tr.E.constants()
            w = wG if net_name == "G" else wE
            _, total, _ = joint_terms(tr.G, tr.E, tr.D, x_r, prior, tr.config, wG, wE)
            names = list(w)
            gs = grad(total, [w[k] for k in names])
        for k, g in zip(names, gs):
            def f(v, k=k):
                arrays = dict(net.arrays)
                arrays[k] = v
                alt = NetworkParams(net.spec, arrays)
                G = alt if net_name == "G" else tr.G
                E = alt if net_name == "E" else tr.E
                _, tot, _ = joint_terms(G, E, tr.D, x_r, prior, tr.config,
                                        G.constants(), E.constants())
                return tot.item()

            errs[f"{net_name}.{k}"] = rel_error(g.data, fd_grad(f, net.arrays[k]))
    # critic side, gradient penalty included
    x_g = np.random.default_rng(1).normal(size=x_r.shape)
    with Tape() as tape:
        wD = tr.D.bind(tape)
        loss = critic_loss("wasserstein_gp", tr.D, x_r, x_g, 10.0, np.random.default_rng(2), wD)
        names = list(wD)
        gs = grad(loss, [wD[k] for k in names])
    for k, g in zip(names, gs):
        def fD(v, k=k):
            arrays = dict(tr.D.arrays)
            arrays[k] = v
            D = NetworkParams(tr.D.spec, arrays)
            with Tape():
                return critic_loss("wasserstein_gp", D, x_r, x_g, 10.0,
                                   np.random.default_rng(2), D.constants()).item()

        errs[f"D.{k}"] = rel_error(g.data, fd_grad(fD, tr.D.arrays[k]))
    return errs


def _op_errors():
    errs = {}
    for name, (fn, (lo, hi)) in UNARY.items():
        x = rand((4, 3), 11, lo, hi)
        w = rand(fn(Tensor(x)).shape, 7)
        errs[name] = T.grad_check(lambda t: T.tsum(T.mul(fn(t), Tensor(w))), x)
    for name, fn in BINARY.items():
        a, b = rand((4, 3), 1, 0.5, 2.0), rand((4, 3), 2, 0.5, 2.0)
        w = rand(fn(Tensor(a), Tensor(b)).shape, 3)
        errs[name + "/a"] = T.grad_check(lambda t: T.tsum(T.mul(fn(t, Tensor(b)), Tensor(w))), a)
        errs[name + "/b"] = T.grad_check(lambda t: T.tsum(T.mul(fn(Tensor(a), t), Tensor(w))), b)
    x, W, bias = rand((5, 3), 1), rand((3, 4), 2), rand((4,), 3)
    errs["affine/W"] = T.grad_check(lambda t: T.tsum(T.tanh(T.affine(Tensor(x), t, Tensor(bias)))), W)
    errs["affine/x"] = T.grad_check(lambda t: T.tsum(T.tanh(T.affine(t, Tensor(W), Tensor(bias)))), x)
    errs["affine/b"] = T.grad_check(lambda t: T.tsum(T.tanh(T.affine(Tensor(x), Tensor(W), t))), bias)
    errs["embed"] = T.grad_check(
        lambda t: T.tsum(T.mul(T.embed(t, (4, 5), 1, 1, 4), Tensor(rand((4, 5), 9)))), rand((4, 3), 8)
    )
    return errs


def test_criterion_1_gradient_correctness(acceptance_log):
    t0 = time.perf_counter()
    errs = {**_op_errors(), **_objective_errors()}
    elapsed = time.perf_counter() - t0
    worst = max(errs, key=errs.get)
    ok = errs[worst] <= 1e-5 and elapsed < 60
    acceptance_log(
        "1", ok,
        f"{len(errs)} gradient checks, worst {worst} rel err {errs[worst]:.2e} (<=1e-5), "
        f"{elapsed:.1f}s (<60s)",
    )
    assert ok


# ---------------------------------------------------------------------------
# 2. second-order correctness

def test_criterion_2_gradient_penalty_second_order(acceptance_log):
    D = init_params(discriminator_spec(4, hidden=(8,)), 0.5, make_rng(3))
    rng = np.random.default_rng(0)
    xr, xg = rng.normal(size=(8, 4)), rng.normal(size=(8, 4))
    eps = np.random.default_rng(5).uniform(0, 1, size=(8, 1))
    x_hat = eps * xr + (1 - eps) * xg
    with Tape() as tape:
        w = D.bind(tape)
        gp = gradient_penalty(D, xr, xg, np.random.default_rng(5), w)
        names = list(w)
        gs = grad(gp, [w[k] for k in names])
    worst = 0.0
    for k, g in zip(names, gs):
        num = fd_grad(lambda v, k=k: _gp_first_order(D, x_hat, k, v), D.arrays[k])
        worst = max(worst, rel_error(g.data, num))
    ok = worst <= 1e-4
    acceptance_log("2", ok, f"GP parameter gradients vs FD of input gradient, rel err {worst:.2e} (<=1e-4)")
    assert ok


# ---------------------------------------------------------------------------
# 3. MMD oracle

def test_criterion_3_mmd_oracle(acceptance_log):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        n, d = int(rng.integers(2, 17)), int(rng.integers(1, 5))
        X, Y = rng.normal(size=(n, d)), rng.normal(size=(n, d)) + rng.normal()
        bw = float(rng.uniform(0.1, 3.0))
        worst = max(worst, abs(mmd_rbf(X, Y, bw).item() - mmd_oracle(X.tolist(), Y.tolist(), bw)))
    P = np.array([[0.0], [2.0]])
    hand = abs(mmd_rbf(P, P, 1.0).item() - (math.exp(-2) - 1))
    ok = worst <= 1e-12 and hand <= 1e-12
    acceptance_log("3", ok, f"100 instances max |diff| {worst:.1e}, hand case |diff| {hand:.1e} (<=1e-12)")
    assert ok


# ---------------------------------------------------------------------------
# 4. metric oracles

def test_criterion_4_metric_oracles(acceptance_log):
    rng = np.random.default_rng(0)
    acc_worst = 0.0
    for _ in range(200):
        k = int(rng.integers(1, 7))
        n = int(rng.integers(k, 40))
        p, t = rng.integers(0, k, n), rng.integers(0, k, n)
        acc_worst = max(acc_worst, abs(acc(p, t) - acc_bruteforce(p.tolist(), t.tolist())))
    nmi_worst = ari_worst = 0.0
    for _ in range(50):
        tab = rng.integers(0, 8, size=(int(rng.integers(2, 6)), int(rng.integers(2, 6))))
        tab[0, 0] += 1
        tab[-1, -1] += 1
        pred, true = labels_from_table(tab)
        c = contingency_matrix(pred, true)
        nmi_worst = max(nmi_worst, abs(nmi(pred, true) - nmi_formula(c)))
        ari_worst = max(ari_worst, abs(ari(pred, true) - ari_formula(c)))
    same = rng.integers(0, 5, 100)
    ari_same = ari(same, same)
    ok = acc_worst == 0.0 and nmi_worst <= 1e-10 and ari_worst <= 1e-10 and ari_same == 1.0
    acceptance_log(
        "4", ok,
        f"ACC vs brute force max diff {acc_worst:.1e}; NMI {nmi_worst:.1e}, ARI {ari_worst:.1e} "
        f"(<=1e-10); ARI(identical)={ari_same!r}",
    )
    assert ok


# ---------------------------------------------------------------------------
# 5 + 7. synthetic training runs

def synth_data(seed):
    return scale_dataset(synth_gmm(3, 2, 500, 6.0, 1.0, seed=seed), "isotropic")


def run_synthetic(seed, mask=()):
    ds = synth_data(seed)
    cfg = TrainConfig(n_clusters=3, zn_dim=2, total_steps=STEPS, seed=seed, ablation_mask=mask)
    tr = Trainer(cfg, ds)
    c0 = time.process_time()
    try:
        tr.run(STEPS)
    except DivergenceError as exc:
        return {"diverged": True, "acc": None, "cpu": time.process_time() - c0, "error": str(exc)}
    return {
        "diverged": False,
        "acc": acc(assign(tr.E, ds.X), ds.labels),
        "cpu": time.process_time() - c0,
    }


_RUNS: dict = {}


def runs_for(mask):
    key = tuple(mask)
    if key not in _RUNS:
        _RUNS[key] = [run_synthetic(s, mask) for s in SEEDS]
    return _RUNS[key]


def _median_acc(runs):
    """Median with diverged runs ranked below every converged one."""
    vals = sorted(-1.0 if r["diverged"] else r["acc"] for r in runs)
    return vals[len(vals) // 2]


@pytest.mark.slow
def test_criterion_5_synthetic_clustering(acceptance_log):
    runs = runs_for(())
    accs = [r["acc"] for r in runs]
    cpu = max(r["cpu"] for r in runs)
    med = _median_acc(runs)
    km = [acc(kmeans(synth_data(s).X, 3, rng=make_rng(s)).labels, synth_data(s).labels) for s in SEEDS]
    ok = med >= 0.95 and cpu <= CPU_BUDGET_S and min(km) >= 0.99
    acceptance_log(
        "5", ok,
        f"DLS median ACC {med:.4f} (>=0.95) over seeds {list(SEEDS)} "
        f"[{', '.join('div' if a is None else f'{a:.3f}' for a in accs)}], "
        f"{STEPS} steps, max CPU {cpu:.0f}s (<= {CPU_BUDGET_S:.0f}s); K-means min ACC {min(km):.4f} (>=0.99)",
    )
    assert ok


def _fmt_runs(runs):
    return "[" + ", ".join("div" if r["diverged"] else f"{r['acc']:.3f}" for r in runs) + "]"


@pytest.mark.slow
def test_criterion_7_ablation_direction(acceptance_log):
    full = runs_for(())
    no_ae, no_mmd, no_ce = runs_for(("AE",)), runs_for(("MMD",)), runs_for(("CE",))
    m_full = _median_acc(full)
    checks = {
        "full>=no-AE": _median_acc(no_ae) <= m_full,
        "no-MMD": _median_acc(no_mmd) <= m_full - 0.15,
        "no-CE": _median_acc(no_ce) <= m_full - 0.15,
    }
    ok = all(checks.values())
    acceptance_log(
        "7", ok,
        f"median ACC full {m_full:.3f} {_fmt_runs(full)}, no-AE {_median_acc(no_ae):.3f} "
        f"{_fmt_runs(no_ae)}, no-MMD {_fmt_runs(no_mmd)}, no-CE {_fmt_runs(no_ce)}; "
        + ", ".join(f"{k}: {'ok' if v else 'violated'}" for k, v in checks.items()),
    )
    assert ok


# ---------------------------------------------------------------------------
# 6. Pendigits stretch target

@pytest.mark.slow
def test_criterion_6_pendigits_stretch(acceptance_log):
    path = os.environ.get("DLSC_PENDIGITS")
    if not path or not Path(path).is_file():
        acceptance_log("6", None, "stretch, not gating; set DLSC_PENDIGITS to the Pendigits CSV")
        pytest.skip("Pendigits CSV not available")
    raw = load_csv(path)
    ds = scale_dataset(raw, "minmax")
    steps = int(os.environ.get("DLSC_PENDIGITS_STEPS", "5000"))
    wins, accs = 0, []
    for s in SEEDS:
        tr = Trainer(TrainConfig(n_clusters=10, zn_dim=5, total_steps=steps, seed=s), ds)
        tr.run(steps)
        pred = assign(tr.E, ds.X)
        accs.append(acc(pred, ds.labels))
        km = kmeans(ds.X, 10, rng=make_rng(s)).labels
        wins += nmi(pred, ds.labels) > nmi(km, ds.labels)
    med = float(np.median(accs))
    ok = med >= 0.75 and wins >= 3
    acceptance_log("6", ok, f"median ACC {med:.3f} (>=0.75), beats K-means NMI on {wins}/5 seeds (>=3)")
    assert ok


# ---------------------------------------------------------------------------
# 8. determinism and persistence

def test_criterion_8_determinism_and_persistence(acceptance_log, tmp_path):
    ds = synth_data(0)
    cfg = dict(n_clusters=3, zn_dim=2, seed=11)

    def fresh():
        return Trainer(TrainConfig(**cfg), ds)

    a, b = fresh(), fresh()
    a.run(12)
    b.run(12)
    same_history = a.history.losses() == b.history.losses()

    part = fresh()
    part.run(5)
    save_checkpoint(tmp_path / "c.dlsc", part)
    back = load_checkpoint(tmp_path / "c.dlsc", ds)
    params_equal = all(
        np.array_equal(x, back.nets[n].arrays[k]) for n in "GED" for k, x in part.nets[n].arrays.items()
    )
    back.run(7)
    resumed_equal = back.history.losses() == a.history.losses() and all(
        np.array_equal(x, back.G.arrays[k]) for k, x in a.G.arrays.items()
    )

    raw = (tmp_path / "c.dlsc").read_bytes()
    bad = tmp_path / "bad.dlsc"
    fields = []
    for blob in (b"NOPE" + raw[4:], raw[: len(raw) // 2], raw[:-1] + bytes([raw[-1] ^ 1])):
        bad.write_bytes(blob)
        try:
            read_checkpoint(bad)
            fields.append(None)
        except FormatError as exc:
            fields.append(str(exc).split(":")[0])
    rejected = fields == ["magic", "crc32", "crc32"]
    ok = same_history and params_equal and resumed_equal and rejected
    acceptance_log(
        "8", ok,
        f"identical history: {same_history}; bitwise reload: {params_equal}; "
        f"resume == uninterrupted: {resumed_equal}; corrupt files rejected naming {fields}",
    )
    assert ok


# ---------------------------------------------------------------------------
# 9. prior statistics

def test_criterion_9_prior_statistics(acceptance_log):
    n, K = 10**6, 10
    z = sample_prior(n, K, 5, 0.10, make_rng(2024))
    sd = float(z.zn.data.std())
    counts = z.zc.data.sum(axis=0)
    p = 1.0 / K
    bound = 3 * math.sqrt(n * p * (1 - p))
    dev = float(np.max(np.abs(counts - n * p)))
    ok = abs(sd - 0.1) <= 0.001 and dev <= bound
    acceptance_log(
        "9", ok,
        f"z_n std {sd:.5f} (0.100 +- 0.001); max |count - n/K| {dev:.0f} (<= 3 sigma = {bound:.0f})",
    )
    assert ok
