import json
import struct

import numpy as np
import pytest

from dlsc.data import Dataset, scale_dataset, synth_gmm
from dlsc.errors import ConfigError, DivergenceError, FormatError
from dlsc.losses import LossWeights
from dlsc.nets import NetworkParams
from dlsc.prior import make_rng, sample_prior
from dlsc.tensor import Tape, grad
from dlsc.trainer import (
    AdamState,
    TrainConfig,
    Trainer,
    adam_update,
    critic_step,
    joint_step,
    joint_terms,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
    train,
)


def small_config(**kw):
    base = dict(n_clusters=2, zn_dim=2, batch_size=8, hidden=(8,), total_steps=3, seed=0)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture
def toy():
    return scale_dataset(synth_gmm(2, 4, 20, seed=0), "standardize")


def test_config_validation_lists_problems():
    with pytest.raises(ConfigError) as ei:
        TrainConfig(n_clusters=0, lr=0.0, objective_mode="x").validate()
    msg = str(ei.value)
    assert "n_clusters" in msg and "lr" in msg and "objective_mode" in msg
    with pytest.raises(ConfigError):
        TrainConfig(ablation_mask=("AE", "zz")).validate()


def test_config_dict_roundtrip():
    c = small_config(ablation_mask=("MMD",), weights=LossWeights(beta3=3.0))
    d = json.loads(json.dumps(c.to_dict()))
    assert TrainConfig.from_dict(d) == c
    with pytest.raises(ConfigError, match="bogus"):
        TrainConfig.from_dict({**d, "bogus": 1})


def test_effective_weights_ablation():
    w = small_config(ablation_mask=("AE", "MMD", "CE", "c", "n")).effective_weights()
    assert (w.ae, w.beta1, w.beta2, w.beta3, w.beta4) == (0, 0, 0, 0, 0)
    assert w.adv == 1.0


def test_default_bandwidth_and_override():
    assert small_config().bandwidth == pytest.approx(2 * 2 * 0.01)
    assert small_config(mmd_bandwidth=0.5).bandwidth == 0.5


def test_adam_first_step_is_signed_lr():
    p = NetworkParams(None, {"w": np.array([1.0, 1.0, 1.0])})
    st = AdamState()
    adam_update(p, {"w": np.array([2.0, -0.5, 0.0])}, st, 0.1, 0.5, 0.9, 1e-8)
    np.testing.assert_allclose(p.arrays["w"], [0.9, 1.1, 1.0], atol=1e-7)
    assert st.t == 1


def test_adam_matches_reference_loop():
    rng = np.random.default_rng(0)
    p = NetworkParams(None, {"w": rng.normal(size=3)})
    ref = p.arrays["w"].copy()
    m = np.zeros(3)
    v = np.zeros(3)
    st = AdamState()
    for t in range(1, 6):
        g = rng.normal(size=3)
        adam_update(p, {"w": g}, st, 1e-2, 0.5, 0.9, 1e-8)
        m = 0.5 * m + 0.5 * g
        v = 0.9 * v + 0.1 * g * g
        ref = ref - 1e-2 * (m / (1 - 0.5**t)) / (np.sqrt(v / (1 - 0.9**t)) + 1e-8)
    np.testing.assert_allclose(p.arrays["w"], ref, rtol=1e-14)


def _first_layer_calls(tape, w0):
    return sum(1 for n in tape.nodes if n.op == "affine" and n.parents[1] is w0)


def test_joint_step_structure(toy):
    tr = Trainer(small_config(), toy)
    prior = tr.sample_prior()
    with Tape() as tape:
        wG, wE = tr.G.bind(tape), tr.E.bind(tape)
        terms, total, rest = joint_terms(tr.G, tr.E, tr.D, tr.real_batch(), prior, tr.config, wG, wE)
        assert _first_layer_calls(tape, wG["W0"]) == 3
        assert _first_layer_calls(tape, wE["W0"]) == 3
        assert set(terms) == {"adv", "ae", "mmd", "l_n", "l_ce", "l_c"}
        # the encoder sees nothing of the adversarial term
        g_adv = grad(terms["adv"], list(wE.values()))
        assert all(np.all(g.data == 0) for g in g_adv)
        g_tot = grad(total, list(wE.values()))
        g_rest = grad(rest, list(wE.values()))
        for a, b in zip(g_tot, g_rest):
            np.testing.assert_array_equal(a.data, b.data)


def test_step_freezing(toy):
    tr = Trainer(small_config(), toy)
    d0 = tr.D.copy()
    joint_step(tr.G, tr.E, tr.D, tr.real_batch(), tr.sample_prior(), tr.config,
               tr.opt["G"], tr.opt["E"])
    for k in d0.arrays:
        np.testing.assert_array_equal(d0.arrays[k], tr.D.arrays[k])
    g0, e0 = tr.G.copy(), tr.E.copy()
    critic_step(tr.D, tr.G, tr.real_batch(), tr.sample_prior(), tr.config, tr.opt["D"], tr.rng)
    for k in g0.arrays:
        np.testing.assert_array_equal(g0.arrays[k], tr.G.arrays[k])
    for k in e0.arrays:
        np.testing.assert_array_equal(e0.arrays[k], tr.E.arrays[k])
    assert any(not np.array_equal(d0.arrays[k], tr.D.arrays[k]) for k in d0.arrays)


def test_train_history_length_and_terms(toy):
    res = train(small_config(total_steps=4), toy)
    assert len(res.history) == 4
    assert [r["step"] for r in res.history.records] == [1, 2, 3, 4]
    assert {"critic", "adv", "ae", "mmd", "l_n", "l_ce", "l_c", "total"} <= set(res.history.records[0])


def test_history_csv(toy, tmp_path):
    res = train(small_config(total_steps=2), toy)
    res.history.to_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "step,term,value"
    assert lines[1].startswith("1,")


@pytest.mark.parametrize("mode", ["clustergan", "gan_only"])
def test_other_objective_modes(toy, mode):
    tr = Trainer(small_config(objective_mode=mode), toy)
    e0 = tr.E.copy()
    vals = tr.train_step()
    assert np.isfinite(vals["total"])
    if mode == "gan_only":
        for k in e0.arrays:
            np.testing.assert_array_equal(e0.arrays[k], tr.E.arrays[k])
    else:
        assert {"zn_rec", "ce"} <= set(vals)


def test_vanilla_adversarial(toy):
    tr = Trainer(small_config(adversarial="vanilla"), toy)
    assert np.isfinite(tr.train_step()["total"])


def test_ablation_drops_terms(toy):
    tr = Trainer(small_config(ablation_mask=("AE",)), toy)
    vals = tr.train_step()
    full = Trainer(small_config(), toy).train_step()
    assert vals["total"] == pytest.approx(full["total"] - full["ae"])


def test_determinism(toy):
    a = train(small_config(total_steps=3), toy).history.losses()
    b = train(small_config(total_steps=3), toy).history.losses()
    assert a == b
    c = train(small_config(total_steps=3, seed=1), toy).history.losses()
    assert a != c


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_aborts():
    X = np.full((16, 2), 1e200)
    X[::2] *= -1
    tr = Trainer(small_config(), Dataset(X))
    with pytest.raises(DivergenceError) as ei:
        tr.train_step()
    assert ei.value.step == 1


def test_batch_larger_than_data():
    with pytest.raises(ConfigError):
        Trainer(small_config(batch_size=64), Dataset(np.zeros((10, 2))))


def test_data_dim_mismatch(toy):
    with pytest.raises(ConfigError):
        Trainer(small_config(data_dim=3), toy)


def test_checkpoint_roundtrip(toy, tmp_path):
    tr = Trainer(small_config(), toy)
    tr.run(2)
    save_checkpoint(tmp_path / "c.dlsc", tr)
    back = load_checkpoint(tmp_path / "c.dlsc", toy)
    for n in ("G", "E", "D"):
        for k, a in tr.nets[n].arrays.items():
            np.testing.assert_array_equal(a, back.nets[n].arrays[k])
        assert back.opt[n].t == tr.opt[n].t
        for k in tr.opt[n].m:
            np.testing.assert_array_equal(tr.opt[n].m[k], back.opt[n].m[k])
    assert back.config == tr.config and back.step == 2
    assert back.rng.random() == tr.rng.random()


def test_resume_matches_uninterrupted(toy, tmp_path):
    full = Trainer(small_config(), toy)
    full.run(5)
    part = Trainer(small_config(), toy)
    part.run(2)
    save_checkpoint(tmp_path / "c.dlsc", part)
    resumed = load_checkpoint(tmp_path / "c.dlsc", toy)
    resumed.run(3)
    assert resumed.history.losses() == full.history.losses()
    for k, a in full.G.arrays.items():
        np.testing.assert_array_equal(a, resumed.G.arrays[k])


@pytest.fixture
def ckpt(toy, tmp_path):
    tr = Trainer(small_config(), toy)
    tr.run(1)
    p = tmp_path / "c.dlsc"
    save_checkpoint(p, tr)
    return p


def _expect(path, data, field):
    path.write_bytes(data)
    with pytest.raises(FormatError) as ei:
        read_checkpoint(path)
    assert str(ei.value).startswith(field), str(ei.value)


def test_corrupt_checkpoints(ckpt, tmp_path):
    raw = ckpt.read_bytes()
    bad = tmp_path / "bad.dlsc"
    _expect(bad, raw[:10], "header")
    _expect(bad, b"XXXX" + raw[4:], "magic")
    _expect(bad, raw[:4] + struct.pack("<I", 99) + raw[8:], "version")
    _expect(bad, raw[:8] + struct.pack("<Q", 10**9) + raw[16:], "manifest_length")
    _expect(bad, raw[:-20], "crc32")
    flipped = bytearray(raw)
    flipped[len(raw) // 2] ^= 0xFF
    _expect(bad, bytes(flipped), "crc32")


def test_checkpoint_without_dataset_can_sample(ckpt):
    tr = load_checkpoint(ckpt)
    assert tr.X is None and tr.G.spec.output_dim == 4


def test_save_is_atomic(toy, tmp_path):
    tr = Trainer(small_config(), toy)
    save_checkpoint(tmp_path / "c.dlsc", tr)
    assert [p.name for p in tmp_path.iterdir()] == ["c.dlsc"]


def test_prior_uses_configured_sigma(toy):
    tr = Trainer(small_config(sigma=0.3, batch_size=40), toy)
    z = tr.sample_prior()
    assert z.zn.shape == (40, 2)
    ref = sample_prior(40, 2, 2, 0.3, make_rng(0))
    assert ref.zn.shape == z.zn.shape
