"""Loss terms for DLS training, the ClusterGAN baseline and the gradient penalty.

Sign domains: ``recon_mse``, ``zn_consistency``, ``ce_onehot`` and
``gradient_penalty`` are non-negative; ``critic_loss``/``generator_adversarial``
in vanilla mode are non-negative; the Wasserstein terms and ``mmd_rbf``
(unbiased estimator) can take either sign.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from .errors import ConfigError, DimensionError, DomainError, UsageError
from .nets import NetworkParams, discriminator_forward, encoder_forward, generator_forward
from .prior import LatentBatch, compose
from .tensor import (
    LOG_EPS,
    Tensor,
    as_tensor,
    exp,
    grad,
    l2_norm,
    log,
    log_sigmoid,
    mean,
    mul,
    neg,
    reshape,
    sub,
    tsum,
)

MODES = ("wasserstein_gp", "vanilla")


@dataclass
class LossWeights:
    """Coefficients of the combined objective.

    ``ae`` and ``adv`` stay at 1 except when an ablation removes the term.
    ``lambda_n``/``lambda_c`` are only read in ClusterGAN mode.
    """

    beta1: float = 1.0  # MMD
    beta2: float = 1.0  # zn consistency under the swap
    beta3: float = 10.0  # CE on generated data
    beta4: float = 10.0  # CE under the swap
    lambda_gp: float = 10.0
    lambda_n: float = 10.0
    lambda_c: float = 10.0
    ae: float = 1.0
    adv: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"loss weight {k} must be finite and >= 0, got {v}")

    def to_dict(self) -> dict:
        return asdict(self)


def _pairwise_sq(a: Tensor, b: Tensor) -> Tensor:
    n, d = a.shape
    m = b.shape[0]
    diff = sub(reshape(a, (n, 1, d)), reshape(b, (1, m, d)))
    return tsum(mul(diff, diff), axis=2)


def rbf_kernel(a, b, bandwidth: float) -> Tensor:
    """``exp(-|a_i - b_j|^2 / (2 * bandwidth))`` for every pair of rows."""
    return exp(mul(_pairwise_sq(as_tensor(a), as_tensor(b)), -1.0 / (2.0 * bandwidth)))


def default_bandwidth(zn_dim: int, sigma: float) -> float:
    return 2.0 * zn_dim * sigma**2


def mmd_rbf(z_enc, z_prior, bandwidth: float) -> Tensor:
    """Unbiased MMD estimate between two equally sized samples.

    Within-set kernel means exclude the diagonal; the cross term uses all
    pairs.  The estimate may be slightly negative.
    """
    x, y = as_tensor(z_enc), as_tensor(z_prior)
    if x.ndim != 2 or x.shape != y.shape:
        raise DimensionError(f"mmd_rbf: shapes differ ({x.shape} vs {y.shape})")
    n = x.shape[0]
    if n < 2:
        raise DomainError("mmd_rbf needs at least 2 samples per set")
    if not bandwidth > 0:
        raise DomainError(f"bandwidth must be > 0, got {bandwidth}")
    off = 1.0 - np.eye(n)
    kxx = tsum(mul(rbf_kernel(x, x, bandwidth), off))
    kyy = tsum(mul(rbf_kernel(y, y, bandwidth), off))
    kxy = tsum(rbf_kernel(x, y, bandwidth))
    within = 1.0 / (n * (n - 1))
    return (kxx + kyy) * within - kxy * (2.0 / (n * n))


def _row_sq_mean(a: Tensor, b: Tensor, what: str) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shapes differ ({a.shape} vs {b.shape})")
    d = sub(a, b)
    return mul(tsum(mul(d, d)), 1.0 / a.shape[0])


def recon_mse(x_r, x_rec) -> Tensor:
    """Per-sample squared L2 distance, averaged over the batch."""
    return _row_sq_mean(x_r, x_rec, "recon_mse")


def zn_consistency(zn_ref, zn_rec) -> Tensor:
    return _row_sq_mean(zn_ref, zn_rec, "zn_consistency")


def ce_onehot(zc, p, eps: float = LOG_EPS) -> Tensor:
    """Batch mean of ``-log(p[true] + eps)`` for one-hot targets ``zc``."""
    zc, p = as_tensor(zc), as_tensor(p)
    if zc.shape != p.shape or zc.ndim != 2:
        raise DimensionError(f"ce_onehot: shapes differ ({zc.shape} vs {p.shape})")
    if not np.allclose(p.data.sum(axis=1), 1.0, rtol=0, atol=1e-9) or np.any(p.data < 0):
        raise DomainError("ce_onehot: probability rows must be non-negative and sum to 1")
    t = zc.data
    if not (np.all((t == 0) | (t == 1)) and np.all(t.sum(axis=1) == 1)):
        raise DomainError("ce_onehot: targets must be one-hot rows")
    return neg(mean(tsum(mul(zc, log(p, eps)), axis=1)))


def _critic(D: NetworkParams, x, weights):
    return discriminator_forward(D, x, weights)


def gradient_penalty(
    D: NetworkParams, x_r, x_g, rng: np.random.Generator, weights: Mapping[str, Tensor] | None = None,
    tape=None,
) -> Tensor:
    """Mean of ``(|grad_x D(x_hat)| - 1)^2`` over random interpolates ``x_hat``.

    The input gradient is recorded on the tape so the result stays
    differentiable w.r.t. the critic parameters in ``weights``.
    """
    x_r, x_g = as_tensor(x_r), as_tensor(x_g)
    if x_r.shape != x_g.shape:
        raise DimensionError(f"gradient_penalty: shapes differ ({x_r.shape} vs {x_g.shape})")
    if tape is None:
        tape = next((w.tape for w in (weights or {}).values() if w.tape is not None), None)
    if tape is None:
        from .tensor import current_tape

        tape = current_tape()
    if not tape.higher_order:
        raise UsageError("gradient_penalty needs a tape with higher-order differentiation")
    eps = rng.uniform(0.0, 1.0, size=(x_r.shape[0], 1))
    x_hat = Tensor(eps * x_r.data + (1.0 - eps) * x_g.data, requires_grad=True, tape=tape)
    score = _critic(D, x_hat, weights)
    (gx,) = grad(tsum(score), [x_hat], create_graph=True)
    norms = l2_norm(gx, axis=1)
    dev = sub(norms, 1.0)
    return mean(mul(dev, dev))


def _check_mode(mode: str):
    if mode not in MODES:
        raise ConfigError(f"unknown adversarial mode '{mode}' (expected one of {MODES})")


def critic_loss(
    mode: str, D: NetworkParams, x_r, x_g, lambda_gp: float, rng: np.random.Generator,
    weights: Mapping[str, Tensor] | None = None,
) -> Tensor:
    """Critic objective in minimisation form."""
    _check_mode(mode)
    d_real = _critic(D, x_r, weights)
    d_fake = _critic(D, x_g, weights)
    if mode == "vanilla":
        return neg(mean(log_sigmoid(d_real)) + mean(log_sigmoid(neg(d_fake))))
    loss = neg(sub(mean(d_real), mean(d_fake)))
    if lambda_gp > 0:
        loss = loss + mul(gradient_penalty(D, x_r, x_g, rng, weights), lambda_gp)
    return loss


def generator_adversarial(mode: str, D: NetworkParams, x_g, weights=None) -> Tensor:
    _check_mode(mode)
    score = _critic(D, x_g, weights)
    if mode == "vanilla":
        return neg(mean(log_sigmoid(score)))
    return neg(mean(score))


TERM_WEIGHT = {
    "adv": "adv",
    "ae": "ae",
    "mmd": "beta1",
    "l_n": "beta2",
    "l_ce": "beta3",
    "l_c": "beta4",
}


def total_objective(weights: LossWeights, terms: Mapping[str, Tensor | None]) -> Tensor:
    """Weighted sum of the DLS terms.

    Keys are ``adv, ae, mmd, l_n, l_ce, l_c``.  Terms whose weight is exactly 0
    or that are missing are left out of the sum entirely.
    """
    total = None
    for key, attr in TERM_WEIGHT.items():
        t = terms.get(key)
        w = getattr(weights, attr)
        if t is None or w == 0:
            continue
        part = t if w == 1 else mul(t, w)
        total = part if total is None else total + part
    return total if total is not None else Tensor(0.0)


def clustergan_objective(
    weights: LossWeights,
    D: NetworkParams,
    G: NetworkParams,
    E: NetworkParams,
    x_r,
    prior_batch: LatentBatch,
    mode: str = "wasserstein_gp",
    rng: np.random.Generator | None = None,
    bound: Mapping[str, Mapping[str, Tensor]] | None = None,
) -> dict[str, Tensor]:
    """ClusterGAN-style losses: adversarial term plus zn recovery and CE on generated data.

    Returns ``critic``, ``generator`` and ``encoder`` scalars together with the
    individual ``adv``, ``zn_rec`` and ``ce`` terms.  No reconstruction, MMD
    or swap path is evaluated.
    """
    bound = bound or {}
    wG, wE, wD = bound.get("G"), bound.get("E"), bound.get("D")
    x_g = generator_forward(G, compose(prior_batch), wG)
    zc_hat, zn_hat = encoder_forward(E, x_g, wE)
    zn_rec = zn_consistency(prior_batch.zn, zn_hat)
    ce = ce_onehot(prior_batch.zc, zc_hat)
    adv = generator_adversarial(mode, D, x_g, wD)
    cycle = None
    for t, w in ((zn_rec, weights.lambda_n), (ce, weights.lambda_c)):
        if w:
            cycle = mul(t, w) if cycle is None else cycle + mul(t, w)
    cycle = cycle if cycle is not None else Tensor(0.0)
    rng = rng if rng is not None else np.random.default_rng(0)
    crit = critic_loss(mode, D, x_r, Tensor(x_g.data), weights.lambda_gp, rng, wD)
    return {
        "critic": crit,
        "generator": adv + cycle,
        "encoder": cycle,
        "adv": adv,
        "zn_rec": zn_rec,
        "ce": ce,
    }
