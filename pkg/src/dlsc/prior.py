"""Discrete-continuous latent prior and the code-swapping construction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import Tensor, as_tensor, concat, slice_axis


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator; distinct ``stream`` values give independent streams."""
    return np.random.Generator(np.random.Philox(key=[int(seed), int(stream)]))


@dataclass
class LatentBatch:
    zc: Tensor
    zn: Tensor

    def __post_init__(self):
        if self.zc.shape[0] != self.zn.shape[0]:
            raise DimensionError(
                f"zc has {self.zc.shape[0]} rows but zn has {self.zn.shape[0]}"
            )

    @property
    def batch_size(self) -> int:
        return self.zc.shape[0]

    @property
    def n_clusters(self) -> int:
        return self.zc.shape[1]

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.zc.data, axis=1)


def one_hot(idx: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((len(idx), k))
    out[np.arange(len(idx)), idx] = 1.0
    return out


def sample_prior(
    batch_size: int, n_clusters: int, zn_dim: int, sigma: float, rng: np.random.Generator
) -> LatentBatch:
    """Uniform one-hot ``zc`` and isotropic Gaussian ``zn`` with std ``sigma``."""
    if batch_size < 1 or n_clusters < 1 or zn_dim < 1:
        raise ConfigError(
            f"prior sizes must be positive (B={batch_size}, K={n_clusters}, d_n={zn_dim})"
        )
    if not sigma > 0:
        raise ConfigError(f"prior sigma must be > 0, got {sigma}")
    idx = rng.integers(0, n_clusters, size=batch_size)
    zn = rng.normal(0.0, sigma, size=(batch_size, zn_dim))
    return LatentBatch(Tensor(one_hot(idx, n_clusters)), Tensor(zn))


def compose(batch: LatentBatch) -> Tensor:
    """Row-wise ``[zc | zn]``, the generator input."""
    return concat([batch.zc, batch.zn], axis=1)


def decompose(z: Tensor, n_clusters: int) -> LatentBatch:
    z = as_tensor(z)
    return LatentBatch(
        slice_axis(z, 1, 0, n_clusters), slice_axis(z, 1, n_clusters, z.shape[1])
    )


def swap(zc_prior, zn_encoded) -> Tensor:
    """Pair prior one-hot codes with encoder-produced continuous codes.

    ``zn_encoded`` keeps its tape linkage, so losses on the generator output
    flow back into the encoder.
    """
    zc_prior, zn_encoded = as_tensor(zc_prior), as_tensor(zn_encoded)
    if zc_prior.ndim != 2 or zn_encoded.ndim != 2 or zc_prior.shape[0] != zn_encoded.shape[0]:
        raise DimensionError(
            f"swap: incompatible shapes {zc_prior.shape} and {zn_encoded.shape}"
        )
    return concat([zc_prior, zn_encoded], axis=1)
