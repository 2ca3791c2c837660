"""MLP generator, encoder and discriminator.

Parameters live as plain arrays in :class:`NetworkParams`.  A forward pass
uses them as constants unless bound tensors are passed in, which is how the
trainer attaches one parameter set to a step's tape and reuses it for every
call of that network within the step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import Tape, Tensor, affine, as_tensor, leaky_relu, slice_axis, softmax, tanh

LEAK = 0.2
DEFAULT_HIDDEN = (256, 256)
DEFAULT_INIT_STD = 0.02


@dataclass(frozen=True)
class MlpSpec:
    role: str  # "generator" | "encoder" | "discriminator"
    input_dim: int
    hidden: tuple[int, ...]
    output_dim: int
    out_activation: str = "linear"  # generator: "tanh" or "linear"
    n_clusters: int = 0  # encoder head split
    slope: float = LEAK

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden):
            raise ConfigError(f"non-positive layer width in {self}")
        if self.out_activation not in ("tanh", "linear"):
            raise ConfigError(f"unknown output activation '{self.out_activation}'")
        if self.role == "encoder" and not 1 <= self.n_clusters <= self.output_dim:
            raise ConfigError("encoder head needs 1 <= K <= output width")

    @property
    def widths(self) -> list[int]:
        return [self.input_dim, *self.hidden, self.output_dim]

    @property
    def n_layers(self) -> int:
        return len(self.hidden) + 1

    def to_dict(self) -> dict:
        return {
            "role": self.role,
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "output_dim": self.output_dim,
            "out_activation": self.out_activation,
            "n_clusters": self.n_clusters,
            "slope": self.slope,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MlpSpec":
        return cls(
            role=d["role"],
            input_dim=int(d["input_dim"]),
            hidden=tuple(int(h) for h in d["hidden"]),
            output_dim=int(d["output_dim"]),
            out_activation=d.get("out_activation", "linear"),
            n_clusters=int(d.get("n_clusters", 0)),
            slope=float(d.get("slope", LEAK)),
        )


def generator_spec(n_clusters, zn_dim, data_dim, hidden=DEFAULT_HIDDEN, out_activation="linear"):
    return MlpSpec("generator", n_clusters + zn_dim, tuple(hidden), data_dim, out_activation)


def encoder_spec(n_clusters, zn_dim, data_dim, hidden=DEFAULT_HIDDEN):
    return MlpSpec("encoder", data_dim, tuple(hidden), n_clusters + zn_dim, n_clusters=n_clusters)


def discriminator_spec(data_dim, hidden=DEFAULT_HIDDEN):
    return MlpSpec("discriminator", data_dim, tuple(hidden), 1)


@dataclass
class NetworkParams:
    spec: MlpSpec
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def names(self) -> list[str]:
        return list(self.arrays)

    def count(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def bind(self, tape: Tape) -> dict[str, Tensor]:
        """Attach every parameter to ``tape`` as a requires-grad leaf."""
        return {k: Tensor(v, requires_grad=True, tape=tape) for k, v in self.arrays.items()}

    def constants(self) -> dict[str, Tensor]:
        return {k: Tensor(v) for k, v in self.arrays.items()}

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.spec, {k: v.copy() for k, v in self.arrays.items()})


def init_params(spec: MlpSpec, std: float, rng: np.random.Generator) -> NetworkParams:
    """Weights ~ N(0, std^2), biases zero."""
    if not std > 0:
        raise ConfigError(f"init std must be > 0, got {std}")
    arrays = {}
    w = spec.widths
    for i in range(spec.n_layers):
        arrays[f"W{i}"] = rng.normal(0.0, std, size=(w[i], w[i + 1]))
        arrays[f"b{i}"] = np.zeros(w[i + 1])
    return NetworkParams(spec, arrays)


def _weights(net: NetworkParams, weights: Mapping[str, Tensor] | None) -> Mapping[str, Tensor]:
    return weights if weights is not None else net.constants()


def mlp_forward(net: NetworkParams, x, weights: Mapping[str, Tensor] | None = None) -> Tensor:
    """Linear layers with leaky-ReLU between them; no output activation."""
    x = as_tensor(x)
    spec = net.spec
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise DimensionError(
            f"{spec.role} expects input width {spec.input_dim}, got shape {x.shape}"
        )
    w = _weights(net, weights)
    h = x
    for i in range(spec.n_layers):
        h = affine(h, w[f"W{i}"], w[f"b{i}"])
        if i < spec.n_layers - 1:
            h = leaky_relu(h, spec.slope)
    return h


def generator_forward(net: NetworkParams, z, weights=None) -> Tensor:
    out = mlp_forward(net, z, weights)
    return tanh(out) if net.spec.out_activation == "tanh" else out


def encoder_logits(net: NetworkParams, x, weights=None) -> tuple[Tensor, Tensor]:
    out = mlp_forward(net, x, weights)
    k = net.spec.n_clusters
    return slice_axis(out, 1, 0, k), slice_axis(out, 1, k, net.spec.output_dim)


def encoder_forward(net: NetworkParams, x, weights=None) -> tuple[Tensor, Tensor]:
    """Returns ``(zc_prob, zn)``: softmax cluster probabilities and the linear continuous head."""
    logits, zn = encoder_logits(net, x, weights)
    return softmax(logits, axis=1), zn


def discriminator_forward(net: NetworkParams, x, weights=None) -> Tensor:
    """Unbounded critic score, shape ``B x 1``."""
    return mlp_forward(net, x, weights)
