"""Parameterised building blocks shared by the encoder, GCN and prediction layer."""

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from . import ops
from .tensor import Tensor


def kaiming_uniform(
    rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, name: str
) -> Tensor:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) trainable tensor."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    tensor = Tensor.wrap(rng.uniform(-bound, bound, size=shape), requires_grad=True)
    tensor.name = name
    return tensor


def zeros_param(shape: Tuple[int, ...], name: str) -> Tensor:
    tensor = Tensor.zeros(*shape, requires_grad=True)
    tensor.name = name
    return tensor


@dataclass
class Dense:
    """Affine map ``x @ weight + bias`` with weight [d_in x d_out] and bias [1 x d_out]."""

    weight: Tensor
    bias: Tensor

    @classmethod
    def create(cls, rng: np.random.Generator, d_in: int, d_out: int, name: str) -> "Dense":
        return cls(
            kaiming_uniform(rng, (d_in, d_out), d_in, f"{name}.weight"),
            kaiming_uniform(rng, (1, d_out), d_in, f"{name}.bias"),
        )

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        return ops.add(ops.matmul(x, self.weight), self.bias)

    def tensors(self) -> Dict[str, Tensor]:
        return {self.weight.name or "weight": self.weight, self.bias.name or "bias": self.bias}


@dataclass
class ConvLayer:
    """Same-padded 1-D convolution with bias.

    Attributes:
        weight: Filter bank [(width * d_in) x d_out]
        bias: [1 x d_out]
        width: Odd kernel width
    """

    weight: Tensor
    bias: Tensor
    width: int

    @classmethod
    def create(
        cls, rng: np.random.Generator, width: int, d_in: int, d_out: int, name: str
    ) -> "ConvLayer":
        fan_in = width * d_in
        return cls(
            kaiming_uniform(rng, (fan_in, d_out), fan_in, f"{name}.weight"),
            kaiming_uniform(rng, (1, d_out), fan_in, f"{name}.bias"),
            width,
        )

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        return ops.add(ops.conv1d_same(x, self.weight, self.width), self.bias)

    def tensors(self) -> Dict[str, Tensor]:
        return {self.weight.name or "weight": self.weight, self.bias.name or "bias": self.bias}
