"""Ontology representation layer: graph convolution over a level's co-graph."""

from typing import List, Sequence

import numpy as np

from src.utils.types import GcnConfig
from src.utils.validators import validate_same_shape

from . import ops
from .layers import Dense
from .tensor import Tensor


def init_gcn(
    config: GcnConfig, input_dim: int, rng: np.random.Generator, prefix: str
) -> List[Dense]:
    """Create ``config.num_layers`` layers: input_dim -> d_g -> ... -> d_g."""
    layers = []
    d_in = input_dim
    for layer in range(config.num_layers):
        layers.append(Dense.create(rng, d_in, config.hidden_dim, f"{prefix}.gcn{layer}"))
        d_in = config.hidden_dim
    return layers


def gcn_forward(h0: Tensor, propagation: np.ndarray, layers: Sequence[Dense]) -> Tensor:
    """H^(l+1) = ReLU(P H^(l) W^(l) + b^(l)); returns the last hidden layer.

    Args:
        h0: Initial node features, rows in level order [|L^t| x d_in]
        propagation: Normalised adjacency P [|L^t| x |L^t|]
        layers: One affine map per graph convolution

    Raises:
        DimensionError: If P and h0 disagree on the node count
    """
    nodes = h0.shape[0]
    validate_same_shape("gcn_forward propagation", propagation.shape, (nodes, nodes))
    p = ops.constant(propagation)
    h = h0
    for layer in layers:
        h = ops.relu(layer(ops.matmul(p, h)))
    return h
