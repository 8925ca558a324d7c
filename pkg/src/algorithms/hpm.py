"""Hierarchical prediction layer.

For each level t (coarse to fine):

    R^t  = [ontology-guided attention summaries ‖ code-specific summaries]
    Y^t  = sigmoid([c^(t-1) ‖ R^t] W_y + b)             shared scorer per level
    c^t  = sigmoid([Y^t transposed ‖ c^(t-1)] W_dpu + b) gate into the next level

c^0 is a zero row vector of width ``dependency_dim``. The last level has no
gate. Without the dependency unit every c^t stays zero.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.utils.validators import ConfigurationError, DimensionError, validate_same_shape

from . import ops
from .layers import Dense, kaiming_uniform
from .tensor import Tensor


@dataclass
class LevelParams:
    """Trainable tensors of one level.

    Attributes:
        level: Level position within the model, 1-based
        num_codes: |L^t|
        gcn: Graph convolutions (empty when ontology vectors are used as-is)
        ontology_proj: W' mapping X^res rows to the code-vector width; None
            when the ontology-guided path is disabled
        code_proj: W'' mapping X^res rows to d_a
        code_queries: U'' [|L^t| x d_a]
        cpu: Scorer over [c^(t-1) ‖ R^t] -> 1
        dpu: Gate producing c^t; None at the last level or without dependencies
    """

    level: int
    num_codes: int
    gcn: List[Dense]
    ontology_proj: Optional[Dense]
    code_proj: Dense
    code_queries: Tensor
    cpu: Dense
    dpu: Optional[Dense]

    def tensors(self) -> Dict[str, Tensor]:
        named: Dict[str, Tensor] = {}
        for layer in self.gcn:
            named.update(layer.tensors())
        if self.ontology_proj is not None:
            named.update(self.ontology_proj.tensors())
        named.update(self.code_proj.tensors())
        named[self.code_queries.name or "code_queries"] = self.code_queries
        named.update(self.cpu.tensors())
        if self.dpu is not None:
            named.update(self.dpu.tensors())
        return named


@dataclass
class LevelOutput:
    """Forward results of one level.

    Attributes:
        probs: Y^t as a [|L^t| x 1] tensor
        dependency: c^t [1 x dependency_dim] (zeros when no gate runs)
        ontology_attention: [|L^t| x n] weights of the ontology-guided path
        code_attention: [|L^t| x n] weights of the code-specific path
    """

    probs: Tensor
    dependency: Tensor
    code_attention: np.ndarray
    ontology_attention: Optional[np.ndarray] = field(default=None)

    def probabilities(self) -> np.ndarray:
        return self.probs.data.reshape(-1).copy()


def init_level(
    rng: np.random.Generator,
    level: int,
    num_codes: int,
    residual_width: int,
    code_vector_dim: Optional[int],
    attention_dim: int,
    dependency_dim: int,
    with_dpu: bool,
    gcn: Optional[List[Dense]] = None,
) -> LevelParams:
    """Create the parameters of one level.

    Args:
        code_vector_dim: Width of H^t (d_g, or d_e without graph convolution);
            None disables the ontology-guided attention path
        with_dpu: Whether this level produces a dependency vector
    """
    prefix = f"level{level}"
    ontology_proj = None
    summary_width = residual_width
    if code_vector_dim is not None:
        ontology_proj = Dense.create(
            rng, residual_width, code_vector_dim, f"{prefix}.ontology_proj"
        )
        summary_width += residual_width
    code_queries = kaiming_uniform(
        rng, (num_codes, attention_dim), attention_dim, f"{prefix}.code_queries"
    )
    return LevelParams(
        level=level,
        num_codes=num_codes,
        gcn=list(gcn or []),
        ontology_proj=ontology_proj,
        code_proj=Dense.create(rng, residual_width, attention_dim, f"{prefix}.code_proj"),
        code_queries=code_queries,
        cpu=Dense.create(rng, dependency_dim + summary_width, 1, f"{prefix}.cpu"),
        dpu=(
            Dense.create(rng, num_codes + dependency_dim, dependency_dim, f"{prefix}.dpu")
            if with_dpu
            else None
        ),
    )


def _attend(
    queries: Tensor, keys: Tensor, x_res: Tensor, mask: Optional[np.ndarray]
) -> Tuple[Tensor, Tensor]:
    """softmax(queries @ keys^T) over unmasked positions, then weights @ X^res."""
    logits = ops.matmul(queries, ops.transpose(keys))
    weights = ops.softmax_rows(logits, None if mask is None else mask[None, :])
    return ops.matmul(weights, x_res), weights


def mau_forward(
    x_res: Tensor,
    code_vectors: Optional[Tensor],
    params: LevelParams,
    mask: Optional[np.ndarray] = None,
) -> Tuple[Tensor, Optional[np.ndarray], np.ndarray]:
    """Multi attention unit.

    Args:
        x_res: Encoded document [n x d_res]
        code_vectors: H^t [|L^t| x d_g]; None when the ontology path is off
        params: Level parameters
        mask: Valid-position flags of length n

    Returns:
        (R^t, ontology attention or None, code-specific attention)

    Raises:
        ConfigurationError: If H^t does not match the projection width
    """
    parts: List[Tensor] = []
    ontology_weights = None
    if params.ontology_proj is not None:
        if code_vectors is None:
            raise ConfigurationError(
                f"Level {params.level} needs code vectors for ontology attention"
            )
        if code_vectors.shape[1] != params.ontology_proj.out_dim:
            raise ConfigurationError(
                f"Level {params.level}: code vectors of width {code_vectors.shape[1]} do not match "
                f"projection width {params.ontology_proj.out_dim}"
            )
        keys = ops.tanh(params.ontology_proj(x_res))
        summary, weights = _attend(code_vectors, keys, x_res, mask)
        parts.append(summary)
        ontology_weights = weights.data.copy()

    keys = ops.tanh(params.code_proj(x_res))
    summary, weights = _attend(params.code_queries, keys, x_res, mask)
    parts.append(summary)
    r = parts[0] if len(parts) == 1 else ops.concat_cols(parts)
    return r, ontology_weights, weights.data.copy()


def cpu_forward(r: Tensor, previous: Tensor, params: LevelParams) -> Tensor:
    """Score every code of the level: sigmoid([c ‖ R] W_y + b) -> [|L^t| x 1].

    Raises:
        DimensionError: If the combined width does not match W_y
    """
    if previous.shape[1] + r.shape[1] != params.cpu.in_dim:
        raise DimensionError(
            f"cpu_forward: inputs {previous.shape} and {r.shape} "
            f"do not fit weight {params.cpu.weight.shape}"
        )
    x_cls = ops.concat_cols([ops.broadcast_rows(previous, r.shape[0]), r])
    return ops.sigmoid(params.cpu(x_cls))


def dpu_forward(probs: Tensor, previous: Tensor, gate: Dense) -> Tensor:
    """c^t = sigmoid([Y^t transposed ‖ c^(t-1)] W_dpu + b)."""
    return ops.sigmoid(gate(ops.concat_cols([ops.transpose(probs), previous])))


def hpl_forward(
    x_res: Tensor,
    code_vectors: Sequence[Optional[Tensor]],
    levels: Sequence[LevelParams],
    dependency_dim: int,
    mask: Optional[np.ndarray] = None,
) -> List[LevelOutput]:
    """Chain attention, scoring and gating through the levels in order."""
    if len(code_vectors) != len(levels):
        raise ConfigurationError(f"{len(code_vectors)} code-vector sets for {len(levels)} levels")
    previous = ops.constant(np.zeros((1, dependency_dim)))
    outputs: List[LevelOutput] = []
    for params, vectors in zip(levels, code_vectors):
        r, ontology_weights, code_weights = mau_forward(x_res, vectors, params, mask)
        probs = cpu_forward(r, previous, params)
        if params.dpu is not None:
            current = dpu_forward(probs, previous, params.dpu)
        else:
            current = ops.constant(np.zeros((1, dependency_dim)))
        outputs.append(LevelOutput(probs, current, code_weights, ontology_weights))
        previous = current
    return outputs


def hierarchical_loss(outputs: Sequence[LevelOutput], targets: Sequence[np.ndarray]) -> Tensor:
    """Binary cross-entropy summed over every code of every level.

    Args:
        outputs: Level outputs of one document
        targets: 0/1 vectors, one per level, aligned with level order

    Raises:
        DimensionError: If a target vector does not match its level
    """
    if len(outputs) != len(targets):
        raise DimensionError(f"{len(targets)} target vectors for {len(outputs)} levels")
    total: Optional[Tensor] = None
    for output, target in zip(outputs, targets):
        y = np.asarray(target, dtype=np.float64).reshape(-1, 1)
        validate_same_shape("hierarchical_loss targets", y.shape, output.probs.shape)
        term = ops.binary_cross_entropy(output.probs, y)
        total = term if total is None else ops.add(total, term)
    assert total is not None
    return total
