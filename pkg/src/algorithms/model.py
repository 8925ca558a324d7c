"""The complete hierarchical coding model and its batching helpers."""

import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple
from typing import OrderedDict as OrderedDictType

import numpy as np

from src.utils.types import ModelConfig, Record
from src.utils.validators import ConfigurationError, DimensionError, validate_same_shape

from . import ops
from .encoder import (
    EncoderParams,
    OntologyIndex,
    build_ontology_index,
    encode_document,
    init_encoder,
    ontology_embed,
)
from .gcn import gcn_forward, init_gcn
from .hierarchy import Hierarchy, expand_labels
from .hpm import LevelOutput, LevelParams, hierarchical_loss, hpl_forward, init_level
from .layers import Dense
from .tensor import Tensor

logger = logging.getLogger(__name__)

ModelState = OrderedDictType[str, Tensor]


@dataclass(frozen=True)
class Batch:
    """Padded records ready for a forward pass.

    Attributes:
        ids: Record ids in batch order
        tokens: [b x n_max] indices, zero-padded
        mask: [b x n_max] True at real tokens
        targets: One [b x |L^t|] 0/1 matrix per modelled level
    """

    ids: Tuple[str, ...]
    tokens: np.ndarray
    mask: np.ndarray
    targets: Tuple[np.ndarray, ...]

    def __len__(self) -> int:
        return len(self.ids)


def make_batch(records: Sequence[Record], hierarchy: Hierarchy) -> Batch:
    """Pad records to the longest one and expand their gold codes per level."""
    if len(records) == 0:
        raise ConfigurationError("Cannot build an empty batch")
    width = max(len(r.tokens) for r in records)
    tokens = np.zeros((len(records), width), dtype=np.int64)
    mask = np.zeros((len(records), width), dtype=bool)
    indices = [hierarchy.index(t) for t in range(1, hierarchy.depth + 1)]
    targets = [np.zeros((len(records), len(level)), dtype=np.float64) for level in hierarchy.levels]
    for i, record in enumerate(records):
        tokens[i, : len(record.tokens)] = record.tokens
        mask[i, : len(record.tokens)] = True
        for t, codes in enumerate(expand_labels(record.gold, hierarchy)):
            for code in codes:
                targets[t][i, indices[t][code]] = 1.0
    return Batch(tuple(r.id for r in records), tokens, mask, tuple(targets))


def parameter_count(config: ModelConfig, vocab_size: int, level_sizes: Sequence[int]) -> int:
    """Closed-form number of scalar parameters for a configuration.

    Args:
        config: Model configuration
        vocab_size: |E|
        level_sizes: |L^t| of every modelled level, coarse to fine
    """
    enc = config.encoder
    d_e, d_c, d_r = enc.embedding_dim, enc.filter_dim, enc.residual_dim
    d_res = enc.output_dim
    d_g, d_a, d_dep = config.gcn.hidden_dim, config.hpm.attention_dim, config.hpm.dependency_dim

    total = vocab_size * d_e
    for width in enc.kernel_widths:
        total += width * d_e * d_c + d_c
        total += width * d_c * d_r + d_r
        total += width * d_r * d_r + d_r
        total += d_c * d_r + d_r

    last = len(level_sizes) - 1
    for t, n_codes in enumerate(level_sizes):
        summary = d_res
        if config.use_ontology_attention:
            query_dim = d_g if config.use_gcn else d_e
            if config.use_gcn:
                total += d_e * d_g + d_g
                total += (config.gcn.num_layers - 1) * (d_g * d_g + d_g)
            total += d_res * query_dim + query_dim
            summary += d_res
        total += d_res * d_a + d_a + n_codes * d_a
        total += d_dep + summary + 1
        if config.use_dpu and t < last:
            total += (n_codes + d_dep) * d_dep + d_dep
    return total


class IHCEModel:
    """Encoder, per-level ontology vectors and the hierarchical prediction layer.

    Attributes:
        config: Model configuration
        hierarchy: The modelled levels (depth equals ``config.modelled_levels``)
        encoder: Encoder parameters
        levels: Prediction-layer parameters per level
        ontology: Descriptor index per level
        propagations: GCN propagation matrix per level
    """

    def __init__(
        self,
        config: ModelConfig,
        hierarchy: Hierarchy,
        encoder: EncoderParams,
        levels: Sequence[LevelParams],
        ontology: Sequence[OntologyIndex],
        propagations: Sequence[np.ndarray],
    ) -> None:
        if hierarchy.depth != config.modelled_levels:
            raise ConfigurationError(
                f"Hierarchy has {hierarchy.depth} levels, "
                f"configuration models {config.modelled_levels}"
            )
        if not len(levels) == len(ontology) == len(propagations) == hierarchy.depth:
            raise ConfigurationError("Need one parameter set, descriptor index and graph per level")
        for t, (p, level) in enumerate(zip(propagations, hierarchy.levels)):
            if p.shape != (len(level), len(level)):
                raise DimensionError(
                    f"Propagation matrix {p.shape} does not match level {t + 1} "
                    f"with {len(level)} codes"
                )
        self.config = config
        self.hierarchy = hierarchy
        self.encoder = encoder
        self.levels = list(levels)
        self.ontology = list(ontology)
        self.propagations = [np.asarray(p, dtype=np.float64) for p in propagations]

    @classmethod
    def create(
        cls,
        config: ModelConfig,
        hierarchy: Hierarchy,
        vocab_size: int,
        lookup: Callable[[str], int],
        propagations: Sequence[np.ndarray],
        rng: np.random.Generator,
        pretrained: Optional[np.ndarray] = None,
    ) -> "IHCEModel":
        """Initialise every parameter for a hierarchy and vocabulary.

        Args:
            config: Model configuration
            hierarchy: Modelled levels
            vocab_size: |E|
            lookup: Token -> vocabulary index (unknown tokens map to the unknown index)
            propagations: One normalised adjacency per level
            rng: Generator for every initialiser
            pretrained: Optional [|E| x d_e] word vectors
        """
        encoder = init_encoder(config.encoder, vocab_size, rng, pretrained)
        d_e = config.encoder.embedding_dim
        levels: List[LevelParams] = []
        for t, codes in enumerate(hierarchy.levels, start=1):
            gcn: List[Dense] = []
            code_vector_dim: Optional[int] = None
            if config.use_ontology_attention:
                if config.use_gcn:
                    gcn = init_gcn(config.gcn, d_e, rng, f"level{t}")
                    code_vector_dim = config.gcn.hidden_dim
                else:
                    code_vector_dim = d_e
            levels.append(
                init_level(
                    rng,
                    level=t,
                    num_codes=len(codes),
                    residual_width=config.encoder.output_dim,
                    code_vector_dim=code_vector_dim,
                    attention_dim=config.hpm.attention_dim,
                    dependency_dim=config.hpm.dependency_dim,
                    with_dpu=config.use_dpu and t < hierarchy.depth,
                    gcn=gcn,
                )
            )
        ontology = [
            build_ontology_index(codes, hierarchy.descriptors, lookup) for codes in hierarchy.levels
        ]
        model = cls(config, hierarchy, encoder, levels, ontology, propagations)
        logger.info("Initialised model with %d parameters", model.num_parameters())
        return model

    def state(self) -> ModelState:
        """Every trainable tensor by name, in a fixed order."""
        named: ModelState = OrderedDict(self.encoder.tensors())
        for level in self.levels:
            named.update(level.tensors())
        return named

    def parameters(self) -> List[Tensor]:
        return list(self.state().values())

    def num_parameters(self) -> int:
        return sum(t.size for t in self.parameters())

    def load_state(self, arrays: Mapping[str, np.ndarray]) -> None:
        """Overwrite parameter values in place.

        Raises:
            ConfigurationError: If names differ from the model's parameters
            DimensionError: If a shape differs
        """
        state = self.state()
        if set(arrays) != set(state):
            missing = sorted(set(state) - set(arrays))
            extra = sorted(set(arrays) - set(state))
            raise ConfigurationError(f"State mismatch: missing {missing}, unexpected {extra}")
        for name, tensor in state.items():
            values = np.asarray(arrays[name], dtype=np.float64)
            validate_same_shape(name, values.shape, tensor.shape)
            tensor.data[...] = values

    def snapshot(self) -> Dict[str, np.ndarray]:
        """Copy of every parameter array."""
        return {name: tensor.numpy() for name, tensor in self.state().items()}

    def code_vectors(self) -> List[Optional[Tensor]]:
        """H^t per level, recomputed from the current embeddings."""
        vectors: List[Optional[Tensor]] = []
        for level, index, p in zip(self.levels, self.ontology, self.propagations):
            if not self.config.use_ontology_attention:
                vectors.append(None)
                continue
            v = ontology_embed(self.encoder.embedding, index)
            vectors.append(gcn_forward(v, p, level.gcn) if self.config.use_gcn else v)
        return vectors

    def forward(
        self, batch: Batch, rng: np.random.Generator, training: bool = False
    ) -> List[List[LevelOutput]]:
        """Level outputs for every record of the batch, in batch order."""
        vectors = self.code_vectors()
        results = []
        for i in range(len(batch)):
            mask = batch.mask[i]
            x_res = encode_document(
                batch.tokens[i], self.encoder, self.config.encoder.dropout, rng, training, mask
            )
            results.append(
                hpl_forward(x_res, vectors, self.levels, self.config.hpm.dependency_dim, mask)
            )
        return results

    def loss(
        self, batch: Batch, rng: np.random.Generator, training: bool = True
    ) -> Tuple[Tensor, List[List[LevelOutput]]]:
        """Per-record hierarchical loss, averaged (or summed) over the batch."""
        outputs = self.forward(batch, rng, training)
        total: Optional[Tensor] = None
        for i, levels in enumerate(outputs):
            term = hierarchical_loss(levels, [targets[i] for targets in batch.targets])
            total = term if total is None else ops.add(total, term)
        assert total is not None
        if self.config.loss_reduction == "mean":
            total = ops.scale(total, 1.0 / len(batch))
        return total, outputs

    def predict_proba(
        self, records: Sequence[Record], batch_size: int = 16
    ) -> Tuple[np.ndarray, ...]:
        """Eval-mode probabilities: one [records x |L^t|] matrix per level."""
        rng = np.random.default_rng(0)
        per_level: List[List[np.ndarray]] = [[] for _ in self.levels]
        for start in range(0, len(records), batch_size):
            chunk = records[start : start + batch_size]
            batch = make_batch(chunk, self.hierarchy)
            for levels in self.forward(batch, rng, training=False):
                for t, output in enumerate(levels):
                    per_level[t].append(output.probabilities())
        return tuple(
            np.vstack(rows) if rows else np.zeros((0, len(level)))
            for rows, level in zip(per_level, self.hierarchy.levels)
        )
