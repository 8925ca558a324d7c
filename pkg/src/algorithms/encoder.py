"""Document encoding layer.

Token embeddings pass through m parallel multi-filter convolutions, each
followed by a residual block; the block outputs are concatenated column-wise
into X^res of width m * d_r.

Every function accepts a row mask (True = real token). Rows past the end of a
document are re-zeroed after each convolution so that a padded document
encodes exactly like the unpadded one.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.utils.types import CodeId, EncoderConfig
from src.utils.validators import ConfigurationError

from . import ops
from .layers import ConvLayer
from .tensor import Tensor

PAD_INDEX = 0
EMBEDDING_INIT_RANGE = 0.25


@dataclass
class ResidualBlock:
    """Two stacked convolutions plus a 1x1 shortcut."""

    conv1: ConvLayer
    conv2: ConvLayer
    shortcut: ConvLayer


@dataclass
class EncoderParams:
    """Trainable encoder tensors.

    Attributes:
        embedding: Word vectors E [|E| x d_e]; row 0 is the padding vector
        filters: One multi-filter convolution per kernel width
        blocks: One residual block per kernel width
    """

    embedding: Tensor
    filters: Tuple[ConvLayer, ...]
    blocks: Tuple[ResidualBlock, ...]

    def tensors(self) -> Dict[str, Tensor]:
        named: Dict[str, Tensor] = {"embedding": self.embedding}
        for conv in self.filters:
            named.update(conv.tensors())
        for block in self.blocks:
            for layer in (block.conv1, block.conv2, block.shortcut):
                named.update(layer.tensors())
        return named


@dataclass(frozen=True)
class OntologyIndex:
    """Flattened descriptor tokens of one level.

    Attributes:
        indices: Vocabulary index of every descriptor token, codes concatenated
        segments: Owning code position for each entry of ``indices``
        num_codes: |L^t|
    """

    indices: np.ndarray
    segments: np.ndarray
    num_codes: int


def init_embedding(
    rng: np.random.Generator, vocab_size: int, dim: int, pretrained: Optional[np.ndarray] = None
) -> Tensor:
    """Uniform(-0.25, 0.25) word vectors, or a copy of ``pretrained``; row 0 is zero."""
    if pretrained is not None:
        if pretrained.shape != (vocab_size, dim):
            raise ConfigurationError(
                f"Pretrained embeddings have shape {pretrained.shape}, expected {(vocab_size, dim)}"
            )
        values = np.array(pretrained, dtype=np.float64)
    else:
        values = rng.uniform(-EMBEDDING_INIT_RANGE, EMBEDDING_INIT_RANGE, size=(vocab_size, dim))
    values[PAD_INDEX] = 0.0
    embedding = Tensor.wrap(values, requires_grad=True)
    embedding.name = "embedding"
    return embedding


def init_encoder(
    config: EncoderConfig,
    vocab_size: int,
    rng: np.random.Generator,
    pretrained: Optional[np.ndarray] = None,
) -> EncoderParams:
    """Create encoder parameters for the configured kernel widths."""
    d_e, d_c, d_r = config.embedding_dim, config.filter_dim, config.residual_dim
    embedding = init_embedding(rng, vocab_size, d_e, pretrained)
    filters = []
    blocks = []
    for k, width in enumerate(config.kernel_widths):
        filters.append(ConvLayer.create(rng, width, d_e, d_c, f"conv{k}"))
        blocks.append(
            ResidualBlock(
                conv1=ConvLayer.create(rng, width, d_c, d_r, f"res{k}.conv1"),
                conv2=ConvLayer.create(rng, width, d_r, d_r, f"res{k}.conv2"),
                shortcut=ConvLayer.create(rng, 1, d_c, d_r, f"res{k}.shortcut"),
            )
        )
    return EncoderParams(embedding, tuple(filters), tuple(blocks))


def build_ontology_index(
    codes: Sequence[CodeId],
    descriptors: Mapping[CodeId, Sequence[str]],
    lookup: Callable[[str], int],
) -> OntologyIndex:
    """Map every code's descriptor tokens to vocabulary indices.

    Raises:
        ConfigurationError: If a code has no descriptor tokens
    """
    indices: List[int] = []
    segments: List[int] = []
    for position, code in enumerate(codes):
        tokens = descriptors.get(code, ())
        if len(tokens) == 0:
            raise ConfigurationError(f"Code {code} has an empty descriptor")
        indices.extend(lookup(token) for token in tokens)
        segments.extend([position] * len(tokens))
    return OntologyIndex(
        np.array(indices, dtype=np.int64), np.array(segments, dtype=np.int64), len(codes)
    )


def embed_document(
    tokens: np.ndarray, embedding: Tensor, mask: Optional[np.ndarray] = None
) -> Tensor:
    """Look up the word vectors of a (possibly padded) token sequence."""
    x = ops.gather_rows(embedding, tokens)
    return x if mask is None else ops.mask_rows(x, mask)


def ontology_embed(embedding: Tensor, index: OntologyIndex) -> Tensor:
    """V^t: row i is the mean embedding of code i's descriptor tokens."""
    vectors = ops.gather_rows(embedding, index.indices)
    return ops.segment_mean(vectors, index.segments, index.num_codes)


def _masked(x: Tensor, mask: Optional[np.ndarray]) -> Tensor:
    return x if mask is None else ops.mask_rows(x, mask)


def multi_filter_conv(
    x: Tensor, filters: Sequence[ConvLayer], mask: Optional[np.ndarray] = None
) -> List[Tensor]:
    """X_k = tanh(conv(X, W_k)) for every filter width."""
    return [_masked(ops.tanh(conv(x)), mask) for conv in filters]


def residual_block(x_k: Tensor, block: ResidualBlock, mask: Optional[np.ndarray] = None) -> Tensor:
    """tanh(conv(tanh(conv(X_k)), W2) + conv1x1(X_k)).

    The second convolution and the shortcut have no activation of their own.
    """
    main = _masked(ops.tanh(block.conv1(x_k)), mask)
    main = block.conv2(main)
    shortcut = block.shortcut(x_k)
    return _masked(ops.tanh(ops.add(main, shortcut)), mask)


def encode(x: Tensor, params: EncoderParams, mask: Optional[np.ndarray] = None) -> Tensor:
    """Concatenate the residual outputs of every filter width: n x (m * d_r)."""
    features = multi_filter_conv(x, params.filters, mask)
    outputs = [residual_block(x_k, block, mask) for x_k, block in zip(features, params.blocks)]
    return outputs[0] if len(outputs) == 1 else ops.concat_cols(outputs)


def encode_document(
    tokens: np.ndarray,
    params: EncoderParams,
    dropout: float,
    rng: np.random.Generator,
    training: bool,
    mask: Optional[np.ndarray] = None,
) -> Tensor:
    """Embedding, dropout, encoder, dropout."""
    x = embed_document(tokens, params.embedding, mask)
    x = ops.dropout(x, dropout, rng, training)
    return ops.dropout(encode(x, params, mask), dropout, rng, training)
