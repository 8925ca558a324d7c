"""Whole-model gradient check on a small fixed configuration."""

import logging
import time
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from src.algorithms.cograph import build_cographs
from src.algorithms.gradcheck import grad_check
from src.algorithms.hierarchy import build_hierarchy
from src.algorithms.model import IHCEModel, make_batch
from src.algorithms.tensor import Tensor
from src.utils.types import (
    CodeId,
    EncoderConfig,
    GcnConfig,
    HpmConfig,
    ModelConfig,
    Record,
)

from .corpus import PAD_TOKEN, UNK_TOKEN, Vocabulary

logger = logging.getLogger(__name__)

TOY_CODES = ("401.01", "401.02", "401.11", "402.01", "402.02", "402.11")
TOY_VOCAB_SIZE = 30
TOLERANCE = 1e-4


@dataclass(frozen=True)
class GradcheckResult:
    """Outcome of a gradient check."""

    max_error: float
    num_parameters: int
    seconds: float

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE


def toy_config() -> ModelConfig:
    """Two levels, two kernels and single-digit widths everywhere."""
    return ModelConfig(
        encoder=EncoderConfig(embedding_dim=6, kernel_widths=(3, 5), residual_dim=3, dropout=0.0),
        gcn=GcnConfig(num_layers=1, hidden_dim=4),
        hpm=HpmConfig(attention_dim=4, dependency_dim=3),
        levels=2,
    )


def toy_model(seed: int = 0) -> Tuple[IHCEModel, Tuple[Record, ...]]:
    """A freshly initialised toy model and four records covering every code."""
    rng = np.random.default_rng(seed)
    words = tuple(f"w{k:02d}" for k in range(TOY_VOCAB_SIZE - 2))
    vocab = Vocabulary((PAD_TOKEN, UNK_TOKEN) + words)
    finest = [CodeId(c) for c in TOY_CODES]
    descriptors: Dict[CodeId, Tuple[str, ...]] = {
        code: (words[2 * i], words[2 * i + 1]) for i, code in enumerate(finest)
    }
    hierarchy = build_hierarchy(finest, 2, descriptors=descriptors)

    golds = [
        frozenset({finest[0], finest[3]}),
        frozenset({finest[1]}),
        frozenset({finest[2], finest[4], finest[0]}),
        frozenset({finest[5], finest[3]}),
    ]
    records = tuple(
        Record(f"toy{i}", tuple(int(t) for t in rng.integers(2, TOY_VOCAB_SIZE, size=6 + i)), gold)
        for i, gold in enumerate(golds)
    )
    graphs = build_cographs([r.gold for r in records], hierarchy)
    model = IHCEModel.create(
        toy_config(),
        hierarchy,
        len(vocab),
        vocab.index,
        [g.propagation for g in graphs],
        rng,
    )
    return model, records


def run_gradcheck(
    seed: int = 0, eps: float = 1e-6, samples_per_parameter: Optional[int] = 12
) -> GradcheckResult:
    """Compare tape gradients of the eval-mode batch loss with central differences."""
    started = time.perf_counter()
    model, records = toy_model(seed)
    batch = make_batch(records, model.hierarchy)
    rng = np.random.default_rng(seed)

    def loss() -> Tensor:
        value, _ = model.loss(batch, rng, training=False)
        return value

    error = grad_check(
        loss, model.parameters(), eps, samples_per_parameter, np.random.default_rng(seed)
    )
    result = GradcheckResult(error, model.num_parameters(), time.perf_counter() - started)
    logger.info(
        "Gradient check over %d parameters: max relative error %.3g (%.1fs)",
        result.num_parameters,
        result.max_error,
        result.seconds,
    )
    return result
