"""Pytest configuration and shared fixtures."""

from typing import List, Tuple

import numpy as np
import pytest

from src.algorithms.hierarchy import Hierarchy, build_hierarchy
from src.services.synth import SynthConfig, SynthCorpus, synth_corpus
from src.services.trainer import PreparedData, prepare_data
from src.utils.types import (
    CodeId,
    EncoderConfig,
    GcnConfig,
    HpmConfig,
    ModelConfig,
    TrainConfig,
)

TOY_CODES = ("401.01", "401.02", "401.11", "402.01", "402.02", "402.11")


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator so every test draws the same numbers."""
    return np.random.default_rng(1234)


@pytest.fixture
def toy_codes() -> List[CodeId]:
    """Six diagnosis codes under two categories and four subcategories."""
    return [CodeId(code) for code in TOY_CODES]


@pytest.fixture
def three_level_hierarchy(toy_codes: List[CodeId]) -> Hierarchy:
    """Category -> subcategory -> full code over the toy codes.

    Layout:

        401 ── 401.0 ── 401.01, 401.02
            └─ 401.1 ── 401.11
        402 ── 402.0 ── 402.01, 402.02
            └─ 402.1 ── 402.11
    """
    return build_hierarchy(toy_codes, 3)


@pytest.fixture
def small_synth() -> SynthCorpus:
    """48 documents over a 2/4/8 code hierarchy with a 60-word vocabulary."""
    return synth_corpus(
        SynthConfig(level_sizes=(2, 4, 8), num_docs=48, vocab_size=60, noise_tokens=6, seed=3)
    )


@pytest.fixture
def tiny_model_config() -> ModelConfig:
    """Three levels with single-digit widths; no dropout for determinism."""
    return ModelConfig(
        encoder=EncoderConfig(embedding_dim=8, kernel_widths=(3, 5), residual_dim=4, dropout=0.0),
        gcn=GcnConfig(num_layers=1, hidden_dim=6),
        hpm=HpmConfig(attention_dim=6, dependency_dim=5),
        levels=3,
    )


@pytest.fixture
def tiny_train_config() -> TrainConfig:
    return TrainConfig(learning_rate=0.01, batch_size=8, patience=3, max_epochs=2, seed=0)


@pytest.fixture
def synth_splits(small_synth: SynthCorpus) -> Tuple[list, list]:
    """First 36 documents for training, the remaining 12 for validation."""
    docs = list(small_synth.docs)
    return docs[:36], docs[36:]


@pytest.fixture
def prepared(
    small_synth: SynthCorpus, synth_splits: Tuple[list, list], tiny_model_config: ModelConfig
) -> PreparedData:
    """Encoded splits, vocabulary, hierarchy and co-graphs for the small corpus."""
    train, valid = synth_splits
    return prepare_data(train, valid, tiny_model_config, descriptors=small_synth.descriptors)
