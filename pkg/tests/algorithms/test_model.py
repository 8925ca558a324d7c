"""Tests for the assembled model, batching and the optimiser."""

from dataclasses import replace
from typing import List

import numpy as np
import pytest

from src.algorithms import ops
from src.algorithms.cograph import build_cographs
from src.algorithms.model import IHCEModel, make_batch, parameter_count
from src.algorithms.optim import AdamW
from src.algorithms.tensor import Tape, Tensor
from src.services.diagnostics import run_gradcheck
from src.services.trainer import PreparedData, model_hierarchy
from src.utils.types import ModelConfig, Record
from src.utils.validators import ConfigurationError, DimensionError


def build_model(prepared: PreparedData, config: ModelConfig, seed: int = 0) -> IHCEModel:
    hierarchy = model_hierarchy(prepared.hierarchy.finest, config, prepared.hierarchy.descriptors)
    graphs = build_cographs([r.gold for r in prepared.train], hierarchy, config.cograph_sym)
    return IHCEModel.create(
        config,
        hierarchy,
        len(prepared.vocab),
        prepared.vocab.index,
        [g.propagation for g in graphs],
        np.random.default_rng(seed),
    )


class TestBatching:
    """Padding and per-level targets."""

    def test_pads_to_longest(self, prepared: PreparedData) -> None:
        records = prepared.train[:3]
        batch = make_batch(records, prepared.hierarchy)
        width = max(len(r.tokens) for r in records)
        assert batch.tokens.shape == (3, width)
        for i, record in enumerate(records):
            assert batch.mask[i].sum() == len(record.tokens)
            assert np.all(batch.tokens[i, len(record.tokens) :] == 0)

    def test_targets_follow_hierarchy(self, prepared: PreparedData) -> None:
        record = prepared.train[0]
        batch = make_batch([record], prepared.hierarchy)
        assert [t.shape[1] for t in batch.targets] == list(prepared.hierarchy.level_sizes())
        finest_index = prepared.hierarchy.index(prepared.hierarchy.depth)
        for code in record.gold:
            assert batch.targets[-1][0, finest_index[code]] == 1.0
        assert batch.targets[-1].sum() == len(record.gold)

    def test_empty_batch(self, prepared: PreparedData) -> None:
        with pytest.raises(ConfigurationError):
            make_batch([], prepared.hierarchy)


class TestModel:
    """Construction, state and forward behaviour."""

    @pytest.mark.parametrize(
        "overrides",
        [
            {},
            {"no_hpl": True},
            {"no_orl": True},
            {"no_orl": True, "no_hpl": True},
            {"no_dpu": True},
            {"levels": 2},
        ],
    )
    def test_parameter_count_closed_form(
        self, prepared: PreparedData, tiny_model_config: ModelConfig, overrides: dict
    ) -> None:
        config = replace(tiny_model_config, **overrides)
        model = build_model(prepared, config)
        expected = parameter_count(config, len(prepared.vocab), model.hierarchy.level_sizes())
        assert model.num_parameters() == expected

    def test_two_gcn_layers_counted(
        self, prepared: PreparedData, tiny_model_config: ModelConfig
    ) -> None:
        config = replace(tiny_model_config, gcn=replace(tiny_model_config.gcn, num_layers=2))
        model = build_model(prepared, config)
        expected = parameter_count(config, len(prepared.vocab), model.hierarchy.level_sizes())
        assert model.num_parameters() == expected

    def test_no_dpu_creates_no_gate(
        self, prepared: PreparedData, tiny_model_config: ModelConfig
    ) -> None:
        model = build_model(prepared, replace(tiny_model_config, no_dpu=True))
        assert all(level.dpu is None for level in model.levels)
        assert not any(".dpu." in name for name in model.state())

    def test_probabilities_shape_and_range(
        self, prepared: PreparedData, tiny_model_config: ModelConfig
    ) -> None:
        model = build_model(prepared, tiny_model_config)
        probs = model.predict_proba(prepared.valid)
        assert [p.shape for p in probs] == [
            (len(prepared.valid), n) for n in model.hierarchy.level_sizes()
        ]
        for p in probs:
            assert np.all((p > 0.0) & (p < 1.0))

    def test_padding_does_not_change_predictions(
        self, prepared: PreparedData, tiny_model_config: ModelConfig
    ) -> None:
        model = build_model(prepared, tiny_model_config)
        records: List[Record] = sorted(prepared.train[:6], key=lambda r: len(r.tokens))
        short, longest = records[0], records[-1]
        alone = model.predict_proba([short])
        padded = model.predict_proba([short, longest])
        for a, b in zip(alone, padded):
            np.testing.assert_allclose(a[0], b[0], atol=1e-12)

    def test_same_seed_same_parameters(
        self, prepared: PreparedData, tiny_model_config: ModelConfig
    ) -> None:
        a = build_model(prepared, tiny_model_config, seed=5).snapshot()
        b = build_model(prepared, tiny_model_config, seed=5).snapshot()
        assert a.keys() == b.keys()
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_load_state_checks_names_and_shapes(
        self, prepared: PreparedData, tiny_model_config: ModelConfig
    ) -> None:
        model = build_model(prepared, tiny_model_config)
        state = model.snapshot()
        name = next(iter(state))
        with pytest.raises(ConfigurationError):
            model.load_state({k: v for k, v in state.items() if k != name})
        with pytest.raises(DimensionError, match=r"does not match shape \(1, 1\)"):
            model.load_state({**state, name: np.zeros((1, 1))})

    def test_sum_reduction_scales_mean(
        self, prepared: PreparedData, tiny_model_config: ModelConfig
    ) -> None:
        batch = make_batch(prepared.train[:4], prepared.hierarchy)
        mean_model = build_model(prepared, tiny_model_config)
        sum_model = build_model(prepared, replace(tiny_model_config, loss_reduction="sum"))
        rng = np.random.default_rng(0)
        mean_loss, _ = mean_model.loss(batch, rng, training=False)
        sum_loss, _ = sum_model.loss(batch, rng, training=False)
        assert sum_loss.item() == pytest.approx(4.0 * mean_loss.item())

    def test_mismatched_hierarchy_rejected(
        self, prepared: PreparedData, tiny_model_config: ModelConfig
    ) -> None:
        model = build_model(prepared, tiny_model_config)
        with pytest.raises(ConfigurationError):
            IHCEModel(
                replace(tiny_model_config, levels=2),
                model.hierarchy,
                model.encoder,
                model.levels,
                model.ontology,
                model.propagations,
            )

    def test_toy_model_gradients(self) -> None:
        result = run_gradcheck(seed=0, eps=1e-6, samples_per_parameter=4)
        assert result.passed
        assert result.num_parameters > 0


class TestAdamW:
    """Optimiser updates."""

    def test_quadratic_decreases(self) -> None:
        p = Tensor([[3.0, -2.0, 0.5]], requires_grad=True)
        optimizer = AdamW([p], learning_rate=0.1, weight_decay=0.0)
        values = []
        for _ in range(50):
            optimizer.zero_grad()
            with Tape() as tape:
                loss = ops.sum_all(ops.mul(p, p))
            tape.backward(loss, [p])
            optimizer.step()
            values.append(loss.item())
        assert values[-1] < 0.1 * values[0]
        assert optimizer.steps == 50

    def test_first_step_moves_by_learning_rate(self) -> None:
        p = Tensor([[1.0, -1.0]], requires_grad=True)
        p.grad = np.array([[0.3, -5.0]])
        AdamW([p], learning_rate=0.01, weight_decay=0.0).step()
        np.testing.assert_allclose(p.data, [[0.99, -0.99]], atol=1e-8)

    def test_weight_decay_without_gradient(self) -> None:
        p = Tensor([[2.0]], requires_grad=True)
        AdamW([p], learning_rate=0.1, weight_decay=0.5).step()
        assert p.data[0, 0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)

    def test_zero_learning_rate_keeps_parameters(self) -> None:
        p = Tensor([[1.5, 2.5]], requires_grad=True)
        p.grad = np.ones((1, 2))
        AdamW([p], learning_rate=0.0).step()
        np.testing.assert_array_equal(p.data, [[1.5, 2.5]])
