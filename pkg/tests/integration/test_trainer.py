"""Integration tests for training, prediction and sweeps on a small synthetic corpus."""

from dataclasses import replace
from pathlib import Path
from typing import Tuple

import numpy as np
import pandas as pd
import pytest

from src.algorithms.model import IHCEModel, make_batch
from src.algorithms.optim import AdamW
from src.services.checkpoint import load_checkpoint
from src.services.synth import SynthCorpus
from src.services.trainer import (
    PreparedData,
    attention_frame,
    evaluate_model,
    fit,
    predict,
    prediction_frame,
    prepare_data,
    step,
    summarize_sweep,
    sweep,
    top_k_frame,
    write_predictions,
)
from src.utils.types import ModelConfig, TrainConfig
from src.utils.validators import ConfigurationError, ContractError, NonFiniteLossError

pytestmark = pytest.mark.integration


class TestPrepareData:
    """Splits, vocabulary and derived structures."""

    def test_structures_follow_training_split(self, prepared: PreparedData) -> None:
        assert prepared.hierarchy.depth == 3
        assert len(prepared.cographs) == 3
        assert [g.num_nodes for g in prepared.cographs] == list(prepared.hierarchy.level_sizes())
        known = set(prepared.hierarchy.finest)
        assert all(r.gold <= known for r in prepared.valid)

    def test_empty_split_rejected(
        self, synth_splits: Tuple[list, list], tiny_model_config: ModelConfig
    ) -> None:
        train, _ = synth_splits
        with pytest.raises(ConfigurationError):
            prepare_data(train, [], tiny_model_config)

    def test_overlapping_splits_rejected(
        self, synth_splits: Tuple[list, list], tiny_model_config: ModelConfig
    ) -> None:
        train, _ = synth_splits
        with pytest.raises(ConfigurationError):
            prepare_data(train, train[:3], tiny_model_config)


class TestFit:
    """Training loop, early stopping and outputs."""

    def test_zero_learning_rate_stops_after_patience(
        self, prepared: PreparedData, tiny_model_config: ModelConfig, tiny_train_config: TrainConfig
    ) -> None:
        config = replace(tiny_train_config, learning_rate=0.0, patience=1, max_epochs=5)
        result = fit(prepared, tiny_model_config, config)
        assert result.epochs_run == 2
        assert result.checkpoint.epoch == 1

    def test_same_seed_same_model(
        self, prepared: PreparedData, tiny_model_config: ModelConfig, tiny_train_config: TrainConfig
    ) -> None:
        a = fit(prepared, tiny_model_config, tiny_train_config).model.snapshot()
        b = fit(prepared, tiny_model_config, tiny_train_config).model.snapshot()
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_best_epoch_is_restored(
        self, prepared: PreparedData, tiny_model_config: ModelConfig, tiny_train_config: TrainConfig
    ) -> None:
        result = fit(prepared, tiny_model_config, tiny_train_config)
        report = evaluate_model(result.model, prepared.valid, tiny_train_config.threshold)
        assert result.checkpoint.report is not None
        assert report.final.micro_f1 == result.checkpoint.report.final.micro_f1

    def test_writes_outputs(
        self,
        prepared: PreparedData,
        tiny_model_config: ModelConfig,
        tiny_train_config: TrainConfig,
        tmp_path: Path,
    ) -> None:
        result = fit(prepared, tiny_model_config, tiny_train_config, tmp_path)
        for name in ("model.ckpt", "vocab.tsv", "history.tsv"):
            assert (tmp_path / name).is_file()
        history = pd.read_csv(tmp_path / "history.tsv", sep="\t")
        assert len(history) == 3 * result.epochs_run
        assert {"epoch", "level", "micro_f1", "train_loss"} <= set(history.columns)
        assert load_checkpoint(tmp_path / "model.ckpt").epoch == result.checkpoint.epoch

    def test_non_finite_loss_leaves_parameters(
        self, prepared: PreparedData, tiny_model_config: ModelConfig, tiny_train_config: TrainConfig
    ) -> None:
        model = fit(prepared, tiny_model_config, replace(tiny_train_config, max_epochs=1)).model
        name, tensor = next(iter(model.state().items()))
        tensor.data[...] = np.nan
        before = model.snapshot()
        optimizer = AdamW(model.parameters(), learning_rate=0.01)
        batch = make_batch(prepared.train[:2], prepared.hierarchy)
        with pytest.raises(NonFiniteLossError, match="Loss became nan") as excinfo:
            step(model, batch, optimizer, np.random.default_rng(0))
        assert isinstance(excinfo.value.__cause__, ContractError)
        after = model.snapshot()
        for key in before:
            if key != name:
                np.testing.assert_array_equal(before[key], after[key])
        assert optimizer.steps == 0


@pytest.fixture
def trained(
    prepared: PreparedData, tiny_model_config: ModelConfig, tiny_train_config: TrainConfig
) -> IHCEModel:
    """Model fitted for two epochs on the small corpus."""
    return fit(prepared, tiny_model_config, tiny_train_config).model


class TestPredictionTables:
    """Long, ranked and attention tables."""

    def test_prediction_frame_covers_every_code(
        self, trained: IHCEModel, prepared: PreparedData, tmp_path: Path
    ) -> None:
        records = prepared.valid
        probs = predict(trained, records)
        frame = prediction_frame([r.id for r in records], trained.hierarchy, probs)
        assert list(frame.columns) == ["id", "level", "code", "probability"]
        assert len(frame) == len(records) * sum(trained.hierarchy.level_sizes())
        assert frame["probability"].between(0.0, 1.0).all()

        floor = float(np.median(probs[-1]))
        kept = prediction_frame([r.id for r in records], trained.hierarchy, probs, floor)
        assert (kept["probability"] >= floor).all()
        assert len(kept) < len(frame)

        path = tmp_path / "out" / "predictions.tsv"
        write_predictions(frame, path)
        written = pd.read_csv(path, sep="\t", header=None, dtype={0: str, 2: str})
        assert written.shape == frame.shape

    def test_top_k_frame_is_ranked(self, trained: IHCEModel, prepared: PreparedData) -> None:
        records = prepared.valid[:4]
        scores = predict(trained, records)[-1]
        frame = top_k_frame([r.id for r in records], trained.hierarchy.finest, scores, k=3)
        assert list(frame.columns) == ["id", "rank", "code", "probability"]
        assert len(frame) == 12
        for _, group in frame.groupby("id"):
            assert list(group["rank"]) == [1, 2, 3]
            assert group["probability"].is_monotonic_decreasing
            row = scores[[r.id for r in records].index(group["id"].iloc[0])]
            assert group["probability"].iloc[0] == pytest.approx(row.max())

    def test_top_k_clamped_to_code_count(self, trained: IHCEModel, prepared: PreparedData) -> None:
        records = prepared.valid[:1]
        scores = predict(trained, records)[-1]
        frame = top_k_frame([records[0].id], trained.hierarchy.finest, scores, k=100)
        assert len(frame) == len(trained.hierarchy.finest)

    def test_attention_frame_weights_sum_to_one(
        self, trained: IHCEModel, prepared: PreparedData
    ) -> None:
        record = prepared.valid[0]
        frame = attention_frame(trained, record, prepared.vocab)
        assert list(frame.columns) == ["id", "level", "code", "path", "position", "token", "weight"]
        assert set(frame["level"]) == {1, 2, 3}
        assert set(frame["path"]) == {"code", "ontology"}
        sums = frame.groupby(["level", "code", "path"])["weight"].sum()
        np.testing.assert_allclose(sums.to_numpy(), 1.0)
        counts = frame.groupby(["level", "path"]).size()
        assert (counts == len(record.tokens)).all()


class TestSweep:
    """Level and ablation comparisons."""

    def test_unknown_variant(
        self,
        synth_splits: Tuple[list, list],
        tiny_model_config: ModelConfig,
        tiny_train_config: TrainConfig,
    ) -> None:
        train, valid = synth_splits
        with pytest.raises(ConfigurationError):
            sweep(train, valid, tiny_model_config, tiny_train_config, variants=("no-gcn",))

    def test_small_sweep(
        self,
        small_synth: SynthCorpus,
        synth_splits: Tuple[list, list],
        tiny_model_config: ModelConfig,
        tiny_train_config: TrainConfig,
    ) -> None:
        train, valid = synth_splits
        runs, summary = sweep(
            train,
            valid,
            tiny_model_config,
            replace(tiny_train_config, max_epochs=1),
            levels=(1, 3),
            variants=("full", "no-dpu"),
            seeds=(0, 1),
            descriptors=small_synth.descriptors,
        )
        assert len(runs) == 8
        assert set(runs["levels"]) == {1, 3}
        assert len(summary) == 4
        assert {"micro_f1_gap", "macro_f1_gap"} <= set(summary.columns)
        full = summary[summary["variant"] == "full"]
        np.testing.assert_allclose(full["micro_f1_gap"].to_numpy(), 0.0)

    def test_summary_gap(self) -> None:
        table = pd.DataFrame(
            {
                "levels": [3, 3, 3, 3],
                "variant": ["full", "full", "no-hpl", "no-hpl"],
                "seed": [0, 1, 0, 1],
                "macro_f1": [0.4, 0.6, 0.3, 0.3],
                "micro_f1": [0.5, 0.7, 0.4, 0.6],
            }
        )
        summary = summarize_sweep(table).set_index("variant")
        assert summary.loc["full", "micro_f1"] == pytest.approx(0.6)
        assert summary.loc["no-hpl", "micro_f1_gap"] == pytest.approx(-0.1)
        assert summary.loc["no-hpl", "macro_f1_gap"] == pytest.approx(-0.2)
