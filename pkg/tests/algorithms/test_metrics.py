"""Tests for multi-label evaluation metrics."""

import logging
from itertools import product
from pathlib import Path
from typing import Tuple

import numpy as np
import pandas as pd
import pytest

from src.algorithms.metrics import (
    auc,
    binarize,
    evaluate_level,
    f1,
    format_report,
    precision_at_k,
    report_frame,
    top_k,
    write_report,
)
from src.utils.types import CodeId, EvalReport, LevelMetrics
from src.utils.validators import ConfigurationError, ContractError, UndefinedMetricError


def pairwise_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of positive/negative pairs ranked correctly, ties counted as half."""
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in product(pos, neg))
    return wins / (len(pos) * len(neg))


def counted_f1(predicted: np.ndarray, gold: np.ndarray) -> float:
    tp = int(np.sum(predicted & gold))
    fp = int(np.sum(predicted & ~gold))
    fn = int(np.sum(~predicted & gold))
    return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)


@pytest.fixture(params=range(100))
def random_case(request: pytest.FixtureRequest) -> Tuple[np.ndarray, np.ndarray]:
    """Scores with ties and sparse gold; one code always has a single positive."""
    rng = np.random.default_rng(request.param)
    records = int(rng.integers(2, 16))
    codes = int(rng.integers(1, 9))
    scores = np.round(rng.random((records, codes)), 1 + request.param % 2)
    density = rng.uniform(0.0, 0.6, size=codes)
    gold = (rng.random((records, codes)) < density).astype(int)
    lone = int(rng.integers(codes))
    gold[:, lone] = 0
    gold[rng.integers(records), lone] = 1
    return scores, gold


class TestPrecisionAtK:
    """Ranking precision."""

    def test_hand_example(self) -> None:
        scores = np.array([[0.9, 0.8, 0.7, 0.6, 0.5]])
        gold = np.array([[1, 0, 1, 0, 0]])
        assert precision_at_k(scores, gold, 5) == pytest.approx(0.4)
        assert precision_at_k(scores, gold, 1) == 1.0

    def test_matches_sorting_oracle(self, random_case: Tuple[np.ndarray, np.ndarray]) -> None:
        scores, gold = random_case
        records, codes = gold.shape
        for k in (1, 3, 5):
            kept = min(k, codes)
            hits = []
            for i in range(records):
                ranked = sorted(range(codes), key=lambda j: (-scores[i, j], j))[:kept]
                hits.append(gold[i, ranked].sum() / kept)
            expected = np.mean(hits)
            assert precision_at_k(scores, gold, k) == pytest.approx(expected)

    def test_ties_prefer_lower_index(self) -> None:
        np.testing.assert_array_equal(top_k(np.array([[0.5, 0.9, 0.5, 0.5]]), 3), [[1, 0, 2]])

    def test_k_larger_than_codes_is_clamped(self, caplog: pytest.LogCaptureFixture) -> None:
        scores = np.array([[0.9, 0.1]])
        gold = np.array([[1, 1]])
        with caplog.at_level(logging.WARNING):
            assert precision_at_k(scores, gold, 8) == 1.0
        assert "using K=2" in caplog.text

    def test_k_below_one(self) -> None:
        with pytest.raises(ContractError):
            precision_at_k(np.ones((1, 2)), np.ones((1, 2)), 0)

    def test_shape_mismatch(self) -> None:
        with pytest.raises(ContractError):
            precision_at_k(np.ones((2, 2)), np.ones((2, 3)), 1)


class TestF1:
    """Thresholded F1."""

    def test_micro_matches_counts(self, random_case: Tuple[np.ndarray, np.ndarray]) -> None:
        scores, gold = random_case
        value, excluded = f1(scores, gold, 0.5, "micro")
        assert excluded == 0
        assert value == pytest.approx(counted_f1(scores >= 0.5, gold.astype(bool)))

    def test_macro_matches_counts(self, random_case: Tuple[np.ndarray, np.ndarray]) -> None:
        scores, gold = random_case
        predicted = scores >= 0.5
        included = [j for j in range(gold.shape[1]) if gold[:, j].any()]
        expected = np.mean([counted_f1(predicted[:, j], gold[:, j] == 1) for j in included])
        value, excluded = f1(scores, gold, 0.5, "macro")
        assert excluded == gold.shape[1] - len(included)
        assert value == pytest.approx(expected, abs=1e-12)

    def test_macro_averages_codes_with_positives(self) -> None:
        scores = np.array([[0.9, 0.2, 0.6], [0.1, 0.7, 0.4]])
        gold = np.array([[1, 0, 0], [1, 1, 0]])
        value, excluded = f1(scores, gold, 0.5, "macro")
        # code 0: tp=1 fn=1 -> 2/3; code 1: tp=1 -> 1; code 2 has no positives
        assert excluded == 1
        assert value == pytest.approx((2 / 3 + 1.0) / 2)

    def test_macro_with_one_included_code(self) -> None:
        scores = np.array([[0.9, 0.1], [0.9, 0.1], [0.1, 0.1], [0.1, 0.1]])
        gold = np.array([[1, 0], [0, 0], [0, 0], [0, 0]])
        # code 0: tp=1 fp=1 -> 2/3; code 1 has no positives
        assert f1(scores, gold, 0.5, "macro") == (pytest.approx(2 / 3), 1)

    def test_threshold_is_inclusive(self) -> None:
        assert f1(np.array([[0.5]]), np.array([[1]]), 0.5)[0] == 1.0

    def test_all_negative_gold(self) -> None:
        assert f1(np.array([[0.9, 0.1]]), np.array([[0, 0]]), 0.5, "macro") == (0.0, 2)

    def test_bad_mode(self) -> None:
        with pytest.raises(ContractError):
            f1(np.ones((1, 1)), np.ones((1, 1)), 0.5, "weighted")

    def test_bad_threshold(self) -> None:
        with pytest.raises(ConfigurationError):
            f1(np.ones((1, 1)), np.ones((1, 1)), 0.0)


class TestAuc:
    """ROC-AUC against the pairwise definition."""

    def test_micro_matches_pairwise(self, random_case: Tuple[np.ndarray, np.ndarray]) -> None:
        scores, gold = random_case
        value, _ = auc(scores, gold, "micro")
        assert value == pytest.approx(pairwise_auc(scores.ravel(), gold.ravel()), abs=1e-12)

    def test_macro_matches_pairwise(self, random_case: Tuple[np.ndarray, np.ndarray]) -> None:
        scores, gold = random_case
        records, codes = gold.shape
        usable = [j for j in range(codes) if 0 < gold[:, j].sum() < records]
        expected = np.mean([pairwise_auc(scores[:, j], gold[:, j]) for j in usable])
        value, excluded = auc(scores, gold, "macro")
        assert excluded == codes - len(usable)
        assert value == pytest.approx(expected, abs=1e-12)

    def test_ties_count_half(self) -> None:
        value, _ = auc(np.array([[0.5], [0.5]]), np.array([[1], [0]]), "micro")
        assert value == 0.5

    def test_macro_skips_single_class_codes(self) -> None:
        scores = np.array([[0.9, 0.3], [0.1, 0.4]])
        gold = np.array([[1, 1], [0, 1]])
        assert auc(scores, gold, "macro") == (1.0, 1)

    def test_undefined(self) -> None:
        with pytest.raises(UndefinedMetricError):
            auc(np.ones((2, 2)), np.ones((2, 2)), "micro")
        with pytest.raises(UndefinedMetricError):
            auc(np.ones((2, 2)), np.array([[1, 0], [1, 0]]), "macro")


class TestReports:
    """Level evaluation and report rendering."""

    def test_binarize(self) -> None:
        codes = [CodeId("401"), CodeId("402")]
        matrix = binarize([{CodeId("402")}, set(), {CodeId("401"), CodeId("402")}], codes)
        np.testing.assert_array_equal(matrix, [[0, 1], [0, 0], [1, 1]])

    def test_evaluate_level_with_undefined_auc(self) -> None:
        metrics = evaluate_level(2, np.array([[0.9, 0.2]]), np.array([[1, 0]]), ks=(1,))
        assert metrics.macro_auc is None
        assert metrics.macro_auc_excluded == 2
        assert metrics.micro_auc == 1.0
        assert metrics.micro_f1 == 1.0
        assert metrics.precision_at == {1: 1.0}

    def test_format_and_frame(self, tmp_path: Path) -> None:
        level = LevelMetrics(1, 4, None, 0.75, 0.5, 0.625, {5: 0.2})
        report = EvalReport((level,))
        text = format_report(report)
        assert "P@5" in text
        assert "62.5" in text
        assert "-" in text.splitlines()[1]

        frame = report_frame(report, split="valid")
        assert list(frame.columns[:3]) == ["split", "level", "codes"]
        assert frame.loc[0, "p@5"] == 0.2

        path = tmp_path / "report.tsv"
        write_report(report, path)
        written = pd.read_csv(path, sep="\t", dtype=str)
        assert written.loc[0, "macro_auc"] == "-"
        assert float(written.loc[0, "micro_f1"]) == 0.625
