"""Multi-label evaluation: Precision@K, F1 and ROC-AUC, micro and macro.

All functions take a score matrix ``[records x codes]`` and a 0/1 gold matrix
of the same shape.
"""

import logging
from pathlib import Path
from typing import Collection, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import f1_score as _sk_f1
from sklearn.metrics import roc_auc_score

from src.utils.types import CodeId, EvalReport, LevelMetrics
from src.utils.validators import ContractError, UndefinedMetricError, validate_probability

logger = logging.getLogger(__name__)

DEFAULT_KS = (5, 8, 15)
MODES = ("micro", "macro")


def _check(scores: np.ndarray, gold: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(gold).astype(bool)
    if s.ndim != 2 or s.shape != y.shape:
        raise ContractError(f"Scores {s.shape} and gold {y.shape} must be matrices of equal shape")
    return s, y


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ContractError(f"mode must be one of {MODES}, got {mode!r}")


def binarize(gold_sets: Sequence[Collection[CodeId]], codes: Sequence[CodeId]) -> np.ndarray:
    """0/1 matrix with one row per record and one column per code."""
    index = {code: j for j, code in enumerate(codes)}
    matrix = np.zeros((len(gold_sets), len(codes)), dtype=np.int8)
    for i, gold in enumerate(gold_sets):
        for code in gold:
            matrix[i, index[code]] = 1
    return matrix


def top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Column indices of the k best scores per row; ties go to the lower index."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), axis=1, kind="stable")[:, :k]


def precision_at_k(scores: np.ndarray, gold: np.ndarray, k: int) -> float:
    """Mean over records of |top-k ∩ gold| / k.

    Raises:
        ContractError: If k < 1

    Example:
        >>> precision_at_k(np.array([[0.9, 0.8, 0.7, 0.6, 0.5]]), np.array([[1, 0, 1, 0, 0]]), 5)
        0.4
    """
    s, y = _check(scores, gold)
    if k < 1:
        raise ContractError(f"K must be at least 1, got {k}")
    if k > s.shape[1]:
        logger.warning("P@%d requested with only %d codes; using K=%d", k, s.shape[1], s.shape[1])
        k = s.shape[1]
    if s.shape[0] == 0:
        return 0.0
    ranked = top_k(s, k)
    hits = np.take_along_axis(y, ranked, axis=1).sum(axis=1)
    return float(np.mean(hits / k))


def f1(
    scores: np.ndarray, gold: np.ndarray, threshold: float = 0.5, mode: str = "micro"
) -> Tuple[float, int]:
    """F1 of thresholded predictions (score >= threshold counts as positive).

    Macro averages per-code F1 over the codes with at least one gold positive.

    Returns:
        (F1, number of codes excluded from the macro average; 0 for micro)
    """
    _check_mode(mode)
    validate_probability("threshold", threshold, inclusive_low=False)
    s, y = _check(scores, gold)
    predicted = s >= threshold
    if mode == "micro":
        return float(_sk_f1(y.ravel(), predicted.ravel(), zero_division=0)), 0
    positive = y.any(axis=0)
    excluded = int(np.sum(~positive))
    if not positive.any():
        return 0.0, excluded
    # positive class only, one code at a time
    per_code = [
        _sk_f1(y[:, j], predicted[:, j], labels=[True], average="macro", zero_division=0)
        for j in np.flatnonzero(positive)
    ]
    return float(np.mean(per_code)), excluded


def auc(scores: np.ndarray, gold: np.ndarray, mode: str = "micro") -> Tuple[float, int]:
    """ROC-AUC with tied scores counted as half.

    Macro averages over codes that have both a positive and a negative record.

    Returns:
        (AUC, number of codes excluded from the macro average; 0 for micro)

    Raises:
        UndefinedMetricError: If no code (macro) or no pooled set (micro) has both classes
    """
    _check_mode(mode)
    s, y = _check(scores, gold)
    if mode == "micro":
        flat = y.ravel()
        if flat.all() or not flat.any():
            raise UndefinedMetricError("Micro AUC needs both positive and negative pairs")
        return float(roc_auc_score(flat, s.ravel())), 0
    positives = y.sum(axis=0)
    usable = (positives > 0) & (positives < y.shape[0])
    excluded = int(np.sum(~usable))
    if not usable.any():
        raise UndefinedMetricError("No code has both positive and negative records")
    values = [roc_auc_score(y[:, j], s[:, j]) for j in np.flatnonzero(usable)]
    return float(np.mean(values)), excluded


def evaluate_level(
    level: int,
    scores: np.ndarray,
    gold: np.ndarray,
    threshold: float = 0.5,
    ks: Iterable[int] = DEFAULT_KS,
) -> LevelMetrics:
    """Every metric for one level; undefined AUC values become None."""
    s, y = _check(scores, gold)
    macro_f1, f1_excluded = f1(s, y, threshold, "macro")
    micro_f1, _ = f1(s, y, threshold, "micro")
    macro_auc: Optional[float]
    micro_auc: Optional[float]
    try:
        macro_auc, auc_excluded = auc(s, y, "macro")
    except UndefinedMetricError:
        macro_auc, auc_excluded = None, s.shape[1]
    try:
        micro_auc, _ = auc(s, y, "micro")
    except UndefinedMetricError:
        micro_auc = None
    if f1_excluded or auc_excluded:
        logger.debug(
            "Level %d macro exclusions: %d codes for F1, %d for AUC",
            level,
            f1_excluded,
            auc_excluded,
        )
    return LevelMetrics(
        level=level,
        num_codes=s.shape[1],
        macro_auc=macro_auc,
        micro_auc=micro_auc,
        macro_f1=macro_f1,
        micro_f1=micro_f1,
        precision_at={k: precision_at_k(s, y, k) for k in ks},
        macro_f1_excluded=f1_excluded,
        macro_auc_excluded=auc_excluded,
    )


def report_frame(report: EvalReport, split: Optional[str] = None) -> pd.DataFrame:
    """One row per level with the metric columns used in logs and TSV output."""
    rows: List[Dict[str, object]] = []
    for metrics in report.levels:
        row: Dict[str, object] = {}
        if split is not None:
            row["split"] = split
        row.update(
            {
                "level": metrics.level,
                "codes": metrics.num_codes,
                "macro_auc": metrics.macro_auc,
                "micro_auc": metrics.micro_auc,
                "macro_f1": metrics.macro_f1,
                "micro_f1": metrics.micro_f1,
            }
        )
        for k, value in sorted(metrics.precision_at.items()):
            row[f"p@{k}"] = value
        row["macro_f1_excluded"] = metrics.macro_f1_excluded
        row["macro_auc_excluded"] = metrics.macro_auc_excluded
        rows.append(row)
    return pd.DataFrame(rows)


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{100.0 * value:.1f}"


def format_report(report: EvalReport) -> str:
    """Fixed-width text block: AUC (macro, micro), F1 (macro, micro), P@K."""
    ks = sorted(report.final.precision_at)
    header = ["level", "codes", "AUC-Ma", "AUC-Mi", "F1-Ma", "F1-Mi"] + [f"P@{k}" for k in ks]
    lines = ["  ".join(f"{h:>7}" for h in header)]
    for m in report.levels:
        cells = [str(m.level), str(m.num_codes), _fmt(m.macro_auc), _fmt(m.micro_auc)]
        cells += [_fmt(m.macro_f1), _fmt(m.micro_f1)]
        cells += [_fmt(m.precision_at.get(k)) for k in ks]
        lines.append("  ".join(f"{c:>7}" for c in cells))
    return "\n".join(lines)


def write_report(report: EvalReport, path: Path) -> None:
    """Write the per-level report as TSV."""
    path.parent.mkdir(parents=True, exist_ok=True)
    report_frame(report).to_csv(path, sep="\t", index=False, na_rep="-", float_format="%.17g")
