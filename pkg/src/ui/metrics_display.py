"""Validation report table shown next to the predictions."""

from typing import Optional

import pandas as pd
import streamlit as st

from ..utils.types import EvalReport


def _percent(value: Optional[float]) -> str:
    return "-" if value is None else f"{100.0 * value:.1f}"


def build_metrics_frame(report: EvalReport) -> pd.DataFrame:
    """Display table: one row per level, metrics as percentages.

    Args:
        report: Evaluation report stored in a checkpoint

    Returns:
        DataFrame indexed by "Level" with AUC, F1 and P@K columns as strings;
        undefined AUC values read "-"

    Example:
        >>> build_metrics_frame(report).loc["1", "F1 Micro"]
        '91.7'
    """
    ks = sorted(report.final.precision_at)
    rows = []
    for m in report.levels:
        row = {
            "Level": str(m.level),
            "Codes": m.num_codes,
            "AUC Macro": _percent(m.macro_auc),
            "AUC Micro": _percent(m.micro_auc),
            "F1 Macro": _percent(m.macro_f1),
            "F1 Micro": _percent(m.micro_f1),
        }
        for k in ks:
            row[f"P@{k}"] = _percent(m.precision_at.get(k))
        rows.append(row)
    return pd.DataFrame(rows).set_index("Level")


def render_metrics_table(report: Optional[EvalReport], epoch: int) -> None:
    """Render the stored validation report, or a note when there is none."""
    st.markdown("---")
    st.subheader("Validation metrics")
    if report is None:
        st.info("This checkpoint carries no validation report")
        return
    st.table(build_metrics_frame(report))
    st.caption(f"Best epoch {epoch}. The last level is the diagnosis-code level.")
