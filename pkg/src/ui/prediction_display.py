"""Per-level prediction tables."""

from typing import Mapping, Sequence

import numpy as np
import pandas as pd
import streamlit as st

from ..algorithms.hierarchy import Hierarchy
from ..utils.types import CodeId


def _describe(code: CodeId, descriptors: Mapping[CodeId, Sequence[str]]) -> str:
    return " ".join(descriptors.get(code, ()))


def prediction_rows(
    hierarchy: Hierarchy, probabilities: Sequence[np.ndarray], threshold: float
) -> pd.DataFrame:
    """Codes at or above the threshold, per level, most probable first.

    Args:
        hierarchy: Modelled levels
        probabilities: One probability vector per level for a single note
        threshold: Decision threshold

    Returns:
        DataFrame with columns Level, Code, Probability, Descriptor
    """
    rows = []
    for t, (probs, codes) in enumerate(zip(probabilities, hierarchy.levels), start=1):
        for j in np.argsort(-probs, kind="stable"):
            if probs[j] < threshold:
                break
            rows.append(
                {
                    "Level": t,
                    "Code": codes[j].code,
                    "Probability": round(float(probs[j]), 4),
                    "Descriptor": _describe(codes[j], hierarchy.descriptors),
                }
            )
    return pd.DataFrame(rows, columns=["Level", "Code", "Probability", "Descriptor"])


def top_k_rows(hierarchy: Hierarchy, probabilities: np.ndarray, k: int = 15) -> pd.DataFrame:
    """The k most probable diagnosis codes regardless of threshold."""
    codes = hierarchy.finest
    order = np.argsort(-probabilities, kind="stable")[: min(k, len(codes))]
    return pd.DataFrame(
        {
            "Rank": np.arange(1, len(order) + 1),
            "Code": [codes[j].code for j in order],
            "Probability": [round(float(probabilities[j]), 4) for j in order],
            "Descriptor": [_describe(codes[j], hierarchy.descriptors) for j in order],
        }
    )


def render_predictions(
    hierarchy: Hierarchy, probabilities: Sequence[np.ndarray], threshold: float
) -> None:
    st.subheader("Predicted codes")
    frame = prediction_rows(hierarchy, probabilities, threshold)
    if frame.empty:
        st.warning(f"No code reaches the threshold {threshold:.2f}")
    else:
        st.dataframe(frame, hide_index=True, use_container_width=True)
    with st.expander("Top diagnosis codes"):
        st.dataframe(top_k_rows(hierarchy, probabilities[-1]), hide_index=True)
