"""Token highlighting by attention weight."""

import html
from typing import Sequence

import numpy as np
import streamlit as st

from ..utils.validators import DimensionError

HIGHLIGHT_RGB = (255, 140, 0)


def attention_to_html(tokens: Sequence[str], weights: np.ndarray, max_alpha: float = 0.85) -> str:
    """Wrap each token in a span shaded by its weight relative to the largest one.

    Tokens are HTML-escaped. An all-zero weight vector yields unshaded spans.

    Raises:
        DimensionError: If there is not exactly one weight per token
    """
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if weights.size != len(tokens):
        raise DimensionError(f"{len(tokens)} tokens but {weights.size} attention weights")
    peak = float(weights.max()) if weights.size else 0.0
    r, g, b = HIGHLIGHT_RGB
    spans = []
    for token, weight in zip(tokens, weights):
        alpha = max_alpha * float(weight) / peak if peak > 0 else 0.0
        spans.append(
            f'<span style="background-color: rgba({r}, {g}, {b}, {alpha:.3f})" '
            f'title="{float(weight):.4f}">{html.escape(token)}</span>'
        )
    return " ".join(spans)


def render_attention(tokens: Sequence[str], weights: np.ndarray, caption: str) -> None:
    st.markdown(
        f'<div style="line-height: 1.9">{attention_to_html(tokens, weights)}</div>',
        unsafe_allow_html=True,
    )
    st.caption(caption)
