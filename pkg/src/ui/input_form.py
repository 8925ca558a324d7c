"""Input form for the inspector: checkpoint path, note text and threshold."""

from typing import Tuple

import streamlit as st

DEFAULT_CHECKPOINT = "runs/synth/model.ckpt"


def render_input_form() -> Tuple[str, str, float, bool]:
    """Render the sidebar checkpoint field and the note form.

    Returns:
        A tuple containing:
        - checkpoint_path: Path typed by the user, stripped
        - note: Clinical note text, stripped
        - threshold: Decision threshold for listing predictions
        - predict_clicked: Whether the Predict button was clicked

    Example:
        >>> path, note, threshold, clicked = render_input_form()
        >>> if clicked:
        ...     # Load the checkpoint and score the note
        ...     pass
    """
    checkpoint_path = st.sidebar.text_input(
        "Checkpoint",
        value=DEFAULT_CHECKPOINT,
        key="checkpoint_path",
        help="File written by `ihce train --out DIR` (DIR/model.ckpt)",
    )
    threshold = st.sidebar.slider(
        "Decision threshold", min_value=0.05, max_value=0.95, value=0.5, step=0.05
    )

    note = st.text_area(
        "Clinical note",
        placeholder="e.g., patient admitted with chest pain and elevated blood pressure ...",
        height=200,
        key="note",
    )

    # Disable button if either input is empty
    button_disabled = not checkpoint_path.strip() or not note.strip()

    predict_clicked = st.button(
        "Predict codes",
        disabled=button_disabled,
        type="primary",
        use_container_width=True,
    )

    return checkpoint_path.strip(), note.strip(), float(threshold), predict_clicked
