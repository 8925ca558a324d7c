"""Streamlit inspector for trained hierarchical coding models.

Load a checkpoint, paste a clinical note, and see the codes predicted at every
level together with the words each code attended to.
"""

import os
from pathlib import Path
from typing import Tuple

import streamlit as st

from src.algorithms.model import IHCEModel
from src.services.checkpoint import Checkpoint, load_checkpoint, to_model
from src.services.corpus import MAX_LEN, encode_record
from src.services.trainer import attention_maps
from src.ui.attention_display import render_attention
from src.ui.input_form import render_input_form
from src.ui.metrics_display import render_metrics_table
from src.ui.prediction_display import render_predictions
from src.utils.config import configure_logging
from src.utils.types import RawDocument
from src.utils.validators import IHCEError


@st.cache_resource(show_spinner="Loading checkpoint...")
def _load(path: str) -> Tuple[Checkpoint, IHCEModel]:
    checkpoint = load_checkpoint(Path(path))
    return checkpoint, to_model(checkpoint)


def main() -> None:
    """Main application entry point.

    Orchestrates the workflow:
    1. Render the checkpoint field and the note form
    2. Load (and cache) the checkpoint
    3. Encode the note with the checkpoint's vocabulary
    4. Show per-level predictions, attention highlights and the stored report
    """
    st.set_page_config(page_title="ICD Code Inspector", layout="wide")
    configure_logging()

    st.title("Hierarchical ICD Code Inspector")
    st.markdown(
        "Codes are predicted level by level, from chapter or category down to the "
        "full diagnosis code. Each code attends to the words of the note that "
        "support it."
    )

    checkpoint_path, note, threshold, predict_clicked = render_input_form()
    if predict_clicked:
        st.session_state["scored_note"] = note
    note = st.session_state.get("scored_note", "")
    if not note:
        return

    try:
        checkpoint, model = _load(checkpoint_path)
        record = encode_record(RawDocument("note", note), checkpoint.vocab, MAX_LEN)
        if record.flagged:
            st.warning("None of the note's words are in the model vocabulary")
            return
        outputs = attention_maps(model, record)
    except IHCEError as e:
        st.error(f"{type(e).__name__}: {e}")
        return
    except Exception as e:
        st.error(f"Unexpected Error: {e}")
        if os.getenv("DEBUG", "false").lower() == "true":
            raise
        return

    probabilities = [output.probabilities() for output in outputs]
    render_predictions(model.hierarchy, probabilities, threshold)

    st.markdown("---")
    st.subheader("Attention")
    col1, col2 = st.columns(2)
    with col1:
        level = st.selectbox("Level", options=list(range(1, model.hierarchy.depth + 1)), index=0)
    output = outputs[level - 1]
    codes = model.hierarchy.levels[level - 1]
    ranked = sorted(range(len(codes)), key=lambda j: -probabilities[level - 1][j])
    with col2:
        j = st.selectbox(
            "Code",
            options=ranked,
            format_func=lambda k: f"{codes[k].code} ({probabilities[level - 1][k]:.3f})",
        )
    tokens = checkpoint.vocab.decode(record.tokens)
    render_attention(tokens, output.code_attention[j], "Code-specific attention")
    if output.ontology_attention is not None:
        render_attention(tokens, output.ontology_attention[j], "Ontology-guided attention")

    render_metrics_table(checkpoint.report, checkpoint.epoch)


if __name__ == "__main__":
    main()
