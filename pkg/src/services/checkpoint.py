"""Single-file model checkpoints.

Layout (all integers little-endian):

    bytes 0-7    magic  b"IHCECKPT"
    bytes 8-11   format version, uint32
    bytes 12-19  header length H, uint64
    next H bytes UTF-8 JSON header
    remainder    float64 ('<f8') arrays, concatenated in header order

The header lists every array by name and shape: model parameters first, then
one propagation matrix per level.
"""

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.algorithms.hierarchy import Hierarchy, hierarchy_from_dict, hierarchy_to_dict
from src.algorithms.model import IHCEModel
from src.utils.types import EvalReport, LevelMetrics, ModelConfig, TrainConfig
from src.utils.validators import IngestionError

from .corpus import Vocabulary

logger = logging.getLogger(__name__)

MAGIC = b"IHCECKPT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


@dataclass
class Checkpoint:
    """Everything needed to rebuild a trained model.

    Attributes:
        model_config: Architecture and ablation switches
        train_config: Optimisation settings used for training
        vocab: Vocabulary the embeddings are indexed by
        hierarchy: Modelled levels
        parameters: Parameter arrays by name, in model order
        propagations: GCN propagation matrix per level
        epoch: Epoch of the stored parameters
        best_micro_f1: Validation Micro-F1 of the stored parameters
        report: Validation report at save time
        history: Per-epoch metric rows
    """

    model_config: ModelConfig
    train_config: TrainConfig
    vocab: Vocabulary
    hierarchy: Hierarchy
    parameters: Dict[str, np.ndarray]
    propagations: Tuple[np.ndarray, ...]
    epoch: int = 0
    best_micro_f1: float = 0.0
    report: Optional[EvalReport] = None
    history: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def vocab_digest(self) -> str:
        return hashlib.sha256("\n".join(self.vocab.tokens).encode("utf-8")).hexdigest()

    @property
    def hierarchy_digest(self) -> str:
        return self.hierarchy.digest()


def from_model(
    model: IHCEModel,
    vocab: Vocabulary,
    train_config: TrainConfig,
    epoch: int = 0,
    best_micro_f1: float = 0.0,
    report: Optional[EvalReport] = None,
    history: Optional[List[Dict[str, Any]]] = None,
) -> Checkpoint:
    """Snapshot a model's current parameters."""
    return Checkpoint(
        model_config=model.config,
        train_config=train_config,
        vocab=vocab,
        hierarchy=model.hierarchy,
        parameters=model.snapshot(),
        propagations=tuple(p.copy() for p in model.propagations),
        epoch=epoch,
        best_micro_f1=best_micro_f1,
        report=report,
        history=list(history or []),
    )


def to_model(checkpoint: Checkpoint) -> IHCEModel:
    """Rebuild the model and load the stored parameters."""
    model = IHCEModel.create(
        checkpoint.model_config,
        checkpoint.hierarchy,
        len(checkpoint.vocab),
        checkpoint.vocab.index,
        checkpoint.propagations,
        np.random.default_rng(0),
    )
    model.load_state(checkpoint.parameters)
    return model


def report_to_dict(report: EvalReport) -> List[Dict[str, Any]]:
    rows = []
    for m in report.levels:
        rows.append(
            {
                "level": m.level,
                "num_codes": m.num_codes,
                "macro_auc": m.macro_auc,
                "micro_auc": m.micro_auc,
                "macro_f1": m.macro_f1,
                "micro_f1": m.micro_f1,
                "precision_at": {str(k): v for k, v in m.precision_at.items()},
                "macro_f1_excluded": m.macro_f1_excluded,
                "macro_auc_excluded": m.macro_auc_excluded,
            }
        )
    return rows


def report_from_dict(rows: List[Dict[str, Any]]) -> EvalReport:
    levels = []
    for row in rows:
        values = dict(row)
        values["precision_at"] = {int(k): float(v) for k, v in row["precision_at"].items()}
        levels.append(LevelMetrics(**values))
    return EvalReport(tuple(levels))


def save_checkpoint(checkpoint: Checkpoint, path: Path) -> None:
    """Write the checkpoint file; parents are created as needed."""
    arrays: List[Tuple[str, np.ndarray]] = list(checkpoint.parameters.items())
    arrays += [(f"propagation{t + 1}", p) for t, p in enumerate(checkpoint.propagations)]
    header = {
        "model_config": checkpoint.model_config.to_dict(),
        "train_config": checkpoint.train_config.to_dict(),
        "vocab": list(checkpoint.vocab.tokens),
        "vocab_digest": checkpoint.vocab_digest,
        "hierarchy": hierarchy_to_dict(checkpoint.hierarchy),
        "hierarchy_digest": checkpoint.hierarchy_digest,
        "num_parameters": len(checkpoint.parameters),
        "arrays": [{"name": name, "shape": list(a.shape)} for name, a in arrays],
        "epoch": checkpoint.epoch,
        "best_micro_f1": checkpoint.best_micro_f1,
        "report": None if checkpoint.report is None else report_to_dict(checkpoint.report),
        "history": checkpoint.history,
    }
    encoded = json.dumps(header, sort_keys=True).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        handle.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(encoded)))
        handle.write(encoded)
        for _, array in arrays:
            handle.write(np.ascontiguousarray(array, dtype="<f8").tobytes())
    logger.info("Saved checkpoint (epoch %d) to %s", checkpoint.epoch, path)


def load_checkpoint(path: Path) -> Checkpoint:
    """Read a checkpoint written by ``save_checkpoint``.

    Raises:
        IngestionError: If the file is missing, truncated, of another format
            version, or its digests do not match its contents
    """
    if not path.is_file():
        raise IngestionError(f"Checkpoint not found: {path}")
    blob = path.read_bytes()
    if len(blob) < _PREFIX.size:
        raise IngestionError(f"{path}: truncated checkpoint")
    magic, version, header_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise IngestionError(f"{path}: not a checkpoint file")
    if version != FORMAT_VERSION:
        raise IngestionError(f"{path}: unsupported checkpoint version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(blob[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise IngestionError(f"{path}: unreadable header ({e})") from e

    offset = start + header_len
    arrays: List[Tuple[str, np.ndarray]] = []
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 8 * count
        if end > len(blob):
            raise IngestionError(f"{path}: truncated array {entry['name']}")
        values = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        arrays.append((entry["name"], values.reshape(shape).astype(np.float64)))
        offset = end
    if offset != len(blob):
        raise IngestionError(f"{path}: {len(blob) - offset} trailing bytes")

    split = int(header["num_parameters"])
    checkpoint = Checkpoint(
        model_config=ModelConfig.from_dict(header["model_config"]),
        train_config=TrainConfig.from_dict(header["train_config"]),
        vocab=Vocabulary(tuple(header["vocab"])),
        hierarchy=hierarchy_from_dict(header["hierarchy"]),
        parameters=dict(arrays[:split]),
        propagations=tuple(a for _, a in arrays[split:]),
        epoch=int(header["epoch"]),
        best_micro_f1=float(header["best_micro_f1"]),
        report=None if header["report"] is None else report_from_dict(header["report"]),
        history=list(header["history"]),
    )
    if checkpoint.vocab_digest != header["vocab_digest"]:
        raise IngestionError(f"{path}: vocabulary digest mismatch")
    if checkpoint.hierarchy_digest != header["hierarchy_digest"]:
        raise IngestionError(f"{path}: hierarchy digest mismatch")
    return checkpoint
