"""Training, evaluation, prediction and configuration sweeps."""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.algorithms.cograph import CoGraph, build_cographs
from src.algorithms.hierarchy import BlockTable, Hierarchy, build_hierarchy, expand_labels
from src.algorithms.metrics import DEFAULT_KS, binarize, evaluate_level, top_k
from src.algorithms.hpm import LevelOutput
from src.algorithms.model import Batch, IHCEModel, make_batch
from src.algorithms.optim import AdamW
from src.algorithms.tensor import Tape
from src.utils.types import CodeId, EvalReport, ModelConfig, RawDocument, Record, TrainConfig
from src.utils.validators import (
    ConfigurationError,
    ContractError,
    NonFiniteLossError,
    validate_finite,
)

from .checkpoint import Checkpoint, from_model, save_checkpoint
from .corpus import (
    MAX_LEN,
    Vocabulary,
    build_vocab,
    check_disjoint,
    encode_corpus,
    normalize_codes,
)

logger = logging.getLogger(__name__)

VARIANTS: Dict[str, Dict[str, bool]] = {
    "full": {},
    "no-hpl": {"no_hpl": True},
    "no-orl": {"no_orl": True},
    "no-orl+no-hpl": {"no_orl": True, "no_hpl": True},
    "no-dpu": {"no_dpu": True},
}


@dataclass(frozen=True)
class PreparedData:
    """Encoded splits with the structures derived from the training split.

    Attributes:
        vocab: Built from training documents only
        hierarchy: The modelled levels
        train: Training records
        valid: Validation records (gold restricted to known codes)
        test: Test records, possibly empty
        cographs: One co-occurrence graph per modelled level, from training records
    """

    vocab: Vocabulary
    hierarchy: Hierarchy
    train: List[Record]
    valid: List[Record]
    test: List[Record]
    cographs: Tuple[CoGraph, ...]


@dataclass
class FitResult:
    """Outcome of ``fit``: the best-validation model and its checkpoint."""

    model: IHCEModel
    checkpoint: Checkpoint
    history: List[Dict[str, Any]] = field(default_factory=list)
    epochs_run: int = 0


def model_hierarchy(
    finest: Sequence[CodeId],
    config: ModelConfig,
    descriptors: Optional[Mapping[CodeId, Sequence[str]]] = None,
    block_table: Optional[BlockTable] = None,
) -> Hierarchy:
    """Build the hierarchy and keep the levels the configuration models."""
    depth = max(config.levels, 2)
    full = build_hierarchy(finest, depth, block_table if depth == 4 else None, descriptors)
    return full.tail(config.modelled_levels)


def prepare_data(
    train_docs: Sequence[RawDocument],
    valid_docs: Sequence[RawDocument],
    config: ModelConfig,
    test_docs: Sequence[RawDocument] = (),
    descriptors: Optional[Mapping[CodeId, Sequence[str]]] = None,
    block_table: Optional[BlockTable] = None,
    min_count: int = 1,
    max_len: int = MAX_LEN,
) -> PreparedData:
    """Vocabulary, hierarchy, records and co-graphs for one experiment.

    Raises:
        ConfigurationError: If a split is empty or splits overlap
    """
    if len(train_docs) == 0 or len(valid_docs) == 0:
        raise ConfigurationError("Training and validation splits must both be nonempty")
    vocab = build_vocab(train_docs, min_count)
    finest = sorted({code for doc in train_docs for code in normalize_codes(doc)})
    hierarchy = model_hierarchy(finest, config, descriptors, block_table)
    known = frozenset(hierarchy.finest)
    train = encode_corpus(train_docs, vocab, max_len, known)
    valid = encode_corpus(valid_docs, vocab, max_len, known)
    test = encode_corpus(test_docs, vocab, max_len, known) if test_docs else []
    if not train or not valid:
        raise ConfigurationError("No usable records left in the training or validation split")
    check_disjoint(train, valid)
    if test:
        check_disjoint(train, test)
    cographs = build_cographs([r.gold for r in train], hierarchy, config.cograph_sym)
    logger.info(
        "Prepared %d train / %d valid / %d test records; level sizes %s",
        len(train),
        len(valid),
        len(test),
        list(hierarchy.level_sizes()),
    )
    return PreparedData(vocab, hierarchy, train, valid, test, cographs)


def _parameter_norms(model: IHCEModel) -> Dict[str, float]:
    return {name: float(np.linalg.norm(t.data)) for name, t in model.state().items()}


def step(model: IHCEModel, batch: Batch, optimizer: AdamW, rng: np.random.Generator) -> float:
    """One optimiser update on a batch; returns the batch loss.

    Raises:
        NonFiniteLossError: If the loss is NaN or infinite (parameters untouched)
    """
    optimizer.zero_grad()
    with Tape() as tape:
        loss, _ = model.loss(batch, rng, training=True)
    value = loss.item()
    try:
        validate_finite("loss", loss.data)
    except ContractError as e:
        logger.error(
            "Non-finite loss %s on batch %s; parameter norms: %s",
            value,
            list(batch.ids),
            _parameter_norms(model),
        )
        raise NonFiniteLossError(f"Loss became {value} on batch {list(batch.ids)[:5]}") from e
    tape.backward(loss, model.parameters())
    optimizer.step()
    return value


def evaluate_model(
    model: IHCEModel,
    records: Sequence[Record],
    threshold: float = 0.5,
    ks: Sequence[int] = DEFAULT_KS,
) -> EvalReport:
    """Metrics for every modelled level."""
    if len(records) == 0:
        raise ConfigurationError("Cannot evaluate an empty split")
    probs = model.predict_proba(records)
    hierarchy = model.hierarchy
    expanded = [expand_labels(r.gold, hierarchy) for r in records]
    levels = []
    for t, (scores, codes) in enumerate(zip(probs, hierarchy.levels)):
        gold = binarize([sets[t] for sets in expanded], codes)
        levels.append(evaluate_level(t + 1, scores, gold, threshold, ks))
    return EvalReport(tuple(levels))


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.4f}"


def _history_rows(epoch: int, split: str, report: EvalReport) -> List[Dict[str, Any]]:
    """One plain-Python row per level, logged at INFO."""
    rows = []
    for m in report.levels:
        row: Dict[str, Any] = {
            "epoch": epoch,
            "split": split,
            "level": m.level,
            "macro_auc": m.macro_auc,
            "micro_auc": m.micro_auc,
            "macro_f1": m.macro_f1,
            "micro_f1": m.micro_f1,
        }
        row.update({f"p@{k}": v for k, v in sorted(m.precision_at.items())})
        logger.info(
            "epoch=%d split=%s level=%d macro_auc=%s micro_auc=%s macro_f1=%.4f micro_f1=%.4f %s",
            epoch,
            split,
            m.level,
            _fmt(m.macro_auc),
            _fmt(m.micro_auc),
            m.macro_f1,
            m.micro_f1,
            " ".join(f"p@{k}={v:.4f}" for k, v in sorted(m.precision_at.items())),
        )
        rows.append(row)
    return rows


def fit(
    data: PreparedData,
    model_config: ModelConfig,
    train_config: TrainConfig,
    out_dir: Optional[Path] = None,
    pretrained: Optional[np.ndarray] = None,
) -> FitResult:
    """Train until validation Micro-F1 stops improving or max_epochs is reached.

    Early stopping watches the final level only. The returned model holds the
    parameters of the best epoch.

    Args:
        data: Output of ``prepare_data``
        model_config: Architecture and ablations
        train_config: Optimisation settings
        out_dir: When given, receives model.ckpt, history.tsv and vocab.tsv
        pretrained: Optional initial word vectors

    Raises:
        ConfigurationError: If a split is empty
        NonFiniteLossError: If training diverges
    """
    if not data.train or not data.valid:
        raise ConfigurationError("Training and validation splits must both be nonempty")
    init_seq, shuffle_seq, dropout_seq = np.random.SeedSequence(train_config.seed).spawn(3)
    init_rng = np.random.default_rng(init_seq)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)

    model = IHCEModel.create(
        model_config,
        data.hierarchy,
        len(data.vocab),
        data.vocab.index,
        [g.propagation for g in data.cographs],
        init_rng,
        pretrained,
    )
    optimizer = AdamW(
        model.parameters(),
        learning_rate=train_config.learning_rate,
        weight_decay=train_config.weight_decay,
        betas=train_config.betas,
        eps=train_config.eps,
    )

    best_f1 = -1.0
    best_epoch = 0
    best_state = model.snapshot()
    best_report: Optional[EvalReport] = None
    stale = 0
    history: List[Dict[str, Any]] = []
    epoch = 0
    for epoch in range(1, train_config.max_epochs + 1):
        order = shuffle_rng.permutation(len(data.train))
        losses = []
        for start in range(0, len(order), train_config.batch_size):
            chunk = [data.train[i] for i in order[start : start + train_config.batch_size]]
            losses.append(step(model, make_batch(chunk, data.hierarchy), optimizer, dropout_rng))
        report = evaluate_model(model, data.valid, train_config.threshold)
        rows = _history_rows(epoch, "valid", report)
        for row in rows:
            row["train_loss"] = float(np.mean(losses))
        history.extend(rows)
        logger.info("epoch=%d train_loss=%.6f", epoch, float(np.mean(losses)))

        if report.final.micro_f1 > best_f1:
            best_f1 = report.final.micro_f1
            best_epoch = epoch
            best_state = model.snapshot()
            best_report = report
            stale = 0
        else:
            stale += 1
            if stale >= train_config.patience:
                logger.info("Early stopping at epoch %d; best epoch %d", epoch, best_epoch)
                break

    model.load_state(best_state)
    checkpoint = from_model(
        model, data.vocab, train_config, best_epoch, best_f1, best_report, history
    )
    if out_dir is not None:
        save_checkpoint(checkpoint, out_dir / "model.ckpt")
        data.vocab.save(out_dir / "vocab.tsv")
        pd.DataFrame(history).to_csv(out_dir / "history.tsv", sep="\t", index=False, na_rep="-")
    return FitResult(model, checkpoint, history, epoch)


def predict(model: IHCEModel, records: Sequence[Record]) -> Tuple[np.ndarray, ...]:
    """Eval-mode probabilities, one [records x |L^t|] matrix per level."""
    return model.predict_proba(records)


def prediction_frame(
    ids: Sequence[str],
    hierarchy: Hierarchy,
    probs: Sequence[np.ndarray],
    min_probability: float = 0.0,
) -> pd.DataFrame:
    """Long table ``id, level, code, probability`` of every prediction at or above a floor."""
    rows = []
    for t, (matrix, codes) in enumerate(zip(probs, hierarchy.levels), start=1):
        for i, record_id in enumerate(ids):
            for j, code in enumerate(codes):
                if matrix[i, j] >= min_probability:
                    rows.append((record_id, t, code.code, float(matrix[i, j])))
    return pd.DataFrame(rows, columns=["id", "level", "code", "probability"])


def top_k_frame(
    ids: Sequence[str], codes: Sequence[CodeId], scores: np.ndarray, k: int = 15
) -> pd.DataFrame:
    """Ranked final-level codes: ``id, rank, code, probability``."""
    k = min(k, len(codes))
    ranked = top_k(scores, k)
    rows = []
    for i, record_id in enumerate(ids):
        for rank, j in enumerate(ranked[i], start=1):
            rows.append((record_id, rank, codes[j].code, float(scores[i, j])))
    return pd.DataFrame(rows, columns=["id", "rank", "code", "probability"])


def write_predictions(frame: pd.DataFrame, path: Path) -> None:
    """Headerless TSV in column order."""
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, sep="\t", header=False, index=False, float_format="%.17g")


def sweep(
    train_docs: Sequence[RawDocument],
    valid_docs: Sequence[RawDocument],
    model_config: ModelConfig,
    train_config: TrainConfig,
    levels: Sequence[int] = (3,),
    variants: Sequence[str] = ("full",),
    seeds: Sequence[int] = (0,),
    descriptors: Optional[Mapping[CodeId, Sequence[str]]] = None,
    block_table: Optional[BlockTable] = None,
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Train every (levels, variant, seed) combination.

    Returns:
        (one row per run, mean per levels/variant with the gap to ``full``)

    Raises:
        ConfigurationError: If a variant name is unknown
    """
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise ConfigurationError(f"Unknown variants {unknown}; choose from {list(VARIANTS)}")
    runs = []
    for n_levels in levels:
        for variant in variants:
            config = replace(model_config, levels=n_levels, **VARIANTS[variant])
            data = prepare_data(train_docs, valid_docs, config, (), descriptors, block_table)
            for seed in seeds:
                logger.info("Sweep run: levels=%d variant=%s seed=%d", n_levels, variant, seed)
                result = fit(data, config, replace(train_config, seed=seed))
                report = result.checkpoint.report
                assert report is not None
                final = report.final
                runs.append(
                    {
                        "levels": n_levels,
                        "variant": variant,
                        "seed": seed,
                        "epochs": result.epochs_run,
                        "best_epoch": result.checkpoint.epoch,
                        "macro_auc": final.macro_auc,
                        "micro_auc": final.micro_auc,
                        "macro_f1": final.macro_f1,
                        "micro_f1": final.micro_f1,
                        **{f"p@{k}": v for k, v in sorted(final.precision_at.items())},
                    }
                )
    table = pd.DataFrame(runs)
    return table, summarize_sweep(table)


def summarize_sweep(table: pd.DataFrame) -> pd.DataFrame:
    """Mean final-level metrics per (levels, variant) and the gap to the full model."""
    metrics = [c for c in ("macro_f1", "micro_f1", "macro_auc", "micro_auc") if c in table]
    numeric = table[["levels", "variant"]].join(table[metrics].astype(float))
    summary = numeric.groupby(["levels", "variant"], sort=False)[metrics].mean().reset_index()
    full = summary[summary["variant"] == "full"].set_index("levels")
    for metric in ("macro_f1", "micro_f1"):
        if metric in summary and not full.empty:
            baseline = summary["levels"].map(full[metric])
            summary[f"{metric}_gap"] = summary[metric] - baseline
    return summary


def attention_maps(model: IHCEModel, record: Record) -> List[LevelOutput]:
    """Eval-mode level outputs for one record, attention weights included."""
    batch = make_batch([record], model.hierarchy)
    return model.forward(batch, np.random.default_rng(0), training=False)[0]


def attention_frame(
    model: IHCEModel, record: Record, vocab: Vocabulary, top: int = 1
) -> pd.DataFrame:
    """Token weights of each level's ``top`` highest-scoring codes.

    Columns: id, level, code, path (code or ontology), position, token, weight.
    """
    rows = []
    tokens = vocab.decode(record.tokens)
    outputs = attention_maps(model, record)
    for t, (output, codes) in enumerate(zip(outputs, model.hierarchy.levels)):
        probs = output.probabilities()
        for j in np.argsort(-probs, kind="stable")[: min(top, len(codes))]:
            paths = [("code", output.code_attention[j])]
            if output.ontology_attention is not None:
                paths.append(("ontology", output.ontology_attention[j]))
            for path_name, weights in paths:
                for position, (token, weight) in enumerate(zip(tokens, weights)):
                    rows.append(
                        (record.id, t + 1, codes[j].code, path_name, position, token, float(weight))
                    )
    columns = ["id", "level", "code", "path", "position", "token", "weight"]
    return pd.DataFrame(rows, columns=columns)
