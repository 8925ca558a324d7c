"""Command-line entry point: ``ihce <subcommand> [options]``.

Every option can also come from a flat ``key=value`` file passed with
``--config``; options given on the command line win.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.algorithms.cograph import build_cographs, cograph_frame, export_cographs
from src.algorithms.hierarchy import (
    BlockTable,
    Hierarchy,
    build_hierarchy,
    level_statistics,
    load_block_table,
    save_hierarchy,
)
from src.algorithms.metrics import format_report, write_report
from src.algorithms.model import IHCEModel
from src.services import corpus as corpus_io
from src.services.checkpoint import Checkpoint, load_checkpoint, to_model
from src.services.diagnostics import TOLERANCE, run_gradcheck
from src.services.synth import SynthConfig, synth_corpus, write_synth
from src.services.trainer import (
    VARIANTS,
    attention_frame,
    evaluate_model,
    fit,
    predict,
    prediction_frame,
    prepare_data,
    sweep,
    top_k_frame,
    write_predictions,
)
from src.utils.config import (
    configure_logging,
    get_block_table_path,
    get_default_seed,
    load_config_file,
    parse_bool,
)
from src.utils.types import (
    CodeId,
    EncoderConfig,
    GcnConfig,
    HpmConfig,
    ModelConfig,
    RawDocument,
    Record,
    TrainConfig,
)
from src.utils.validators import ConfigurationError, IHCEError

logger = logging.getLogger(__name__)

Handler = Callable[[argparse.Namespace], int]

_COGRAPH_SYM_HELP = (
    "avg or max combine row-normalised weights with their transpose; "
    "none uses raw pair counts as the GCN adjacency"
)


def _ints(raw: str) -> Tuple[int, ...]:
    try:
        return tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {raw!r}") from e


def _floats(raw: str) -> Tuple[float, ...]:
    try:
        return tuple(float(part) for part in raw.split(",") if part.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {raw!r}") from e


def _names(raw: str) -> Tuple[str, ...]:
    return tuple(part.strip() for part in raw.split(",") if part.strip())


def _add_data_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("data")
    group.add_argument("--corpus", type=Path, required=True, help="corpus.jsonl")
    group.add_argument("--valid-corpus", type=Path, help="Validation corpus (default: split)")
    group.add_argument("--test-corpus", type=Path, help="Test corpus (default: split)")
    group.add_argument("--split", type=_floats, default=(0.8, 0.1, 0.1), help="train,valid,test")
    group.add_argument("--descriptors", type=Path, help="Code descriptor TSV")
    group.add_argument("--blocks", type=Path, help="Block table TSV for a fourth level")
    group.add_argument("--top-codes", type=int, help="Keep only the N most frequent codes")
    group.add_argument("--min-count", type=int, default=1)
    group.add_argument("--max-len", type=int, default=corpus_io.MAX_LEN)
    group.add_argument("--embeddings", type=Path, help="Pretrained word vectors (text)")


def _add_model_options(parser: argparse.ArgumentParser) -> None:
    defaults = ModelConfig()
    group = parser.add_argument_group("model")
    group.add_argument("--levels", type=int, default=defaults.levels)
    group.add_argument("--no-orl", action="store_true", help="Bypass the ontology GCN")
    group.add_argument("--no-hpl", action="store_true", help="Model the finest level only")
    group.add_argument("--no-dpu", action="store_true", help="Zero every dependency vector")
    group.add_argument(
        "--cograph-sym", choices=("avg", "max", "none"), default="avg", help=_COGRAPH_SYM_HELP
    )
    group.add_argument("--loss-reduction", choices=("mean", "sum"), default="mean")
    group.add_argument("--embedding-dim", type=int, default=defaults.encoder.embedding_dim)
    group.add_argument("--kernel-widths", type=_ints, default=defaults.encoder.kernel_widths)
    group.add_argument("--conv-dim", type=int)
    group.add_argument("--residual-dim", type=int, default=defaults.encoder.residual_dim)
    group.add_argument("--dropout", type=float, default=defaults.encoder.dropout)
    group.add_argument("--gcn-layers", type=int, default=defaults.gcn.num_layers)
    group.add_argument("--gcn-dim", type=int, default=defaults.gcn.hidden_dim)
    group.add_argument("--attention-dim", type=int, default=defaults.hpm.attention_dim)
    group.add_argument("--dependency-dim", type=int, default=defaults.hpm.dependency_dim)


def _add_train_options(parser: argparse.ArgumentParser) -> None:
    defaults = TrainConfig()
    group = parser.add_argument_group("training")
    group.add_argument("--learning-rate", type=float, default=defaults.learning_rate)
    group.add_argument("--weight-decay", type=float, default=defaults.weight_decay)
    group.add_argument("--batch-size", type=int, default=defaults.batch_size)
    group.add_argument("--patience", type=int, default=defaults.patience)
    group.add_argument("--max-epochs", type=int, default=defaults.max_epochs)
    group.add_argument("--seed", type=int, default=get_default_seed())
    group.add_argument("--threshold", type=float, default=defaults.threshold)


def _model_config(args: argparse.Namespace) -> ModelConfig:
    return ModelConfig(
        encoder=EncoderConfig(
            embedding_dim=args.embedding_dim,
            kernel_widths=tuple(args.kernel_widths),
            conv_dim=args.conv_dim,
            residual_dim=args.residual_dim,
            dropout=args.dropout,
        ),
        gcn=GcnConfig(num_layers=args.gcn_layers, hidden_dim=args.gcn_dim),
        hpm=HpmConfig(attention_dim=args.attention_dim, dependency_dim=args.dependency_dim),
        levels=args.levels,
        no_orl=args.no_orl,
        no_hpl=args.no_hpl,
        no_dpu=args.no_dpu,
        cograph_sym=args.cograph_sym,
        loss_reduction=args.loss_reduction,
    )


def _train_config(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.learning_rate,
        weight_decay=args.weight_decay,
        batch_size=args.batch_size,
        patience=args.patience,
        max_epochs=args.max_epochs,
        seed=args.seed,
        threshold=args.threshold,
    )


def _block_table(args: argparse.Namespace, levels: int) -> Optional[BlockTable]:
    if levels < 4:
        return None
    return load_block_table(args.blocks or get_block_table_path())


def _descriptors(args: argparse.Namespace) -> Optional[Dict[CodeId, Tuple[str, ...]]]:
    return corpus_io.load_descriptors(args.descriptors) if args.descriptors else None


def _load_docs(args: argparse.Namespace) -> List[RawDocument]:
    docs = corpus_io.load_corpus(args.corpus)
    if args.top_codes:
        docs = corpus_io.restrict_to_top_codes(docs, args.top_codes)
    return docs


def _splits(
    args: argparse.Namespace,
) -> Tuple[List[RawDocument], List[RawDocument], List[RawDocument]]:
    docs = _load_docs(args)
    if args.valid_corpus is None:
        train, valid, test = corpus_io.split_corpus(docs, args.split, args.seed)
        return train, valid, test
    valid = corpus_io.load_corpus(args.valid_corpus)
    test = corpus_io.load_corpus(args.test_corpus) if args.test_corpus else []
    return docs, valid, test


def cmd_synth(args: argparse.Namespace) -> int:
    config = SynthConfig(
        level_sizes=tuple(args.level_sizes),
        num_docs=args.num_docs,
        vocab_size=args.vocab_size,
        signal_strength=args.signal_strength,
        noise_tokens=args.noise_tokens,
        triggers_per_code=args.triggers_per_code,
        draws_per_doc=args.draws_per_doc,
        power=args.power,
        seed=args.seed,
    )
    paths = write_synth(synth_corpus(config), args.out)
    for name, path in paths.items():
        print(f"{name}\t{path}")
    return 0


def _corpus_hierarchy(args: argparse.Namespace) -> Tuple[List[RawDocument], Hierarchy]:
    docs = _load_docs(args)
    finest = sorted({code for doc in docs for code in corpus_io.normalize_codes(doc)})
    hierarchy = build_hierarchy(
        finest, args.levels, _block_table(args, args.levels), _descriptors(args)
    )
    return docs, hierarchy


def cmd_build_hierarchy(args: argparse.Namespace) -> int:
    _, hierarchy = _corpus_hierarchy(args)
    if args.out:
        save_hierarchy(hierarchy, args.out)
    for t, size in enumerate(hierarchy.level_sizes(), start=1):
        print(f"level {t}\t{size} codes")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    docs, hierarchy = _corpus_hierarchy(args)
    gold = [corpus_io.normalize_codes(doc) for doc in docs]
    rows = [
        {"level": s.level, "codes": s.num_codes, "avg_codes_per_record": s.avg_codes_per_record}
        for s in level_statistics(hierarchy, gold)
    ]
    print(pd.DataFrame(rows).to_string(index=False, float_format=lambda v: f"{v:.2f}"))
    return 0


def cmd_build_cograph(args: argparse.Namespace) -> int:
    docs, hierarchy = _corpus_hierarchy(args)
    gold = [corpus_io.normalize_codes(doc) for doc in docs]
    graphs = build_cographs(gold, hierarchy, args.cograph_sym)
    if args.out:
        export_cographs(graphs, args.out)
    else:
        print(cograph_frame(graphs).to_csv(sep="\t", index=False), end="")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    model_config = _model_config(args)
    train_config = _train_config(args)
    train_docs, valid_docs, test_docs = _splits(args)
    data = prepare_data(
        train_docs,
        valid_docs,
        model_config,
        test_docs,
        _descriptors(args),
        _block_table(args, model_config.levels),
        args.min_count,
        args.max_len,
    )
    pretrained = None
    if args.embeddings:
        pretrained = corpus_io.load_embeddings(
            args.embeddings,
            data.vocab,
            model_config.encoder.embedding_dim,
            np.random.default_rng(train_config.seed),
        )
    result = fit(data, model_config, train_config, args.out, pretrained)

    args.out.mkdir(parents=True, exist_ok=True)
    if args.valid_corpus is None:
        corpus_io.save_corpus(valid_docs, args.out / "valid.jsonl")
        if test_docs:
            corpus_io.save_corpus(test_docs, args.out / "test.jsonl")
    assert result.checkpoint.report is not None
    write_report(result.checkpoint.report, args.out / "valid_report.tsv")
    print(f"best epoch {result.checkpoint.epoch} (validation)")
    print(format_report(result.checkpoint.report))
    if data.test:
        test_report = evaluate_model(result.model, data.test, train_config.threshold)
        write_report(test_report, args.out / "test_report.tsv")
        print("test")
        print(format_report(test_report))
    return 0


def _checkpoint_records(
    args: argparse.Namespace,
) -> Tuple[Checkpoint, IHCEModel, List[Record]]:
    checkpoint = load_checkpoint(args.checkpoint)
    model = to_model(checkpoint)
    docs = _load_docs(args)
    records = corpus_io.encode_corpus(
        docs, checkpoint.vocab, args.max_len, frozenset(model.hierarchy.finest)
    )
    if not records:
        raise ConfigurationError(f"No usable records in {args.corpus}")
    return checkpoint, model, records


def cmd_evaluate(args: argparse.Namespace) -> int:
    checkpoint, model, records = _checkpoint_records(args)
    threshold = args.threshold if args.threshold is not None else checkpoint.train_config.threshold
    report = evaluate_model(model, records, threshold)
    if args.out:
        write_report(report, args.out)
    print(format_report(report))
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    checkpoint, model, records = _checkpoint_records(args)
    ids = [r.id for r in records]
    probs = predict(model, records)
    write_predictions(prediction_frame(ids, model.hierarchy, probs, args.min_probability), args.out)
    if args.top_k:
        frame = top_k_frame(ids, model.hierarchy.finest, probs[-1], args.top_k)
        write_predictions(frame, args.out.with_name(args.out.stem + ".topk.tsv"))
    if args.attention:
        frames = [attention_frame(model, r, checkpoint.vocab) for r in records]
        write_predictions(pd.concat(frames), args.out.with_name(args.out.stem + ".attention.tsv"))
    print(f"Wrote predictions for {len(records)} records to {args.out}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    if not args.toy:
        raise ConfigurationError("Only the built-in toy configuration is supported; pass --toy")
    result = run_gradcheck(args.seed, args.eps)
    print(f"max relative error {result.max_error:.3e} ({result.seconds:.1f}s)")
    return 0 if result.max_error < TOLERANCE else 1


def cmd_sweep(args: argparse.Namespace) -> int:
    model_config = _model_config(args)
    train_docs, valid_docs, _ = _splits(args)
    runs, summary = sweep(
        train_docs,
        valid_docs,
        model_config,
        _train_config(args),
        args.sweep_levels,
        args.variants,
        args.seeds,
        _descriptors(args),
        _block_table(args, max(args.sweep_levels)),
    )
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        runs.to_csv(args.out, sep="\t", index=False, na_rep="-")
        summary.to_csv(args.out.with_name(args.out.stem + ".summary.tsv"), sep="\t", index=False)
    print(summary.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ihce", description="Hierarchical ICD code assignment from clinical notes"
    )
    parser.add_argument("--config", type=Path, help="key=value file with option defaults")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING... (default: IHCE_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="Generate a synthetic corpus")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--level-sizes", type=_ints, default=SynthConfig.level_sizes)
    p.add_argument("--num-docs", type=int, default=SynthConfig.num_docs)
    p.add_argument("--vocab-size", type=int, default=SynthConfig.vocab_size)
    p.add_argument("--signal-strength", type=float, default=SynthConfig.signal_strength)
    p.add_argument("--noise-tokens", type=int, default=SynthConfig.noise_tokens)
    p.add_argument("--triggers-per-code", type=int, default=SynthConfig.triggers_per_code)
    p.add_argument("--draws-per-doc", type=int, default=SynthConfig.draws_per_doc)
    p.add_argument("--power", type=float, default=SynthConfig.power)
    p.add_argument("--seed", type=int, default=get_default_seed())
    p.set_defaults(handler=cmd_synth)

    for name, handler, text in (
        ("build-hierarchy", cmd_build_hierarchy, "Derive the code hierarchy of a corpus"),
        ("stats", cmd_stats, "Per-level code counts and label density"),
        ("build-cograph", cmd_build_cograph, "Export per-level co-occurrence weights"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--corpus", type=Path, required=True)
        p.add_argument("--levels", type=int, default=ModelConfig.levels)
        p.add_argument("--blocks", type=Path)
        p.add_argument("--descriptors", type=Path)
        p.add_argument("--top-codes", type=int)
        p.add_argument("--out", type=Path)
        if name == "build-cograph":
            p.add_argument(
                "--cograph-sym",
                choices=("avg", "max", "none"),
                default="avg",
                help=_COGRAPH_SYM_HELP,
            )
        p.set_defaults(handler=handler)

    p = sub.add_parser("train", help="Train a model")
    _add_data_options(p)
    _add_model_options(p)
    _add_train_options(p)
    p.add_argument("--out", type=Path, required=True, help="Output directory")
    p.set_defaults(handler=cmd_train)

    for name, handler, text in (
        ("evaluate", cmd_evaluate, "Evaluate a checkpoint on a corpus"),
        ("predict", cmd_predict, "Write per-level code probabilities"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--checkpoint", type=Path, required=True)
        p.add_argument("--corpus", type=Path, required=True)
        p.add_argument("--top-codes", type=int)
        p.add_argument("--max-len", type=int, default=corpus_io.MAX_LEN)
        p.add_argument("--out", type=Path, required=name == "predict")
        if name == "evaluate":
            p.add_argument("--threshold", type=float)
        else:
            p.add_argument("--min-probability", type=float, default=0.0)
            p.add_argument("--top-k", type=int, default=0, help="Also write ranked codes")
            p.add_argument("--attention", action="store_true", help="Also write attention maps")
        p.set_defaults(handler=handler)

    p = sub.add_parser("gradcheck", help="Check gradients against finite differences")
    p.add_argument("--toy", action="store_true", help="Use the built-in toy model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-6)
    p.set_defaults(handler=cmd_gradcheck)

    p = sub.add_parser("sweep", help="Compare level counts and ablation variants")
    _add_data_options(p)
    _add_model_options(p)
    _add_train_options(p)
    p.add_argument("--sweep-levels", type=_ints, default=(1, 2, 3))
    p.add_argument("--variants", type=_names, default=("full",), help=",".join(VARIANTS))
    p.add_argument("--seeds", type=_ints, default=(0,))
    p.add_argument("--out", type=Path, help="Per-run TSV; a .summary.tsv is written beside it")
    p.set_defaults(handler=cmd_sweep)
    return parser


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._actions:  # pylint: disable=protected-access
        if isinstance(action, argparse._SubParsersAction):  # pylint: disable=protected-access
            if command in action.choices:
                return action.choices[command]  # type: ignore[no-any-return]
    raise ConfigurationError(f"Unknown command {command!r}")


def apply_config_file(parser: argparse.ArgumentParser, command: str, path: Path) -> None:
    """Install config-file values as the defaults of a subcommand's options.

    Raises:
        ConfigurationError: If a key names no option of the subcommand
    """
    sub = _subparser(parser, command)
    actions = {a.dest: a for a in sub._actions}  # pylint: disable=protected-access
    defaults: Dict[str, object] = {}
    for key, raw in load_config_file(path).items():
        action = actions.get(key)
        if action is None or key in ("help", "handler"):
            raise ConfigurationError(f"{path}: unknown option {key!r} for '{command}'")
        if isinstance(action, argparse._StoreTrueAction):  # pylint: disable=protected-access
            defaults[key] = parse_bool(key, raw)
        else:
            # argparse converts string defaults with the option's type
            defaults[key] = raw
        if action.required:
            action.required = False
    sub.set_defaults(**defaults)


def _preparse(arguments: Sequence[str]) -> Tuple[Optional[Path], Optional[str], Optional[str]]:
    """Config path, log level and subcommand, read before the full parse."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    pre.add_argument("--log-level")
    known, rest = pre.parse_known_args(arguments)
    command = next((a for a in rest if not a.startswith("-")), None)
    return known.config, known.log_level, command


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; returns the process exit status.

    Usage errors exit with 2 and library errors with 1.
    """
    parser = build_parser()
    arguments = list(sys.argv[1:] if argv is None else argv)
    try:
        config, log_level, command = _preparse(arguments)
        configure_logging(log_level)
        if config is not None and command is not None:
            apply_config_file(parser, command, config)
        args = parser.parse_args(arguments)
        handler: Handler = args.handler
        return handler(args)
    except SystemExit as e:
        if e.code is None:
            return 0
        return e.code if isinstance(e.code, int) else 2
    except IHCEError as e:
        logger.debug("Command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
