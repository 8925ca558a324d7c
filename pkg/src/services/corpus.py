"""Corpus ingestion: tokenization, vocabulary, record encoding and splits."""

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.algorithms.hierarchy import normalize_code
from src.utils.types import CodeId, RawDocument, Record
from src.utils.validators import (
    ConfigurationError,
    ContractError,
    IngestionError,
    RejectedCodeError,
    validate_disjoint_ids,
    validate_finite,
)

logger = logging.getLogger(__name__)

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
NUM_TOKEN = "NUM"
PAD_INDEX = 0
UNK_INDEX = 1
MAX_LEN = 2500

_WORD = re.compile(r"[^\W_]+")


def tokenize(text: str) -> List[str]:
    """Lowercase alphanumeric runs; pure numbers become ``NUM``.

    Example:
        >>> tokenize("BP 120/80")
        ['bp', 'NUM', 'NUM']
    """
    return [NUM_TOKEN if word.isdigit() else word for word in _WORD.findall(text.lower())]


@dataclass(frozen=True)
class Vocabulary:
    """Token <-> index mapping; index 0 is padding and index 1 is unknown."""

    tokens: Tuple[str, ...]

    def __post_init__(self) -> None:
        """Validate reserved entries and uniqueness."""
        if self.tokens[:2] != (PAD_TOKEN, UNK_TOKEN):
            raise ValueError("Vocabulary must start with the padding and unknown tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("Vocabulary tokens must be unique")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: object) -> bool:
        return token in self._index  # type: ignore[attr-defined]

    def index(self, token: str) -> int:
        """Index of a token, or the unknown index."""
        return self._index.get(token, UNK_INDEX)  # type: ignore[attr-defined, no-any-return]

    def decode(self, indices: Iterable[int]) -> List[str]:
        return [self.tokens[i] for i in indices]

    def save(self, path: Path) -> None:
        """Write ``<index>\\t<token>`` lines."""
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame({"position": range(len(self.tokens)), "token": self.tokens})
        frame.to_csv(path, sep="\t", header=False, index=False, quoting=3)

    @classmethod
    def load(cls, path: Path) -> "Vocabulary":
        """Read a vocabulary written by ``save``.

        Raises:
            IngestionError: If the file is missing or indices are not 0..n-1
        """
        if not path.is_file():
            raise IngestionError(f"Vocabulary file not found: {path}")
        try:
            frame = pd.read_csv(
                path,
                sep="\t",
                header=None,
                names=["position", "token"],
                dtype=str,
                keep_default_na=False,
                quoting=3,
                skip_blank_lines=False,
            ).fillna("")
        except pd.errors.EmptyDataError as e:
            raise IngestionError(f"Vocabulary file {path} is empty") from e
        except pd.errors.ParserError as e:
            raise IngestionError(f"{path}: {e}") from e
        tokens: List[str] = []
        for number, row in enumerate(frame.itertuples(index=False), start=1):
            if not row.position and not row.token:
                continue
            if not row.token or not row.position.isdigit() or int(row.position) != len(tokens):
                raise IngestionError(f"{path}:{number}: expected '<index>\\t<token>' in order")
            tokens.append(row.token)
        try:
            return cls(tuple(tokens))
        except ValueError as e:
            raise IngestionError(f"{path}: {e}") from e


def build_vocab(docs: Sequence[RawDocument], min_count: int = 1) -> Vocabulary:
    """Index every token seen at least ``min_count`` times.

    Tokens are ordered by descending frequency, then alphabetically.

    Raises:
        ConfigurationError: If min_count < 1
        IngestionError: If the corpus is empty
    """
    if min_count < 1:
        raise ConfigurationError(f"min_count must be at least 1, got {min_count}")
    if len(docs) == 0:
        raise IngestionError("Cannot build a vocabulary from an empty corpus")
    counts: Counter = Counter()
    for doc in docs:
        counts.update(tokenize(doc.text))
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    kept = [t for t in kept if t not in (PAD_TOKEN, UNK_TOKEN)]
    logger.info(
        "Vocabulary: %d of %d distinct tokens kept (min_count=%d)",
        len(kept),
        len(counts),
        min_count,
    )
    return Vocabulary((PAD_TOKEN, UNK_TOKEN) + tuple(kept))


def normalize_codes(doc: RawDocument) -> FrozenSet[CodeId]:
    """Canonical codes of a document.

    Raises:
        IngestionError: If a code cannot be parsed
    """
    try:
        return frozenset(normalize_code(raw) for raw in doc.codes)
    except RejectedCodeError as e:
        raise IngestionError(f"Record {doc.id}: {e}") from e


def encode_record(
    doc: RawDocument,
    vocab: Vocabulary,
    max_len: int = MAX_LEN,
    known_codes: Optional[FrozenSet[CodeId]] = None,
) -> Record:
    """Tokenize, index and head-truncate one document.

    Args:
        doc: Raw document
        vocab: Vocabulary
        max_len: Maximum kept tokens (the first ``max_len`` are kept)
        known_codes: When given, gold codes outside this set are dropped

    Returns:
        Record, flagged when no token is in the vocabulary
    """
    if max_len < 1:
        raise ConfigurationError(f"max_len must be at least 1, got {max_len}")
    indices = [vocab.index(token) for token in tokenize(doc.text)[:max_len]]
    flagged = all(i == UNK_INDEX for i in indices)
    if not indices:
        indices = [UNK_INDEX]
    gold = normalize_codes(doc)
    if known_codes is not None:
        gold = frozenset(code for code in gold if code in known_codes)
    return Record(doc.id, tuple(indices), gold, flagged)


def encode_corpus(
    docs: Sequence[RawDocument],
    vocab: Vocabulary,
    max_len: int = MAX_LEN,
    known_codes: Optional[FrozenSet[CodeId]] = None,
) -> List[Record]:
    """Encode documents, skipping those without a single known token."""
    records = []
    skipped = []
    dropped_codes = 0
    for doc in docs:
        record = encode_record(doc, vocab, max_len, known_codes)
        if record.flagged:
            skipped.append(doc.id)
            continue
        if known_codes is not None:
            dropped_codes += len(normalize_codes(doc)) - len(record.gold)
        records.append(record)
    if skipped:
        logger.warning(
            "Skipped %d records without in-vocabulary tokens: %s", len(skipped), skipped[:5]
        )
    if dropped_codes:
        logger.warning("Dropped %d gold codes absent from the training hierarchy", dropped_codes)
    return records


def load_corpus(path: Path) -> List[RawDocument]:
    """Read corpus.jsonl: one ``{"id", "text", "codes"}`` object per line.

    Raises:
        IngestionError: If the file is missing, empty, or a line is malformed
    """
    if not path.is_file():
        raise IngestionError(f"Corpus file not found: {path}")
    docs: List[RawDocument] = []
    with path.open(encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                codes = tuple(str(c) for c in obj["codes"])
                doc = RawDocument(str(obj["id"]), str(obj["text"]), codes)
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise IngestionError(f"{path}:{number}: malformed record ({e})") from e
            docs.append(doc)
    if not docs:
        raise IngestionError(f"Corpus {path} is empty")
    if len({d.id for d in docs}) != len(docs):
        raise IngestionError(f"Corpus {path} contains duplicate record ids")
    logger.info("Loaded %d documents from %s", len(docs), path)
    return docs


def save_corpus(docs: Sequence[RawDocument], path: Path) -> None:
    """Write corpus.jsonl with sorted keys, one record per line."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for doc in docs:
            row = {"id": doc.id, "text": doc.text, "codes": list(doc.codes)}
            handle.write(json.dumps(row, sort_keys=True))
            handle.write("\n")


def load_descriptors(path: Path) -> Dict[CodeId, Tuple[str, ...]]:
    """Read ``<code>\\t<descriptor text>`` lines into tokenized descriptors.

    Raises:
        IngestionError: If the file is missing or a code is malformed
    """
    if not path.is_file():
        raise IngestionError(f"Descriptor file not found: {path}")
    frame = pd.read_csv(
        path,
        sep="\t",
        header=None,
        names=["code", "text"],
        dtype=str,
        keep_default_na=False,
        quoting=3,
    )
    descriptors: Dict[CodeId, Tuple[str, ...]] = {}
    for row in frame.itertuples(index=False):
        tokens = tuple(tokenize(row.text))
        if not tokens:
            continue
        code = row.code.strip().upper()
        try:
            if "-" in code:
                # block range: the family follows its lower bound
                kind = normalize_code(code.split("-")[0]).kind
                descriptors[CodeId(code, kind)] = tokens
            else:
                descriptors[normalize_code(code)] = tokens
        except RejectedCodeError as e:
            raise IngestionError(f"{path}: {e}") from e
    return descriptors


def load_embeddings(
    path: Path, vocab: Vocabulary, dim: int, rng: np.random.Generator
) -> np.ndarray:
    """Import text word vectors (first line ``<count> <dim>``).

    Tokens missing from the file are drawn from uniform(-0.25, 0.25); row 0
    stays zero.

    Raises:
        IngestionError: If the file is missing or malformed
        ConfigurationError: If the file's dimension differs from ``dim``
    """
    if not path.is_file():
        raise IngestionError(f"Embedding file not found: {path}")
    matrix = rng.uniform(-0.25, 0.25, size=(len(vocab), dim))
    matrix[PAD_INDEX] = 0.0
    found = 0
    with path.open(encoding="utf-8") as handle:
        header = handle.readline().split()
        if len(header) != 2 or not all(h.isdigit() for h in header):
            raise IngestionError(f"{path}: first line must be '<count> <dim>'")
        if int(header[1]) != dim:
            raise ConfigurationError(f"{path} has {header[1]}-dimensional vectors, expected {dim}")
        for number, line in enumerate(handle, start=2):
            parts = line.rstrip().split(" ")
            if len(parts) != dim + 1:
                raise IngestionError(f"{path}:{number}: expected a token and {dim} values")
            token = parts[0]
            if token in vocab and vocab.index(token) != PAD_INDEX:
                try:
                    vector = np.array(parts[1:], dtype=np.float64)
                    validate_finite(f"vector of {token!r}", vector)
                except (ValueError, ContractError) as e:
                    raise IngestionError(f"{path}:{number}: {e}") from e
                matrix[vocab.index(token)] = vector
                found += 1
    logger.info("Loaded %d of %d vocabulary vectors from %s", found, len(vocab) - 2, path)
    return matrix


def code_frequencies(docs: Sequence[RawDocument]) -> Counter:
    """Number of documents per canonical code."""
    counts: Counter = Counter()
    for doc in docs:
        counts.update(normalize_codes(doc))
    return counts


def restrict_to_top_codes(docs: Sequence[RawDocument], n: int) -> List[RawDocument]:
    """Keep the n most frequent codes (ties by code string); drop documents left without codes.

    Raw code strings are replaced by their canonical forms.
    """
    if n < 1:
        raise ConfigurationError(f"top-codes must be at least 1, got {n}")
    counts = code_frequencies(docs)
    ranked = sorted(counts, key=lambda code: (-counts[code], code.code))
    keep = set(ranked[:n])
    restricted = []
    for doc in docs:
        codes = sorted(c for c in normalize_codes(doc) if c in keep)
        if codes:
            restricted.append(RawDocument(doc.id, doc.text, tuple(c.code for c in codes)))
    logger.info("Top-%d codes: kept %d of %d documents", n, len(restricted), len(docs))
    return restricted


def split_corpus(
    docs: Sequence[RawDocument],
    fractions: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> Tuple[List[RawDocument], ...]:
    """Shuffle deterministically and cut into consecutive parts.

    Raises:
        ConfigurationError: If fractions are negative or do not sum to 1
    """
    weights = np.asarray(fractions, dtype=np.float64)
    if np.any(weights < 0) or not np.isclose(weights.sum(), 1.0):
        raise ConfigurationError(
            f"Split fractions must be nonnegative and sum to 1, got {list(fractions)}"
        )
    order = np.random.default_rng(seed).permutation(len(docs))
    bounds = np.round(np.cumsum(weights)[:-1] * len(docs)).astype(int)
    return tuple([docs[i] for i in part] for part in np.split(order, bounds))


def gold_sets(records: Sequence[Record]) -> List[FrozenSet[CodeId]]:
    return [record.gold for record in records]


def observed_codes(records: Iterable[Record]) -> FrozenSet[CodeId]:
    """Union of the gold codes of the given records."""
    codes: set = set()
    for record in records:
        codes.update(record.gold)
    return frozenset(codes)


def check_disjoint(first: Sequence[Record], second: Sequence[Record]) -> None:
    """Raise ConfigurationError when two splits share a record id."""
    validate_disjoint_ids((r.id for r in first), (r.id for r in second))

