"""Synthetic ICD-style corpora with known structure.

Every finest code owns a disjoint set of trigger words ("trig0007"); a document
contains the triggers of its gold codes plus uniform noise words ("word0042").
Gold sets follow a power law over code rank, so most codes are rare. Optional
planted pairs fix the co-occurrence weight of an anchor code exactly.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from src.algorithms.hierarchy import MAX_LEVELS, MIN_LEVELS, render_code
from src.utils.types import CodeId, CodeKind, RawDocument
from src.utils.validators import ConfigurationError

from .corpus import save_corpus

logger = logging.getLogger(__name__)

FIRST_CATEGORY = 401
MAX_CHILDREN = 10


@dataclass(frozen=True)
class PlantedPair:
    """Anchor code that appears in ``total`` documents, ``joint`` of them with ``partner``.

    Indices refer to positions in the sorted finest-code list.
    """

    anchor: int
    partner: int
    joint: int
    total: int

    def __post_init__(self) -> None:
        """Validate pair counts."""
        if self.anchor == self.partner:
            raise ConfigurationError("A planted pair needs two different codes")
        if not 0 < self.joint <= self.total:
            raise ConfigurationError(
                f"Planted pair needs 0 < joint <= total, got {self.joint}/{self.total}"
            )


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    Attributes:
        level_sizes: Number of codes per level, coarse to fine (2 to 4 levels)
        num_docs: Documents to generate, planted ones included
        vocab_size: Distinct words (trigger plus noise)
        signal_strength: Probability that each trigger of a gold code is written
        noise_tokens: Noise words per document
        triggers_per_code: Trigger words owned by each finest code
        draws_per_doc: Power-law draws (with replacement) forming a gold set
        power: Power-law exponent over code rank
        planted_pairs: Exact co-occurrence plants
        seed: Random seed
    """

    level_sizes: Tuple[int, ...] = (4, 12, 24)
    num_docs: int = 96
    vocab_size: int = 200
    signal_strength: float = 1.0
    noise_tokens: int = 20
    triggers_per_code: int = 3
    draws_per_doc: int = 3
    power: float = 1.0
    planted_pairs: Tuple[PlantedPair, ...] = field(default_factory=tuple)
    seed: int = 0

    def __post_init__(self) -> None:
        """Validate generator settings."""
        sizes = self.level_sizes
        if not MIN_LEVELS <= len(sizes) <= MAX_LEVELS:
            raise ConfigurationError(f"Need {MIN_LEVELS} to {MAX_LEVELS} levels, got {len(sizes)}")
        for coarse, fine in zip(sizes, sizes[1:]):
            if coarse < 1 or not coarse <= fine <= coarse * MAX_CHILDREN:
                raise ConfigurationError(f"Cannot split {coarse} codes into {fine} children")
        if all(coarse == fine for coarse, fine in zip(sizes, sizes[1:])):
            raise ConfigurationError("The hierarchy needs at least one code with two children")
        if not 0.0 < self.signal_strength <= 1.0:
            raise ConfigurationError(
                f"signal_strength must be in (0, 1], got {self.signal_strength}"
            )
        if self.noise_tokens < 0 or self.triggers_per_code < 1 or self.draws_per_doc < 1:
            raise ConfigurationError(
                "noise_tokens >= 0, triggers_per_code >= 1 and draws_per_doc >= 1"
            )
        if self.vocab_size <= sizes[-1] * self.triggers_per_code:
            raise ConfigurationError(
                f"vocab_size {self.vocab_size} leaves no noise words after "
                f"{sizes[-1] * self.triggers_per_code} disjoint triggers"
            )
        planted = sum(p.total for p in self.planted_pairs)
        if planted > self.num_docs:
            raise ConfigurationError(f"{planted} planted documents exceed num_docs={self.num_docs}")
        for pair in self.planted_pairs:
            if not (0 <= pair.anchor < sizes[-1] and 0 <= pair.partner < sizes[-1]):
                raise ConfigurationError(
                    f"Planted pair {pair} refers to a code outside 0..{sizes[-1] - 1}"
                )


@dataclass(frozen=True)
class SynthCorpus:
    """Generated documents with their hierarchy inputs."""

    docs: Tuple[RawDocument, ...]
    finest: Tuple[CodeId, ...]
    triggers: Dict[CodeId, Tuple[str, ...]]
    descriptors: Dict[CodeId, Tuple[str, ...]]
    blocks: Tuple[Tuple[str, str, str], ...]


def _split_counts(parents: int, children: int) -> List[int]:
    base, extra = divmod(children, parents)
    return [base + (1 if j < extra else 0) for j in range(parents)]


Tree = Tuple[List[List[str]], Dict[str, List[str]], List[Tuple[str, str, str]]]


def _build_tree(sizes: Sequence[int]) -> Tree:
    """Compact code strings per level, child lists, and block ranges.

    Level kinds are the last T of (block, category, subcategory, full code).
    """
    kinds = ["block", "category", "sub", "full"][MAX_LEVELS - len(sizes) :]
    children: Dict[str, List[str]] = {}
    blocks: List[Tuple[str, str, str]] = []

    if kinds[0] == "category":
        top = [str(FIRST_CATEGORY + j) for j in range(sizes[0])]
    elif kinds[0] == "sub":
        top = [f"{FIRST_CATEGORY + j // MAX_CHILDREN}{j % MAX_CHILDREN}" for j in range(sizes[0])]
    else:
        top = [f"block{j}" for j in range(sizes[0])]
    levels = [top]

    next_category = FIRST_CATEGORY
    for t in range(1, len(sizes)):
        current: List[str] = []
        for parent, count in zip(levels[-1], _split_counts(len(levels[-1]), sizes[t])):
            if kinds[t] == "category":
                kids = [str(next_category + k) for k in range(count)]
                next_category += count
                blocks.append((kids[0], kids[-1], f"synthetic block {parent[5:]}"))
            else:
                kids = [f"{parent}{k}" for k in range(count)]
            children[parent] = kids
            current.extend(kids)
        levels.append(current)

    if kinds[0] == "block":
        # name block nodes after their category range
        renamed = {f"block{j}": f"{lo}-{hi}" for j, (lo, hi, _) in enumerate(blocks)}
        levels[0] = [renamed[b] for b in levels[0]]
        children = {renamed.get(k, k): v for k, v in children.items()}
    return levels, children, blocks


def power_law_weights(num_codes: int, power: float) -> np.ndarray:
    """Draw probability of each code rank: rank^-power, normalised."""
    weights = np.arange(1, num_codes + 1, dtype=np.float64) ** -power
    return weights / weights.sum()


def expected_code_frequency(config: SynthConfig) -> np.ndarray:
    """Expected fraction of randomly drawn documents containing each finest code.

    Anchors of planted pairs are never drawn and get zero.
    """
    pool = _random_pool(config)
    probs = np.zeros(config.level_sizes[-1])
    probs[pool] = power_law_weights(len(pool), config.power)
    return 1.0 - (1.0 - probs) ** config.draws_per_doc


def _random_pool(config: SynthConfig) -> np.ndarray:
    anchors = {p.anchor for p in config.planted_pairs}
    return np.array([i for i in range(config.level_sizes[-1]) if i not in anchors], dtype=np.int64)


def synth_corpus(config: SynthConfig) -> SynthCorpus:
    """Generate a corpus; the same config always yields the same documents.

    Raises:
        ConfigurationError: Via SynthConfig validation
    """
    rng = np.random.default_rng(config.seed)
    levels, children, blocks = _build_tree(config.level_sizes)
    finest_compact = levels[-1]
    finest = [CodeId(render_code(c, CodeKind.DIAGNOSIS)) for c in finest_compact]

    triggers: Dict[CodeId, Tuple[str, ...]] = {}
    for i, code in enumerate(finest):
        start = i * config.triggers_per_code
        triggers[code] = tuple(f"trig{start + k:04d}" for k in range(config.triggers_per_code))
    noise_count = config.vocab_size - len(finest) * config.triggers_per_code
    noise_vocab = [f"word{k:04d}" for k in range(noise_count)]

    descriptors = _descriptors(levels, children, finest_compact, finest, triggers)

    pool = _random_pool(config)
    weights = power_law_weights(len(pool), config.power)
    gold_sets: List[List[int]] = []
    for pair in config.planted_pairs:
        others = [i for i in pool if i != pair.partner]
        for k in range(pair.total):
            mate = pair.partner if k < pair.joint else int(rng.choice(others))
            gold_sets.append([pair.anchor, mate])
    while len(gold_sets) < config.num_docs:
        draws = rng.choice(pool, size=config.draws_per_doc, replace=True, p=weights)
        gold_sets.append(sorted(set(int(d) for d in draws)))
    order = rng.permutation(len(gold_sets))

    docs = []
    for n, position in enumerate(order):
        gold = gold_sets[position]
        words: List[str] = []
        for index in gold:
            emitted = [w for w in triggers[finest[index]] if rng.random() < config.signal_strength]
            words.extend(emitted or [triggers[finest[index]][0]])
        words.extend(rng.choice(noise_vocab, size=config.noise_tokens).tolist())
        words = [words[k] for k in rng.permutation(len(words))]
        codes = tuple(finest_compact[i] for i in gold)
        docs.append(RawDocument(f"doc{n:05d}", " ".join(words), codes))

    logger.info(
        "Synthesised %d documents over %d levels %s (seed=%d)",
        len(docs),
        len(config.level_sizes),
        list(config.level_sizes),
        config.seed,
    )
    return SynthCorpus(tuple(docs), tuple(finest), triggers, descriptors, tuple(blocks))


def _descriptors(
    levels: List[List[str]],
    children: Dict[str, List[str]],
    finest_compact: List[str],
    finest: List[CodeId],
    triggers: Dict[CodeId, Tuple[str, ...]],
) -> Dict[CodeId, Tuple[str, ...]]:
    """Finest codes are described by their triggers, coarser codes by their children's."""
    by_compact: Dict[str, Tuple[str, ...]] = {
        c: triggers[f] for c, f in zip(finest_compact, finest)
    }
    descriptors: Dict[CodeId, Tuple[str, ...]] = {}
    for level in reversed(levels[:-1]):
        for code in level:
            words: List[str] = []
            for child in children[code]:
                words.append(by_compact[child][0])
            by_compact[code] = tuple(words)
    for level in levels:
        for code in level:
            key = CodeId(code) if "-" in code else CodeId(render_code(code, CodeKind.DIAGNOSIS))
            descriptors[key] = by_compact[code]
    return descriptors


def write_synth(corpus: SynthCorpus, out_dir: Path) -> Dict[str, Path]:
    """Write corpus.jsonl, descriptors.tsv and, for four levels, blocks.tsv."""
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"corpus": out_dir / "corpus.jsonl", "descriptors": out_dir / "descriptors.tsv"}
    save_corpus(corpus.docs, paths["corpus"])
    frame = pd.DataFrame(
        [(code.code, " ".join(words)) for code, words in sorted(corpus.descriptors.items())],
        columns=["code", "text"],
    )
    frame.to_csv(paths["descriptors"], sep="\t", header=False, index=False)
    if corpus.blocks:
        paths["blocks"] = out_dir / "blocks.tsv"
        blocks = pd.DataFrame(
            [(f"{lo}-{hi}", label) for lo, hi, label in corpus.blocks], columns=["span", "label"]
        )
        blocks.to_csv(paths["blocks"], sep="\t", header=False, index=False)
    logger.info("Wrote synthetic corpus to %s", out_dir)
    return paths
