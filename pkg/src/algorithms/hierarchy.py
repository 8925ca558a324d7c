"""ICD-9 code normalisation and the level-by-level inheritance structure.

Levels are numbered 1..T from coarse to fine. Level T holds the finest codes
observed in the data; each coarser level is derived by truncation:

    block range ("401-405", table-driven)  <- only when T = 4
    3-character category ("405")
    one-decimal subcategory ("405.0")
    full code ("405.01")

A code without decimal digits (e.g. "486") stands for itself at every finer
level, so L^T is exactly the observed label set.
"""

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import (
    Any,
    Callable,
    Dict,
    FrozenSet,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
)

import pandas as pd

from src.utils.types import CodeId, CodeKind, LevelStatistics
from src.utils.validators import ConfigurationError, IngestionError, RejectedCodeError

# Characters before the decimal point, per family
_DOT_POSITION = {
    CodeKind.DIAGNOSIS: 3,
    CodeKind.V_CODE: 3,
    CodeKind.E_CODE: 4,
    CodeKind.PROCEDURE: 2,
}

_COMPACT_PATTERN = {
    CodeKind.DIAGNOSIS: re.compile(r"^\d{3}\d{0,2}$"),
    CodeKind.V_CODE: re.compile(r"^V\d{2}\d{0,2}$"),
    CodeKind.E_CODE: re.compile(r"^E\d{3}\d?$"),
    CodeKind.PROCEDURE: re.compile(r"^\d{2}\d{0,2}$"),
}

MIN_LEVELS = 2
MAX_LEVELS = 4


def _infer_kind(head: str, dotted: bool) -> CodeKind:
    if head.startswith("E"):
        return CodeKind.E_CODE
    if head.startswith("V"):
        return CodeKind.V_CODE
    # a dot after two digits, or a bare two-digit string, can only be a procedure
    if len(head) == 2 and (dotted or head.isdigit()):
        return CodeKind.PROCEDURE
    return CodeKind.DIAGNOSIS


def normalize_code(raw: str, kind: Optional[CodeKind] = None) -> CodeId:
    """Convert a raw ICD-9 string into its canonical dotted form.

    Undotted MIMIC-style codes get a dot after 3 characters (diagnosis and
    V-codes), 4 characters (E-codes) or 2 characters (procedures). Dotted input
    is re-validated; the dot position identifies procedures.

    Args:
        raw: Code as exported, e.g. "40501", "405.01", "E8470"
        kind: Optional family hint; needed for undotted procedure codes

    Returns:
        Canonical CodeId

    Raises:
        RejectedCodeError: If the string is not a valid ICD-9 code of the family

    Example:
        >>> normalize_code("40501").code
        '405.01'
        >>> normalize_code("E8470").code
        'E847.0'
        >>> normalize_code("3893", CodeKind.PROCEDURE).code
        '38.93'
    """
    text = (raw or "").strip().upper()
    if not text:
        raise RejectedCodeError(raw, "empty code")
    if text.count(".") > 1:
        raise RejectedCodeError(raw, "more than one decimal point")

    if "." in text:
        head, tail = text.split(".")
        inferred = _infer_kind(head, dotted=True)
        if kind is not None and kind != inferred:
            raise RejectedCodeError(raw, f"dot position does not fit a {kind.value} code")
        if len(head) != _DOT_POSITION[inferred]:
            raise RejectedCodeError(raw, "decimal point in the wrong position")
        family = inferred
        compact = head + tail
    else:
        compact = text
        family = kind if kind is not None else _infer_kind(text, dotted=False)

    if not _COMPACT_PATTERN[family].match(compact):
        raise RejectedCodeError(raw, f"not a valid {family.value} code")
    return CodeId(render_code(compact, family), family)


def render_code(compact: str, kind: CodeKind) -> str:
    """Insert the decimal point into an undotted code of the given family."""
    split = _DOT_POSITION[kind]
    if len(compact) <= split:
        return compact
    return f"{compact[:split]}.{compact[split:]}"


def category_of(code: CodeId) -> CodeId:
    """The 3-character (procedures: 2-character) category of a code."""
    return CodeId(code.code.split(".")[0], code.kind)


def subcategory_of(code: CodeId) -> CodeId:
    """Truncate to at most one decimal digit ("405.01" -> "405.0")."""
    head, _, tail = code.code.partition(".")
    if not tail:
        return code
    return CodeId(f"{head}.{tail[:1]}", code.kind)


@dataclass(frozen=True)
class Block:
    """One level-1 range such as "401-405"."""

    low: str
    high: str
    label: str

    @property
    def code(self) -> str:
        return f"{self.low}-{self.high}"

    def _family(self) -> Tuple[str, int]:
        prefix = self.low[0] if self.low[0].isalpha() else ""
        return prefix, len(self.low) - len(prefix)

    def contains(self, category: CodeId) -> bool:
        """Whether a category code falls inside the range (same family only)."""
        prefix, digits = self._family()
        text = category.code
        if prefix:
            if not text.startswith(prefix):
                return False
            text = text[len(prefix):]
        elif not text[:1].isdigit():
            return False
        if len(text) != digits or not text.isdigit():
            return False
        return int(self.low[len(prefix):]) <= int(text) <= int(self.high[len(prefix):])


@dataclass(frozen=True)
class BlockTable:
    """Ordered list of level-1 ranges; the first matching range wins."""

    blocks: Tuple[Block, ...]

    def lookup(self, category: CodeId) -> Tuple[CodeId, str]:
        """Return the block code and its label for a category.

        Raises:
            ConfigurationError: If no range covers the category
        """
        for block in self.blocks:
            if block.contains(category):
                return CodeId(block.code, category.kind), block.label
        raise ConfigurationError(f"Block table has no range covering category {category.code}")


def load_block_table(path: Path) -> BlockTable:
    """Read ``<lo>-<hi>\\t<label>`` lines.

    Raises:
        IngestionError: If the file is missing or a line is malformed
    """
    if not path.is_file():
        raise IngestionError(f"Block table not found: {path}")
    try:
        frame = pd.read_csv(
            path,
            sep="\t",
            header=None,
            names=["span", "label"],
            dtype=str,
            keep_default_na=False,
            quoting=3,
            skip_blank_lines=False,
        ).fillna("")
    except pd.errors.EmptyDataError as e:
        raise IngestionError(f"Block table {path} is empty") from e
    except pd.errors.ParserError as e:
        raise IngestionError(f"{path}: {e}") from e
    blocks: List[Block] = []
    # blank rows are kept so that row numbers match file lines
    for number, row in enumerate(frame.itertuples(index=False), start=1):
        if not row.span.strip() and not row.label.strip():
            continue
        low, sep, high = row.span.strip().partition("-")
        if not sep or not low or not high:
            raise IngestionError(
                f"{path}:{number}: expected '<lo>-<hi>\\t<label>', got {row.span!r}"
            )
        blocks.append(Block(low.upper(), high.upper(), row.label.strip()))
    if not blocks:
        raise IngestionError(f"Block table {path} is empty")
    return BlockTable(tuple(blocks))


@dataclass(frozen=True)
class Hierarchy:
    """Per-level code lists with parent maps between consecutive levels.

    Attributes:
        levels: L^1..L^T, each sorted; index 0 is level 1
        parents: parents[t] maps a level-(t+1) code to its level-t parent
            (parents[0] is empty because level 1 has no parent)
        descriptors: Descriptor tokens for every code appearing at any level
    """

    levels: Tuple[Tuple[CodeId, ...], ...]
    parents: Tuple[Mapping[CodeId, CodeId], ...]
    descriptors: Mapping[CodeId, Tuple[str, ...]]

    def __post_init__(self) -> None:
        """Validate the inheritance structure."""
        if len(self.levels) == 0:
            raise ValueError("Hierarchy needs at least one level")
        if len(self.parents) != len(self.levels):
            raise ValueError("Hierarchy needs one parent map per level")
        for t in range(1, len(self.levels)):
            coarse = set(self.levels[t - 1])
            for code in self.levels[t]:
                if self.parents[t].get(code) not in coarse:
                    raise ValueError(f"Code {code} at level {t + 1} has no parent at level {t}")

    @property
    def depth(self) -> int:
        """Number of levels T."""
        return len(self.levels)

    @property
    def finest(self) -> Tuple[CodeId, ...]:
        return self.levels[-1]

    def level_sizes(self) -> Tuple[int, ...]:
        return tuple(len(level) for level in self.levels)

    def index(self, level: int) -> Dict[CodeId, int]:
        """Position of each code within level ``level`` (1-based level number)."""
        return {code: i for i, code in enumerate(self.levels[level - 1])}

    def ancestor(self, code: CodeId, level: int) -> CodeId:
        """Walk parent links from the finest level up to ``level``."""
        current = code
        for t in range(self.depth - 1, level - 1, -1):
            current = self.parents[t][current]
        return current

    def tail(self, count: int) -> "Hierarchy":
        """Keep only the last ``count`` levels.

        Raises:
            ConfigurationError: If count is not in 1..depth
        """
        if not 1 <= count <= self.depth:
            raise ConfigurationError(f"Cannot keep {count} of {self.depth} levels")
        levels = self.levels[-count:]
        parents = ({},) + tuple(self.parents[self.depth - count + 1 :])
        kept = {code for level in levels for code in level}
        descriptors = {code: tokens for code, tokens in self.descriptors.items() if code in kept}
        return Hierarchy(levels, parents, descriptors)

    def digest(self) -> str:
        """Stable sha256 over levels and parent links."""
        sha = hashlib.sha256()
        for t, level in enumerate(self.levels):
            for code in level:
                parent = self.parents[t].get(code)
                sha.update(f"{t}\t{code.kind.value}\t{code.code}\t{parent or ''}\n".encode("utf-8"))
        return sha.hexdigest()


def _fallback_descriptor(code: CodeId) -> Tuple[str, ...]:
    return (code.code.lower(),)


def build_hierarchy(
    finest: Iterable[CodeId],
    levels: int,
    block_table: Optional[BlockTable] = None,
    descriptors: Optional[Mapping[CodeId, Sequence[str]]] = None,
) -> Hierarchy:
    """Build L^1..L^T by truncating the finest codes.

    Args:
        finest: Finest codes observed in the training data (becomes L^T)
        levels: T, between 2 and 4
        block_table: Level-1 ranges; required exactly when T = 4
        descriptors: Tokenised descriptor per code; codes without one fall back
            to their own code string

    Returns:
        Hierarchy with complete parent maps

    Raises:
        ConfigurationError: If T is out of range or T = 4 lacks a block table
    """
    if not MIN_LEVELS <= levels <= MAX_LEVELS:
        raise ConfigurationError(
            f"levels must be between {MIN_LEVELS} and {MAX_LEVELS}, got {levels}"
        )
    if levels == MAX_LEVELS and block_table is None:
        raise ConfigurationError("A block table is required for a four-level hierarchy")

    block_labels: Dict[CodeId, str] = {}

    def block_of(code: CodeId) -> CodeId:
        assert block_table is not None
        block, label = block_table.lookup(category_of(code))
        block_labels[block] = label
        return block

    derivations: List[Callable[[CodeId], CodeId]] = [
        block_of,
        category_of,
        subcategory_of,
        lambda c: c,
    ]
    derive = derivations[MAX_LEVELS - levels :]

    finest_codes = sorted(set(finest))
    if not finest_codes:
        raise ConfigurationError("Cannot build a hierarchy without codes")

    per_level: List[set] = [set() for _ in range(levels)]
    parents: List[Dict[CodeId, CodeId]] = [dict() for _ in range(levels)]
    for code in finest_codes:
        chain = [fn(code) for fn in derive]
        for t, node in enumerate(chain):
            per_level[t].add(node)
            if t > 0:
                parents[t][node] = chain[t - 1]

    provided = descriptors or {}
    all_codes = {code for level in per_level for code in level}
    resolved: Dict[CodeId, Tuple[str, ...]] = {}
    for code in all_codes:
        tokens = tuple(provided.get(code, ()))
        if not tokens and code in block_labels:
            tokens = tuple(block_labels[code].lower().split())
        resolved[code] = tokens if tokens else _fallback_descriptor(code)

    return Hierarchy(
        levels=tuple(tuple(sorted(level)) for level in per_level),
        parents=tuple(parents),
        descriptors=resolved,
    )


def expand_labels(gold: Iterable[CodeId], hierarchy: Hierarchy) -> Tuple[FrozenSet[CodeId], ...]:
    """Expand finest-level gold codes to every level.

    Args:
        gold: Codes from L^T
        hierarchy: Inheritance structure

    Returns:
        One set per level (index 0 = level 1); the set at level t holds the
        level-t ancestors of the gold codes

    Raises:
        RejectedCodeError: If a gold code is not in L^T
    """
    finest = set(hierarchy.finest)
    current = set(gold)
    unknown = current - finest
    if unknown:
        raise RejectedCodeError(str(sorted(unknown)[0]), "not in the finest hierarchy level")
    expanded: List[FrozenSet[CodeId]] = [frozenset(current)]
    for t in range(hierarchy.depth - 1, 0, -1):
        current = {hierarchy.parents[t][code] for code in current}
        expanded.append(frozenset(current))
    return tuple(reversed(expanded))


def level_statistics(
    hierarchy: Hierarchy, gold_sets: Sequence[Iterable[CodeId]]
) -> Tuple[LevelStatistics, ...]:
    """Code count and average labels per record at each level."""
    totals = [0] * hierarchy.depth
    for gold in gold_sets:
        for t, level_set in enumerate(expand_labels(gold, hierarchy)):
            totals[t] += len(level_set)
    records = max(len(gold_sets), 1)
    return tuple(
        LevelStatistics(t + 1, len(hierarchy.levels[t]), totals[t] / records)
        for t in range(hierarchy.depth)
    )


def _code_pair(code: CodeId) -> List[str]:
    return [code.code, code.kind.value]


def _code_from(pair: Sequence[str]) -> CodeId:
    return CodeId(pair[0], CodeKind(pair[1]))


def hierarchy_to_dict(hierarchy: Hierarchy) -> Dict[str, object]:
    """JSON-friendly form: levels, child/parent links and descriptors."""
    return {
        "levels": [[_code_pair(c) for c in level] for level in hierarchy.levels],
        "parents": [
            [_code_pair(child) + _code_pair(parent) for child, parent in sorted(links.items())]
            for links in hierarchy.parents
        ],
        "descriptors": [
            _code_pair(code) + [" ".join(tokens)]
            for code, tokens in sorted(hierarchy.descriptors.items())
        ],
    }


def hierarchy_from_dict(values: Mapping[str, object]) -> Hierarchy:
    """Inverse of ``hierarchy_to_dict``.

    Raises:
        IngestionError: If the structure is incomplete or inconsistent
    """
    try:
        raw_levels: Any = values["levels"]
        raw_parents: Any = values["parents"]
        raw_descriptors: Any = values["descriptors"]
        levels = tuple(tuple(_code_from(p) for p in level) for level in raw_levels)
        parents = tuple(
            {_code_from(row[:2]): _code_from(row[2:4]) for row in links} for links in raw_parents
        )
        descriptors = {_code_from(row[:2]): tuple(row[2].split()) for row in raw_descriptors}
        return Hierarchy(levels, parents, descriptors)
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise IngestionError(f"Malformed hierarchy: {e}") from e


def save_hierarchy(hierarchy: Hierarchy, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(hierarchy_to_dict(hierarchy), indent=1), encoding="utf-8")


def load_hierarchy(path: Path) -> Hierarchy:
    """Read a hierarchy written by ``save_hierarchy``."""
    if not path.is_file():
        raise IngestionError(f"Hierarchy file not found: {path}")
    try:
        values = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise IngestionError(f"{path}: {e}") from e
    return hierarchy_from_dict(values)
