"""Per-level code co-occurrence graphs and their GCN propagation matrices."""

import logging
from dataclasses import dataclass
from itertools import permutations
from pathlib import Path
from typing import FrozenSet, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from src.utils.types import COGRAPH_SYMMETRIZATIONS, CodeId
from src.utils.validators import ConfigurationError, ContractError

from .hierarchy import Hierarchy, expand_labels

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-12


@dataclass(frozen=True)
class CoGraph:
    """Co-occurrence graph of one hierarchy level.

    Attributes:
        level: Level number t (1-based)
        nodes: L^t in hierarchy order
        weights: Row-normalised directed weights e(i, j), zero diagonal
        adjacency: Symmetric adjacency A (see ``symmetrize``)
        propagation: D^-1/2 (A + I) D^-1/2
    """

    level: int
    nodes: Tuple[CodeId, ...]
    weights: np.ndarray
    adjacency: np.ndarray
    propagation: np.ndarray

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def weight(self, source: CodeId, target: CodeId) -> float:
        """Directed weight e(source, target)."""
        index = {code: i for i, code in enumerate(self.nodes)}
        return float(self.weights[index[source], index[target]])


def count_pairs(level_sets: Iterable[FrozenSet[CodeId]], nodes: Sequence[CodeId]) -> np.ndarray:
    """Number of records containing both codes, for every ordered pair i != j."""
    index = {code: i for i, code in enumerate(nodes)}
    counts = np.zeros((len(nodes), len(nodes)), dtype=np.float64)
    for codes in level_sets:
        ids = sorted(index[c] for c in set(codes))
        if len(ids) < 2:
            continue
        rows, cols = zip(*permutations(ids, 2))
        np.add.at(counts, (np.array(rows), np.array(cols)), 1.0)
    return counts


def row_normalize(counts: np.ndarray) -> np.ndarray:
    """Divide each row by its sum; rows without partners stay zero."""
    totals = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)


def symmetrize(counts: np.ndarray, mode: str = "avg") -> np.ndarray:
    """Symmetric adjacency from pair counts.

    ``avg`` and ``max`` combine the row-normalised weights with their
    transpose. ``none`` skips row normalisation and returns the counts, which
    are symmetric already.

    Example:
        >>> symmetrize(np.array([[0.0, 2.0, 2.0], [2.0, 0.0, 0.0], [2.0, 0.0, 0.0]]), "max")
        array([[0., 1., 1.],
               [1., 0., 0.],
               [1., 0., 0.]])
    """
    if mode == "none":
        return np.array(counts, dtype=np.float64)
    weights = row_normalize(np.asarray(counts, dtype=np.float64))
    if mode == "avg":
        return (weights + weights.T) / 2.0
    if mode == "max":
        return np.maximum(weights, weights.T)
    raise ConfigurationError(
        f"cograph symmetrization must be one of {COGRAPH_SYMMETRIZATIONS}, got {mode!r}"
    )


def normalize(adjacency: np.ndarray) -> np.ndarray:
    """Spectral normalisation with self loops.

    Args:
        adjacency: Square, symmetric, nonnegative matrix A

    Returns:
        P = D^-1/2 (A + I) D^-1/2 where D is the degree matrix of A + I

    Raises:
        ContractError: If A is not square, not symmetric, or has negative entries

    Example:
        >>> normalize(np.array([[0.0, 1.0], [1.0, 0.0]]))
        array([[0.5, 0.5],
               [0.5, 0.5]])
    """
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"Adjacency must be square, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=SYMMETRY_TOLERANCE):
        raise ContractError("Adjacency must be symmetric; build it with symmetrize")
    if np.any(a < 0):
        raise ContractError("Adjacency must be nonnegative")
    tilde = a + np.eye(a.shape[0])
    inv_sqrt = 1.0 / np.sqrt(tilde.sum(axis=1))
    p = inv_sqrt[:, None] * tilde * inv_sqrt[None, :]
    # exact symmetry for downstream checks
    return (p + p.T) / 2.0


def build_cograph(
    gold_sets: Sequence[Iterable[CodeId]],
    hierarchy: Hierarchy,
    level: int,
    symmetrization: str = "avg",
) -> CoGraph:
    """Build the co-occurrence graph of one level from training records.

    Args:
        gold_sets: Finest-level gold codes per training record
        hierarchy: Inheritance structure used to expand the gold sets
        level: Level number t, 1-based
        symmetrization: ``avg``, ``max`` or ``none``

    Returns:
        CoGraph whose nodes follow the hierarchy's level order

    Raises:
        ConfigurationError: If the level is outside 1..T or the corpus is empty
    """
    if not 1 <= level <= hierarchy.depth:
        raise ConfigurationError(f"Level {level} outside 1..{hierarchy.depth}")
    if len(gold_sets) == 0:
        raise ConfigurationError("Cannot build a co-occurrence graph from an empty corpus")

    nodes = hierarchy.levels[level - 1]
    level_sets = [expand_labels(gold, hierarchy)[level - 1] for gold in gold_sets]
    counts = count_pairs(level_sets, nodes)
    weights = row_normalize(counts)
    adjacency = symmetrize(counts, symmetrization)
    isolated = int(np.sum(weights.sum(axis=1) == 0))
    logger.debug("Level %d co-graph: %d nodes, %d isolated", level, len(nodes), isolated)
    return CoGraph(level, tuple(nodes), weights, adjacency, normalize(adjacency))


def build_cographs(
    gold_sets: Sequence[Iterable[CodeId]], hierarchy: Hierarchy, symmetrization: str = "avg"
) -> Tuple[CoGraph, ...]:
    """One co-graph per hierarchy level, coarse to fine."""
    return tuple(
        build_cograph(gold_sets, hierarchy, t, symmetrization)
        for t in range(1, hierarchy.depth + 1)
    )


def cograph_frame(graphs: Sequence[CoGraph]) -> pd.DataFrame:
    """Nonzero directed weights as a ``level, code_i, code_j, weight`` table."""
    rows: List[Tuple[int, str, str, float]] = []
    for graph in graphs:
        for i, j in zip(*np.nonzero(graph.weights)):
            weight = float(graph.weights[i, j])
            rows.append((graph.level, graph.nodes[i].code, graph.nodes[j].code, weight))
    return pd.DataFrame(rows, columns=["level", "code_i", "code_j", "weight"])


def export_cographs(graphs: Sequence[CoGraph], path: Path) -> None:
    """Write the weights as a headerless TSV."""
    path.parent.mkdir(parents=True, exist_ok=True)
    cograph_frame(graphs).to_csv(path, sep="\t", header=False, index=False, float_format="%.17g")
    logger.info("Wrote co-graph weights for %d levels to %s", len(graphs), path)
