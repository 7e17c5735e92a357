"""Semantic similarity scoring and top-fraction pruning of candidate pairs.

Each (query cell, distractor cell) pair gets the log-likelihood of a
temperature softmax over the dot products of that query cell with every
candidate distractor cell. Only the most similar fraction of pairs is kept
for the search.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from cfedit.errors import NoCandidatesError
from cfedit.tensors import FeatureMap
from cfedit.sequencing import EditUniverse


@dataclass
class CandidatePair:
    """One edit combination: replace query cell i by a distractor's cell j."""

    query_cell: int
    distractor: int
    distractor_cell: int
    sim_loglik: float = 0.0
    combined_score: float | None = field(default=None, compare=False)


@dataclass(frozen=True)
class SimilarityConfig:
    temperature: float = 0.1
    keep_fraction: float = 0.2
    sim_weight: float = 0.1

    def __post_init__(self):
        if self.temperature <= 0.0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ValueError(f"keep fraction must lie in (0, 1], got {self.keep_fraction}")
        if self.sim_weight < 0.0:
            raise ValueError(f"similarity weight must be >= 0, got {self.sim_weight}")


def enumerate_pairs(universe: EditUniverse) -> list[CandidatePair]:
    """All candidate pairs in priority order: query rank, distractor, position."""
    pairs = []
    for i in universe.query_cells:
        for did, cells in enumerate(universe.distractor_cells):
            for j in cells:
                pairs.append(CandidatePair(int(i), did, int(j)))
    return pairs


def pair_log_likelihoods(
    query: FeatureMap,
    distractors: list[FeatureMap] | tuple[FeatureMap, ...],
    universe: EditUniverse,
    temperature: float,
) -> np.ndarray:
    """Log-likelihood of each pair under a per-query-cell temperature softmax.

    For a query cell the distribution runs over all candidate distractor cells
    in the universe; exponentials are max-shifted for overflow safety. Output
    follows ``enumerate_pairs`` order.
    """
    if temperature <= 0.0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    if universe.n_distractor == 0:
        raise NoCandidatesError("no distractor cells to compare against")
    cand = np.concatenate(
        [d.cells[universe.distractor_cells[k]] for k, d in enumerate(distractors)]
    ).astype(np.float64)
    q = query.cells[universe.query_cells].astype(np.float64)
    dots = (q @ cand.T) / temperature
    shift = dots - dots.max(axis=1, keepdims=True)
    logliks = shift - np.log(np.exp(shift).sum(axis=1, keepdims=True))
    return logliks.reshape(-1)


def top_fraction_indices(
    sim: np.ndarray,
    query_cells: np.ndarray,
    distractors: np.ndarray,
    distractor_cells: np.ndarray,
    keep_fraction: float,
) -> np.ndarray:
    """Ascending indices of the ceil(fraction * N) most similar pairs.

    Ties in log-likelihood break by (query cell, distractor, distractor cell)
    ascending. A fraction of 1 keeps everything.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError(f"keep fraction must lie in (0, 1], got {keep_fraction}")
    n = len(sim)
    if n == 0:
        raise NoCandidatesError("no candidate pairs to filter")
    # epsilon guards float fuzz: 0.7 * 10 must select 7 pairs, not 8
    k = min(n, math.ceil(keep_fraction * n - 1e-9))
    if k >= n:
        return np.arange(n)
    # O(n) selection; only pairs tied at the boundary value need the tie-break
    neg = -np.asarray(sim, dtype=np.float64)
    boundary = np.partition(neg, k - 1)[k - 1]
    kept = np.flatnonzero(neg < boundary)
    need = k - kept.size
    if need > 0:
        ties = np.flatnonzero(neg == boundary)
        m_cell = int(np.max(distractor_cells)) + 1
        m_did = int(np.max(distractors)) + 1
        rank = np.asarray(query_cells)[ties].astype(np.int64)
        rank = (rank * m_did + np.asarray(distractors)[ties]) * m_cell \
            + np.asarray(distractor_cells)[ties]
        if need < ties.size:
            ties = ties[np.argpartition(rank, need - 1)[:need]]
        kept = np.concatenate([kept, ties])
    return np.sort(kept)


def filter_top_fraction(pairs: list[CandidatePair], keep_fraction: float) -> list[CandidatePair]:
    """Keep the most similar fraction of pairs, in their original order."""
    kept = top_fraction_indices(
        np.array([p.sim_loglik for p in pairs], dtype=np.float64),
        np.array([p.query_cell for p in pairs], dtype=np.int64),
        np.array([p.distractor for p in pairs], dtype=np.int64),
        np.array([p.distractor_cell for p in pairs], dtype=np.int64),
        keep_fraction,
    )
    return [pairs[int(k)] for k in kept]


def similarity_loss(pairs: list[CandidatePair]) -> float:
    """Mean pair log-likelihood; larger means more semantically similar."""
    if not pairs:
        raise ValueError("similarity loss needs at least one pair")
    return float(np.mean([p.sim_loglik for p in pairs]))
