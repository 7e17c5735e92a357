"""Edit-sequence construction and candidate accounting.

Query cells are ranked by a masked softmax over the weighted semantic map and
cut off at a cumulative-mass threshold; distractor cells are the non-zero mask
cells in position order (deliberately unranked). The resulting universe tracks
how many combinations survive versus the exhaustive grid-times-grid count.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cfedit.errors import NoCandidatesError
from cfedit.tensors import GridMap, masked_softmax
from cfedit.attribution import WeightedSemanticMap


@dataclass(frozen=True)
class ScoredCells:
    """Cells with softmax weight scores, sorted by (score desc, index asc)."""

    scores: np.ndarray  # float64, descending under the tie-break
    cells: np.ndarray  # int64 cell indices, unique

    def __post_init__(self):
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=np.float64))
        object.__setattr__(self, "cells", np.asarray(self.cells, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.cells)


@dataclass(frozen=True)
class EditUniverse:
    """Candidate cell lists for one instance plus combination counts."""

    query_cells: np.ndarray  # priority order (weight score desc)
    distractor_cells: tuple[np.ndarray, ...]  # per distractor, position order
    grid_cells: int  # HW
    n_query: int
    n_distractor: int
    n_combinations: int  # n_query * n_distractor
    n_exhaustive: int  # HW * n_distractors * HW

    @property
    def reduction_ratio(self) -> float:
        return self.n_combinations / self.n_exhaustive


def score_cells(semantic: WeightedSemanticMap) -> ScoredCells:
    """Masked softmax over the map's non-zero cells, ranked for editing.

    Ties in score break toward the lower cell index so the ordering is total.
    """
    flat = semantic.values.flat.astype(np.float64)
    probs = masked_softmax(flat)  # raises DegenerateInputError when all-zero
    idx = np.flatnonzero(flat != 0.0)
    order = np.lexsort((idx, -probs[idx]))
    chosen = idx[order]
    return ScoredCells(scores=probs[chosen], cells=chosen)


def select_query_cells(scored: ScoredCells, mass_threshold: float) -> np.ndarray:
    """Shortest score-ranked prefix whose cumulative mass reaches the threshold.

    Equality counts as reaching it. If rounding keeps the cumulative sum below
    the threshold (e.g. threshold 1.0), every entry is returned.
    """
    if not 0.0 < mass_threshold <= 1.0:
        raise ValueError(f"mass threshold must lie in (0, 1], got {mass_threshold}")
    cum = np.cumsum(scored.scores)
    hit = np.flatnonzero(cum >= mass_threshold)
    m = int(hit[0]) + 1 if hit.size else len(scored)
    return scored.cells[:m].copy()


def mass_shortfall(scored: ScoredCells, m: int, mass_threshold: float) -> float:
    """Hinge gap max(threshold - sum of the first m scores, 0).

    Zero exactly when the m-cell prefix already covers the requested mass, so
    the selected prefix length is the smallest m with zero shortfall.
    """
    if not 0 <= m <= len(scored):
        raise ValueError(f"m={m} out of range for {len(scored)} scores")
    covered = float(np.sum(scored.scores[:m]))
    return max(mass_threshold - covered, 0.0)


def select_distractor_cells(mask: GridMap) -> np.ndarray:
    """Indices of non-zero mask cells in ascending position order."""
    return np.flatnonzero(mask.flat != 0.0).astype(np.int64)


def build_universe(
    query_cells: np.ndarray, distractor_masks: list[GridMap] | tuple[GridMap, ...]
) -> EditUniverse:
    """Assemble the candidate universe and its combination counts."""
    if not distractor_masks:
        raise ValueError("at least one distractor is required")
    query_cells = np.asarray(query_cells, dtype=np.int64)
    per = tuple(select_distractor_cells(m) for m in distractor_masks)
    grid_cells = distractor_masks[0].n_cells
    n_q = len(query_cells)
    n_d = sum(len(p) for p in per)
    if n_q * n_d == 0:
        raise NoCandidatesError(
            f"empty universe: {n_q} query cells x {n_d} distractor cells")
    return EditUniverse(
        query_cells=query_cells,
        distractor_cells=per,
        grid_cells=grid_cells,
        n_query=n_q,
        n_distractor=n_d,
        n_combinations=n_q * n_d,
        n_exhaustive=grid_cells * len(per) * grid_cells,
    )
