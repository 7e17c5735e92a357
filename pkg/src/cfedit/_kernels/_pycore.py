"""Pure-numpy kernel backend.

Reference implementation of the hot search kernels. The compiled backend in
``_fastcore`` mirrors these semantics exactly: float64 accumulation over
cells in ascending index order, flip detection by first-maximum argmax on the
raw logits. ``evaluate_round`` materializes each tentative edit and reuses
``pooled_logits`` so a tentative score is bit-identical to classifying the
edited map directly.
"""
from __future__ import annotations

import numpy as np

NAME = "python"
COMPILED = False


def pooled_logits(cells: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Class logits of a (HW, d) cell matrix: affine map of the cell mean."""
    mean = np.sum(cells, axis=0, dtype=np.float64) / cells.shape[0]
    return weights.astype(np.float64) @ mean + bias.astype(np.float64)


def evaluate_round(
    cells: np.ndarray,
    rows: np.ndarray,
    repl: np.ndarray,
    weights: np.ndarray,
    bias: np.ndarray,
    target: int,
) -> tuple[int, int, np.ndarray]:
    """Score every tentative single-cell replacement in candidate order.

    For candidate k, cell ``rows[k]`` of ``cells`` is replaced by ``repl[k]``
    and the pooled logits of the edited map are recorded. Stops early at the
    first candidate whose argmax class equals ``target``.

    Returns (number evaluated, index of the flipping candidate or -1, logits
    of the evaluated candidates as an (n_evals, C) float64 array).
    """
    n = rows.shape[0]
    logits = np.empty((n, weights.shape[0]), dtype=np.float64)
    work = np.array(cells, dtype=np.float32)
    for k in range(n):
        r = int(rows[k])
        saved = work[r].copy()
        work[r] = repl[k]
        lg = pooled_logits(work, weights, bias)
        work[r] = saved
        logits[k] = lg
        if int(np.argmax(lg)) == target:
            return k + 1, k, logits[: k + 1]
    return n, -1, logits
