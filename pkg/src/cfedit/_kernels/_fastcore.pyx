# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend.

Same contract as ``_pycore``: float64 accumulation over cells in ascending
index order, flip detection by first-maximum argmax on raw logits.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "cython"
COMPILED = True


cdef void _pooled(const float[:, ::1] cells, Py_ssize_t skip_row,
                  const float[::1] repl_row, const float[:, ::1] weights,
                  const float[::1] bias, double* mean_buf,
                  double* logit_buf) noexcept nogil:
    cdef Py_ssize_t n_cells = cells.shape[0]
    cdef Py_ssize_t d = cells.shape[1]
    cdef Py_ssize_t n_classes = weights.shape[0]
    cdef Py_ssize_t r, k, c
    cdef double acc
    for k in range(d):
        mean_buf[k] = 0.0
    for r in range(n_cells):
        if r == skip_row:
            for k in range(d):
                mean_buf[k] += <double> repl_row[k]
        else:
            for k in range(d):
                mean_buf[k] += <double> cells[r, k]
    for k in range(d):
        mean_buf[k] /= <double> n_cells
    for c in range(n_classes):
        acc = <double> bias[c]
        for k in range(d):
            acc += (<double> weights[c, k]) * mean_buf[k]
        logit_buf[c] = acc


def pooled_logits(const float[:, ::1] cells, const float[:, ::1] weights,
                  const float[::1] bias):
    """Class logits of a (HW, d) cell matrix: affine map of the cell mean."""
    cdef Py_ssize_t d = cells.shape[1]
    cdef Py_ssize_t n_classes = weights.shape[0]
    mean = np.empty(d, dtype=np.float64)
    out = np.empty(n_classes, dtype=np.float64)
    cdef double[::1] mean_v = mean
    cdef double[::1] out_v = out
    _pooled(cells, -1, cells[0], weights, bias, &mean_v[0], &out_v[0])
    return out


def evaluate_round(const float[:, ::1] cells, const int[::1] rows,
                   const float[:, ::1] repl, const float[:, ::1] weights,
                   const float[::1] bias, Py_ssize_t target):
    """Score tentative single-cell replacements; early-stop on a class flip.

    Mirrors ``_pycore.evaluate_round``: returns (n_evals, flip index or -1,
    float64 logits of the evaluated candidates).
    """
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t d = cells.shape[1]
    cdef Py_ssize_t n_classes = weights.shape[0]
    logits = np.empty((n, n_classes), dtype=np.float64)
    mean = np.empty(d, dtype=np.float64)
    cdef double[:, ::1] logits_v = logits
    cdef double[::1] mean_v = mean
    cdef Py_ssize_t k, c, best
    cdef double best_val
    cdef Py_ssize_t n_evals = n
    cdef Py_ssize_t flip = -1
    with nogil:
        for k in range(n):
            _pooled(cells, <Py_ssize_t> rows[k], repl[k], weights, bias,
                    &mean_v[0], &logits_v[k, 0])
            best = 0
            best_val = logits_v[k, 0]
            for c in range(1, n_classes):
                if logits_v[k, c] > best_val:
                    best_val = logits_v[k, c]
                    best = c
            if best == target:
                n_evals = k + 1
                flip = k
                break
    return int(n_evals), int(flip), logits[:n_evals]
