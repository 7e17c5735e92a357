import csv
import os
import subprocess
import sys

import numpy as np
import pytest

from cfedit._kernels import available_backends, get_backend
from cfedit.synthetic import generate_suite


def random_problem(rng, hw=16, d=8, n_classes=5, n_cands=64):
    cells = rng.standard_normal((hw, d)).astype(np.float32)
    weights = rng.standard_normal((n_classes, d)).astype(np.float32)
    bias = rng.standard_normal(n_classes).astype(np.float32)
    rows = rng.integers(0, hw, n_cands).astype(np.int32)
    repl = rng.standard_normal((n_cands, d)).astype(np.float32)
    return cells, weights, bias, rows, repl


class TestBackendSelection:
    def test_compiled_backend_available(self):
        assert available_backends() == ("python", "cython")

    def test_get_backend_names(self):
        assert get_backend("python").NAME == "python"
        assert get_backend("cython").NAME == "cython"
        assert get_backend("auto").COMPILED

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            get_backend("fortran")


class TestKernelParity:
    def test_pooled_logits_close(self, rng):
        py, cy = get_backend("python"), get_backend("cython")
        for _ in range(20):
            cells, weights, bias, _, _ = random_problem(rng)
            a = py.pooled_logits(cells, weights, bias)
            b = cy.pooled_logits(cells, weights, bias)
            assert np.allclose(a, b, rtol=0, atol=1e-12)

    def test_pooled_logits_matches_direct_mean(self, rng):
        cells, weights, bias, _, _ = random_problem(rng)
        expected = weights.astype(np.float64) @ (
            cells.astype(np.float64).mean(axis=0)) + bias
        for name in available_backends():
            got = get_backend(name).pooled_logits(cells, weights, bias)
            assert np.allclose(got, expected, atol=1e-10)

    def test_evaluate_round_parity(self, rng):
        py, cy = get_backend("python"), get_backend("cython")
        for target in range(5):
            cells, weights, bias, rows, repl = random_problem(rng)
            rp = py.evaluate_round(cells, rows, repl, weights, bias, target)
            rc = cy.evaluate_round(cells, rows, repl, weights, bias, target)
            assert rp[0] == rc[0]
            assert rp[1] == rc[1]
            assert np.allclose(rp[2], rc[2], rtol=0, atol=1e-12)

    def test_evaluate_round_matches_materialized_edits(self, rng):
        cells, weights, bias, rows, repl = random_problem(rng, n_cands=10)
        for name in available_backends():
            backend = get_backend(name)
            n_evals, flip, logits = backend.evaluate_round(
                cells, rows, repl, weights, bias, target=0)
            for k in range(n_evals):
                edited = cells.copy()
                edited[rows[k]] = repl[k]
                expected = backend.pooled_logits(edited, weights, bias)
                assert np.array_equal(logits[k], expected)

    def test_early_stop_position(self):
        cells = np.zeros((4, 1), dtype=np.float32)
        weights = np.array([[1.0], [-1.0]], dtype=np.float32)
        bias = np.zeros(2, dtype=np.float32)
        rows = np.array([0, 1, 2], dtype=np.int32)
        repl = np.array([[1.0], [-50.0], [-50.0]], dtype=np.float32)
        for name in available_backends():
            n_evals, flip, logits = get_backend(name).evaluate_round(
                cells, rows, repl, weights, bias, target=1)
            assert (n_evals, flip) == (2, 1)
            assert logits.shape == (2, 2)


class TestEngineParity:
    def test_full_run_identical_across_backends(self, tmp_path):
        suite = tmp_path / "suite"
        generate_suite(suite, count=6, seed=21, variant="flat")

        def run_with(backend):
            out = tmp_path / f"out_{backend}"
            env = dict(os.environ, CFEDIT_BACKEND=backend)
            subprocess.run(
                [sys.executable, "-m", "cfedit.cli", "run", "--input", str(suite),
                 "--out", str(out)],
                check=True, env=env, capture_output=True)
            with open(out / "instances.csv") as fh:
                rows = list(csv.DictReader(fh))
            return [{k: v for k, v in row.items() if k != "time_ms"} for row in rows]

        assert run_with("python") == run_with("cython")
