"""Benchmark the compiled kernel backend against the pure-numpy fallback.

Times the two hot kernels across problem sizes and a full engine run on a
synthetic suite, checking along the way that both backends agree.

    python3 benchmarks/bench_backends.py
"""
import argparse
import os
import subprocess
import sys
import tempfile
import time

import numpy as np

from cfedit._kernels import available_backends, get_backend
from cfedit.synthetic import generate_suite

SIZES = [
    # (HW, d, classes, candidates)
    (16, 8, 5, 256),
    (49, 64, 10, 1024),
    (49, 512, 200, 2048),
    (196, 256, 100, 4096),
]


def time_call(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_kernels():
    rng = np.random.default_rng(0)
    print(f"{'HW':>5} {'d':>4} {'C':>4} {'cands':>6} "
          f"{'python (ms)':>12} {'cython (ms)':>12} {'speedup':>8} {'max |d|':>9}")
    for hw, d, n_classes, n_cands in SIZES:
        cells = rng.standard_normal((hw, d)).astype(np.float32)
        weights = rng.standard_normal((n_classes, d)).astype(np.float32)
        bias = rng.standard_normal(n_classes).astype(np.float32)
        rows = rng.integers(0, hw, n_cands).astype(np.int32)
        repl = rng.standard_normal((n_cands, d)).astype(np.float32)
        # target -1 never matches an argmax, so every candidate is evaluated
        results, times = {}, {}
        for name in available_backends():
            backend = get_backend(name)
            times[name] = time_call(
                lambda b=backend: b.evaluate_round(cells, rows, repl, weights, bias, -1))
            results[name] = backend.evaluate_round(cells, rows, repl, weights, bias, -1)
        deviation = float(np.abs(results["python"][2] - results["cython"][2]).max()) \
            if "cython" in results else float("nan")
        speedup = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{hw:>5} {d:>4} {n_classes:>4} {n_cands:>6} "
              f"{times['python'] * 1e3:>12.3f} {times.get('cython', float('nan')) * 1e3:>12.3f} "
              f"{speedup:>8.1f} {deviation:>9.1e}")


def bench_engine(count):
    print(f"\nfull engine run over {count} synthetic instances (one process per backend):")
    with tempfile.TemporaryDirectory() as tmp:
        suite = os.path.join(tmp, "suite")
        generate_suite(suite, count=count, height=7, width=7, channels=32,
                       n_classes=10, seed=99, variant="flat")
        for backend in available_backends():
            out = os.path.join(tmp, f"out_{backend}")
            env = dict(os.environ, CFEDIT_BACKEND=backend)
            start = time.perf_counter()
            subprocess.run(
                [sys.executable, "-m", "cfedit.cli", "run", "--input", suite,
                 "--out", out, "--method", "exhaustive"],
                check=True, env=env, capture_output=True)
            print(f"  {backend:>7}: {time.perf_counter() - start:.2f} s")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--engine-count", type=int, default=20,
                        help="instances for the end-to-end comparison")
    parser.add_argument("--skip-engine", action="store_true")
    args = parser.parse_args()
    if "cython" not in available_backends():
        print("compiled backend not built; showing the fallback only")
    bench_kernels()
    if not args.skip_engine:
        bench_engine(args.engine_count)
