"""Command-line front end.

Subcommands: run (process a bundle directory), sweep (threshold sweeps),
gen-synthetic (seeded fixture suites), report (re-aggregate an instances CSV).
Exit codes: 0 ok, 2 bad configuration, 3 no data.
"""
from __future__ import annotations

import argparse
import csv
import math
import statistics
import sys
from dataclasses import replace
from pathlib import Path

from cfedit import metrics, synthetic
from cfedit.batch import NoDataError, run_batch, thread_count, write_outputs
from cfedit.config import RunConfig, load_config_file
from cfedit.errors import CfeditError

EXIT_OK = 0
EXIT_BAD_CONFIG = 2
EXIT_NO_DATA = 3

SWEEP_PARAMS = {
    "t": "score_mass",
    "score-mass": "score_mass",
    "u": "keep_fraction",
    "keep-fraction": "keep_fraction",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config file (flags win over it)")
    p.add_argument("--method", choices=("wsae", "exhaustive", "simonly"))
    p.add_argument("--score-mass", type=float, dest="score_mass",
                   help="cumulative weight-score threshold on query cells (t)")
    p.add_argument("--keep-fraction", type=float, dest="keep_fraction",
                   help="fraction of candidate pairs kept by similarity (u)")
    p.add_argument("--sim-weight", type=float, dest="sim_weight",
                   help="weight of the similarity term in candidate scores")
    p.add_argument("--temperature", type=float, help="similarity softmax temperature")
    p.add_argument("--mask-threshold", type=float, dest="mask_threshold",
                   help="mask binarization threshold after resize")
    p.add_argument("--budget", type=int, help="edit budget (default: one per cell)")
    p.add_argument("--score", choices=("prob", "logit"), dest="score_mode")
    p.add_argument("--on-empty-mask", choices=("skip", "full"), dest="on_empty_mask")
    p.add_argument("--seed", type=int)


def _build_config(args) -> RunConfig:
    base = RunConfig()
    if args.config:
        base = base.with_overrides(**load_config_file(args.config))
    return base.with_overrides(
        method=args.method,
        score_mass=args.score_mass,
        keep_fraction=args.keep_fraction,
        sim_weight=args.sim_weight,
        temperature=args.temperature,
        mask_threshold=args.mask_threshold,
        budget=args.budget,
        score_mode=args.score_mode,
        on_empty_mask=args.on_empty_mask,
        seed=args.seed,
    )


def _cmd_run(args) -> int:
    config = _build_config(args)
    try:
        run = run_batch(args.input, config, mode=args.mode, workers=args.threads)
    except NoDataError as exc:
        print(f"error: no manifests: {exc}", file=sys.stderr)
        return EXIT_NO_DATA
    csv_path, summary_path = write_outputs(run, args.out, config)
    print(metrics.summary_text(run.report), end="")
    print(f"wrote {csv_path} and {summary_path}")
    return EXIT_OK


def sweep_rows(input_dir, config: RunConfig, field: str, values, mode: str = "all",
               workers: int | None = None) -> list[dict]:
    """One aggregate row per swept value; the other threshold is pinned to 1."""
    other = {"score_mass": "keep_fraction", "keep_fraction": "score_mass"}[field]
    rows = []
    for value in values:
        cfg = replace(config, **{field: float(value), other: 1.0})
        run = run_batch(input_dir, cfg, mode=mode, workers=workers)
        rep = run.report
        n = rep.n_instances
        evals = sum(it.evaluations for it in run.items)
        rows.append({
            "param": field,
            "value": float(value),
            "time_per_instance_ms": rep.total_time * 1000.0 / n,
            "evaluations": evals,
            "same_kp": rep.same_kp,
            "n_cfs": rep.n_cfs,
            "mean_edits": rep.mean_edits,
        })
    return rows


def _cmd_sweep(args) -> int:
    config = _build_config(args)
    field = SWEEP_PARAMS[args.param]
    try:
        rows = sweep_rows(args.input, config, field, args.values,
                          mode=args.mode, workers=args.threads)
    except NoDataError as exc:
        print(f"error: no manifests: {exc}", file=sys.stderr)
        return EXIT_NO_DATA
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sweep_path = out / "sweep.csv"
    with open(sweep_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    header = f"{'value':>8} {'ms/inst':>10} {'same_kp':>8} {'n_cfs':>6} {'edits':>6}"
    print(header)
    for row in rows:
        edits = row["mean_edits"]
        edits_txt = f"{edits:6.2f}" if not math.isnan(edits) else "     -"
        print(f"{row['value']:8.2f} {row['time_per_instance_ms']:10.3f} "
              f"{row['same_kp']:8.4f} {row['n_cfs']:6d} {edits_txt}")
    print(f"wrote {sweep_path}")
    return EXIT_OK


def _cmd_gen(args) -> int:
    manifests = synthetic.generate_suite(
        args.out,
        count=args.count,
        height=args.height,
        width=args.width,
        channels=args.channels,
        n_classes=args.classes,
        n_distractors=args.distractors,
        seed=args.seed,
        variant=args.variant,
        mask_density=args.mask_density,
    )
    print(f"wrote {len(manifests)} bundles under {args.out}")
    return EXIT_OK


def _cmd_report(args) -> int:
    path = Path(args.csv)
    if not path.exists():
        print(f"error: no data: {path} does not exist", file=sys.stderr)
        return EXIT_NO_DATA
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        print("error: no data: empty CSV", file=sys.stderr)
        return EXIT_NO_DATA
    flipped = [r for r in rows if r["status"] == "flipped"]
    edits = [int(r["n_edits"]) for r in flipped]
    apds = [float(r["apd"]) for r in flipped if r["apd"]]
    total_edits = sum(int(r["n_edits"]) for r in rows)

    def pooled(col):
        num = sum(float(r[col]) * int(r["n_edits"]) for r in rows if r[col])
        return num / total_edits if total_edits else 0.0

    print(f"instances   {len(rows)}")
    print(f"flipped     {len(flipped)}")
    print(f"near_kp     {pooled('near_kp'):.4f}")
    print(f"same_kp     {pooled('same_kp'):.4f}")
    print(f"mean_edits  {statistics.mean(edits):.4f}" if edits else "mean_edits  -")
    print(f"apd         {statistics.mean(apds):.4f}" if apds else "apd         -")
    print(f"evaluations {sum(int(r['evaluations']) for r in rows)}")
    print(f"total_time  {sum(float(r['time_ms']) for r in rows) / 1000.0:.3f}s")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfedit",
        description="Counterfactual feature-edit search over exported bundles.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="process every bundle in a directory")
    p_run.add_argument("--input", required=True, type=Path, help="bundle directory")
    p_run.add_argument("--out", required=True, type=Path, help="output directory")
    p_run.add_argument("--mode", choices=("all", "single"), default="all",
                       help="metric mode: whole edit sequences or first edits only")
    p_run.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: CFEDIT_THREADS or 1)")
    _add_config_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep a threshold, one summary row per value")
    p_sweep.add_argument("--input", required=True, type=Path)
    p_sweep.add_argument("--out", required=True, type=Path)
    p_sweep.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMS),
                         help="threshold to sweep; the other one is pinned to 1.0")
    p_sweep.add_argument("--values", required=True, type=float, nargs="+")
    p_sweep.add_argument("--mode", choices=("all", "single"), default="all")
    p_sweep.add_argument("--threads", type=int, default=None)
    _add_config_flags(p_sweep)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_gen = sub.add_parser("gen-synthetic", help="generate seeded synthetic bundles")
    p_gen.add_argument("--out", required=True, type=Path)
    p_gen.add_argument("--count", required=True, type=int)
    p_gen.add_argument("--height", type=int, default=4)
    p_gen.add_argument("--width", type=int, default=4)
    p_gen.add_argument("--channels", type=int, default=8)
    p_gen.add_argument("--classes", type=int, default=5)
    p_gen.add_argument("--distractors", type=int, default=2)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--variant", choices=synthetic.VARIANTS, default="random")
    p_gen.add_argument("--mask-density", type=float, default=1.0, dest="mask_density")
    p_gen.set_defaults(func=_cmd_gen)

    p_rep = sub.add_parser("report", help="aggregate an instances CSV")
    p_rep.add_argument("--csv", required=True, type=Path)
    p_rep.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        args.threads = thread_count()
    try:
        return args.func(args)
    except (ValueError, CfeditError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG


if __name__ == "__main__":
    sys.exit(main())
