"""Batch orchestration: run a directory of bundles and write reports.

Instances are independent, so a batch may be processed by a thread pool
(capped by the CFEDIT_THREADS environment variable); output rows are sorted
by instance id before writing, so results do not depend on scheduling.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from cfedit import metrics
from cfedit.bundle import discover_manifests, load_bundle
from cfedit.config import RunConfig
from cfedit.errors import CfeditError
from cfedit.metrics import BatchItem, MetricsReport
from cfedit.search import run_counterfactual


class NoDataError(CfeditError):
    """The input directory holds no bundle manifests."""


def thread_count() -> int:
    raw = os.environ.get("CFEDIT_THREADS", "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        return 1


@dataclass(frozen=True)
class BatchRun:
    items: list[BatchItem]
    keypoints: dict
    grid_height: int
    grid_width: int
    report: MetricsReport
    rows: list[dict]


def _process_one(manifest_path, config: RunConfig):
    bundle = load_bundle(manifest_path)
    result = run_counterfactual(bundle, config)
    item = BatchItem(
        instance_id=result.instance_id,
        status=result.status,
        applied=result.applied,
        trace=result.trace,
        evaluations=result.evaluations,
        wall_time=result.wall_time,
        query_id=bundle.query.image_id,
        distractor_ids=bundle.distractor_ids,
        universe=result.universe,
    )
    return item, bundle.keypoint_db(), (bundle.grid_height, bundle.grid_width)


def run_batch(input_dir, config: RunConfig, mode: str = "all",
              workers: int | None = None) -> BatchRun:
    manifests = discover_manifests(input_dir)
    if not manifests:
        raise NoDataError(f"no manifests found under {input_dir}")
    workers = workers if workers is not None else thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda m: _process_one(m, config), manifests))
    else:
        outcomes = [_process_one(m, config) for m in manifests]

    grids = {g for _, _, g in outcomes}
    if len(grids) != 1:
        raise CfeditError(f"batch mixes grid sizes {sorted(grids)}; metrics need one grid")
    grid_h, grid_w = grids.pop()

    keypoints: dict = {}
    items = []
    for item, kp_db, _ in outcomes:
        items.append(item)
        keypoints.update(kp_db)
    items.sort(key=lambda it: it.instance_id)

    rep = metrics.report(items, keypoints, grid_h, grid_w, mode=mode)
    rows = [metrics.csv_row(it, keypoints, grid_h, grid_w) for it in items]
    return BatchRun(items=items, keypoints=keypoints, grid_height=grid_h,
                    grid_width=grid_w, report=rep, rows=rows)


def write_outputs(run: BatchRun, out_dir, config: RunConfig) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "instances.csv"
    metrics.write_csv(csv_path, run.rows)
    summary_path = out_dir / "summary.json"
    extra = {
        "config": {
            "method": config.method,
            "score_mass": config.score_mass,
            "keep_fraction": config.keep_fraction,
            "sim_weight": config.sim_weight,
            "temperature": config.temperature,
            "mask_threshold": config.mask_threshold,
            "budget": config.budget,
            "score_mode": config.score_mode,
            "on_empty_mask": config.on_empty_mask,
            "seed": config.seed,
        }
    }
    summary_path.write_text(metrics.summary_json(run.report, extra))
    return csv_path, summary_path
