"""Keypoint-based semantics metrics and batch reporting.

Near-KP counts edits whose query and distractor cells each contain at least
one visible keypoint; Same-KP additionally requires a shared part id. The
probability-delta metric averages the per-edit gain in counterfactual-class
probability. Reports aggregate a batch of search results into CSV rows and a
structured summary.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

from cfedit.errors import FormatError, UndefinedMetricError

CSV_COLUMNS = ("instance_id", "status", "n_edits", "apd", "time_ms",
               "evaluations", "near_kp", "same_kp")


@dataclass(frozen=True)
class Keypoint:
    part: int
    x: float
    y: float
    visible: bool


@dataclass(frozen=True)
class KeypointSet:
    """Keypoints of one image plus the image dimensions they live in."""

    image_height: int
    image_width: int
    points: tuple[Keypoint, ...]

    def __post_init__(self):
        if self.image_height < 1 or self.image_width < 1:
            raise FormatError(
                f"image dims must be >= 1, got ({self.image_height}, {self.image_width})")
        for p in self.points:
            if p.visible and not (0 <= p.x <= self.image_width and 0 <= p.y <= self.image_height):
                raise FormatError(
                    f"visible keypoint ({p.x}, {p.y}) outside "
                    f"{self.image_width}x{self.image_height} image")

    def visible_points(self) -> tuple[Keypoint, ...]:
        return tuple(p for p in self.points if p.visible)


def cell_of(kp: Keypoint, image_height: int, image_width: int,
            grid_height: int, grid_width: int) -> int:
    """Grid cell containing a pixel keypoint, half-open bins, clamped at edges."""
    row = min(int(math.floor(kp.y / image_height * grid_height)), grid_height - 1)
    col = min(int(math.floor(kp.x / image_width * grid_width)), grid_width - 1)
    return max(row, 0) * grid_width + max(col, 0)


def _cells_with_parts(kps: KeypointSet, grid_h: int, grid_w: int) -> dict[int, set[int]]:
    cells: dict[int, set[int]] = {}
    for p in kps.visible_points():
        c = cell_of(p, kps.image_height, kps.image_width, grid_h, grid_w)
        cells.setdefault(c, set()).add(p.part)
    return cells


def _edit_flags(results, keypoints, grid_h: int, grid_w: int):
    """Yield (near, same) per applied edit across the batch.

    ``keypoints`` maps image id -> KeypointSet for queries and distractors.
    """
    for res in results:
        q_cells = _cells_with_parts(keypoints[res.query_id], grid_h, grid_w)
        for pair in res.applied:
            d_id = res.distractor_ids[pair.distractor]
            d_cells = _cells_with_parts(keypoints[d_id], grid_h, grid_w)
            q_parts = q_cells.get(pair.query_cell)
            d_parts = d_cells.get(pair.distractor_cell)
            near = q_parts is not None and d_parts is not None
            same = near and bool(q_parts & d_parts)
            yield near, same


def near_kp(results, keypoints, grid_h: int, grid_w: int) -> float:
    """Fraction of edits where both edited cells contain a visible keypoint."""
    flags = [n for n, _ in _edit_flags(results, keypoints, grid_h, grid_w)]
    return sum(flags) / len(flags) if flags else 0.0


def same_kp(results, keypoints, grid_h: int, grid_w: int) -> float:
    """Fraction of edits whose edited cells share a keypoint part id."""
    flags = [s for _, s in _edit_flags(results, keypoints, grid_h, grid_w)]
    return sum(flags) / len(flags) if flags else 0.0


def apd(trace) -> float:
    """Average per-edit probability gain: (trace[n] - trace[0]) / n."""
    n = len(trace) - 1
    if n < 1:
        raise UndefinedMetricError("probability delta needs at least one edit")
    return (trace[-1] - trace[0]) / n


@dataclass(frozen=True)
class MetricsReport:
    near_kp: float
    same_kp: float
    mean_edits: float
    apd: float
    n_cfs: int
    n_instances: int
    total_time: float
    reduction_ratio: float
    mode: str


@dataclass(frozen=True)
class BatchItem:
    """One search outcome with the identifiers the metrics need."""

    instance_id: str
    status: str
    applied: tuple
    trace: tuple
    evaluations: int
    wall_time: float
    query_id: str
    distractor_ids: tuple[str, ...]
    universe: object | None


def _single_edit_view(item: BatchItem) -> BatchItem:
    applied = item.applied[:1]
    return BatchItem(item.instance_id, item.status, applied,
                     item.trace[: len(applied) + 1], item.evaluations,
                     item.wall_time, item.query_id, item.distractor_ids,
                     item.universe)


def report(batch, keypoints, grid_h: int, grid_w: int, mode: str = "all") -> MetricsReport:
    """Aggregate a batch of BatchItems.

    Mode "all" scores flipped instances over their whole edit sequence; mode
    "single" scores only the first edit of every instance that edited at all,
    with no flip requirement.
    """
    if not batch:
        raise UndefinedMetricError("no results to report")
    if mode not in ("all", "single"):
        raise ValueError(f"mode must be 'all' or 'single', got {mode!r}")
    flipped = [b for b in batch if b.status == "flipped"]
    if mode == "all":
        scored = flipped
    else:
        scored = [_single_edit_view(b) for b in batch if b.applied]
    near = near_kp(scored, keypoints, grid_h, grid_w)
    same = same_kp(scored, keypoints, grid_h, grid_w)
    mean_edits = (sum(len(b.applied) for b in flipped) / len(flipped)) if flipped else math.nan
    apds = [apd(b.trace) for b in flipped if len(b.trace) > 1]
    mean_apd = sum(apds) / len(apds) if apds else math.nan
    ratios = [b.universe.reduction_ratio for b in batch if b.universe is not None]
    ratio = sum(ratios) / len(ratios) if ratios else math.nan
    return MetricsReport(
        near_kp=near, same_kp=same, mean_edits=mean_edits, apd=mean_apd,
        n_cfs=len(flipped), n_instances=len(batch),
        total_time=sum(b.wall_time for b in batch),
        reduction_ratio=ratio, mode=mode)


def csv_row(item: BatchItem, keypoints, grid_h: int, grid_w: int) -> dict:
    """Per-instance CSV row; keypoint fractions cover this instance's edits."""
    n = len(item.applied)
    try:
        row_apd = apd(item.trace) if item.status == "flipped" else math.nan
    except UndefinedMetricError:
        row_apd = math.nan
    return {
        "instance_id": item.instance_id,
        "status": item.status,
        "n_edits": n,
        "apd": f"{row_apd:.9g}" if not math.isnan(row_apd) else "",
        "time_ms": f"{item.wall_time * 1000.0:.3f}",
        "evaluations": item.evaluations,
        "near_kp": f"{near_kp([item], keypoints, grid_h, grid_w):.6f}" if n else "",
        "same_kp": f"{same_kp([item], keypoints, grid_h, grid_w):.6f}" if n else "",
    }


def write_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def summary_text(rep: MetricsReport) -> str:
    buf = io.StringIO()
    buf.write(f"instances   {rep.n_instances}\n")
    buf.write(f"flipped     {rep.n_cfs}\n")
    buf.write(f"near_kp     {rep.near_kp:.4f}\n")
    buf.write(f"same_kp     {rep.same_kp:.4f}\n")
    buf.write(f"mean_edits  {rep.mean_edits:.4f}\n")
    buf.write(f"apd         {rep.apd:.4f}\n")
    buf.write(f"reduction   {rep.reduction_ratio:.4f}\n")
    buf.write(f"total_time  {rep.total_time:.3f}s\n")
    return buf.getvalue()


def summary_json(rep: MetricsReport, extra: dict | None = None) -> str:
    payload = {
        "mode": rep.mode,
        "n_instances": rep.n_instances,
        "n_cfs": rep.n_cfs,
        "near_kp": rep.near_kp,
        "same_kp": rep.same_kp,
        "mean_edits": None if math.isnan(rep.mean_edits) else rep.mean_edits,
        "apd": None if math.isnan(rep.apd) else rep.apd,
        "reduction_ratio": None if math.isnan(rep.reduction_ratio) else rep.reduction_ratio,
        "total_time_s": rep.total_time,
    }
    if extra:
        payload.update(extra)
    return json.dumps(payload, indent=2, sort_keys=True)
