"""Bundle export: dataset index + backbone -> engine-ready bundle directories.

One bundle per query image of the query class, pairing it with the first n
readable distractor images of the counterfactual class. Instance directories
are written to a temporary path and renamed into place, so a crash never
leaves a half-written bundle. Unreadable images and failed instances are
recorded in ``errors.json`` and the job continues.
"""
from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from cfedit_exporter.cft1 import (keypoints_payload, manifest_payload, write_cft1,
                                  write_json)
from cfedit_exporter.features import FeatureExtractor
from cfedit_exporter.segmenter import KeypointDiskSegmenter, PromptSegmenter


@dataclass
class ExportJob:
    dataset_root: Path
    index_file: Path
    model_name: str
    split_layer: str
    out_dir: Path
    query_class: int
    distractor_class: int
    n_distractors: int = 20
    image_size: int = 224
    head_mode: str = "auto"
    seed: int = 0
    weights_path: Path | None = None
    segmenter: PromptSegmenter = field(default_factory=KeypointDiskSegmenter)


@dataclass
class ExportReport:
    bundles: list[Path]
    errors: list[dict]


def load_index(path) -> list[dict]:
    with open(path) as fh:
        raw = json.load(fh)
    images = raw.get("images")
    if not isinstance(images, list):
        raise ValueError(f"{path}: index must hold an 'images' list")
    for entry in images:
        for key in ("id", "path", "class"):
            if key not in entry:
                raise ValueError(f"{path}: image entry missing {key!r}")
    return images


class _ImageCache:
    """Loads each image once; remembers failures for the errors file."""

    def __init__(self, root: Path, extractor: FeatureExtractor,
                 segmenter: PromptSegmenter):
        self.root = root
        self.extractor = extractor
        self.segmenter = segmenter
        self.cache: dict[str, dict] = {}
        self.errors: list[dict] = []

    def get(self, entry: dict) -> dict | None:
        image_id = str(entry["id"])
        if image_id in self.cache:
            return self.cache[image_id] or None
        path = self.root / entry["path"]
        try:
            with Image.open(path) as img:
                img.load()
                width, height = img.size
                features = self.extractor.extract(img)
        except Exception as exc:  # corrupt or unreadable image: skip, record
            self.errors.append({"id": image_id, "path": str(path), "error": str(exc)})
            self.cache[image_id] = None
            return None
        points = entry.get("keypoints") or []
        if points:
            mask = self.segmenter.segment(height, width, points)
            fallback = False
            if mask.sum() == 0:  # prompts all invisible: same fallback as missing
                mask[:] = 1.0
                fallback = True
        else:
            mask = np.ones((height, width), dtype=np.float32)
            fallback = True
        record = {
            "id": image_id,
            "class": int(entry["class"]),
            "features": features,
            "mask": mask,
            "points": points,
            "image_height": height,
            "image_width": width,
            "mask_full_fallback": fallback,
        }
        self.cache[image_id] = record
        return record


def _write_entry(out: Path, stem: str, record: dict) -> dict:
    write_cft1(out / f"{stem}_features.cft", record["features"])
    write_cft1(out / f"{stem}_mask.cft", record["mask"])
    manifest_entry = {
        "id": record["id"],
        "class": record["class"],
        "features": f"{stem}_features.cft",
        "mask": f"{stem}_mask.cft",
        "keypoints": None,
    }
    if record["points"]:
        write_json(out / f"{stem}_keypoints.json",
                   keypoints_payload(record["image_height"], record["image_width"],
                                     record["points"]))
        manifest_entry["keypoints"] = f"{stem}_keypoints.json"
    if record["mask_full_fallback"]:
        manifest_entry["mask_full_fallback"] = True
    return manifest_entry


def export_bundles(job: ExportJob) -> ExportReport:
    images = load_index(job.index_file)
    extractor = FeatureExtractor(
        job.model_name, job.split_layer, n_classes=_n_classes(images),
        image_size=job.image_size, weights_path=job.weights_path, seed=job.seed)
    cache = _ImageCache(Path(job.dataset_root), extractor, job.segmenter)
    out_root = Path(job.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)

    queries = [e for e in images if int(e["class"]) == job.query_class]
    distractor_entries = [e for e in images if int(e["class"]) == job.distractor_class]
    if job.query_class == job.distractor_class:
        raise ValueError("query and distractor class must differ")

    bundles = []
    instance_errors = []
    for entry in queries:
        query = cache.get(entry)
        if query is None:
            instance_errors.append(
                {"id": str(entry["id"]), "error": "query image unreadable"})
            continue
        distractors = []
        for d_entry in distractor_entries:
            if len(distractors) == job.n_distractors:
                break
            record = cache.get(d_entry)
            if record is not None:
                distractors.append(record)
        if not distractors:
            instance_errors.append(
                {"id": str(entry["id"]), "error": "no readable distractor images"})
            continue
        bundles.append(_write_bundle(job, out_root, query, distractors, extractor))

    errors = cache.errors + instance_errors
    if errors:
        write_json(out_root / "errors.json", {"errors": errors})
    return ExportReport(bundles=bundles, errors=errors)


def _n_classes(images) -> int:
    return max(int(e["class"]) for e in images) + 1


def _write_bundle(job: ExportJob, out_root: Path, query: dict, distractors,
                  extractor: FeatureExtractor) -> Path:
    instance_id = query["id"]
    final = out_root / instance_id
    tmp = out_root / f".tmp_{instance_id}"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)

    h, w, d = query["features"].shape
    head = extractor.pooled_head(d, head_mode=job.head_mode, seed=job.seed)
    write_cft1(tmp / "head.cft", head)

    query_record = _write_entry(tmp, "query", query)
    distractor_records = [
        _write_entry(tmp, f"distractor_{k:02d}", record)
        for k, record in enumerate(distractors)
    ]
    write_json(tmp / "manifest.json",
               manifest_payload(instance_id, extractor.n_classes, (h, w, d),
                                query_record, distractor_records, "head.cft"))

    if final.exists():
        shutil.rmtree(final)
    tmp.replace(final)
    return final
