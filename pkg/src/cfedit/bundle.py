"""Bundle manifests: loading, validation, and writing.

A bundle directory holds one manifest plus CFT1 tensor files and keypoint
JSON files for a query image, its distractor images, and the classifier head.
All paths in a manifest are resolved relative to the manifest's directory.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from cfedit.errors import FormatError
from cfedit.metrics import Keypoint, KeypointSet
from cfedit.search import ClassifierHead
from cfedit.tensors import FeatureMap, GridMap, read_tensor, write_tensor

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class ImageEntry:
    """One image's exported artifacts."""

    image_id: str
    class_index: int
    features: FeatureMap
    mask: GridMap
    keypoints: KeypointSet | None
    mask_full_fallback: bool = False


@dataclass(frozen=True)
class TensorBundle:
    """One counterfactual instance: query, distractors, head, and grid info."""

    instance_id: str
    manifest_path: Path
    n_classes: int
    grid_height: int
    grid_width: int
    channels: int
    query: ImageEntry
    distractors: tuple[ImageEntry, ...]
    head: ClassifierHead

    @property
    def counterfactual_class(self) -> int:
        return self.distractors[0].class_index

    @property
    def distractor_ids(self) -> tuple[str, ...]:
        return tuple(d.image_id for d in self.distractors)

    def keypoint_db(self) -> dict[str, KeypointSet]:
        """Image id -> keypoints; images without annotations get an empty set."""
        db = {}
        for entry in (self.query, *self.distractors):
            if entry.keypoints is not None:
                db[entry.image_id] = entry.keypoints
            else:
                db[entry.image_id] = KeypointSet(1, 1, ())
        return db


def read_keypoints(path) -> KeypointSet:
    with open(path) as fh:
        raw = json.load(fh)
    try:
        image = raw["image"]
        points = tuple(
            Keypoint(part=int(p["part"]), x=float(p["x"]), y=float(p["y"]),
                     visible=bool(p["visible"]))
            for p in raw["points"]
        )
        return KeypointSet(int(image["H"]), int(image["W"]), points)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed keypoints file ({exc})") from exc


def write_keypoints(path, kps: KeypointSet) -> None:
    payload = {
        "image": {"H": kps.image_height, "W": kps.image_width},
        "points": [
            {"part": p.part, "x": p.x, "y": p.y, "visible": p.visible}
            for p in kps.points
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)


def _resolve(base: Path, rel, field: str) -> Path:
    if not isinstance(rel, str) or not rel:
        raise FormatError(f"{base / MANIFEST_NAME}: field {field!r} must be a path string")
    path = base / rel
    if not path.exists():
        raise FormatError(f"manifest field {field!r}: path {path} does not exist")
    return path


def _load_entry(base: Path, raw: dict, field: str, grid: tuple[int, int, int]) -> ImageEntry:
    for key in ("id", "class", "features", "mask"):
        if key not in raw:
            raise FormatError(f"manifest {field} entry is missing key {key!r}")
    features = read_tensor(_resolve(base, raw["features"], f"{field}.features"))
    if not isinstance(features, FeatureMap):
        raise FormatError(f"{field}.features must be a 3-d tensor")
    h, w, d = grid
    if (features.height, features.width, features.channels) != (h, w, d):
        raise FormatError(
            f"{field}.features dims ({features.height}, {features.width}, "
            f"{features.channels}) do not match grid ({h}, {w}, {d})")
    mask = read_tensor(_resolve(base, raw["mask"], f"{field}.mask"))
    if not isinstance(mask, GridMap):
        raise FormatError(f"{field}.mask must be a 2-d tensor")
    keypoints = None
    if raw.get("keypoints"):
        keypoints = read_keypoints(_resolve(base, raw["keypoints"], f"{field}.keypoints"))
        kp_dims = (keypoints.image_height, keypoints.image_width)
        if (mask.height, mask.width) not in ((h, w), kp_dims):
            raise FormatError(
                f"{field}.mask dims ({mask.height}, {mask.width}) match neither the "
                f"grid ({h}, {w}) nor the source image {kp_dims}")
    return ImageEntry(
        image_id=str(raw["id"]),
        class_index=int(raw["class"]),
        features=features,
        mask=mask,
        keypoints=keypoints,
        mask_full_fallback=bool(raw.get("mask_full_fallback", False)),
    )


def load_bundle(manifest_path) -> TensorBundle:
    """Load and validate one bundle; raises FormatError naming the bad field."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    try:
        with open(manifest_path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: invalid JSON ({exc})") from exc
    for key in ("classes", "grid", "query", "distractors", "head"):
        if key not in raw:
            raise FormatError(f"{manifest_path}: manifest is missing key {key!r}")
    try:
        grid = (int(raw["grid"]["H"]), int(raw["grid"]["W"]), int(raw["grid"]["d"]))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{manifest_path}: grid must hold H, W, d") from exc
    n_classes = int(raw["classes"])

    query = _load_entry(base, raw["query"], "query", grid)
    if not raw["distractors"]:
        raise FormatError(f"{manifest_path}: at least one distractor is required")
    distractors = tuple(
        _load_entry(base, entry, f"distractors[{k}]", grid)
        for k, entry in enumerate(raw["distractors"])
    )

    head_grid = read_tensor(_resolve(base, raw["head"], "head"))
    if not isinstance(head_grid, GridMap):
        raise FormatError("head must be a 2-d tensor of dims (classes, channels + 1)")
    head = ClassifierHead.from_grid(head_grid)
    if head.n_classes != n_classes:
        raise FormatError(
            f"head has {head.n_classes} classes, manifest declares {n_classes}")
    if head.channels != grid[2]:
        raise FormatError(
            f"head has {head.channels} channels, grid declares {grid[2]}")

    for entry in (query, *distractors):
        if not 0 <= entry.class_index < n_classes:
            raise FormatError(
                f"image {entry.image_id!r} class {entry.class_index} out of range")
    cf_classes = {d.class_index for d in distractors}
    if len(cf_classes) != 1:
        raise FormatError(f"distractors span classes {sorted(cf_classes)}, expected one")
    if query.class_index in cf_classes:
        raise FormatError("distractor class must differ from the query class")

    return TensorBundle(
        instance_id=str(raw.get("id", query.image_id)),
        manifest_path=manifest_path,
        n_classes=n_classes,
        grid_height=grid[0],
        grid_width=grid[1],
        channels=grid[2],
        query=query,
        distractors=distractors,
        head=head,
    )


def discover_manifests(root) -> list[Path]:
    """All manifests under a directory, sorted for deterministic processing."""
    root = Path(root)
    if root.is_file():
        return [root]
    return sorted(root.rglob(MANIFEST_NAME))


def save_bundle(
    out_dir,
    instance_id: str,
    query: ImageEntry,
    distractors,
    head: ClassifierHead,
    n_classes: int,
) -> Path:
    """Write a bundle directory in the manifest layout ``load_bundle`` reads."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def dump_entry(entry: ImageEntry, stem: str) -> dict:
        write_tensor(out_dir / f"{stem}_features.cft", entry.features)
        write_tensor(out_dir / f"{stem}_mask.cft", entry.mask)
        record = {
            "id": entry.image_id,
            "class": entry.class_index,
            "features": f"{stem}_features.cft",
            "mask": f"{stem}_mask.cft",
            "keypoints": None,
        }
        if entry.keypoints is not None:
            write_keypoints(out_dir / f"{stem}_keypoints.json", entry.keypoints)
            record["keypoints"] = f"{stem}_keypoints.json"
        if entry.mask_full_fallback:
            record["mask_full_fallback"] = True
        return record

    q = query.features
    manifest = {
        "id": instance_id,
        "classes": n_classes,
        "grid": {"H": q.height, "W": q.width, "d": q.channels},
        "query": dump_entry(query, "query"),
        "distractors": [dump_entry(d, f"distractor_{k:02d}")
                        for k, d in enumerate(distractors)],
        "head": "head.cft",
    }
    write_tensor(out_dir / "head.cft", head.to_grid())
    path = out_dir / MANIFEST_NAME
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1)
    return path
