"""CFT1 tensor files plus the bundle manifest and keypoint JSON layouts.

These mirror the engine's on-disk interface: magic "CFT1", little-endian u32
ndim, u32 dims, row-major float32 payload; manifests and keypoints are JSON.
The exporter deliberately owns its own implementation so it never imports the
engine.
"""
from __future__ import annotations

import json
import math
import struct

import numpy as np

MAGIC = b"CFT1"


def write_cft1(path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype="<f4")
    if array.ndim not in (2, 3):
        raise ValueError(f"CFT1 stores 2-d or 3-d tensors, got ndim={array.ndim}")
    if not np.isfinite(array).all():
        raise ValueError("refusing to write non-finite values")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", array.ndim))
        for dim in array.shape:
            fh.write(struct.pack("<I", dim))
        fh.write(array.tobytes())


def read_cft1(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not a CFT1 file")
        ndim = struct.unpack("<I", fh.read(4))[0]
        dims = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
        payload = fh.read()
    if len(payload) != 4 * math.prod(dims):
        raise ValueError(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


def keypoints_payload(image_height: int, image_width: int, points) -> dict:
    return {
        "image": {"H": image_height, "W": image_width},
        "points": [
            {"part": int(p["part"]), "x": float(p["x"]), "y": float(p["y"]),
             "visible": bool(p.get("visible", True))}
            for p in points
        ],
    }


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)


def manifest_payload(instance_id, n_classes, grid_hwd, query_record,
                     distractor_records, head_file) -> dict:
    h, w, d = grid_hwd
    return {
        "id": instance_id,
        "classes": n_classes,
        "grid": {"H": h, "W": w, "d": d},
        "query": query_record,
        "distractors": distractor_records,
        "head": head_file,
    }
