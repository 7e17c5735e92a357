"""Prompt-based segmentation for mask export.

The engine only needs a binary object mask at image resolution. Heavyweight
promptable segmentation models plug in through the ``PromptSegmenter``
protocol; the default implementation is deterministic and dependency-free: the
union of disks around the visible keypoint prompts, with the radius scaled to
the image diagonal.
"""
from __future__ import annotations

from typing import Protocol

import numpy as np


class PromptSegmenter(Protocol):
    def segment(self, height: int, width: int, points: list[dict]) -> np.ndarray:
        """Binary float32 (H, W) mask from keypoint prompts in pixel space."""


class KeypointDiskSegmenter:
    """Union of disks centered on the visible keypoints."""

    def __init__(self, radius_fraction: float = 0.18):
        if radius_fraction <= 0:
            raise ValueError("radius fraction must be positive")
        self.radius_fraction = radius_fraction

    def segment(self, height: int, width: int, points: list[dict]) -> np.ndarray:
        visible = [p for p in points if p.get("visible", True)]
        mask = np.zeros((height, width), dtype=np.float32)
        if not visible:
            return mask
        radius = self.radius_fraction * float(np.hypot(height, width))
        ys = np.arange(height, dtype=np.float64)[:, None]
        xs = np.arange(width, dtype=np.float64)[None, :]
        for p in visible:
            inside = (ys - float(p["y"])) ** 2 + (xs - float(p["x"])) ** 2 <= radius ** 2
            mask[inside] = 1.0
        return mask


class FullSegmenter:
    """Everything is foreground; useful when no segmentation is wanted."""

    def segment(self, height: int, width: int, points: list[dict]) -> np.ndarray:
        return np.ones((height, width), dtype=np.float32)


SEGMENTERS = {
    "disk": KeypointDiskSegmenter,
    "full": FullSegmenter,
}
