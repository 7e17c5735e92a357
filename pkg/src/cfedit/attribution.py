"""Class attribution maps and their restriction to the segmented object.

The attribution map weights each feature cell by a ReLU-gated channel sum
using per-(class, channel) weights. Multiplying it with the resized, binarized
segmentation mask yields the weighted semantic map that drives cell ranking:
cells outside the object contribute exactly zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cfedit.errors import DegenerateMaskError, FormatError
from cfedit.tensors import FeatureMap, GridMap, bilinear_resize, binarize


@dataclass(frozen=True)
class ChannelClassWeights:
    """Per-class channel attribution weights, a (C, d) matrix.

    For the pooled-affine classifier head these are the head's weight rows;
    exporters for deep models may ship CAM-style weights instead.
    """

    n_classes: int
    channels: int
    values: np.ndarray  # float32 (C, d)

    def __post_init__(self):
        a = np.asarray(self.values, dtype=np.float32)
        if a.shape != (self.n_classes, self.channels):
            raise FormatError(
                f"class weights shape {a.shape} != ({self.n_classes}, {self.channels})")
        if not np.isfinite(a).all():
            raise FormatError("class weights contain non-finite values")
        a = np.ascontiguousarray(a)
        a.setflags(write=False)
        object.__setattr__(self, "values", a)


@dataclass(frozen=True)
class WeightedSemanticMap:
    """Attribution restricted to the object mask; zero outside the mask."""

    values: GridMap
    mask: GridMap  # the binarized mask the values were gated with

    @property
    def height(self) -> int:
        return self.values.height

    @property
    def width(self) -> int:
        return self.values.width


def compute_attribution(f: FeatureMap, b: ChannelClassWeights, class_index: int) -> GridMap:
    """Per-cell attribution for one class: relu(sum_k relu(b[c,k]) * f[cell,k])."""
    if not 0 <= class_index < b.n_classes:
        raise ValueError(f"class index {class_index} out of range for {b.n_classes} classes")
    if f.channels != b.channels:
        raise ValueError(f"channel mismatch: features {f.channels}, weights {b.channels}")
    w = np.maximum(b.values[class_index].astype(np.float64), 0.0)
    raw = f.cells.astype(np.float64) @ w
    out = np.maximum(raw, 0.0).astype(np.float32).reshape(f.height, f.width)
    return GridMap(f.height, f.width, out)


def weighted_semantic_map(
    mask: GridMap, attribution: GridMap, mask_threshold: float = 0.5
) -> WeightedSemanticMap:
    """Gate an attribution map with a segmentation mask.

    The mask is bilinearly resized to the attribution grid and binarized at
    ``mask_threshold`` (strictly greater-than), then multiplied in. Raises
    DegenerateMaskError when no cell survives binarization.
    """
    resized = bilinear_resize(mask, attribution.height, attribution.width)
    gate = binarize(resized, mask_threshold)
    n_on = int(gate.data.sum())
    if n_on == 0:
        raise DegenerateMaskError(
            f"mask is empty after resize to ({attribution.height}, {attribution.width}) "
            f"and binarization at {mask_threshold}",
            total_cells=attribution.n_cells,
        )
    gated = (gate.data * attribution.data).astype(np.float32)
    return WeightedSemanticMap(
        values=GridMap(attribution.height, attribution.width, gated), mask=gate)
