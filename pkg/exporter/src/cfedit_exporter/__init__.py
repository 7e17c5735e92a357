"""Offline data preparation for the cfedit engine.

Extracts split-point feature maps from a torchvision backbone, builds
keypoint-prompted segmentation masks, dumps the pooled-affine head, and writes
bundle directories in the engine's CFT1/manifest format. All deep-model and
segmentation dependencies live here; the engine never imports them.
"""
from cfedit_exporter.cft1 import read_cft1, write_cft1
from cfedit_exporter.export import ExportJob, ExportReport, export_bundles, load_index
from cfedit_exporter.features import FeatureExtractor
from cfedit_exporter.segmenter import (FullSegmenter, KeypointDiskSegmenter,
                                       PromptSegmenter)

__version__ = "0.1.0"

__all__ = [
    "ExportJob", "ExportReport", "export_bundles", "load_index",
    "FeatureExtractor", "PromptSegmenter", "KeypointDiskSegmenter",
    "FullSegmenter", "read_cft1", "write_cft1", "__version__",
]
