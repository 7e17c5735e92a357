import numpy as np
import pytest

from cfedit.bundle import ImageEntry, TensorBundle
from cfedit.metrics import Keypoint, KeypointSet
from cfedit.search import ClassifierHead
from cfedit.tensors import FeatureMap, GridMap


def make_head(weights, bias=None):
    w = np.asarray(weights, dtype=np.float32)
    b = np.zeros(w.shape[0], dtype=np.float32) if bias is None else np.asarray(
        bias, dtype=np.float32)
    return ClassifierHead(w.shape[0], w.shape[1], w, b)


def make_fmap(cells, h, w):
    a = np.asarray(cells, dtype=np.float32)
    return FeatureMap(h, w, a.shape[-1], a)


def ones_mask(h, w):
    return GridMap(h, w, np.ones((h, w), dtype=np.float32), binary=True)


def make_bundle(query_cells, distractor_cells_list, head, query_class, cf_class,
                h, w, query_mask=None, distractor_masks=None, keypoints=None,
                instance_id="test"):
    """In-memory bundle; cells are (H*W, d) arrays."""
    query = ImageEntry(
        image_id=f"{instance_id}_q",
        class_index=query_class,
        features=make_fmap(query_cells, h, w),
        mask=query_mask or ones_mask(h, w),
        keypoints=(keypoints or {}).get("query"),
    )
    distractors = []
    for k, cells in enumerate(distractor_cells_list):
        distractors.append(ImageEntry(
            image_id=f"{instance_id}_d{k}",
            class_index=cf_class,
            features=make_fmap(cells, h, w),
            mask=(distractor_masks or [None] * len(distractor_cells_list))[k]
            or ones_mask(h, w),
            keypoints=(keypoints or {}).get(f"dist{k}"),
        ))
    return TensorBundle(
        instance_id=instance_id,
        manifest_path=None,
        n_classes=head.n_classes,
        grid_height=h,
        grid_width=w,
        channels=query.features.channels,
        query=query,
        distractors=tuple(distractors),
        head=head,
    )


def kp(part, x, y, visible=True):
    return Keypoint(part=part, x=x, y=y, visible=visible)


def kpset(points, side=224):
    return KeypointSet(side, side, tuple(points))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
