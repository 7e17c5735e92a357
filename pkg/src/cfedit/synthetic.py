"""Seeded synthetic bundle generation for tests, benchmarks, and sweeps.

Variants:

* ``random`` -- positive random features (so attribution covers every masked
  cell), Bernoulli masks of configurable density, random head. Used for
  candidate-accounting checks.
* ``flat`` -- constant attribution and all-ones masks: with thresholds at 1
  the engine's candidate order degenerates to the exhaustive baseline's.
* ``planted`` -- one hidden single-edit flip whose query cell carries the top
  attribution weight; verified by brute force over every edit combination at
  generation time. Signal strength and scan position move together so that
  instances with larger probability jumps are found after fewer evaluations.
* ``sweep`` -- failure-prone fixtures for threshold sweeps: the class flip
  requires low-ranked query cells (lost when the score-mass threshold drops)
  while a controlled number of decoy cells pads the similarity ranking.

Every instance is reproducible from (seed, index).
"""
from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from cfedit.attribution import compute_attribution
from cfedit.bundle import ImageEntry, TensorBundle, load_bundle, save_bundle
from cfedit.metrics import Keypoint, KeypointSet
from cfedit.search import ClassifierHead, classify
from cfedit.tensors import FeatureMap, GridMap

VARIANTS = ("random", "flat", "planted", "sweep")

_IMAGE_SIDE = 224  # nominal source-image size for synthetic keypoints


class GenerationError(RuntimeError):
    """A generated instance violated its construction guarantees."""


def _keypoints(rng: np.random.Generator, n_parts: int = 5) -> KeypointSet:
    n = int(rng.integers(3, 7))
    pts = tuple(
        Keypoint(
            part=int(rng.integers(0, n_parts)),
            x=float(rng.uniform(0, _IMAGE_SIDE)),
            y=float(rng.uniform(0, _IMAGE_SIDE)),
            visible=bool(rng.random() < 0.9),
        )
        for _ in range(n)
    )
    return KeypointSet(_IMAGE_SIDE, _IMAGE_SIDE, pts)


def _ones_mask(h: int, w: int) -> GridMap:
    return GridMap(h, w, np.ones((h, w), dtype=np.float32), binary=True)


def _bernoulli_mask(rng: np.random.Generator, h: int, w: int, density: float) -> GridMap:
    data = (rng.random((h, w)) < density).astype(np.float32)
    if data.sum() == 0:  # keep masks non-empty; a dead instance helps nobody
        data.flat[int(rng.integers(0, h * w))] = 1.0
    return GridMap(h, w, data, binary=True)


def _entry(image_id, class_index, features, mask, rng) -> ImageEntry:
    return ImageEntry(
        image_id=image_id,
        class_index=class_index,
        features=features,
        mask=mask,
        keypoints=_keypoints(rng),
    )


def _brute_force_flips(head, query_features, distractor_features, target):
    """Every (query cell, distractor, distractor cell) whose single edit flips."""
    flips = []
    cells = query_features.cells
    for i in range(query_features.n_cells):
        base = cells.copy()
        for did, dfeat in enumerate(distractor_features):
            for j in range(dfeat.n_cells):
                base[i] = dfeat.cells[j]
                edited = FeatureMap(query_features.height, query_features.width,
                                    query_features.channels, base)
                if int(np.argmax(classify(head, edited))) == target:
                    flips.append((i, did, j))
        base[i] = cells[i]
    return flips


def _identity_head(n_classes: int, channels: int) -> ClassifierHead:
    w = np.zeros((n_classes, channels), dtype=np.float32)
    w[np.arange(n_classes), np.arange(n_classes)] = 1.0
    return ClassifierHead(n_classes, channels, w, np.zeros(n_classes, dtype=np.float32))


def _gen_random(rng, h, w, d, n_classes, n_distractors, mask_density):
    hw = h * w
    weights = rng.standard_normal((n_classes, d)).astype(np.float32)
    for c in range(n_classes):  # positive features need one positive weight per row
        while not (weights[c] > 0).any():
            weights[c] = rng.standard_normal(d).astype(np.float32)
    head = ClassifierHead(n_classes, d, weights, np.zeros(n_classes, dtype=np.float32))

    def positive_features():
        data = (np.abs(rng.standard_normal((hw, d))) + 0.05).astype(np.float32)
        return FeatureMap(h, w, d, data)

    c = int(rng.integers(0, n_classes))
    cf = int((c + 1 + rng.integers(0, n_classes - 1)) % n_classes)
    query = _entry("query", c, positive_features(),
                   _bernoulli_mask(rng, h, w, mask_density), rng)
    distractors = [
        _entry(f"dist{k}", cf, positive_features(),
               _bernoulli_mask(rng, h, w, mask_density), rng)
        for k in range(n_distractors)
    ]
    return query, distractors, head


def _gen_flat(rng, h, w, d, n_classes, n_distractors):
    """Uniform attribution: channel 0 carries it and is constant over cells."""
    hw = h * w
    weights = (0.5 * rng.standard_normal((n_classes, d))).astype(np.float32)
    c = int(rng.integers(0, n_classes))
    cf = int((c + 1 + rng.integers(0, n_classes - 1)) % n_classes)
    weights[c] = 0.0
    weights[c, 0] = 1.0

    qdata = (0.5 * rng.standard_normal((hw, d))).astype(np.float32)
    qdata[:, 0] = 1.0
    query_features = FeatureMap(h, w, d, qdata)

    mean = qdata.astype(np.float64).mean(axis=0)
    logits = weights.astype(np.float64) @ mean
    bias = np.zeros(n_classes, dtype=np.float32)
    others = np.delete(logits, c)
    bias[c] = float(others.max() - logits[c] + 0.2)  # start as class c, small margin
    head = ClassifierHead(n_classes, d, weights, bias)

    query = _entry("query", c, query_features, _ones_mask(h, w), rng)
    distractors = [
        _entry(f"dist{k}", cf,
               FeatureMap(h, w, d, (0.5 * rng.standard_normal((hw, d))).astype(np.float32)),
               _ones_mask(h, w), rng)
        for k in range(n_distractors)
    ]
    return query, distractors, head


def _gen_planted(rng, h, w, d, n_classes, n_distractors):
    """One distinguished edit flips the class; everything else is inert.

    The flipping query cell gets the largest attribution weight, and the
    flipping distractor cell dominates the similarity ranking, so the pruned
    search finds it immediately. Strength ``s`` simultaneously raises the
    probability jump and moves the flip earlier in ascending scan order.
    """
    if d < n_classes:
        raise ValueError("planted variant needs channels >= classes")
    hw = h * w
    head = _identity_head(n_classes, d)
    c = int(rng.integers(0, n_classes))
    cf = int((c + 1 + rng.integers(0, n_classes - 1)) % n_classes)
    s = float(rng.random())
    y = 3.0 * s

    qdata = np.zeros((hw, d), dtype=np.float64)
    qdata[:, c] = 1.0 + 0.02 * rng.random(hw)
    star = min(int((1.0 - s) * hw), hw - 1)  # scan position falls as strength rises
    qdata[star, c] = 1.2 + y
    if d > n_classes:
        qdata[:, n_classes:] = 0.02 * rng.standard_normal((hw, d - n_classes))

    total_c = float(qdata[:, c].sum())
    align = 1.0
    jump = 0.6 * (0.18 + y) / hw
    flip_value = total_c - float(qdata[star, c]) + align + hw * jump

    slot = int(rng.integers(0, n_distractors * hw))
    ddata = []
    for k in range(n_distractors):
        mat = np.zeros((hw, d), dtype=np.float64)
        mat[:, cf] = 0.01 * rng.random(hw)
        if d > n_classes:
            mat[:, n_classes:] = 0.02 * rng.standard_normal((hw, d - n_classes))
        ddata.append(mat)
    ddata[slot // hw][slot % hw, c] = align
    ddata[slot // hw][slot % hw, cf] = flip_value

    query_features = FeatureMap(h, w, d, qdata.astype(np.float32))
    distractor_features = [FeatureMap(h, w, d, m.astype(np.float32)) for m in ddata]

    if int(np.argmax(classify(head, query_features))) != c:
        raise GenerationError("planted instance does not start as the query class")
    attribution = compute_attribution(query_features, head.class_weights(), c)
    if int(np.argmax(attribution.flat)) != star:
        raise GenerationError("planted cell does not carry the top attribution")
    flips = _brute_force_flips(head, query_features, distractor_features, cf)
    if flips != [(star, slot // hw, slot % hw)]:
        raise GenerationError(f"planted instance must flip exactly once, got {flips}")

    query = _entry("query", c, query_features, _ones_mask(h, w), rng)
    distractors = [_entry(f"dist{k}", cf, f, _ones_mask(h, w), rng)
                   for k, f in enumerate(distractor_features)]
    return query, distractors, head


def _gen_sweep(rng, h, w, d, n_classes, n_distractors):
    """Failure-prone fixture: the flip needs one specific low-ranked query cell.

    Query cells carry class-c mass ``a`` (which is also their attribution).
    One cell, at a per-instance attribution rank, additionally carries a large
    deficit on an auxiliary channel that feeds the target-class logit. Only
    replacing that cell can raise the target logit above class c: the deficit
    is sized so that even applying the target-mass distractor cell to every
    other query cell leaves the target logit below the worst class-c logit.
    Similarity lives on a separate channel, so a controlled number of decoy
    cells pads the ranking without touching the classification.
    """
    if d < n_classes + 2:
        raise ValueError("sweep variant needs channels >= classes + 2")
    hw = h * w
    slots = n_distractors * hw
    aux, sim_ch = n_classes, n_classes + 1
    c = int(rng.integers(0, n_classes))
    cf = int((c + 1 + rng.integers(0, n_classes - 1)) % n_classes)

    weights = np.zeros((n_classes, d), dtype=np.float32)
    weights[np.arange(n_classes), np.arange(n_classes)] = 1.0
    weights[cf, aux] = 1.0  # the target logit also reads the deficit channel
    head = ClassifierHead(n_classes, d, weights, np.zeros(n_classes, dtype=np.float32))

    a = 1.0 + 0.5 * rng.random(hw)
    order = np.argsort(-a)  # attribution rank, descending
    rank = int(rng.integers(1, hw + 1))
    needed = int(order[rank - 1])  # the only cell whose replacement can flip

    total_c = float(a.sum())
    flip_align = 0.45
    # Flip margin via the needed cell; the deficit makes every other edit
    # multiset (even stacking the flip cell's target mass onto all 16 query
    # cells) top out below the minimum achievable class-c logit.
    flip_value = total_c - float(a[needed]) + flip_align + hw * 0.08
    deficit = hw * flip_value - hw * 0.4 + 2.0

    qdata = np.zeros((hw, d), dtype=np.float64)
    qdata[:, c] = a
    qdata[needed, aux] = -deficit
    qdata[:, sim_ch] = 1.0

    n_decoys = int(rng.integers(0, 3))  # flip pair stays in the top ~7% by similarity
    chosen = rng.choice(slots, size=n_decoys + 1, replace=False)
    flip_slot, decoy_slots = int(chosen[0]), chosen[1:]

    ddata = []
    for k in range(n_distractors):
        mat = np.zeros((hw, d), dtype=np.float64)
        mat[:, c] = 0.4  # keeps class c ahead under any filler-only edit path
        mat[:, sim_ch] = 2.0 + 4.0 * rng.random(hw)
        ddata.append(mat)
    for slot in decoy_slots:
        ddata[slot // hw][slot % hw, c] = 0.6
        ddata[slot // hw][slot % hw, sim_ch] = 8.0
    ddata[flip_slot // hw][flip_slot % hw, c] = flip_align
    ddata[flip_slot // hw][flip_slot % hw, cf] = flip_value
    ddata[flip_slot // hw][flip_slot % hw, sim_ch] = 10.0

    query_features = FeatureMap(h, w, d, qdata.astype(np.float32))
    distractor_features = [FeatureMap(h, w, d, m.astype(np.float32)) for m in ddata]

    if int(np.argmax(classify(head, query_features))) != c:
        raise GenerationError("sweep instance does not start as the query class")
    attribution = compute_attribution(query_features, head.class_weights(), c)
    if int(np.argsort(-attribution.flat, kind="stable")[rank - 1]) != needed:
        raise GenerationError("needed cell is not at the planned attribution rank")
    flips = _brute_force_flips(head, query_features, distractor_features, cf)
    if flips != [(needed, flip_slot // hw, flip_slot % hw)]:
        raise GenerationError(
            f"sweep instance must flip exactly via the needed cell, got {flips}")

    query = _entry("query", c, query_features, _ones_mask(h, w), rng)
    distractors = [_entry(f"dist{k}", cf, f, _ones_mask(h, w), rng)
                   for k, f in enumerate(distractor_features)]
    return query, distractors, head


def generate_suite(
    out_dir,
    count: int,
    height: int = 4,
    width: int = 4,
    channels: int = 8,
    n_classes: int = 5,
    n_distractors: int = 2,
    seed: int = 0,
    variant: str = "random",
    mask_density: float = 1.0,
) -> list[Path]:
    """Write ``count`` bundles under ``out_dir``; returns the manifest paths."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if n_classes < 2:
        raise ValueError("need at least two classes")
    if not 0.0 < mask_density <= 1.0:
        raise ValueError(f"mask density must lie in (0, 1], got {mask_density}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifests = []
    for idx in range(count):
        rng = np.random.default_rng([seed, idx])
        if variant == "random":
            query, distractors, head = _gen_random(
                rng, height, width, channels, n_classes, n_distractors, mask_density)
        elif variant == "flat":
            query, distractors, head = _gen_flat(
                rng, height, width, channels, n_classes, n_distractors)
        elif variant == "planted":
            query, distractors, head = _gen_planted(
                rng, height, width, channels, n_classes, n_distractors)
        else:
            query, distractors, head = _gen_sweep(
                rng, height, width, channels, n_classes, n_distractors)
        instance_id = f"inst_{idx:04d}"
        query = dataclasses.replace(query, image_id=f"{instance_id}_query")
        distractors = [
            dataclasses.replace(d, image_id=f"{instance_id}_{d.image_id}")
            for d in distractors
        ]
        manifests.append(
            save_bundle(out_dir / instance_id, instance_id, query, distractors,
                        head, n_classes))
    return manifests


def load_suite(out_dir) -> list[TensorBundle]:
    from cfedit.bundle import discover_manifests

    return [load_bundle(p) for p in discover_manifests(out_dir)]
