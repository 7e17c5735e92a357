"""Greedy counterfactual editing plus the exhaustive and similarity-only baselines.

One round tentatively applies every un-edited candidate replacement, scores it
by the counterfactual-class probability (optionally blended with the pair's
similarity log-likelihood), and either accepts the first candidate that flips
the predicted class or applies the best-scoring one and continues. Tentative
evaluations run on the selected kernel backend; a tentative score is
bit-identical to classifying the materialized edit.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace
from functools import cached_property
from typing import TYPE_CHECKING

import numpy as np

from cfedit._kernels import kernel
from cfedit.attribution import (ChannelClassWeights, WeightedSemanticMap,
                                compute_attribution, weighted_semantic_map)
from cfedit.config import RunConfig
from cfedit.errors import (DegenerateInputError, DegenerateMaskError, FormatError,
                           NoCandidatesError)
from cfedit.sequencing import (EditUniverse, build_universe, score_cells,
                               select_query_cells)
from cfedit.similarity import (CandidatePair, pair_log_likelihoods,
                               top_fraction_indices)
from cfedit.tensors import FeatureMap, GridMap, bilinear_resize, binarize

if TYPE_CHECKING:
    from cfedit.bundle import TensorBundle

STATUS_FLIPPED = "flipped"
STATUS_BUDGET = "budget-exhausted"
STATUS_NO_CANDIDATES = "no-candidates"
STATUS_SKIPPED = "skipped"


@dataclass(frozen=True)
class ClassifierHead:
    """Pooled-affine classifier: softmax(W @ mean(cells) + b)."""

    n_classes: int
    channels: int
    weights: np.ndarray  # float32 (C, d)
    bias: np.ndarray  # float32 (C,)

    def __post_init__(self):
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float32))
        b = np.ascontiguousarray(np.asarray(self.bias, dtype=np.float32))
        if w.shape != (self.n_classes, self.channels):
            raise FormatError(
                f"head weights shape {w.shape} != ({self.n_classes}, {self.channels})")
        if b.shape != (self.n_classes,):
            raise FormatError(f"head bias shape {b.shape} != ({self.n_classes},)")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise FormatError("head contains non-finite values")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @classmethod
    def from_grid(cls, grid: GridMap) -> ClassifierHead:
        """Head from its file form: a (C, d+1) grid, last column the bias."""
        if grid.width < 2:
            raise FormatError("head grid needs at least one weight column plus bias")
        return cls(
            n_classes=grid.height,
            channels=grid.width - 1,
            weights=grid.data[:, :-1],
            bias=grid.data[:, -1],
        )

    def to_grid(self) -> GridMap:
        packed = np.concatenate([self.weights, self.bias[:, None]], axis=1)
        return GridMap(self.n_classes, self.channels + 1, packed)

    def class_weights(self) -> ChannelClassWeights:
        """Attribution weights of this head (its weight rows)."""
        return ChannelClassWeights(self.n_classes, self.channels, self.weights)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def classify(head: ClassifierHead, features: FeatureMap) -> np.ndarray:
    """Class probability vector for a feature map."""
    if features.channels != head.channels:
        raise ValueError(
            f"channel mismatch: features {features.channels}, head {head.channels}")
    return _softmax(kernel.pooled_logits(features.cells, head.weights, head.bias))


@dataclass(frozen=True)
class EditState:
    """Current features plus which cells were already replaced."""

    features: FeatureMap
    edited: np.ndarray  # bool per cell
    applied: tuple[CandidatePair, ...]
    trace: tuple[float, ...]  # target-class probability, initial + one per edit

    @classmethod
    def initial(cls, features: FeatureMap, initial_prob: float) -> EditState:
        edited = np.zeros(features.n_cells, dtype=bool)
        edited.setflags(write=False)
        return cls(features=features, edited=edited, applied=(), trace=(initial_prob,))


def apply_edit(
    state: EditState,
    pair: CandidatePair,
    replacement: np.ndarray,
    prob_after: float | None = None,
) -> EditState:
    """Replace one query cell's vector; each cell may be edited at most once.

    ``prob_after`` (the target-class probability of the edited map) keeps the
    probability trace aligned with the applied edits.
    """
    i = pair.query_cell
    if state.edited[i]:
        raise ValueError(f"cell {i} was already edited")
    cells = state.features.cells.copy()
    cells[i] = np.asarray(replacement, dtype=np.float32)
    fmap = FeatureMap(state.features.height, state.features.width,
                      state.features.channels, cells)
    edited = state.edited.copy()
    edited[i] = True
    edited.setflags(write=False)
    trace = state.trace if prob_after is None else state.trace + (float(prob_after),)
    return EditState(fmap, edited, state.applied + (pair,), trace)


@dataclass(frozen=True)
class SearchPlan:
    """Frozen candidate set for one instance, in greedy priority order.

    Kept candidates live in parallel arrays; CandidatePair objects are
    materialized on demand (per applied edit, or wholesale via ``pairs``).
    """

    universe: EditUniverse
    rows: np.ndarray  # int32 query cell per kept pair
    distractors: np.ndarray  # int32 distractor id per kept pair
    distractor_cells: np.ndarray  # int32 distractor cell per kept pair
    replacements: np.ndarray  # float32 (n, d) distractor vectors per kept pair
    sim: np.ndarray  # float64 log-likelihood per kept pair
    sim_weight: float
    score_mode: str
    mean_sim_loglik: float | None

    def __len__(self) -> int:
        return len(self.rows)

    def pair_at(self, k: int) -> CandidatePair:
        return CandidatePair(
            query_cell=int(self.rows[k]),
            distractor=int(self.distractors[k]),
            distractor_cell=int(self.distractor_cells[k]),
            sim_loglik=float(self.sim[k]),
        )

    @cached_property
    def pairs(self) -> tuple[CandidatePair, ...]:
        return tuple(self.pair_at(k) for k in range(len(self)))


@dataclass(frozen=True)
class GreedyStep:
    pair: CandidatePair
    state: EditState
    evaluations: int
    flipped: bool
    prob_after: float


@dataclass(frozen=True)
class CounterfactualResult:
    """Outcome of one counterfactual search."""

    instance_id: str
    status: str
    initial_class: int
    target_class: int
    applied: tuple[CandidatePair, ...]
    trace: tuple[float, ...]
    evaluations: int
    wall_time: float
    universe: EditUniverse | None

    @property
    def n_edits(self) -> int:
        return len(self.applied)


def _round(
    state: EditState,
    rows: np.ndarray,
    replacements: np.ndarray,
    sim: np.ndarray,
    pair_at,
    head: ClassifierHead,
    target: int,
    sim_weight: float,
    score_mode: str,
) -> GreedyStep | None:
    live = np.flatnonzero(~state.edited[rows])
    if live.size == 0:
        return None
    rows_live = np.ascontiguousarray(rows[live])
    repl_live = np.ascontiguousarray(replacements[live])
    n_evals, flip_pos, logits = kernel.evaluate_round(
        state.features.cells, rows_live, repl_live, head.weights, head.bias, target)
    probs = _softmax(logits)
    if flip_pos >= 0:
        chosen = flip_pos
    else:
        base = probs[:, target] if score_mode == "prob" else logits[:, target]
        scores = base + sim_weight * sim[live[:n_evals]]
        chosen = int(np.argmax(scores))  # first maximum, i.e. highest priority
    pair = pair_at(int(live[chosen]))
    base_chosen = probs[chosen, target] if score_mode == "prob" else logits[chosen, target]
    pair.combined_score = float(base_chosen + sim_weight * sim[live[chosen]])
    prob_after = float(probs[chosen, target])
    new_state = apply_edit(state, pair, repl_live[chosen], prob_after)
    return GreedyStep(pair=pair, state=new_state, evaluations=n_evals,
                      flipped=flip_pos >= 0, prob_after=prob_after)


def greedy_step(
    state: EditState,
    candidates,
    head: ClassifierHead,
    target: int,
    distractors,
    sim_weight: float = 0.0,
    score_mode: str = "prob",
) -> GreedyStep | None:
    """Run one greedy round over a candidate pair list.

    Candidates whose query cell is already edited are skipped. Returns None
    when nothing is left to try.
    """
    rows = np.array([p.query_cell for p in candidates], dtype=np.int32)
    if rows.size == 0:
        return None
    repl = np.stack(
        [distractors[p.distractor].cells[p.distractor_cell] for p in candidates]
    ).astype(np.float32)
    sim = np.array([p.sim_loglik for p in candidates], dtype=np.float64)
    return _round(state, rows, repl, sim, lambda k: candidates[k], head, target,
                  sim_weight, score_mode)


def _semantic_map_or_policy(bundle: TensorBundle, config: RunConfig) -> WeightedSemanticMap:
    attribution = compute_attribution(
        bundle.query.features, bundle.head.class_weights(), bundle.query.class_index)
    try:
        return weighted_semantic_map(bundle.query.mask, attribution, config.mask_threshold)
    except DegenerateMaskError:
        if config.on_empty_mask != "full":
            raise
        full = GridMap(attribution.height, attribution.width,
                       np.ones((attribution.height, attribution.width), dtype=np.float32),
                       binary=True)
        return WeightedSemanticMap(values=attribution, mask=full)


def _distractor_gates(bundle: TensorBundle, config: RunConfig) -> list[GridMap]:
    h, w = bundle.grid_height, bundle.grid_width
    return [binarize(bilinear_resize(d.mask, h, w), config.mask_threshold)
            for d in bundle.distractors]


def _full_grid(bundle: TensorBundle) -> GridMap:
    return GridMap(bundle.grid_height, bundle.grid_width,
                   np.ones((bundle.grid_height, bundle.grid_width), dtype=np.float32),
                   binary=True)


def prepare_search(bundle: TensorBundle, config: RunConfig) -> SearchPlan:
    """Build the candidate universe, similarity scores, and kept pair set.

    Raises DegenerateMaskError / DegenerateInputError / NoCandidatesError when
    the instance offers nothing to edit under the given configuration.
    """
    n_cells = bundle.grid_height * bundle.grid_width
    if config.method == "wsae":
        semantic = _semantic_map_or_policy(bundle, config)
        scored = score_cells(semantic)
        query_cells = select_query_cells(scored, config.score_mass)
        gates = _distractor_gates(bundle, config)
        sim_weight = config.sim_weight
        keep_fraction = config.keep_fraction
    elif config.method == "simonly":
        query_cells = np.arange(n_cells, dtype=np.int64)
        gates = [_full_grid(bundle) for _ in bundle.distractors]
        sim_weight = config.sim_weight
        keep_fraction = config.keep_fraction
    else:  # exhaustive
        query_cells = np.arange(n_cells, dtype=np.int64)
        gates = [_full_grid(bundle) for _ in bundle.distractors]
        sim_weight = 0.0
        keep_fraction = 1.0

    universe = build_universe(query_cells, gates)

    # kept-candidate arrays in priority order: query rank, distractor, position
    n_q = len(universe.query_cells)
    dist_cells = [d.features.cells for d in bundle.distractors]
    block_j = np.concatenate(universe.distractor_cells).astype(np.int32)
    block_did = np.concatenate([
        np.full(len(cells), did, dtype=np.int32)
        for did, cells in enumerate(universe.distractor_cells)])
    block_repl = np.concatenate([
        dist_cells[did][universe.distractor_cells[did]]
        for did in range(len(dist_cells))]).astype(np.float32)
    rows = np.repeat(universe.query_cells, universe.n_distractor).astype(np.int32)
    dids = np.tile(block_did, n_q)
    js = np.tile(block_j, n_q)
    repl = np.tile(block_repl, (n_q, 1))

    if config.method == "exhaustive":
        sim = np.zeros(len(rows), dtype=np.float64)
        mean_sim = None
    else:
        sim = pair_log_likelihoods(
            bundle.query.features, [d.features for d in bundle.distractors],
            universe, config.temperature)
        kept = top_fraction_indices(sim, rows, dids, js, keep_fraction)
        rows, dids, js = rows[kept], dids[kept], js[kept]
        repl, sim = repl[kept], sim[kept]
        mean_sim = float(sim.mean())

    return SearchPlan(universe=universe, rows=rows, distractors=dids,
                      distractor_cells=js, replacements=repl, sim=sim,
                      sim_weight=sim_weight, score_mode=config.score_mode,
                      mean_sim_loglik=mean_sim)


def run_counterfactual(bundle: TensorBundle, config: RunConfig | None = None) -> CounterfactualResult:
    """Full pipeline on one instance: plan, then greedy-edit until the class flips.

    Instances whose initial prediction is not the annotated query class are
    skipped. The edit budget defaults to one edit per grid cell.
    """
    config = config or RunConfig()
    start = time.perf_counter()
    target = bundle.counterfactual_class
    probs = classify(bundle.head, bundle.query.features)
    evaluations = 1
    trace = (float(probs[target]),)

    def result(status, state=None, universe=None):
        return CounterfactualResult(
            instance_id=bundle.instance_id,
            status=status,
            initial_class=bundle.query.class_index,
            target_class=target,
            applied=state.applied if state else (),
            trace=state.trace if state else trace,
            evaluations=evaluations,
            wall_time=time.perf_counter() - start,
            universe=universe,
        )

    if int(np.argmax(probs)) != bundle.query.class_index:
        return result(STATUS_SKIPPED)

    try:
        plan = prepare_search(bundle, config)
    except (DegenerateMaskError, DegenerateInputError, NoCandidatesError):
        return result(STATUS_NO_CANDIDATES)

    state = EditState.initial(bundle.query.features, trace[0])
    budget = config.budget if config.budget is not None else bundle.query.features.n_cells
    status = STATUS_BUDGET
    while len(state.applied) < budget:
        step = _round(state, plan.rows, plan.replacements, plan.sim, plan.pair_at,
                      bundle.head, target, plan.sim_weight, plan.score_mode)
        if step is None:
            status = STATUS_NO_CANDIDATES
            break
        evaluations += step.evaluations
        state = step.state
        if step.flipped:
            status = STATUS_FLIPPED
            break
    return result(status, state=state, universe=plan.universe)


def baseline_exhaustive(bundle: TensorBundle, config: RunConfig | None = None) -> CounterfactualResult:
    """Plain scan baseline: every cell pair, ascending order, no pruning, no masks."""
    base = config or RunConfig()
    return run_counterfactual(bundle, replace(base, method="exhaustive"))


def baseline_similarity_only(bundle: TensorBundle, config: RunConfig | None = None) -> CounterfactualResult:
    """Similarity top-fraction pruning without semantic masks or score ranking."""
    base = config or RunConfig()
    return run_counterfactual(bundle, replace(base, method="simonly"))
