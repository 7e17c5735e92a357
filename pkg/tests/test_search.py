import numpy as np
import pytest
from conftest import make_bundle, make_fmap, make_head

from cfedit.config import RunConfig
from cfedit.search import (STATUS_BUDGET, STATUS_FLIPPED, STATUS_NO_CANDIDATES,
                           STATUS_SKIPPED, ClassifierHead, EditState, apply_edit,
                           baseline_exhaustive, baseline_similarity_only, classify,
                           greedy_step, prepare_search, run_counterfactual)
from cfedit.similarity import CandidatePair
from cfedit.tensors import GridMap


class TestClassifierHead:
    def test_grid_round_trip(self):
        head = make_head([[1.0, 2.0], [3.0, 4.0]], bias=[0.5, -0.5])
        again = ClassifierHead.from_grid(head.to_grid())
        assert np.array_equal(again.weights, head.weights)
        assert np.array_equal(again.bias, head.bias)

    def test_class_weights_are_head_rows(self):
        head = make_head([[1.0, -2.0]])
        assert np.array_equal(head.class_weights().values, head.weights)


class TestClassify:
    def test_zero_features_uniform(self):
        head = make_head(np.zeros((4, 3)))
        probs = classify(head, make_fmap(np.zeros((2, 3)), 1, 2))
        assert np.allclose(probs, 0.25, atol=1e-12)

    def test_bias_only(self):
        # scalar oracle: softmax([10, 0])
        head = make_head(np.zeros((2, 3)), bias=[10.0, 0.0])
        probs = classify(head, make_fmap(np.zeros((2, 3)), 1, 2))
        assert probs[0] == pytest.approx(0.9999546021312976, abs=1e-9)
        assert probs[1] == pytest.approx(4.5397868702434395e-05, abs=1e-9)

    def test_sums_to_one(self, rng):
        head = make_head(rng.standard_normal((5, 4)), bias=rng.standard_normal(5))
        probs = classify(head, make_fmap(rng.standard_normal((6, 4)), 2, 3))
        assert abs(probs.sum() - 1.0) <= 1e-9

    def test_channel_mismatch(self):
        head = make_head(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            classify(head, make_fmap(np.zeros((2, 2)), 1, 2))


class TestApplyEdit:
    def test_initial_state_is_query(self, rng):
        f = make_fmap(rng.standard_normal((4, 2)), 2, 2)
        state = EditState.initial(f, 0.1)
        assert state.features.data.tobytes() == f.data.tobytes()
        assert state.trace == (0.1,)

    def test_full_replacement_identity_mapping(self, rng):
        q = make_fmap(rng.standard_normal((4, 2)), 2, 2)
        d = make_fmap(rng.standard_normal((4, 2)), 2, 2)
        state = EditState.initial(q, 0.0)
        for i in range(4):
            pair = CandidatePair(query_cell=i, distractor=0, distractor_cell=i)
            state = apply_edit(state, pair, d.cells[i], prob_after=0.0)
        assert state.features.data.tobytes() == d.data.tobytes()

    def test_single_cell_example(self):
        q = make_fmap([[1.0], [2.0], [3.0], [4.0]], 2, 2)
        d = make_fmap([[5.0], [6.0], [7.0], [9.0]], 2, 2)
        state = EditState.initial(q, 0.0)
        pair = CandidatePair(query_cell=0, distractor=0, distractor_cell=3)
        state = apply_edit(state, pair, d.cells[3], prob_after=0.5)
        assert state.features.data.reshape(-1).tolist() == [9.0, 2.0, 3.0, 4.0]
        assert state.trace == (0.0, 0.5)

    def test_reedit_rejected(self):
        q = make_fmap([[1.0], [2.0]], 1, 2)
        state = EditState.initial(q, 0.0)
        pair = CandidatePair(query_cell=0, distractor=0, distractor_cell=1)
        state = apply_edit(state, pair, q.cells[1])
        with pytest.raises(ValueError, match="already edited"):
            apply_edit(state, pair, q.cells[1])


def two_cell_bundle():
    """1x2 grid, 1 channel pair (class 0 vs class 1)."""
    head = make_head([[1.0], [-1.0]])
    q = [[1.0], [1.0]]  # mean 1.0: class 0
    d = [[-5.0], [-3.0]]  # either cell flips to class 1
    return make_bundle(q, [d], head, query_class=0, cf_class=1, h=1, w=2)


class TestGreedyStep:
    def test_flip_accepts_first_in_priority(self):
        bundle = two_cell_bundle()
        state = EditState.initial(bundle.query.features, 0.0)
        candidates = [CandidatePair(0, 0, 0), CandidatePair(0, 0, 1),
                      CandidatePair(1, 0, 0)]
        step = greedy_step(state, candidates, bundle.head, target=1,
                           distractors=[d.features for d in bundle.distractors])
        assert step.flipped
        assert step.evaluations == 1
        assert step.pair is candidates[0]

    def test_no_flip_applies_argmax(self):
        head = make_head([[1.0], [-1.0]])
        q = [[4.0], [4.0]]
        d = [[3.0], [2.0]]  # neither flips; cell 1 lowers class-0 logit more
        bundle = make_bundle(q, [d], head, 0, 1, 1, 2)
        state = EditState.initial(bundle.query.features, 0.0)
        candidates = [CandidatePair(0, 0, 0), CandidatePair(0, 0, 1)]
        step = greedy_step(state, candidates, bundle.head, target=1,
                           distractors=[x.features for x in bundle.distractors])
        assert not step.flipped
        assert step.evaluations == 2
        assert step.pair is candidates[1]

    def test_skips_edited_cells_and_exhausts(self):
        bundle = two_cell_bundle()
        state = EditState.initial(bundle.query.features, 0.0)
        pair = CandidatePair(0, 0, 0)
        state = apply_edit(state, pair, bundle.distractors[0].features.cells[0])
        step = greedy_step(state, [pair], bundle.head, target=1,
                           distractors=[d.features for d in bundle.distractors])
        assert step is None

    def test_similarity_term_breaks_probability_tie(self):
        head = make_head([[1.0], [-1.0]])
        q = [[4.0], [4.0]]
        d = [[3.0], [3.0]]  # identical tentative probabilities
        bundle = make_bundle(q, [d], head, 0, 1, 1, 2)
        state = EditState.initial(bundle.query.features, 0.0)
        candidates = [CandidatePair(0, 0, 0, sim_loglik=-2.0),
                      CandidatePair(0, 0, 1, sim_loglik=-0.5)]
        step = greedy_step(state, candidates, bundle.head, target=1,
                           distractors=[x.features for x in bundle.distractors],
                           sim_weight=0.1)
        assert step.pair is candidates[1]


class TestRunCounterfactual:
    def test_planted_single_edit(self):
        bundle = two_cell_bundle()
        res = run_counterfactual(bundle, RunConfig(score_mass=1.0, keep_fraction=1.0))
        assert res.status == STATUS_FLIPPED
        assert res.n_edits == 1
        assert len(res.trace) == 2

    def test_flip_soundness(self):
        bundle = two_cell_bundle()
        res = run_counterfactual(bundle)
        state = EditState.initial(bundle.query.features, res.trace[0])
        for pair in res.applied:
            repl = bundle.distractors[pair.distractor].features.cells[pair.distractor_cell]
            state = apply_edit(state, pair, repl)
        final = classify(bundle.head, state.features)
        assert int(np.argmax(final)) == bundle.counterfactual_class
        assert final[bundle.counterfactual_class] == res.trace[-1]

    def test_budget_zero(self):
        res = run_counterfactual(two_cell_bundle(), RunConfig(budget=0))
        assert res.status == STATUS_BUDGET
        assert res.n_edits == 0
        assert res.evaluations == 1  # the initial classification

    def test_skipped_when_not_query_class(self):
        head = make_head([[1.0], [-1.0]])
        bundle = make_bundle([[-1.0], [-1.0]], [[[0.0], [0.0]]], head, 0, 1, 1, 2)
        res = run_counterfactual(bundle)
        assert res.status == STATUS_SKIPPED
        assert res.n_edits == 0

    def test_empty_mask_skip_policy(self):
        head = make_head([[1.0], [-1.0]])
        empty = GridMap(1, 2, np.zeros((1, 2), dtype=np.float32), binary=True)
        bundle = make_bundle([[1.0], [1.0]], [[[-5.0], [-3.0]]], head, 0, 1, 1, 2,
                             query_mask=empty)
        res = run_counterfactual(bundle, RunConfig(on_empty_mask="skip"))
        assert res.status == STATUS_NO_CANDIDATES
        full = run_counterfactual(bundle, RunConfig(on_empty_mask="full"))
        assert full.status == STATUS_FLIPPED

    def test_candidate_pool_exhaustion(self):
        head = make_head([[1.0], [-1.0]])
        q = [[4.0], [4.0]]
        d = [[3.0], [3.5]]  # nothing flips, only two query cells to edit
        bundle = make_bundle(q, [d], head, 0, 1, 1, 2)
        res = run_counterfactual(bundle, RunConfig(budget=10, score_mass=1.0,
                                                   keep_fraction=1.0))
        assert res.status == STATUS_NO_CANDIDATES
        assert res.n_edits == 2

    def test_determinism(self):
        bundle = two_cell_bundle()
        a = run_counterfactual(bundle)
        b = run_counterfactual(bundle)
        assert a.trace == b.trace
        assert a.evaluations == b.evaluations
        assert [(p.query_cell, p.distractor, p.distractor_cell) for p in a.applied] == \
               [(p.query_cell, p.distractor, p.distractor_cell) for p in b.applied]

    def test_logit_score_mode_matches_prob_when_unweighted(self, rng):
        # softmax is monotone, so with no similarity term the two scoring
        # modes pick the same edits
        head = make_head(rng.standard_normal((3, 4)))
        q = rng.standard_normal((9, 4))
        d = rng.standard_normal((9, 4))
        bundle = make_bundle(q, [d], head, 0, 1, 3, 3)
        base = RunConfig(score_mass=1.0, keep_fraction=1.0, sim_weight=0.0)
        by_prob = run_counterfactual(bundle, base)
        by_logit = run_counterfactual(
            bundle, RunConfig(score_mass=1.0, keep_fraction=1.0, sim_weight=0.0,
                              score_mode="logit"))
        assert [(p.query_cell, p.distractor_cell) for p in by_prob.applied] == \
               [(p.query_cell, p.distractor_cell) for p in by_logit.applied]

    def test_trace_telescoping(self, rng):
        head = make_head(rng.standard_normal((3, 4)))
        q = rng.standard_normal((9, 4))
        d = rng.standard_normal((9, 4))
        bundle = make_bundle(q, [d], head, 0, 1, 3, 3)
        res = run_counterfactual(bundle, RunConfig(score_mass=1.0, keep_fraction=1.0))
        if len(res.trace) > 1:
            diffs = sum(res.trace[k] - res.trace[k - 1] for k in range(1, len(res.trace)))
            assert abs(diffs - (res.trace[-1] - res.trace[0])) <= 1e-12


class TestBaselines:
    def test_exhaustive_universe_is_full(self):
        bundle = two_cell_bundle()
        res = baseline_exhaustive(bundle)
        assert res.universe.n_combinations == res.universe.n_exhaustive == 4

    def test_exhaustive_eval_bound_per_round(self):
        head = make_head([[1.0], [-1.0]])
        q = np.full((9, 1), 4.0)
        d = np.full((9, 1), 3.0)
        bundle = make_bundle(q, [d], head, 0, 1, 3, 3)
        res = baseline_exhaustive(bundle, RunConfig(budget=1))
        assert res.evaluations <= 1 + 81

    def test_simonly_full_fraction_matches_exhaustive(self, rng):
        head = make_head(rng.standard_normal((3, 4)))
        q = rng.standard_normal((9, 4))
        d = rng.standard_normal((9, 4))
        bundle = make_bundle(q, [d], head, 0, 1, 3, 3)
        sim = baseline_similarity_only(bundle, RunConfig(keep_fraction=1.0, sim_weight=0.0))
        exh = baseline_exhaustive(bundle)
        assert [(p.query_cell, p.distractor_cell) for p in sim.applied] == \
               [(p.query_cell, p.distractor_cell) for p in exh.applied]
        assert sim.evaluations == exh.evaluations

    def test_simonly_fraction_halves_candidates(self, rng):
        head = make_head(rng.standard_normal((3, 4)))
        q = rng.standard_normal((9, 4))
        d = rng.standard_normal((9, 4))
        bundle = make_bundle(q, [d], head, 0, 1, 3, 3)
        plan = prepare_search(bundle, RunConfig(method="simonly", keep_fraction=0.5))
        assert len(plan.pairs) == 41  # ceil(0.5 * 81)

    def test_planted_flip_found_by_similarity_pruning(self):
        # channel 0 drives the classifier, channel 1 only the dot products
        head = make_head([[1.0, 0.0], [-1.0, 0.0]])
        q = np.column_stack([np.full(4, 2.0), np.ones(4)])
        d = np.column_stack([np.full(4, 1.9), np.zeros(4)])
        d[2] = [-9.0, 50.0]  # the only flipping cell ranks top by similarity
        bundle = make_bundle(q, [d], head, 0, 1, 2, 2)
        res = baseline_similarity_only(bundle, RunConfig(keep_fraction=0.5))
        assert res.status == STATUS_FLIPPED
        assert res.n_edits == 1


class TestPerRoundOptimality:
    def test_no_flip_rounds_pick_brute_force_argmax(self, rng):
        head = make_head(rng.standard_normal((3, 4)))
        q = rng.standard_normal((9, 4))
        d = rng.standard_normal((9, 4))
        bundle = make_bundle(q, [d], head, 0, 1, 3, 3)
        cfg = RunConfig(score_mass=1.0, keep_fraction=1.0, sim_weight=0.0, budget=4)
        res = run_counterfactual(bundle, cfg)
        plan = prepare_search(bundle, cfg)
        state = EditState.initial(bundle.query.features, res.trace[0])
        target = bundle.counterfactual_class
        n_rounds = res.n_edits - (1 if res.status == STATUS_FLIPPED else 0)
        for k, pair in enumerate(res.applied):
            if k >= n_rounds:
                break
            best_prob, best_pair = -1.0, None
            for cand in plan.pairs:
                if state.edited[cand.query_cell]:
                    continue
                repl = bundle.distractors[cand.distractor].features.cells[
                    cand.distractor_cell]
                trial = apply_edit(state, cand, repl)
                prob = classify(bundle.head, trial.features)[target]
                if prob > best_prob:
                    best_prob, best_pair = prob, cand
            assert (pair.query_cell, pair.distractor, pair.distractor_cell) == (
                best_pair.query_cell, best_pair.distractor, best_pair.distractor_cell)
            repl = bundle.distractors[pair.distractor].features.cells[pair.distractor_cell]
            state = apply_edit(state, pair, repl)
