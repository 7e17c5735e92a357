import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfedit.errors import NoCandidatesError
from cfedit.sequencing import build_universe
from cfedit.similarity import (CandidatePair, SimilarityConfig, enumerate_pairs,
                               filter_top_fraction, pair_log_likelihoods,
                               similarity_loss)
from cfedit.tensors import FeatureMap, GridMap


def fmap(cells):
    a = np.asarray(cells, dtype=np.float32)
    return FeatureMap(a.shape[0], 1, a.shape[1], a)


def universe_for(n_query, masks_cells):
    masks = []
    for n in masks_cells:
        masks.append(GridMap(n, 1, np.ones((n, 1), dtype=np.float32), binary=True))
    return build_universe(np.arange(n_query), masks)


class TestPairLogLikelihoods:
    def test_uniform_dots(self):
        q = fmap([[1.0, 0.0]])
        d = fmap([[0.0, 1.0], [0.0, 2.0], [0.0, 3.0], [0.0, -1.0]])
        u = universe_for(1, [4])
        out = pair_log_likelihoods(q, [d], u, temperature=0.1)
        assert np.allclose(out, math.log(0.25), atol=1e-12)

    def test_two_candidate_values(self):
        # scalar oracle: log(e/(e+1)) and log(1/(e+1))
        q = fmap([[1.0]])
        d = fmap([[1.0], [0.0]])
        u = universe_for(1, [2])
        out = pair_log_likelihoods(q, [d], u, temperature=1.0)
        assert out[0] == pytest.approx(-0.3132616875182228, abs=1e-12)
        assert out[1] == pytest.approx(-1.3132616875182228, abs=1e-12)

    def test_large_temperature_flattens(self):
        q = fmap([[1.0]])
        d = fmap([[5.0], [-3.0], [0.5]])
        u = universe_for(1, [3])
        out = pair_log_likelihoods(q, [d], u, temperature=1e6)
        assert np.allclose(out, math.log(1.0 / 3.0), atol=1e-6)

    def test_temperature_must_be_positive(self):
        q = fmap([[1.0]])
        with pytest.raises(ValueError):
            pair_log_likelihoods(q, [q], universe_for(1, [1]), temperature=0.0)

    def test_overflow_safe_and_normalized(self):
        q = fmap([[300.0], [1.0]])
        d = fmap([[3.0], [-2.0], [1.0]])
        u = universe_for(2, [3])
        out = pair_log_likelihoods(q, [d], u, temperature=0.1)
        assert np.isfinite(out).all()
        assert (out <= 0.0).all()
        per_cell = np.exp(out.reshape(2, 3)).sum(axis=1)
        assert np.allclose(per_cell, 1.0, atol=1e-6)

    def test_shift_invariance(self):
        # adding a constant to every dot of one query cell leaves it unchanged
        q = fmap([[1.0, 0.0]])
        base = np.array([[2.0, 0.0], [0.5, 0.0], [-1.0, 0.0]], dtype=np.float32)
        u = universe_for(1, [3])
        a = pair_log_likelihoods(q, [fmap(base)], u, temperature=0.7)
        shifted = base.copy()
        shifted[:, 0] += 11.25
        b = pair_log_likelihoods(q, [fmap(shifted)], u, temperature=0.7)
        assert np.allclose(a, b, atol=1e-9)

    def test_monotone_in_dot(self):
        q = fmap([[1.0]])
        d = fmap([[0.1], [0.7], [0.3]])
        u = universe_for(1, [3])
        out = pair_log_likelihoods(q, [d], u, temperature=0.25)
        assert out[1] > out[2] > out[0]

    def test_multi_distractor_denominator_spans_all(self):
        q = fmap([[1.0]])
        d1, d2 = fmap([[1.0]]), fmap([[1.0]])
        u = universe_for(1, [1, 1])
        out = pair_log_likelihoods(q, [d1, d2], u, temperature=1.0)
        assert np.allclose(out, math.log(0.5), atol=1e-12)


def pairs_with(logliks):
    out = []
    for k, ll in enumerate(logliks):
        out.append(CandidatePair(query_cell=k // 4, distractor=0,
                                 distractor_cell=k % 4, sim_loglik=ll))
    return out


class TestFilterTopFraction:
    def test_keep_all_is_identity(self):
        pairs = pairs_with([-0.5, -0.1, -0.9])
        assert filter_top_fraction(pairs, 1.0) == pairs

    def test_ceiling_count(self):
        pairs = pairs_with([-float(k) for k in range(10)])
        kept = filter_top_fraction(pairs, 0.2)
        assert len(kept) == 2
        assert [p.sim_loglik for p in kept] == [0.0, -1.0]

    def test_tie_break_order(self):
        pairs = pairs_with([-0.3, -0.3, -0.3])
        kept = filter_top_fraction(pairs, 0.34)  # ceil(1.02) = 2
        assert kept == pairs[:2]

    def test_original_order_preserved(self):
        pairs = pairs_with([-3.0, -1.0, -2.0, -0.5])
        kept = filter_top_fraction(pairs, 0.5)
        assert [p.sim_loglik for p in kept] == [-1.0, -0.5]

    def test_empty_raises(self):
        with pytest.raises(NoCandidatesError):
            filter_top_fraction([], 0.5)

    def test_float_fuzz_in_count(self):
        # 0.7 of 10 pairs must keep 7, despite 0.7 * 10 rounding up in binary
        pairs = pairs_with([-float(k) for k in range(10)])
        assert len(filter_top_fraction(pairs, 0.7)) == 7

    @given(st.lists(st.floats(-20, 0), min_size=1, max_size=40),
           st.floats(0.05, 1.0))
    @settings(max_examples=200, deadline=None)
    def test_size_and_chain(self, lls, frac):
        pairs = pairs_with(lls)
        kept = filter_top_fraction(pairs, frac)
        assert len(kept) == min(len(pairs), math.ceil(frac * len(pairs) - 1e-9))
        smaller = filter_top_fraction(pairs, frac / 2.0)
        kept_keys = {id(p) for p in kept}
        assert all(id(p) in kept_keys for p in smaller)


class TestSimilarityLoss:
    def test_single(self):
        assert similarity_loss(pairs_with([-0.3])) == pytest.approx(-0.3)

    def test_mean(self):
        assert similarity_loss(pairs_with([-0.2, -0.4])) == pytest.approx(-0.3)

    def test_uniform_candidates(self):
        q = fmap([[1.0, 0.0]])
        d = fmap([[0.0, 1.0], [0.0, 2.0], [0.0, 3.0], [0.0, -1.0]])
        u = universe_for(1, [4])
        lls = pair_log_likelihoods(q, [d], u, temperature=0.1)
        pairs = enumerate_pairs(u)
        for p, ll in zip(pairs, lls):
            p.sim_loglik = float(ll)
        assert similarity_loss(pairs) == pytest.approx(math.log(0.25), abs=1e-9)

    def test_empty(self):
        with pytest.raises(ValueError):
            similarity_loss([])


class TestSimilarityConfig:
    def test_defaults(self):
        cfg = SimilarityConfig()
        assert (cfg.temperature, cfg.keep_fraction, cfg.sim_weight) == (0.1, 0.2, 0.1)

    @pytest.mark.parametrize("kwargs", [
        {"temperature": 0.0}, {"keep_fraction": 0.0},
        {"keep_fraction": 1.5}, {"sim_weight": -0.1},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            SimilarityConfig(**kwargs)
