import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfedit.attribution import WeightedSemanticMap
from cfedit.errors import DegenerateInputError, NoCandidatesError
from cfedit.sequencing import (ScoredCells, build_universe, mass_shortfall,
                               score_cells, select_distractor_cells,
                               select_query_cells)
from cfedit.tensors import GridMap


def semantic(values):
    a = np.asarray(values, dtype=np.float32)
    g = GridMap(a.shape[0], a.shape[1], a)
    mask = GridMap(a.shape[0], a.shape[1], (a != 0).astype(np.float32), binary=True)
    return WeightedSemanticMap(values=g, mask=mask)


def scored(scores):
    return ScoredCells(scores=np.asarray(scores, dtype=np.float64),
                       cells=np.arange(len(scores)))


def grid(values, binary=True):
    a = np.asarray(values, dtype=np.float32)
    return GridMap(a.shape[0], a.shape[1], a, binary=binary)


class TestScoreCells:
    def test_single_nonzero(self):
        out = score_cells(semantic([[0.0, 0.0], [0.7, 0.0]]))
        assert out.cells.tolist() == [2]
        assert out.scores.tolist() == [1.0]

    def test_tie_break_ascending_index(self):
        vals = np.zeros((2, 3), dtype=np.float32)
        vals.flat[5] = 2.0
        vals.flat[2] = 2.0
        out = score_cells(semantic(vals))
        assert out.cells.tolist() == [2, 5]
        assert out.scores.tolist() == [0.5, 0.5]

    def test_softmax_values(self):
        out = score_cells(semantic([[0.0, 1.0, 2.0]]))
        assert out.cells.tolist() == [2, 1]
        assert out.scores[0] == pytest.approx(0.7310585786300049, abs=1e-5)
        assert out.scores[1] == pytest.approx(0.2689414213699951, abs=1e-5)

    def test_all_zero_raises(self):
        with pytest.raises(DegenerateInputError):
            score_cells(semantic([[0.0, 0.0]]))

    def test_descending_under_tie_break(self):
        rng = np.random.default_rng(0)
        vals = rng.random((4, 4)).astype(np.float32)
        out = score_cells(semantic(vals))
        order = list(zip(-out.scores, out.cells))
        assert order == sorted(order)
        assert out.scores.sum() <= 1.0 + 1e-9


class TestSelectQueryCells:
    def test_cumulative_crossing(self):
        out = select_query_cells(scored([0.4, 0.3, 0.2, 0.1]), 0.5)
        assert out.tolist() == [0, 1]

    def test_full_mass(self):
        out = select_query_cells(scored([0.4, 0.3, 0.2, 0.1]), 1.0)
        assert out.tolist() == [0, 1, 2, 3]

    def test_equality_counts_as_crossing(self):
        out = select_query_cells(scored([0.6, 0.4]), 0.6)
        assert out.tolist() == [0]

    def test_threshold_range(self):
        with pytest.raises(ValueError):
            select_query_cells(scored([1.0]), 0.0)

    @given(st.lists(st.integers(1, 64), min_size=1, max_size=12),
           st.integers(1, 2 ** 10))
    @settings(max_examples=200, deadline=None)
    def test_monotone_in_threshold(self, ks, tk):
        # dyadic scores make every cumulative sum exact in binary floating point
        total = sum(ks)
        s = scored([k / total for k in ks] if total & (total - 1) == 0
                   else [k / 2 ** 10 for k in ks][: len(ks)])
        t1 = tk / 2 ** 11
        t2 = min(1.0, 2 * t1)
        if not 0 < t1 <= 1:
            return
        sel1 = select_query_cells(s, t1)
        sel2 = select_query_cells(s, t2)
        assert set(sel1.tolist()) <= set(sel2.tolist())


class TestMassShortfall:
    def test_zero_at_full_mass(self):
        s = scored([0.5, 0.25, 0.25])  # dyadic, sums exactly to 1
        assert mass_shortfall(s, 3, 1.0) == 0.0

    def test_empty_prefix(self):
        assert mass_shortfall(scored([0.4, 0.6]), 0, 0.5) == 0.5

    def test_hand_value(self):
        assert mass_shortfall(scored([0.4, 0.3]), 1, 0.5) == pytest.approx(0.1, abs=1e-12)

    def test_range_check(self):
        with pytest.raises(ValueError):
            mass_shortfall(scored([1.0]), 2, 0.5)

    def test_minimality_against_selection(self):
        # exact dyadic arithmetic: shortfall is 0 at the selected prefix length
        # and strictly positive one entry earlier, for any threshold
        rng = np.random.default_rng(42)
        for _ in range(200):
            n = int(rng.integers(1, 10))
            ks = rng.integers(1, 50, size=n)
            scale = 2 ** 12
            scores = ks / scale
            s = scored(scores)
            t = float(rng.integers(1, int(scores.sum() * scale) + 1)) / scale
            m_star = len(select_query_cells(s, t))
            assert mass_shortfall(s, m_star, t) == 0.0
            assert mass_shortfall(s, m_star - 1, t) > 0.0


class TestDistractorCells:
    def test_all_ones(self):
        assert select_distractor_cells(grid([[1, 1], [1, 1]])).tolist() == [0, 1, 2, 3]

    def test_all_zero(self):
        assert select_distractor_cells(grid([[0, 0], [0, 0]])).tolist() == []

    def test_diagonal(self):
        assert select_distractor_cells(grid([[1, 0], [0, 1]])).tolist() == [0, 3]


class TestBuildUniverse:
    def test_full_grid_matches_exhaustive(self):
        ones = grid(np.ones((7, 7)))
        u = build_universe(np.arange(49), [ones])
        assert u.n_combinations == 49 * 49
        assert u.n_combinations == u.n_exhaustive
        assert u.reduction_ratio == 1.0

    def test_product_counts(self):
        masks = [grid(np.ones((4, 5)))]
        u = build_universe(np.arange(10), masks)
        assert u.n_query == 10
        assert u.n_distractor == 20
        assert u.n_combinations == 200

    def test_two_distractors(self):
        m1 = np.zeros((2, 4), dtype=np.float32)
        m1.flat[:3] = 1.0
        m2 = np.zeros((2, 4), dtype=np.float32)
        m2.flat[:5] = 1.0
        u = build_universe(np.arange(4), [grid(m1), grid(m2)])
        assert u.n_combinations == 4 * (3 + 5)

    def test_no_candidates(self):
        with pytest.raises(NoCandidatesError):
            build_universe(np.arange(4), [grid(np.zeros((2, 2)))])

    def test_requires_distractor(self):
        with pytest.raises(ValueError):
            build_universe(np.arange(4), [])
