import numpy as np
import pytest

from orderbias.baselines import (GroupLayout, NotApplicable, mean_estimator,
                                 median_estimator, reweighted_mean,
                                 reweighted_mean_tree)
from orderbias.data import ObservationSet, RatingMatrix
from orderbias.estimator import fit
from orderbias.poset import Element, build_group_ordering, build_tree_ordering


class TestMeanMedian:
    def test_mean(self):
        y = RatingMatrix.from_rows([[1.0, 3.0], [2.0, 4.0]])
        assert mean_estimator(y).tolist() == [2.0, 3.0]

    def test_mean_ragged(self):
        y = RatingMatrix(ObservationSet(((0,), (0, 1, 2))),
                         np.array([5.0, 1.0, 2.0, 3.0]))
        assert mean_estimator(y).tolist() == [5.0, 2.0]

    def test_mean_is_fit_at_infinity_bitwise(self, rng):
        y = RatingMatrix(ObservationSet.full(3, 5), rng.normal(size=15))
        order = build_group_ordering({e: 0 for e in y.obs.elements}, 1)
        assert np.array_equal(mean_estimator(y), fit(y, order, "inf").x_hat)

    def test_median_odd(self):
        assert median_estimator(RatingMatrix.from_rows([[1.0, 2.0, 9.0]])).tolist() == [2.0]

    def test_median_even_averages_central_pair(self):
        assert median_estimator(RatingMatrix.from_rows([[1.0, 3.0]])).tolist() == [2.0]

    def test_median_robust(self):
        y = RatingMatrix.from_rows([[0.0, 0.0, 0.0, 100.0]])
        assert median_estimator(y).tolist() == [0.0]


def mirrored_binary_order(n: int):
    group_of = {}
    for j in range(n):
        group_of[Element(0, j)] = 0 if j < n // 2 else 1
        group_of[Element(1, j)] = 0 if j < n // 2 else 1
    return build_group_ordering(group_of, 2)


class TestReweightedMean:
    def test_identical_compositions_reduce_to_mean(self, rng):
        order = mirrored_binary_order(6)
        y = RatingMatrix(ObservationSet.full(2, 6), rng.normal(size=12))
        assert np.allclose(reweighted_mean(y, order), mean_estimator(y), atol=1e-12)

    def test_worked_example(self):
        order = build_group_ordering(
            {Element(0, 0): 0, Element(0, 1): 1, Element(1, 0): 0, Element(1, 1): 1}, 2)
        y = RatingMatrix.from_rows([[0.0, 2.0], [4.0, 6.0]])
        assert np.allclose(reweighted_mean(y, order), [1.0, 5.0])

    def test_partial_group_is_dropped(self):
        # group 1 exists only in course 0, so only group 0 contributes weight
        order = build_group_ordering(
            {Element(0, 0): 0, Element(0, 1): 1, Element(1, 0): 0, Element(1, 1): 0}, 2)
        y = RatingMatrix.from_rows([[1.0, 100.0], [2.0, 4.0]])
        got = reweighted_mean(y, order)
        pre = np.array([1.0, 3.0])  # group-0 cell means
        shift = (y.flat.sum() - 2 * pre.sum()) / 4
        assert np.allclose(got, pre + shift)

    def test_no_common_group_raises(self):
        order = build_group_ordering(
            {Element(0, 0): 0, Element(0, 1): 0, Element(1, 0): 1, Element(1, 1): 1}, 2)
        y = RatingMatrix.from_rows([[0.0, 1.0], [2.0, 3.0]])
        with pytest.raises(NotApplicable):
            reweighted_mean(y, order)

    def test_recentering_identity(self, rng):
        for _ in range(50):
            d, r = int(rng.integers(2, 4)), int(rng.integers(2, 4))
            group_of = {}
            for i in range(d):
                n_i = int(rng.integers(r, 8))
                labels = np.concatenate([np.arange(r), rng.integers(0, r, n_i - r)])
                for j, g in enumerate(labels):
                    group_of[Element(i, j)] = int(g)
            order = build_group_ordering(group_of, r)
            obs = ObservationSet.from_elements(group_of.keys())
            y = RatingMatrix(obs, rng.normal(size=obs.size))
            x = reweighted_mean(y, order, obs)
            assert abs(obs.counts @ x - y.flat.sum()) < 1e-10

    def test_shift_equivariance(self, rng):
        order = mirrored_binary_order(4)
        obs = ObservationSet.full(2, 4)
        y = RatingMatrix(obs, rng.normal(size=8))
        delta = np.array([3.0, -1.0])
        shifted = RatingMatrix(obs, y.flat + delta[obs.course_of])
        for est in (mean_estimator, median_estimator,
                    lambda m: reweighted_mean(m, order)):
            assert np.allclose(est(shifted), est(y) + delta, atol=1e-10)

    def test_requires_group_ordering(self, rng):
        order = build_tree_ordering({Element(0, 0): 0, Element(0, 1): 1}, {1: 0})
        y = RatingMatrix.from_rows([[0.0, 1.0]])
        with pytest.raises(NotApplicable):
            reweighted_mean(y, order)

    def test_layout_fields(self):
        layout = GroupLayout(np.array([[2, 0], [1, 3]]))
        assert layout.ell_min.tolist() == [1, 0]
        assert layout.groups_in_all_courses.tolist() == [0]


class TestTreeReweighting:
    def test_single_node_tree_is_sample_mean(self, rng):
        order = build_tree_ordering(
            {Element(i, j): 0 for i in range(2) for j in range(3)}, {0: -1})
        y = RatingMatrix(ObservationSet.full(2, 3), rng.normal(size=6))
        for mode in ("node", "level"):
            assert np.allclose(reweighted_mean_tree(y, order, mode),
                               mean_estimator(y), atol=1e-12)

    def test_level_partition_matches_group_form(self, rng):
        # a three-level path tree whose levels coincide with a group partition
        node_of = {}
        group_of = {}
        for i in range(2):
            for j in range(6):
                node_of[Element(i, j)] = j // 2
                group_of[Element(i, j)] = j // 2
        tree = build_tree_ordering(node_of, {1: 0, 2: 1})
        groups = build_group_ordering(group_of, 3)
        y = RatingMatrix(ObservationSet.full(2, 6), rng.normal(size=12))
        assert np.allclose(reweighted_mean_tree(y, tree, "level"),
                           reweighted_mean(y, groups), atol=1e-12)

    def test_node_mode_needs_every_node_everywhere(self, rng):
        node_of = {Element(0, 0): 0, Element(0, 1): 1, Element(1, 0): 1, Element(1, 1): 1}
        order = build_tree_ordering(node_of, {1: 0})
        y = RatingMatrix(ObservationSet.full(2, 2), rng.normal(size=4))
        with pytest.raises(NotApplicable):
            reweighted_mean_tree(y, order, "node")

    def test_unknown_mode(self, rng):
        order = build_tree_ordering({Element(0, 0): 0}, {0: -1})
        with pytest.raises(ValueError):
            reweighted_mean_tree(RatingMatrix.from_rows([[1.0]]), order, "depth")
