import numpy as np
import pytest
import scipy.stats

from conftest import random_order

from orderbias.data import (GenParams, ObservationSet, RatingMatrix,
                            course_means, dump_ratings, generate_bias,
                            generate_bias_uniform_binary, generate_noise,
                            load_ratings, restrict_ratings, sq_error, synthesize)
from orderbias.poset import (Element, build_group_ordering,
                             build_total_ordering, satisfies)


def aligned_values(m: RatingMatrix, order) -> np.ndarray:
    return m.flat[np.array([m.obs.index[e] for e in order.elements])]


class TestObservationSet:
    def test_full_and_ragged(self):
        full = ObservationSet.full(2, 3)
        assert full.size == 6 and full.counts.tolist() == [3, 3]
        ragged = ObservationSet(((0, 2), (1,)))
        assert ragged.counts.tolist() == [2, 1]
        assert ragged.elements == (Element(0, 0), Element(0, 2), Element(1, 1))

    def test_empty_course_rejected(self):
        with pytest.raises(ValueError):
            ObservationSet(((0, 1), ()))

    def test_restrict_ratings(self):
        y = RatingMatrix.from_rows([[1.0, 2.0], [3.0, 4.0]])
        sub = ObservationSet(((1,), (0,)))
        yr = restrict_ratings(y, sub)
        assert yr.flat.tolist() == [2.0, 3.0]


class TestGenerators:
    def test_zero_sigma_gives_zero_bias(self, rng):
        order = build_total_ordering([Element(0, j) for j in range(4)])
        obs = ObservationSet.full(1, 4)
        assert generate_bias(order, obs, 0.0, rng).flat.tolist() == [0.0] * 4

    def test_chain_bias_is_sorted_draws(self, rng):
        order = build_total_ordering([Element(0, 0), Element(0, 1), Element(0, 2)])
        obs = ObservationSet.full(1, 3)
        b = generate_bias(order, obs, 1.0, rng)
        assert list(b.flat) == sorted(b.flat)

    def test_group_bias_respects_ordering_every_draw(self, rng):
        order = build_group_ordering(
            {Element(0, 0): 0, Element(0, 1): 0, Element(1, 0): 1, Element(1, 1): 1}, 2)
        obs = ObservationSet.full(2, 2)
        for _ in range(1000):
            b = generate_bias(order, obs, 1.0, rng)
            assert satisfies(aligned_values(b, order), order, tol=0.0)

    def test_bias_marginal_is_gaussian(self):
        rng = np.random.default_rng(7)
        order = build_group_ordering({Element(0, j): j % 3 for j in range(50)}, 3)
        obs = ObservationSet.full(1, 50)
        pooled = np.concatenate([generate_bias(order, obs, 1.0, rng).flat
                                 for _ in range(200)])
        stat = scipy.stats.kstest(pooled, "norm").statistic
        # 1% critical value of the one-sample KS statistic
        assert stat < 1.63 / np.sqrt(pooled.size)

    def test_noise_moments(self):
        rng = np.random.default_rng(8)
        obs = ObservationSet.full(1, 10_000)
        z = generate_noise(obs, 1.0, rng).flat
        assert abs(z.mean()) < 0.05
        assert abs(z.var() - 1.0) < 0.05

    def test_zero_eta(self, rng):
        obs = ObservationSet.full(2, 3)
        assert generate_noise(obs, 0.0, rng).flat.tolist() == [0.0] * 6

    def test_fixed_seed_bit_identical(self):
        order = build_total_ordering([Element(0, j) for j in range(5)])
        obs = ObservationSet.full(1, 5)
        a = generate_bias(order, obs, 1.0, np.random.default_rng(3)).flat
        b = generate_bias(order, obs, 1.0, np.random.default_rng(3)).flat
        assert np.array_equal(a, b)

    def test_negative_scales_rejected(self, rng):
        obs = ObservationSet.full(1, 2)
        order = build_total_ordering([Element(0, 0), Element(0, 1)])
        with pytest.raises(ValueError):
            generate_noise(obs, -1.0, rng)
        with pytest.raises(ValueError):
            generate_bias(order, obs, -0.5, rng)
        with pytest.raises(ValueError):
            GenParams(sigma=-1.0, eta=0.0, seed=0)

    def test_grand_mean_shrinks_with_size(self):
        # centred bias + noise: the grand mean decays like 1/sqrt(cells)
        rng = np.random.default_rng(11)
        means = {}
        for n in (16, 1024):
            vals = []
            order = build_total_ordering([Element(0, j) for j in range(n)])
            obs = ObservationSet.full(1, n)
            for _ in range(80):
                b = generate_bias(order, obs, 1.0, rng)
                z = generate_noise(obs, 1.0, rng)
                vals.append(float((b.flat + z.flat).mean()))
            means[n] = np.mean(np.abs(vals))
        assert means[1024] < means[16] / 3.0

    def test_uniform_binary_bias(self, rng):
        order = build_group_ordering(
            {Element(i, j): j % 2 for i in range(2) for j in range(40)}, 2)
        obs = ObservationSet.full(2, 40)
        b = generate_bias_uniform_binary(order, obs, rng)
        vals = aligned_values(b, order)
        assert satisfies(vals, order, tol=0.0)
        assert vals[order.group_of == 0].max() <= 0.0
        assert vals[order.group_of == 1].min() >= 0.0

    def test_uniform_binary_requires_two_groups(self, rng):
        order = build_total_ordering([Element(0, 0), Element(0, 1)])
        with pytest.raises(ValueError):
            generate_bias_uniform_binary(order, ObservationSet.full(1, 2), rng)


class TestSynthesize:
    def test_only_bias_reduction(self, rng):
        obs = ObservationSet.full(2, 2)
        b = RatingMatrix(obs, rng.normal(size=4))
        z = RatingMatrix.zeros(obs)
        y = synthesize(np.zeros(2), b, z)
        assert np.array_equal(y.flat, b.flat)

    def test_quality_broadcast(self):
        obs = ObservationSet.full(2, 2)
        y = synthesize(np.array([1.0, 2.0]), RatingMatrix.zeros(obs),
                       RatingMatrix.zeros(obs))
        assert y.flat.tolist() == [1.0, 1.0, 2.0, 2.0]

    def test_shift_structure(self, rng):
        obs = ObservationSet.full(2, 3)
        b = RatingMatrix(obs, rng.normal(size=6))
        z = RatingMatrix(obs, rng.normal(size=6))
        delta = np.array([0.5, -1.0])
        base = synthesize(np.zeros(2), b, z)
        shifted = synthesize(delta, b, z)
        assert np.allclose(shifted.flat - base.flat, delta[obs.course_of])


class TestSqError:
    def test_exact_match(self):
        assert sq_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0

    def test_normalisation(self):
        assert sq_error(np.array([1.0, 0.0]), np.zeros(2)) == pytest.approx(0.5)

    def test_quadratic_scaling(self, rng):
        x = rng.normal(size=4)
        t = rng.normal(size=4)
        assert sq_error(t + 2 * (x - t), t) == pytest.approx(4 * sq_error(x, t))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            sq_error(np.zeros(2), np.zeros(3))


class TestCsv:
    def test_round_trip(self, rng):
        obs = ObservationSet(((0, 2, 5), (1,)))
        y = RatingMatrix(obs, rng.normal(size=4))
        back = load_ratings(dump_ratings(y))
        assert back.obs == y.obs
        assert np.array_equal(back.flat, y.flat)

    def test_course_means_and_mean_helper(self):
        y = RatingMatrix.from_rows([[1.0, 3.0], [2.0, 4.0]])
        assert course_means(y).tolist() == [2.0, 3.0]

    def test_duplicate_cell_rejected(self):
        with pytest.raises(ValueError):
            load_ratings("course,slot,value\n0,0,1.0\n0,0,2.0\n")
