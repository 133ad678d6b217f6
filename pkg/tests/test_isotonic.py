import math

import numpy as np
import pytest

from conftest import random_instance, random_order
from oracles import (brute_force_isotonic, estimator_objective, kkt_certificate,
                     nlp_project)

from orderbias.data import ObservationSet, RatingMatrix
from orderbias.isotonic import (SolverError, isotonic_project, pava, qp_oracle,
                                regularized_isotonic, solve_offset_qp)
from orderbias.poset import (Element, build_group_ordering,
                             build_total_ordering, feasibility_residual)


class TestPava:
    def test_already_monotone(self):
        fit = pava(np.array([1.0, 2.0, 3.0]))
        assert fit.fitted.tolist() == [1.0, 2.0, 3.0]
        assert fit.blocks == ((0, 1), (1, 2), (2, 3))

    def test_pool_everything(self):
        assert pava(np.array([3.0, 1.0, 2.0])).fitted.tolist() == [2.0, 2.0, 2.0]

    def test_midpoint(self):
        assert pava(np.array([2.0, 0.0])).fitted.tolist() == [1.0, 1.0]

    def test_against_brute_force(self):
        rng = np.random.default_rng(17)
        for _ in range(60):
            n = int(rng.integers(1, 9))
            v = rng.normal(size=n)
            w = rng.uniform(0.5, 3.0, size=n) if rng.random() < 0.5 else None
            got = pava(v, w).fitted
            want = brute_force_isotonic(v, w)
            assert np.abs(got - want).max() < 1e-8

    def test_output_contracts(self, rng):
        for _ in range(50):
            v = rng.normal(size=int(rng.integers(1, 30)))
            fit = pava(v)
            assert np.all(np.diff(fit.fitted) >= 0)
            # blocks tile the index range and reproduce the fitted values
            assert fit.blocks[0][0] == 0 and fit.blocks[-1][1] == v.size
            for (a, b), (a2, _) in zip(fit.blocks[:-1], fit.blocks[1:]):
                assert b == a2
            for a, b in fit.blocks:
                assert np.ptp(fit.fitted[a:b]) == 0.0
                assert fit.fitted[a] == pytest.approx(v[a:b].mean())
            again = pava(fit.fitted).fitted
            assert np.array_equal(again, fit.fitted)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            pava(np.array([]))
        with pytest.raises(ValueError):
            pava(np.array([1.0, 2.0]), np.array([1.0, 0.0]))


class TestProjection:
    def test_feasible_input_unchanged(self, rng):
        for _ in range(20):
            y, order, obs, kind = random_instance(rng)
            v = rng.normal(size=len(order))
            proj = isotonic_project(v, order)
            again = isotonic_project(proj, order)
            assert np.abs(again - proj).max() < 1e-10

    def test_two_element_midpoint(self):
        order = build_group_ordering({Element(0, 0): 0, Element(0, 1): 1}, 2)
        assert isotonic_project(np.array([2.0, 0.0]), order).tolist() == [1.0, 1.0]

    @pytest.mark.parametrize("kind", ["group", "tree", "dag"])
    def test_matches_nlp_oracle(self, kind):
        # the generic NLP can stop a little early, so compare objectives;
        # exact optimality comes from feasibility + the multiplier certificate
        rng = np.random.default_rng(sum(map(ord, kind)))
        for _ in range(100):
            els = [Element(i, j) for i in range(2) for j in range(3)]
            order = random_order(rng, els, kind)
            v = rng.normal(size=6)
            got = isotonic_project(v, order)
            ref = nlp_project(v, order)
            assert feasibility_residual(got, order) < 1e-10
            assert ((got - v) ** 2).sum() <= ((ref - v) ** 2).sum() + 1e-9
            assert kkt_certificate(v, order, got) < 1e-7

    def test_weighted_projection_is_optimal(self, rng):
        for kind in ("group", "tree", "total"):
            for _ in range(30):
                els = [Element(0, j) for j in range(5)]
                order = random_order(rng, els, kind)
                v = rng.normal(size=5)
                w = rng.uniform(0.5, 3.0, size=5)
                got = isotonic_project(v, order, weights=w)
                ref = nlp_project(v, order, weights=w)
                assert feasibility_residual(got, order) < 1e-10
                assert (w @ (got - v) ** 2) <= (w @ (ref - v) ** 2) + 1e-9
                assert kkt_certificate(v, order, got, weights=w) < 1e-7

    def test_matches_pava_on_totals(self, rng):
        for _ in range(30):
            n = int(rng.integers(1, 12))
            els = [Element(0, j) for j in range(n)]
            order = build_total_ordering([els[int(i)] for i in rng.permutation(n)])
            v = rng.normal(size=n)
            perm = np.argsort(order.rank_of)
            via_pava = np.empty(n)
            via_pava[perm] = pava(v[perm]).fitted
            assert np.abs(isotonic_project(v, order) - via_pava).max() < 1e-10

    def test_contraction(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 12))
            order = build_total_ordering([Element(0, j) for j in range(n)])
            a = rng.normal(size=n)
            b = a + rng.normal(scale=0.5, size=n)
            pa, pb = isotonic_project(a, order), isotonic_project(b, order)
            assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-12


class TestRegularized:
    def test_zero_weight_equals_projection(self, rng):
        y, order, obs, kind = random_instance(rng)
        v = rng.normal(size=len(order))
        assert np.array_equal(regularized_isotonic(v, order, 0.0),
                              isotonic_project(v, order))

    def test_chain_example_with_grid_search(self):
        order = build_total_ordering([Element(0, 0), Element(0, 1)])
        got = regularized_isotonic(np.array([2.0, 0.0]), order, 1.0)
        assert np.allclose(got, [0.5, 0.5])
        # dense feasible grid search over (u1 <= u2)
        grid = np.arange(-1.0, 3.0, 1e-3)
        u1, u2 = np.meshgrid(grid, grid, indexing="ij")
        mask = u1 <= u2
        obj = (2.0 - u1) ** 2 + (0.0 - u2) ** 2 + 1.0 * (u1 ** 2 + u2 ** 2)
        obj[~mask] = np.inf
        k = np.unravel_index(np.argmin(obj), obj.shape)
        assert abs(grid[k[0]] - 0.5) < 1e-3 and abs(grid[k[1]] - 0.5) < 1e-3

    def test_huge_weight_shrinks_to_zero(self, rng):
        v = rng.normal(size=8)
        order = build_total_ordering([Element(0, j) for j in range(8)])
        out = regularized_isotonic(v, order, 1e9)
        assert np.linalg.norm(out) < 1e-8 * np.linalg.norm(v)

    def test_scaling_identity_and_objective(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 10))
            order = build_total_ordering([Element(0, j) for j in range(n)])
            v = rng.normal(size=n)
            lam = float(rng.uniform(0.0, 5.0))
            proj = isotonic_project(v, order)
            got = regularized_isotonic(v, order, lam)
            assert np.abs(got - proj / (1 + lam)).max() < 1e-10
            achieved = float(((v - got) ** 2).sum() + lam * (got ** 2).sum())
            expected = (((v - proj) ** 2).sum() / (1 + lam)
                        + lam * (v ** 2).sum() / (1 + lam))
            assert abs(achieved - expected) < 1e-10

    def test_rejects_bad_weight(self, rng):
        order = build_total_ordering([Element(0, 0)])
        with pytest.raises(ValueError):
            regularized_isotonic(np.zeros(1), order, -1.0)
        with pytest.raises(ValueError):
            regularized_isotonic(np.zeros(1), order, math.inf)


class TestOffsetQp:
    def test_matches_nlp(self, rng):
        import scipy.optimize
        for _ in range(40):
            d = int(rng.integers(2, 6))
            m = int(rng.integers(1, 6))
            target = rng.normal(size=d)
            weights = rng.uniform(0.5, 3.0, size=d)
            lo = rng.integers(0, d, size=m)
            hi = (lo + 1 + rng.integers(0, d - 1, size=m)) % d
            gaps = rng.uniform(0.1, 1.0, size=m)  # zero is feasible
            start = np.zeros(d)
            got = solve_offset_qp(target, weights, lo, hi, gaps, start)
            cons = [{"type": "ineq",
                     "fun": (lambda u, a=int(a), b=int(b), g=float(g): g - (u[a] - u[b]))}
                    for a, b, g in zip(lo, hi, gaps)]
            res = scipy.optimize.minimize(
                lambda u: float(weights @ (u - target) ** 2), start,
                constraints=cons, method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
            assert np.abs(got - res.x).max() < 1e-6

    def test_infeasible_start_rejected(self):
        with pytest.raises(ValueError):
            solve_offset_qp(np.zeros(2), np.ones(2), np.array([0]), np.array([1]),
                            np.array([-1.0]), np.zeros(2))


class TestQpOracle:
    def test_infinite_weight_is_row_means(self):
        y = RatingMatrix.from_rows([[1.0, 3.0], [2.0, 4.0]])
        order = build_group_ordering(
            {Element(i, j): j for i in range(2) for j in range(2)}, 2)
        res = qp_oracle(y, order, math.inf)
        assert res.x.tolist() == [2.0, 3.0]
        assert not res.b.flat.any()

    def test_beats_trivial_feasible_point(self, rng):
        for _ in range(20):
            y, order, obs, kind = random_instance(rng)
            lam = float(rng.uniform(0, 3))
            res = qp_oracle(y, order, lam)
            yv = y.flat[np.array([obs.index[e] for e in order.elements])]
            trivial = estimator_objective(yv, order.courses,
                                          isotonic_project(yv, order), lam, obs.d)
            assert res.objective <= trivial + 1e-8

    def test_first_order_stationarity(self, rng):
        # finite-difference directional derivatives along feasible directions
        y, order, obs, _ = random_instance(rng, kinds=("group",), max_d=2, max_n=4)
        lam = 0.7
        res = qp_oracle(y, order, lam)
        yv = y.flat[np.array([obs.index[e] for e in order.elements])]
        b0 = res.b.flat[np.array([obs.index[e] for e in order.elements])]
        f0 = estimator_objective(yv, order.courses, b0, lam, obs.d)
        eps = 1e-7
        checked = 0
        while checked < 50:
            direction = isotonic_project(b0 + rng.normal(size=b0.size), order) - b0
            norm = np.linalg.norm(direction)
            if norm < 1e-12:
                continue
            direction /= norm
            f1 = estimator_objective(yv, order.courses, b0 + eps * direction, lam, obs.d)
            assert (f1 - f0) / eps >= -1e-6
            checked += 1

    def test_nonconvergence_is_reported(self):
        y = RatingMatrix.from_rows([[-1.0, -2.0, 3.0, 4.0]])
        order = build_total_ordering([Element(0, j) for j in range(4)])
        with pytest.raises(SolverError):
            qp_oracle(y, order, 0.0, max_iter=1)
