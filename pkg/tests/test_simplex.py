import itertools
import math

import numpy as np
import pytest
from scipy.optimize import minimize

from collapse_lab.errors import InvalidArgument, UnsupportedNorm
from collapse_lab.loss import phi
from collapse_lab.simplex import (
    expected_gram,
    gram,
    lagrange_residual,
    pairwise_distance_sq,
    simplex_l2,
    simplex_lp,
    vertex,
    vertices,
)


class TestL2:
    def test_k2(self):
        c = simplex_l2(2, 1.0)
        assert c.alpha == pytest.approx(0.7071068, abs=1e-7)
        assert c.beta == pytest.approx(-0.7071068, abs=1e-7)

    def test_k4(self):
        c = simplex_l2(4, 1.0)
        assert c.alpha == pytest.approx(0.8660254, abs=1e-7)
        assert c.beta == pytest.approx(-0.2886751, abs=1e-7)

    @pytest.mark.parametrize("k", range(2, 12))
    @pytest.mark.parametrize("R", [0.3, 1.0, 7.0])
    def test_hyperplane(self, k, R):
        c = simplex_l2(k, R)
        assert abs(c.alpha + (k - 1) * c.beta) <= 1e-12 * R
        assert c.alpha > 0 > c.beta

    def test_rejects_small_k(self):
        with pytest.raises(InvalidArgument):
            simplex_l2(1, 1.0)


class TestLp:
    @pytest.mark.parametrize("k", range(2, 9))
    def test_reduces_to_l2(self, k):
        a, b = simplex_lp(k, 1.0, 2.0), simplex_l2(k, 1.0)
        assert abs(a.alpha - b.alpha) <= 1e-12 and abs(a.beta - b.beta) <= 1e-12

    def test_k2_p3(self):
        c = simplex_lp(2, 1.0, 3.0)
        assert c.alpha == pytest.approx(0.7937005, abs=1e-7)
        assert c.beta == pytest.approx(-0.7937005, abs=1e-7)
        assert abs(c.alpha) ** 3 + abs(c.beta) ** 3 == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("p", [1.2, 1.5, 2.0, 3.0, 6.0])
    @pytest.mark.parametrize("k", [2, 3, 5, 10])
    def test_constraint_and_stationarity(self, k, p):
        c = simplex_lp(k, 2.5, p)
        assert c.constraint_residual() <= 1e-10
        assert c.stationarity_residual() <= 1e-10
        assert c.alpha > 0 > c.beta

    @pytest.mark.parametrize("p", [1.0, 0.5, math.inf])
    def test_unsupported_norms(self, p):
        with pytest.raises(UnsupportedNorm):
            simplex_lp(3, 1.0, p)

    def test_brute_force_k3_p15(self):
        # dense grid over the l^1.5 sphere in R^3, then a local polish in angles
        k, R, p = 3, 1.0, 1.5

        def on_sphere(theta, psi):
            u = np.array([np.cos(theta) * np.cos(psi), np.sin(theta) * np.cos(psi), np.sin(psi)])
            return R * u / np.sum(np.abs(u) ** p) ** (1 / p)

        grid = itertools.product(np.linspace(-np.pi, np.pi, 721), np.linspace(-np.pi / 2, np.pi / 2, 361))
        best = min(grid, key=lambda tp: phi(0, on_sphere(*tp)))
        res = minimize(lambda v: phi(0, on_sphere(*v)), best, method="Nelder-Mead",
                       options=dict(xatol=1e-12, fatol=1e-15, maxiter=10000))
        z = on_sphere(*res.x)
        np.testing.assert_allclose(z, vertex(simplex_lp(k, R, p), 0), atol=1e-5)


class TestVertex:
    def test_k3(self):
        z = vertex(simplex_l2(3, 1.0), 1)
        np.testing.assert_allclose(z, [-0.4082483, 0.8164966, -0.4082483], atol=1e-7)

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    def test_norm(self, p):
        c = simplex_lp(6, 3.0, p)
        for i in range(6):
            assert abs(np.sum(np.abs(vertex(c, i)) ** p) ** (1 / p) - 3.0) <= 1e-10 * 3

    def test_zero_sum_for_p2(self):
        c = simplex_l2(7, 2.0)
        for i in range(7):
            assert abs(vertex(c, i).sum()) <= 1e-12

    def test_out_of_range(self):
        with pytest.raises(InvalidArgument):
            vertex(simplex_l2(3, 1.0), 3)

    def test_permutation_equivariance(self):
        c = simplex_lp(5, 1.0, 3.0)
        perm = np.array([2, 0, 4, 1, 3])
        for i in range(5):
            # relabeling classes by perm moves vertex i to vertex perm[i]
            moved = np.empty(5)
            moved[perm] = vertex(c, i)
            np.testing.assert_array_equal(moved, vertex(c, perm[i]))


class TestGeometry:
    @pytest.mark.parametrize("k", range(2, 11))
    def test_gram(self, k):
        np.testing.assert_allclose(gram(simplex_l2(k, 1.7)), expected_gram(k, 1.7), atol=1e-10)

    @pytest.mark.parametrize("k,R,expected", [(4, 1.0, 8 / 3), (2, 1.0, 4.0), (3, 2.0, 12.0)])
    def test_pairwise_distance(self, k, R, expected):
        assert pairwise_distance_sq(simplex_l2(k, R)) == pytest.approx(expected, abs=1e-12)

    def test_distance_matches_vertices(self):
        V = vertices(simplex_l2(5, 2.0))
        assert np.sum((V[0] - V[3]) ** 2) == pytest.approx(pairwise_distance_sq(simplex_l2(5, 2.0)))

    def test_p_not_2_rejected(self):
        with pytest.raises(UnsupportedNorm):
            pairwise_distance_sq(simplex_lp(3, 1.0, 3.0))
        with pytest.raises(UnsupportedNorm):
            gram(simplex_lp(3, 1.0, 1.5))

    def test_cosines(self):
        V = vertices(simplex_l2(6, 1.0))
        C = V @ V.T
        off = C[~np.eye(6, dtype=bool)]
        np.testing.assert_allclose(off, -1 / 5, atol=1e-12)

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    @pytest.mark.parametrize("k", [2, 4, 9])
    def test_lagrange_stationarity(self, k, p):
        res, lam = lagrange_residual(0, vertex(simplex_lp(k, 1.0, p), 0), p)
        assert res <= 1e-8
        assert lam < 0  # the gradient points into the ball
