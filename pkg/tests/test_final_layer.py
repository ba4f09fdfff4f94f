import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from collapse_lab.errors import InvalidArgument, NonConverged, UnsupportedNorm
from collapse_lab.final_layer import (
    ClassifierOutputs,
    SolverSettings,
    collapse_to_means,
    lp_norm,
    minimize_phi_on_ball,
    minimize_risk_on_ball,
    project_lp_ball,
    project_ones_complement,
)
from collapse_lab.loss import LabeledPointSet, phi
from collapse_lab.simplex import lagrange_residual, simplex_l2, simplex_lp, vertex, vertices


class TestOnesComplement:
    def test_examples(self):
        np.testing.assert_array_equal(project_ones_complement([1, 1, 1]), [0, 0, 0])
        np.testing.assert_array_equal(project_ones_complement([2, 0]), [1, -1])

    def test_idempotent(self):
        z = np.random.default_rng(0).normal(size=7)
        once = project_ones_complement(z)
        np.testing.assert_allclose(project_ones_complement(once), once, atol=1e-15)


class TestProjection:
    def test_inside_unchanged(self):
        z = np.array([0.1, -0.2, 0.3])
        for p in (1.5, 2.0, 3.0):
            np.testing.assert_array_equal(project_lp_ball(z, 1.0, p), z)

    def test_radial(self):
        np.testing.assert_allclose(project_lp_ball([3.0, 4.0], 1.0, 2.0), [0.6, 0.8], atol=1e-15)

    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("p", [1.5, 3.0])
    def test_kkt(self, seed, p):
        rng = np.random.default_rng(seed)
        z = rng.normal(scale=3, size=int(rng.integers(2, 8)))
        z *= 2.0 / lp_norm(z, p)
        x = project_lp_ball(z, 1.0, p)
        assert abs(lp_norm(x, p) - 1.0) <= 1e-10
        # z - x must be a nonnegative multiple of the sphere normal at x
        normal = np.sign(x) * np.abs(x) ** (p - 1)
        d = z - x
        cos = d @ normal / (np.linalg.norm(d) * np.linalg.norm(normal))
        assert 1 - cos <= 1e-6

    @settings(max_examples=100, deadline=None)
    @given(
        z=arrays(np.float64, st.integers(2, 6), elements=st.floats(-50, 50, allow_nan=False)),
        p=st.sampled_from([1.3, 1.5, 2.0, 2.5, 4.0]),
    )
    def test_is_nearest_among_samples(self, z, p):
        x = project_lp_ball(z, 1.0, p)
        assert lp_norm(x, p) <= 1 + 1e-9
        rng = np.random.default_rng(0)
        cand = rng.normal(size=(200, z.size))
        cand /= np.sum(np.abs(cand) ** p, axis=1, keepdims=True) ** (1 / p)
        cand *= rng.uniform(0, 1, size=(200, 1))
        assert np.linalg.norm(z - x) <= np.min(np.linalg.norm(cand - z, axis=1)) + 1e-9

    def test_rejects(self):
        with pytest.raises(UnsupportedNorm):
            project_lp_ball([1.0, 2.0], 1.0, 1.0)
        with pytest.raises(InvalidArgument):
            project_lp_ball([1.0, 2.0], -1.0, 2.0)


def two_point_class(z1, z2, k=2):
    ds = LabeledPointSet(["a", "b", "c"], [0, 0, 1], [0.25, 0.25, 0.5], k=k)
    rest = np.zeros(k)
    rest[1] = 1.0
    return ClassifierOutputs(ds, np.array([z1, z2, rest]))


class TestCollapseToMeans:
    def test_class_constant_fixed_point(self):
        h = two_point_class([0.5, 0.0], [0.5, 0.0])
        c = collapse_to_means(h)
        np.testing.assert_array_equal(c.values, h.values)
        assert c.risk() == h.risk()

    def test_strict_decrease(self):
        h = two_point_class([1.0, 0.0], [-1.0, 0.0])
        c = collapse_to_means(h)
        np.testing.assert_allclose(c.values[:2], 0.0, atol=1e-16)
        assert c.risk() < h.risk()

    def test_equality_case(self):
        h = two_point_class([1.0, 1.0], [-1.0, -1.0])
        c = collapse_to_means(h)
        np.testing.assert_allclose(c.values[:2], 0.0, atol=1e-16)
        assert abs(c.risk() - h.risk()) < 1e-12

    def test_empty_class(self):
        ds = LabeledPointSet(["a"], [0], k=2)
        with pytest.raises(InvalidArgument):
            collapse_to_means(ClassifierOutputs(ds, np.zeros((1, 2))))

    def test_weighted_mean(self):
        ds = LabeledPointSet(["a", "b", "c"], [0, 0, 1], [0.6, 0.2, 0.2])
        h = ClassifierOutputs(ds, np.array([[1.0, 0.0], [5.0, 0.0], [0.0, 1.0]]))
        np.testing.assert_allclose(collapse_to_means(h).values[0], [2.0, 0.0])

    @pytest.mark.parametrize("seed", range(25))
    def test_never_increases(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(2, 6))
        n = k + int(rng.integers(1, 10))
        labels = np.concatenate([np.arange(k), rng.integers(0, k, n - k)])
        w = rng.uniform(0.1, 1, n)
        ds = LabeledPointSet([str(i) for i in range(n)], labels, w / w.sum())
        h = ClassifierOutputs(ds, rng.normal(scale=3, size=(n, k)))
        assert collapse_to_means(h).risk() <= h.risk()

    def test_mapping_roundtrip(self):
        h = two_point_class([1.0, 0.0], [0.0, 2.0])
        again = ClassifierOutputs.from_mapping(h.dataset, h.as_dict())
        np.testing.assert_array_equal(again.values, h.values)


class TestMinimizePhi:
    def test_k2(self):
        sol = minimize_phi_on_ball(0, 2, SolverSettings(R=1.0))
        np.testing.assert_allclose(sol.z, [math.sqrt(0.5), -math.sqrt(0.5)], atol=1e-6)

    def test_k5_R3(self):
        sol = minimize_phi_on_ball(2, 5, SolverSettings(R=3.0))
        np.testing.assert_allclose(sol.z, vertex(simplex_l2(5, 3.0), 2), atol=1e-6)

    def test_lp_k3(self):
        sol = minimize_phi_on_ball(0, 3, SolverSettings(R=1.0, p=1.5))
        np.testing.assert_allclose(sol.z, vertex(simplex_lp(3, 1.0, 1.5), 0), atol=1e-5)

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    @pytest.mark.parametrize("R", [1.0, 5.0])
    @pytest.mark.parametrize("k", [2, 3, 6, 10])
    def test_oracle_grid(self, k, p, R):
        sol = minimize_phi_on_ball(k - 1, k, SolverSettings(R=R, p=p))
        ref = vertex(simplex_lp(k, R, p), k - 1)
        assert np.max(np.abs(sol.z - ref)) <= 1e-5
        assert sol.residual <= 1e-10
        res, _ = lagrange_residual(k - 1, sol.z, p)
        assert res <= 1e-8

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    def test_monotone_descent(self, p):
        sol = minimize_phi_on_ball(1, 4, SolverSettings(R=5.0, p=p, seed=3))
        vals = [r["value"] for r in sol.trace]
        assert all(b <= a for a, b in zip(vals, vals[1:]))
        assert sol.trace[0]["iteration"] == 0

    def test_seed_independent(self):
        a = minimize_phi_on_ball(0, 4, SolverSettings(seed=1)).z
        b = minimize_phi_on_ball(0, 4, SolverSettings(seed=99)).z
        np.testing.assert_allclose(a, b, atol=1e-7)

    def test_deterministic(self):
        a = minimize_phi_on_ball(0, 4, SolverSettings(seed=5))
        b = minimize_phi_on_ball(0, 4, SolverSettings(seed=5))
        np.testing.assert_array_equal(a.z, b.z)

    def test_budget_exhausted(self):
        with pytest.raises(NonConverged) as info:
            minimize_phi_on_ball(0, 6, SolverSettings(R=5.0, max_iter=2, tol=1e-14))
        err = info.value
        assert err.residual > 1e-14
        assert err.last.shape == (1, 6)

    @pytest.mark.parametrize("kw", [dict(step=0), dict(tol=-1), dict(R=0), dict(p=1.0), dict(max_iter=0)])
    def test_bad_settings(self, kw):
        with pytest.raises(InvalidArgument):
            SolverSettings(**kw)

    def test_bad_class(self):
        with pytest.raises(InvalidArgument):
            minimize_phi_on_ball(3, 3)


class TestMinimizeRisk:
    @pytest.mark.parametrize("weights", [[1 / 3] * 3, [0.7, 0.2, 0.1], [0.05, 0.05, 0.9]])
    def test_weights_do_not_matter(self, weights):
        ds = LabeledPointSet.one_point_classes(3, weights)
        sol = minimize_risk_on_ball(ds, SolverSettings(R=2.0))
        np.testing.assert_allclose(sol.z, vertices(simplex_l2(3, 2.0)), atol=1e-5)

    def test_multi_point_classes(self):
        ds = LabeledPointSet(["a", "b", "c", "d"], [0, 0, 1, 2], [0.1, 0.4, 0.3, 0.2])
        sol = minimize_risk_on_ball(ds, SolverSettings(R=1.5, p=3.0))
        np.testing.assert_allclose(sol.z, vertices(simplex_lp(3, 1.5, 3.0)), atol=1e-5)

    def test_empty_class_rejected(self):
        ds = LabeledPointSet(["a", "b"], [0, 2], k=3)
        with pytest.raises(InvalidArgument):
            minimize_risk_on_ball(ds)

    def test_solution_beats_random_feasible(self):
        ds = LabeledPointSet.one_point_classes(4, [0.25] * 4)
        sol = minimize_risk_on_ball(ds, SolverSettings(R=1.0))
        best = sum(0.25 * phi(i, z) for i, z in enumerate(sol.z))
        rng = np.random.default_rng(0)
        for _ in range(200):
            Z = rng.normal(size=(4, 4))
            Z /= np.linalg.norm(Z, axis=1, keepdims=True)
            assert best <= sum(0.25 * phi(i, z) for i, z in enumerate(Z)) + 1e-12
