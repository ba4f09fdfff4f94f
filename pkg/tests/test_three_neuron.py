import math

import numpy as np
import pytest

from collapse_lab.counterexamples.three_neuron import (
    DATA_X,
    INNER_B,
    INNER_W,
    OUTER_SIGN,
    ThreeNeuronState,
    a1_exact,
    clamp_sigmoid,
    clamp_sigmoid_prime,
    class_gap,
    exp_risk,
    exp_risk_gradient,
    integrate_three_neuron,
    invariant_factor,
    limit_gap,
    manifold_exact,
    network,
    outputs,
    three_neuron_rhs,
)
from collapse_lab.errors import InvalidArgument, NumericFailure
from collapse_lab.verify import random_weight_triples


class TestState:
    def test_weights_sum(self):
        with pytest.raises(InvalidArgument):
            ThreeNeuronState(0, 0, 0, 0.3, 0.3, 0.3)

    def test_p1_positive(self):
        with pytest.raises(InvalidArgument):
            ThreeNeuronState(0, 0, 0, 0.0, 0.5, 0.5)

    def test_manifold_start(self):
        s = ThreeNeuronState.on_invariant_manifold((0.2, 0.3, 0.5), a2=0.4)
        assert math.exp(2 * s.a2 - s.a3) == pytest.approx(2 * 0.3 / 1.5, rel=1e-14)


class TestNetwork:
    def test_ramp(self):
        np.testing.assert_array_equal(clamp_sigmoid([-1.0, 0.0, 0.25, 1.0, 3.0]), [0, 0, 0.25, 1, 1])

    def test_flat_at_data(self):
        pre = np.multiply.outer(DATA_X, INNER_W) + INNER_B
        assert np.all(clamp_sigmoid_prime(pre) == 0.0)

    def test_outputs_match_network(self):
        a = np.array([0.7, -0.3, 1.9])
        np.testing.assert_allclose(outputs(a), network(OUTER_SIGN * a, INNER_W, INNER_B, DATA_X), atol=1e-15)

    def test_inner_gradients_vanish(self):
        g_coef, g_w, g_b = exp_risk_gradient(OUTER_SIGN * np.array([0.2, 0.5, 1.0]), INNER_W, INNER_B, [0.2, 0.3, 0.5])
        assert np.all(g_w == 0.0) and np.all(g_b == 0.0)
        assert np.any(g_coef != 0.0)

    def test_rhs_is_negative_gradient(self):
        s = ThreeNeuronState(0.3, -0.2, 0.9, 0.2, 0.3, 0.5)
        g_coef, _, _ = exp_risk_gradient(OUTER_SIGN * s.a, INNER_W, INNER_B, s.weights)
        np.testing.assert_allclose(three_neuron_rhs(s), -OUTER_SIGN * g_coef, atol=1e-15)

    def test_rhs_example(self):
        assert three_neuron_rhs(ThreeNeuronState(0, 0, 0, 0.25, 0.25, 0.5)) == pytest.approx((0.25, -0.25, 0.5))

    def test_rhs_overflow(self):
        with pytest.raises(NumericFailure):
            three_neuron_rhs(ThreeNeuronState(-800.0, 0, 0, 0.25, 0.25, 0.5))

    def test_risk_decreases_along_flow(self):
        s = ThreeNeuronState(0, 0, 0, 0.2, 0.3, 0.5)
        tr = integrate_three_neuron(s, 100.0, checkpoints=np.linspace(0, 100, 41))
        r = [exp_risk(OUTER_SIGN * a, INNER_W, INNER_B, s.weights) for a in tr.a]
        assert np.all(np.diff(r) < 0)


class TestClosedForms:
    def test_a1_at_12(self):
        s = ThreeNeuronState(0, 0, 0, 0.25, 0.25, 0.5)
        tr = integrate_three_neuron(s, 12.0, checkpoints=[0.0, 12.0], stretch=False)
        assert tr.a[-1, 0] == pytest.approx(math.log(4), rel=1e-6)
        assert a1_exact(12.0, 0.0, 0.25) == pytest.approx(1.386294, abs=1e-6)

    @pytest.mark.parametrize("p", [(0.25, 0.25, 0.5), (0.2, 0.3, 0.5), (0.5, 0.1, 0.4)])
    def test_manifold(self, p):
        s = ThreeNeuronState.on_invariant_manifold(p, a1=0.3, a2=-0.2)
        ts = np.array([0.0, 1.0, 10.0, 100.0])
        tr = integrate_three_neuron(s, 100.0, checkpoints=ts, stretch=False)
        a2, a3 = manifold_exact(ts, s)
        np.testing.assert_allclose(tr.a[:, 0], a1_exact(ts, 0.3, p[0]), rtol=1e-6)
        np.testing.assert_allclose(tr.a[:, 1], a2, rtol=1e-6)
        np.testing.assert_allclose(tr.a[:, 2], a3, rtol=1e-6)

    def test_invariant_factor_attracts(self):
        s = ThreeNeuronState(0, 0, 0, 0.2, 0.3, 0.5)
        tr = integrate_three_neuron(s, 1e4)
        assert abs(invariant_factor(tr)[-1] - 2 * 0.3 / 1.5) < 1e-3


class TestGapLimit:
    @pytest.mark.parametrize(
        "p,limit",
        [((0.25, 0.25, 0.5), 0.0), ((0.3, 0.3, 0.4), -0.405465), ((0.2, 0.3, 0.5), 0.223144)],
    )
    def test_examples(self, p, limit):
        tr = integrate_three_neuron(ThreeNeuronState(0, 0, 0, *p), 1e6)
        assert limit_gap(p) == pytest.approx(limit, abs=1e-6)
        assert abs(class_gap(tr)[-1] - limit) < 5e-3

    @pytest.mark.slow
    def test_random_triples(self):
        for w in random_weight_triples(20, seed=11):
            tr = integrate_three_neuron(ThreeNeuronState(0, 0, 0, *w), 1e6)
            assert abs(class_gap(tr)[-1] - limit_gap(w)) < 5e-3

    def test_no_collapse_when_unbalanced(self):
        tr = integrate_three_neuron(ThreeNeuronState(0, 0, 0, 0.1, 0.3, 0.6), 1e6)
        vals = outputs(tr.a[-1])
        # the class {-1, 1} does not merge: h(1) - h(-1) stays near log 3
        assert abs(vals[2] - vals[0]) > 1.0

    def test_stretched_step_count(self):
        tr = integrate_three_neuron(ThreeNeuronState(0, 0, 0, 0.25, 0.25, 0.5), 1e6)
        assert tr.steps < 3000

    def test_records(self):
        tr = integrate_three_neuron(ThreeNeuronState(0, 0, 0, 0.25, 0.25, 0.5), 1.0, checkpoints=[0.0, 0.5, 1.0])
        rec = list(tr.records())
        assert [r["t"] for r in rec] == [0.0, 0.5, 1.0]
        assert set(rec[0]) == {"t", "a1", "a2", "a3", "gap"}

    @pytest.mark.parametrize("cp", [[1.0, 0.5], [-1.0, 1.0], []])
    def test_bad_checkpoints(self, cp):
        with pytest.raises(InvalidArgument):
            integrate_three_neuron(ThreeNeuronState(0, 0, 0, 0.25, 0.25, 0.5), 1.0, checkpoints=cp)
