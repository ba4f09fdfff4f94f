"""Three-neuron network trained on three collinear points.

Data sit at x = -1, 0, 1 with probabilities p1, p2, p3; the outer points
share label +1 and the middle point has label -1. Risk is the exponential
loss. With the clamp activation and the initialization

    h(x) = a1 sig(-x) - a2 sig(x + 1) + a3 sig(x)

every data argument sits on a flat piece of the activation, so only the
output coefficients move and the flow reduces to an ODE in (a1, a2, a3).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..errors import InvalidArgument, NumericFailure

DATA_X = np.array([-1.0, 0.0, 1.0])
DATA_XI = np.array([1.0, -1.0, 1.0])
# (w_i, b_i) realizing sig(-x), sig(x + 1), sig(x)
INNER_W = np.array([-1.0, 1.0, 1.0])
INNER_B = np.array([0.0, 1.0, 0.0])
OUTER_SIGN = np.array([1.0, -1.0, 1.0])


@dataclass(frozen=True)
class ThreeNeuronState:
    a1: float
    a2: float
    a3: float
    p1: float
    p2: float
    p3: float
    t: float = 0.0

    def __post_init__(self):
        p = np.array([self.p1, self.p2, self.p3])
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise InvalidArgument(f"class weights {tuple(p)} must be non-negative and sum to 1")
        if not (self.p1 > 0 and self.p3 > 0):
            raise InvalidArgument("p1 and p3 must be positive")
        if not np.all(np.isfinite([self.a1, self.a2, self.a3, self.t])):
            raise InvalidArgument("coefficients must be finite")

    @property
    def a(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3])

    @property
    def weights(self) -> np.ndarray:
        return np.array([self.p1, self.p2, self.p3])

    @classmethod
    def on_invariant_manifold(cls, p, a1=0.0, a2=0.0) -> "ThreeNeuronState":
        """Start with exp(2 a2 - a3) = 2 p2 / (3 p3) exactly."""
        p1, p2, p3 = p
        a3 = 2.0 * a2 - math.log(2.0 * p2 / (3.0 * p3))
        return cls(a1, a2, a3, p1, p2, p3)


def clamp_sigmoid(z):
    """Ramp activation: 0 for z <= 0, z on (0, 1), 1 for z >= 1."""
    return np.clip(z, 0.0, 1.0)


def clamp_sigmoid_prime(z):
    z = np.asarray(z, dtype=np.float64)
    return ((z > 0.0) & (z < 1.0)).astype(np.float64)


def network(coef, w, b, x):
    """``h(x) = sum_i coef_i sig(w_i x + b_i)``."""
    x = np.asarray(x, dtype=np.float64)
    return clamp_sigmoid(np.multiply.outer(x, w) + b) @ coef


def exp_risk(coef, w, b, weights) -> float:
    h = network(coef, w, b, DATA_X)
    return float(np.asarray(weights) @ np.exp(-DATA_XI * h))


def exp_risk_gradient(coef, w, b, weights):
    """Gradient of the exponential risk in all nine network parameters."""
    pre = np.multiply.outer(DATA_X, w) + b  # (3 points, 3 neurons)
    act = clamp_sigmoid(pre)
    h = act @ coef
    dh = -np.asarray(weights) * DATA_XI * np.exp(-DATA_XI * h)
    g_coef = dh @ act
    inner = dh[:, None] * clamp_sigmoid_prime(pre) * coef[None, :]
    return g_coef, DATA_X @ inner, inner.sum(axis=0)


def outputs(a) -> np.ndarray:
    """Network values at x = -1, 0, 1 as columns, for coefficients ``a`` (..., 3)."""
    a = np.asarray(a, dtype=np.float64)
    return np.stack([a[..., 0], -a[..., 1], a[..., 2] - a[..., 1]], axis=-1)


def three_neuron_rhs(state: ThreeNeuronState) -> tuple[float, float, float]:
    p1, p2, p3 = state.weights
    a1, a2, a3 = state.a
    with np.errstate(over="raise"):
        try:
            e = p3 * np.exp(a2 - a3)
            d = (p1 * np.exp(-a1), p2 * np.exp(-a2) - e, e)
        except FloatingPointError as exc:
            raise NumericFailure(f"overflow in three-neuron vector field at a={state.a}") from exc
    return tuple(float(v) for v in d)


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    a: np.ndarray
    weights: np.ndarray
    steps: int

    @property
    def final(self) -> ThreeNeuronState:
        p1, p2, p3 = self.weights
        a1, a2, a3 = self.a[-1]
        return ThreeNeuronState(a1, a2, a3, p1, p2, p3, float(self.t[-1]))

    def records(self):
        gap = class_gap(self)
        for n in range(self.t.size):
            yield dict(t=self.t[n], a1=self.a[n, 0], a2=self.a[n, 1], a3=self.a[n, 2], gap=gap[n])


def default_checkpoints(T: float, n: int = 100) -> np.ndarray:
    lo = min(1e-2, T)
    return np.unique(np.concatenate([[0.0], np.geomspace(lo, T, n)]))


def integrate_three_neuron(
    state0: ThreeNeuronState,
    T: float,
    dt: float = 1e-2,
    checkpoints=None,
    stretch: bool = True,
) -> Trajectory:
    """RK4 integration of the coefficient flow up to time T.

    ``stretch`` grows the step as ``dt * max(1, t)``, which keeps the step
    relative to the 1/t decay of the vector field constant and reaches
    T = 1e6 in a few thousand steps. With ``stretch=False`` the step is the
    fixed ``dt``.
    """
    if not (T > 0 and dt > 0):
        raise InvalidArgument("T and dt must be positive")
    t_out = default_checkpoints(T) if checkpoints is None else np.asarray(checkpoints, dtype=np.float64)
    if t_out.ndim != 1 or t_out.size == 0 or np.any(np.diff(t_out) <= 0) or t_out[0] < 0:
        raise InvalidArgument("checkpoints must be increasing and non-negative")
    a, steps = _kernels.rk4_three_neuron(state0.a, state0.weights, t_out, dt, stretch)
    if not np.all(np.isfinite(a)):
        raise NumericFailure("three-neuron integration produced non-finite values")
    return Trajectory(t_out + state0.t, a, state0.weights, int(steps))


def class_gap(traj: Trajectory) -> np.ndarray:
    """``h(t, 1) - h(t, -1) = (a3 - a2) - a1`` at every checkpoint."""
    a = traj.a
    return (a[:, 2] - a[:, 1]) - a[:, 0]


def invariant_factor(traj: Trajectory) -> np.ndarray:
    """``exp(2 a2 - a3)``, which tends to ``2 p2 / (3 p3)``."""
    return np.exp(2.0 * traj.a[:, 1] - traj.a[:, 2])


def limit_gap(weights) -> float:
    p1, _, p3 = weights
    return math.log(p3 / (2.0 * p1))


def a1_exact(t, a1_0: float, p1: float):
    return np.log(np.exp(a1_0) + p1 * np.asarray(t))


def manifold_exact(t, state0: ThreeNeuronState):
    """Closed-form (a2, a3) for a start on the invariant manifold."""
    p2, p3 = state0.p2, state0.p3
    a2 = np.log(np.exp(state0.a2) + p2 * np.asarray(t) / 3.0)
    return a2, math.log(3.0 * p3 / (2.0 * p2)) + 2.0 * a2
