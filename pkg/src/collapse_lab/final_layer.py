"""Final-layer optimization: class-mean collapse and constrained minimization.

The solvers here run projected gradient descent with Armijo backtracking on
an l^p ball. For p = 2 the iterate is additionally kept on the zero-sum
hyperplane, along which the cross-entropy is flat.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidArgument, NonConverged
from .loss import LabeledPointSet, as_logits, grad_phi, output_matrix, phi, pointwise_phi, risk
from .simplex import check_norm_exponent

ARMIJO_C = 1e-4
BACKTRACK = 0.5
ROUNDOFF = 8 * np.finfo(float).eps
MIN_STEP = 1e-20


@dataclass(frozen=True)
class SolverSettings:
    step: float = 1.0
    max_iter: int = 20000
    tol: float = 1e-10
    R: float = 1.0
    p: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if not self.step > 0:
            raise InvalidArgument("step must be positive")
        if not self.tol > 0:
            raise InvalidArgument("tol must be positive")
        if not (self.R > 0 and math.isfinite(self.R)):
            raise InvalidArgument("radius R must be positive and finite")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InvalidArgument("max_iter must be a positive integer")
        check_norm_exponent(self.p)


@dataclass(frozen=True)
class ClassifierOutputs:
    """Per-point logit vectors aligned with ``dataset.ids``."""

    dataset: LabeledPointSet
    values: np.ndarray

    def __post_init__(self):
        Z = output_matrix(self.dataset, self.values)
        Z.setflags(write=False)
        object.__setattr__(self, "values", Z)

    @classmethod
    def from_mapping(cls, dataset, outputs) -> "ClassifierOutputs":
        return cls(dataset, output_matrix(dataset, outputs))

    def risk(self) -> float:
        return risk(self.dataset, self.values)

    def as_dict(self) -> dict:
        return {i: self.values[n].copy() for n, i in enumerate(self.dataset.ids)}


@dataclass
class BallSolution:
    z: np.ndarray
    iterations: int
    residual: float
    trace: list = field(default_factory=list)


def project_ones_complement(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return z - z.mean(axis=-1, keepdims=True)


def lp_norm(z, p: float) -> float:
    return float(np.sum(np.abs(z) ** p) ** (1.0 / p))


def project_lp_ball(z, R: float, p: float) -> np.ndarray:
    """Euclidean projection onto ``{x : ||x||_p <= R}``.

    Points inside the ball are returned unchanged; for p != 2 the multiplier
    of the dual scalar equation is found by safeguarded Newton.
    """
    p = check_norm_exponent(p)
    if not R > 0:
        raise InvalidArgument("radius must be positive")
    return _kernels.project_lp_ball(as_logits(z), float(R), p)


def collapse_to_means(outputs: ClassifierOutputs) -> ClassifierOutputs:
    """Replace every output by the probability-weighted mean of its class."""
    ds = outputs.dataset
    ds.require_nonempty_classes()
    Z = outputs.values
    means = np.zeros((ds.k, ds.k))
    np.add.at(means, ds.labels, ds.weights[:, None] * Z)
    means /= ds.class_weights()[:, None]
    collapsed = means[ds.labels]
    # singleton classes keep their output bit-for-bit
    single = np.bincount(ds.labels, minlength=ds.k)[ds.labels] == 1
    collapsed[single] = Z[single]
    return ClassifierOutputs(ds, collapsed)


def _initial_point(k: int, settings: SolverSettings, rng) -> np.ndarray:
    z = rng.standard_normal(k)
    if settings.p == 2.0:
        z = project_ones_complement(z)
    return z * (0.5 * settings.R / lp_norm(z, settings.p))


class _BallPGD:
    """Projected gradient descent on a product of l^p balls.

    ``f`` and ``grad`` act on an ``(r, k)`` array whose rows are each
    constrained to the ball.
    """

    def __init__(self, f, grad, settings: SolverSettings):
        self.f = f
        self.grad = grad
        self.s = settings
        self.on_hyperplane = settings.p == 2.0

    def project(self, Z):
        if self.on_hyperplane:
            Z = project_ones_complement(Z)
        return np.array([_kernels.project_lp_ball(row, self.s.R, self.s.p) for row in Z])

    def gradient(self, Z):
        # the loss is flat along (1,...,1); drop that component from the gradient
        return project_ones_complement(self.grad(Z))

    def tangential(self, Z, G):
        G = G.copy()
        p, R = self.s.p, self.s.R
        for row, g in zip(Z, G):
            if abs(lp_norm(row, p) - R) <= 1e-12 * R:
                n = np.sign(row) * np.abs(row) ** (p - 1)
                g -= (g @ n) / (n @ n) * n
        return G

    def residual(self, Z, G):
        return float(np.linalg.norm(self.project(Z - G) - Z))

    def run(self, Z):
        s = self.s
        Z = self.project(Z)
        fz = self.f(Z)
        G = self.gradient(Z)
        res = self.residual(Z, G)
        trace = [dict(iteration=0, value=fz, residual=res, step=0.0)]
        step = s.step
        prev = None
        for it in range(1, s.max_iter + 1):
            if res <= s.tol:
                return Z, it - 1, res, trace
            if prev is not None:
                dz, dg = prev
                curv = float(np.sum(dz * dg))
                if curv > 0:
                    step = min(max(float(np.sum(dz * dz)) / curv, 1e-10), 1e10)
            while True:
                Zn = self.project(Z - step * G)
                fn = self.f(Zn)
                Gn = self.gradient(Zn)
                dZ = Zn - Z
                slope = float(np.sum(G * dZ))
                if fn <= fz + ARMIJO_C * slope:
                    break
                if abs(fn - fz) <= ROUNDOFF * (abs(fz) + float(np.abs(Z).max())):
                    # f no longer resolves the change. Estimate it by the
                    # trapezoid rule on tangential gradients instead: on active
                    # rows the normal part only sees projection roundoff.
                    Gt, Gnt = self.tangential(Z, G), self.tangential(Zn, Gn)
                    tslope = float(np.sum(Gt * dZ))
                    if tslope < 0 and 0.5 * float(np.sum((Gt + Gnt) * dZ)) <= ARMIJO_C * tslope:
                        break
                step *= BACKTRACK
                if step < MIN_STEP:
                    raise NonConverged(
                        f"line search failed at residual {res:.3e}", last=Z, residual=res, trace=trace
                    )
            resn = self.residual(Zn, Gn)
            if np.array_equal(Zn, Z):
                # step too small to move any coordinate: restart from the nominal step
                prev, step = None, s.step
            else:
                prev = (Zn - Z, Gn - G)
            Z, fz, G, res = Zn, fn, Gn, resn
            trace.append(dict(iteration=it, value=fz, residual=res, step=step))
        if res <= s.tol:
            return Z, s.max_iter, res, trace
        raise NonConverged(
            f"no convergence within {s.max_iter} iterations (residual {res:.3e})",
            last=Z, residual=res, trace=trace,
        )


def minimize_phi_on_ball(j: int, k: int, settings: SolverSettings = SolverSettings()) -> BallSolution:
    """Minimize the cross-entropy for label ``j`` over the l^p ball of radius R."""
    if int(k) != k or k < 2:
        raise InvalidArgument("need k >= 2")
    if not 0 <= j < k:
        raise InvalidArgument(f"class index {j} out of range for k={k}")
    rng = np.random.default_rng(settings.seed)
    pgd = _BallPGD(
        lambda Z: phi(j, Z[0]),
        lambda Z: grad_phi(j, Z[0])[None, :],
        settings,
    )
    Z, iters, res, trace = pgd.run(_initial_point(k, settings, rng)[None, :])
    return BallSolution(Z[0], iters, res, trace)


def minimize_risk_on_ball(dataset: LabeledPointSet, settings: SolverSettings = SolverSettings()) -> BallSolution:
    """Jointly optimize one output per class for the weighted risk.

    Returns the ``(k, k)`` array of class outputs as ``z``.
    """
    dataset.require_nonempty_classes()
    k = dataset.k
    cw = dataset.class_weights()
    labels = np.arange(k)

    def f(Z):
        return float(cw @ pointwise_phi(Z, labels))

    def grad(Z):
        e = np.exp(Z - Z.max(axis=1, keepdims=True))
        G = e / e.sum(axis=1, keepdims=True) - np.eye(k)
        return cw[:, None] * G

    rng = np.random.default_rng(settings.seed)
    Z0 = np.array([_initial_point(k, settings, rng) for _ in range(k)])
    Z, iters, res, trace = _BallPGD(f, grad, settings).run(Z0)
    return BallSolution(Z, iters, res, trace)
