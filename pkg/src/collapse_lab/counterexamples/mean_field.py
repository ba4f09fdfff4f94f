"""Mean-field two-layer ReLU network on the separable 1-d problem.

Classes are [-2, -1] (label -1) and [1, 2] (label +1), sampled at the four
points -2, -1, 1, 2. Trained with the logistic loss the normalized network
approaches a maximum margin classifier, and the family ``f_b`` shows that
such classifiers are not constant on either class.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _kernels
from ..errors import InvalidArgument, NumericFailure

MARGIN_X = np.array([-2.0, -1.0, 1.0, 2.0])


@dataclass(frozen=True)
class ParticleEnsemble:
    """Particles (a_i, w_i, b_i) of ``h(x) = (1/m) sum_i a_i relu(w_i x + b_i)``."""

    a: np.ndarray
    w: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        arrs = [np.array(v, dtype=np.float64).ravel() for v in (self.a, self.w, self.b)]
        if arrs[0].size == 0 or len({v.size for v in arrs}) != 1:
            raise InvalidArgument("a, w, b must be non-empty and of equal length")
        if not all(np.all(np.isfinite(v)) for v in arrs):
            raise InvalidArgument("particle parameters must be finite")
        for name, v in zip("awb", arrs):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def m(self) -> int:
        return self.a.size

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        pre = np.multiply.outer(x, self.w) + self.b
        return np.maximum(pre, 0.0) @ self.a / self.m

    def path_norm(self) -> float:
        return float(np.sum(np.abs(self.a) * (np.abs(self.w) + np.abs(self.b))) / self.m)

    def scaled(self, lam: float) -> "ParticleEnsemble":
        return ParticleEnsemble(lam * self.a, self.w, self.b)


@dataclass(frozen=True)
class MarginDataset:
    x: np.ndarray
    xi: np.ndarray
    weights: np.ndarray

    @classmethod
    def standard(cls) -> "MarginDataset":
        return cls(MARGIN_X.copy(), np.sign(MARGIN_X), np.full(4, 0.25))

    def class_points(self, label: float) -> np.ndarray:
        return self.x[self.xi == label]


@dataclass(frozen=True)
class MarginReport:
    margin: float
    path_norm: float
    class_spread: dict

    def as_dict(self) -> dict:
        return dict(
            margin=self.margin,
            path_norm=self.path_norm,
            spread_pos=self.class_spread.get(1.0, float("nan")),
            spread_neg=self.class_spread.get(-1.0, float("nan")),
        )


def margin_report(ensemble: ParticleEnsemble, data: MarginDataset, spread_points=None) -> MarginReport:
    """Margin and class spread of the path-norm normalized classifier.

    ``spread_points`` maps a label to the points where the spread of that
    class is measured; by default the data points of the class are used.
    """
    pn = ensemble.path_norm()
    if pn <= 0.0:
        raise InvalidArgument("ensemble has zero path norm")
    margin = float(np.min(data.xi * ensemble(data.x)) / pn)
    spread = {}
    for label in (-1.0, 1.0):
        pts = data.class_points(label) if spread_points is None else np.asarray(spread_points[label])
        if pts.size:
            vals = ensemble(pts) / pn
            spread[label] = float(vals.max() - vals.min())
    return MarginReport(margin, pn, spread)


def f_b_classifier(b: float, x):
    """Maximum-margin classifier ``f_b`` from the continuum indexed by b in [0, 1]."""
    if not 0.0 <= b <= 1.0:
        raise InvalidArgument(f"b={b} outside [0, 1]")
    x = np.asarray(x, dtype=np.float64)
    mid = np.abs(x) < b
    val = np.where(mid, 2.0 * x, x + np.sign(x) * b)
    return val / (2.0 * (1.0 + b))


def f_b_ensemble(b: float) -> ParticleEnsemble:
    """Two-particle mean-field network equal to ``f_b`` with unit path norm."""
    if not 0.0 <= b <= 1.0:
        raise InvalidArgument(f"b={b} outside [0, 1]")
    c = 1.0 / (1.0 + b)
    return ParticleEnsemble([c, -c], [1.0, -1.0], [b, b])


def fit_b(ensemble: ParticleEnsemble, grid=None) -> float:
    """Member of the ``f_b`` family closest (least squares on [-2, 2]) to the normalized network."""
    xs = np.linspace(-2.0, 2.0, 401)
    target = ensemble(xs) / ensemble.path_norm()
    bs = np.linspace(0.0, 1.0, 1001) if grid is None else np.asarray(grid)
    errs = [np.sum((f_b_classifier(b, xs) - target) ** 2) for b in bs]
    return float(bs[int(np.argmin(errs))])


def init_ensemble(m: int, seed: int = 0) -> ParticleEnsemble:
    """Standard normal particles with |a|^2 <= |w|^2 + |b|^2 enforced by shrinking a."""
    if int(m) != m or m < 1:
        raise InvalidArgument("need at least one particle")
    rng = np.random.default_rng(seed)
    a, w, b = rng.standard_normal((3, int(m)))
    r = np.sqrt(w**2 + b**2)
    a = np.where(np.abs(a) > r, np.sign(a) * r, a)
    return ParticleEnsemble(a, w, b)


@dataclass
class MeanFieldRun:
    ensemble: ParticleEnsemble
    trace: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    steps: int = 0


def train_mean_field_relu(
    data: MarginDataset | None = None,
    m: int = 500,
    T: float = 1e4,
    dt: float = 1.0,
    seed: int = 0,
    n_checkpoints: int = 50,
    init: ParticleEnsemble | None = None,
) -> MeanFieldRun:
    """Explicit Euler particle gradient flow in mean-field time.

    Each particle moves by ``-m * grad`` (the 1/m output scaling is undone so
    time matches the distributional flow). A step that raises the risk is
    halved and retried; after an accepted step the step size grows back
    toward ``dt``. An explicit ``init`` ensemble may have any size.
    """
    data = data or MarginDataset.standard()
    if not (T > 0 and dt > 0):
        raise InvalidArgument("need positive T and dt")
    if init is None and m < 100:
        raise InvalidArgument("fresh ensembles need m >= 100 particles")
    ens = init or init_ensemble(m, seed)
    a, w, b = (np.array(v) for v in (ens.a, ens.w, ens.b))
    m = a.size
    x, xi, pw = data.x, data.xi, data.weights
    risk, ga, gw, gb, _ = _kernels.relu_risk_grad(a, w, b, x, xi, pw)
    marks = list(np.geomspace(min(dt, T), T, n_checkpoints))
    run = MeanFieldRun(ens)

    def snapshot(t, risk):
        e = ParticleEnsemble(a, w, b)
        rep = margin_report(e, data)
        run.trace.append(dict(t=t, risk=risk, margin=rep.margin, path_norm=rep.path_norm,
                              spread=rep.class_spread.get(1.0, float("nan"))))
        run.checkpoints.append((t, e))

    snapshot(0.0, risk)
    t, h = 0.0, dt
    steps = 0
    while t < T:
        h = min(h, T - t)
        while True:
            na, nw, nb = a - h * m * ga, w - h * m * gw, b - h * m * gb
            nrisk, nga, ngw, ngb, _ = _kernels.relu_risk_grad(na, nw, nb, x, xi, pw)
            if nrisk <= risk:
                break
            h *= 0.5
            if h < 1e-12 * dt:
                raise NumericFailure(f"Euler step kept increasing the risk at t={t:.6g}")
        a, w, b, risk, ga, gw, gb = na, nw, nb, nrisk, nga, ngw, ngb
        t = T if T - (t + h) <= 1e-12 * T else t + h
        steps += 1
        if marks and t >= marks[0] * (1 - 1e-12):
            while marks and t >= marks[0] * (1 - 1e-12):
                marks.pop(0)
            snapshot(t, risk)
        h = min(2.0 * h, dt)
    run.ensemble = ParticleEnsemble(a, w, b)
    run.steps = steps
    return run
