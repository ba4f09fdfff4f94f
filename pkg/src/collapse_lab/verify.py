"""Invariant suites behind ``collapse-lab verify``.

Each suite returns a list of :class:`Check` records; a check passes when its
measured value satisfies the stated bound.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import loss
from .counterexamples import mean_field as mf
from .counterexamples import three_neuron as tn
from .final_layer import ClassifierOutputs, SolverSettings, collapse_to_means, minimize_phi_on_ball
from .loss import LabeledPointSet
from .metrics import collapse_report
from .penultimate import check_isometry, optimize_penultimate
from .simplex import lagrange_residual, simplex_lp, vertex


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    bound: float
    relation: str = "<="

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        if self.relation == "<=":
            return self.value <= self.bound
        if self.relation == ">=":
            return self.value >= self.bound
        if self.relation == "<":
            return self.value < self.bound
        if self.relation == ">":
            return self.value > self.bound
        raise ValueError(self.relation)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}  value={self.value:.6g}  {self.relation} {self.bound:.3g}"


ORACLE_K = range(2, 11)
ORACLE_P = (1.5, 2.0, 3.0)
ORACLE_R = (1.0, 5.0)


def oracle_suite() -> list[Check]:
    checks = []
    for p in ORACLE_P:
        for R in ORACLE_R:
            worst_stat = 0.0
            for k in ORACLE_K:
                sol = minimize_phi_on_ball(0, k, SolverSettings(R=R, p=p))
                err = float(np.abs(sol.z - vertex(simplex_lp(k, R, p), 0)).max())
                checks.append(Check(f"oracle k={k} p={p:g} R={R:g} linf", err, 1e-5))
                worst_stat = max(worst_stat, lagrange_residual(0, sol.z, p)[0])
            checks.append(Check(f"stationarity p={p:g} R={R:g} max over k", worst_stat, 1e-8))
    return checks


def hessian_suite(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    checks = []
    for k in range(2, 11):
        min_eig, second, null = np.inf, np.inf, 0.0
        for _ in range(20):
            z = rng.normal(scale=3.0, size=k)
            ev = np.linalg.eigvalsh(loss.hess_phi(z))
            min_eig = min(min_eig, ev[0])
            second = min(second, ev[1])
            null = max(null, float(np.abs(loss.hess_phi(z) @ np.ones(k)).max()))
        checks.append(Check(f"hessian PSD k={k} min eigenvalue", float(min_eig), -1e-10, ">="))
        checks.append(Check(f"hessian strict on hyperplane k={k} second eigenvalue", float(second), 0.0, ">"))
        checks.append(Check(f"hessian ones in null space k={k}", null, 1e-12))
    shift = 0.0
    for _ in range(100):
        k = int(rng.integers(2, 11))
        z = rng.normal(scale=3.0, size=k)
        lam = rng.uniform(-10, 10)
        j = int(rng.integers(k))
        shift = max(shift, abs(loss.phi(j, z + lam) - loss.phi(j, z)))
        shift = max(shift, float(np.abs(loss.softmax(z + lam) - loss.softmax(z)).max()))
    checks.append(Check("softmax/phi shift invariance", shift, 1e-12))
    ds = LabeledPointSet(["a", "b", "c"], [0, 1, 2], [0.2, 0.3, 0.5])
    Z = rng.normal(size=(3, 3))
    checks.append(Check("risk shift invariance",
                        abs(loss.risk(ds, Z + 7.3) - loss.risk(ds, Z)), 1e-12))
    fd = 0.0
    points = [np.array([0.3, -1.2, 0.8])] + [rng.normal(size=int(rng.integers(2, 11))) for _ in range(20)]
    for z in points:
        for j in range(z.size):
            fd = max(fd, finite_difference_error(j, z))
    checks.append(Check("gradient vs central differences (relative)", fd, 1e-6))
    return checks


def finite_difference_error(j: int, z, h: float = 1e-6) -> float:
    g = loss.grad_phi(j, z)
    num = np.empty_like(g)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        num[i] = (loss.phi(j, z + e) - loss.phi(j, z - e)) / (2 * h)
    return float(np.linalg.norm(num - g) / np.linalg.norm(g))


def random_outputs(rng, k=None, n=None):
    k = k or int(rng.integers(2, 7))
    n = n or int(rng.integers(k, 4 * k + 1))
    labels = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
    w = rng.uniform(0.1, 1.0, size=n)
    ds = LabeledPointSet([f"x{i}" for i in range(n)], labels, w / w.sum(), k=k)
    return ClassifierOutputs(ds, rng.normal(scale=2.0, size=(n, k)))


def collapse_suite(seed: int = 0, trials: int = 1000) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(trials):
        out = random_outputs(rng)
        worst = max(worst, collapse_to_means(out).risk() - out.risk())
    checks = [Check(f"collapse-to-means risk increase over {trials} data sets", float(worst), 0.0)]
    eq = 0.0
    for _ in range(100):
        out = random_outputs(rng)
        ds = out.dataset
        base = rng.normal(size=(ds.k, ds.k))[ds.labels]
        shifted = base + rng.normal(scale=3.0, size=len(ds))[:, None]
        o = ClassifierOutputs(ds, shifted)
        eq = max(eq, abs(collapse_to_means(o).risk() - o.risk()))
    checks.append(Check("collapse-to-means equality for deviations along ones", eq, 1e-12))
    checks.append(Check("collapse metrics rotation/translation invariance", metric_invariance(rng), 1e-10))
    return checks


def metric_invariance(rng, trials: int = 50) -> float:
    worst = 0.0
    for _ in range(trials):
        k = int(rng.integers(2, 7))
        d = int(rng.integers(k, k + 5))
        labels = np.concatenate([np.arange(k), rng.integers(0, k, size=3 * k)])
        X = rng.normal(size=(labels.size, d))
        A = rng.normal(size=(k, d))
        Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
        c = rng.normal(scale=5.0, size=d)
        r0 = collapse_report(X, labels, A)
        r1 = collapse_report(X @ Q.T + c, labels, A @ Q.T)
        for f in ("within_class_variance", "equinorm_deviation", "equiangular_deviation", "self_duality_deviation"):
            worst = max(worst, abs(getattr(r0, f) - getattr(r1, f)))
    return worst


PENULTIMATE_GRID = [(k, m, R) for k in (3, 4, 5) for m in (k - 1, 2 * k) for R in (1.0, 2.0)]


def penultimate_checks(k: int, m: int, R: float, seed: int = 0) -> list[Check]:
    t0 = time.perf_counter()
    res = optimize_penultimate(LabeledPointSet.one_point_classes(k), m, R, SolverSettings(tol=1e-8, seed=seed))
    elapsed = time.perf_counter() - t0
    st = res.state
    rep = check_isometry(st)
    G = st.Y @ st.Y.T
    d = np.diag(G)
    D = d[:, None] + d[None, :] - 2 * G
    target = 2 * k * R**2 / (k - 1)
    dist_err = float(np.abs(D[~np.eye(k, dtype=bool)] - target).max())
    tag = f"k={k} m={m} R={R:g}"
    return [
        Check(f"penultimate {tag} |sum y_i| / R", rep.center_norm / R, 1e-3, "<"),
        Check(f"penultimate {tag} pairwise distance error", dist_err, 1e-3),
        Check(f"penultimate {tag} Gram isometry error", rep.gram_deviation, 1e-3),
        Check(f"penultimate {tag} risk minus oracle risk", abs(res.risk - res.oracle_risk), 1e-6),
        Check(f"penultimate {tag} runtime seconds", elapsed, 30.0, "<"),
    ]


def penultimate_suite() -> list[Check]:
    return [c for cfg in PENULTIMATE_GRID for c in penultimate_checks(*cfg)]


def random_weight_triples(n: int, seed: int = 0, floor: float = 0.05) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        p = rng.dirichlet([1.0, 1.0, 1.0])
        if p[0] >= floor and p[2] >= floor:
            out.append(p)
    return out


def ode_suite(seed: int = 0) -> list[Check]:
    checks = []
    worst = 0.0
    for p in random_weight_triples(20, seed):
        traj = tn.integrate_three_neuron(tn.ThreeNeuronState(0.0, 0.0, 0.0, *p), 1e6)
        worst = max(worst, abs(tn.class_gap(traj)[-1] - tn.limit_gap(p)))
    checks.append(Check("three-neuron gap limit, 20 random triples", worst, 5e-3))
    traj = tn.integrate_three_neuron(tn.ThreeNeuronState(0.0, 0.0, 0.0, 0.25, 0.25, 0.5), 1e6)
    checks.append(Check("three-neuron gap with p3 = 2 p1", abs(tn.class_gap(traj)[-1]), 5e-3))
    a1 = tn.a1_exact(traj.t, 0.0, 0.25)
    checks.append(Check("a1 closed form (relative, stretched steps)",
                        float(np.abs(traj.a[1:, 0] / a1[1:] - 1).max()), 1e-6))
    s0 = tn.ThreeNeuronState.on_invariant_manifold((0.3, 0.3, 0.4), a1=0.2, a2=-0.1)
    fixed = tn.integrate_three_neuron(s0, 100.0, dt=1e-2, stretch=False, checkpoints=np.linspace(1, 100, 100))
    a2, a3 = tn.manifold_exact(fixed.t, s0)
    rel = max(
        float(np.abs(fixed.a[:, 0] / tn.a1_exact(fixed.t, 0.2, 0.3) - 1).max()),
        float(np.abs(fixed.a[:, 1] / a2 - 1).max()),
        float(np.abs(fixed.a[:, 2] / a3 - 1).max()),
    )
    checks.append(Check("closed-form a1, a2, a3 on invariant manifold (dt=1e-2)", rel, 1e-6))
    g = tn.exp_risk_gradient(np.array([0.4, -0.7, 1.1]), tn.INNER_W, tn.INNER_B, [0.2, 0.3, 0.5])
    checks.append(Check("inner weights and biases receive zero gradient",
                        float(np.abs(np.concatenate(g[1:])).max()), 0.0))
    return checks


def margin_suite(seed: int = 0) -> list[Check]:
    data = mf.MarginDataset.standard()
    checks = []
    for b in (0.0, 0.25, 0.5, 0.75, 1.0):
        rep = mf.margin_report(mf.f_b_ensemble(b), data)
        direct = float(np.min(data.xi * mf.f_b_classifier(b, data.x)))
        checks.append(Check(f"f_b b={b:g} normalized margin - 0.5",
                            max(abs(rep.margin - 0.5), abs(direct - 0.5)), 1e-15))
    t0 = time.perf_counter()
    run = mf.train_mean_field_relu(data, m=500, seed=seed)
    elapsed = time.perf_counter() - t0
    rep = mf.margin_report(run.ensemble, data)
    checks += [
        Check("trained ensemble normalized margin lower", rep.margin, 0.45, ">="),
        Check("trained ensemble normalized margin upper", rep.margin, 0.5 + 1e-9),
        Check("trained ensemble spread on class [1,2]", rep.class_spread[1.0], 0.1, ">"),
        Check("margin along trajectory never above 1/2",
              max(r["margin"] for r in run.trace), 0.5 + 1e-9),
        Check("mean-field training seconds", elapsed, 60.0, "<"),
    ]
    return checks


SUITES: dict[str, Callable[[], list[Check]]] = {
    "oracle": oracle_suite,
    "hessian": hessian_suite,
    "collapse": collapse_suite,
    "penultimate": penultimate_suite,
    "ode": ode_suite,
    "margin": margin_suite,
}


def run_suite(name: str) -> list[Check]:
    if name == "all":
        return [c for fn in SUITES.values() for c in fn()]
    return SUITES[name]()
