"""Joint optimization of penultimate features and a norm-bounded linear map.

Toy model with one point per class: features ``y_i`` lie in the Euclidean
ball of radius R in R^m, the map ``A: R^m -> R^k`` has operator norm at most
one, and the outputs are ``z_i = A y_i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, NonConverged, NumericFailure, UnsupportedNorm
from .final_layer import ARMIJO_C, BACKTRACK, MIN_STEP, ROUNDOFF, SolverSettings
from .loss import LabeledPointSet, pointwise_phi
from .simplex import expected_gram, oracle_risk, simplex_l2, vertices

MAX_STEP = 1e3


@dataclass(frozen=True)
class PenultimateState:
    Y: np.ndarray
    A: np.ndarray
    R: float

    @property
    def k(self) -> int:
        return self.Y.shape[0]

    @property
    def m(self) -> int:
        return self.Y.shape[1]

    def outputs(self) -> np.ndarray:
        """Rows are ``A y_i``."""
        return self.Y @ self.A.T

    def is_feasible(self, slack: float = 1e-9) -> bool:
        norms = np.linalg.norm(self.Y, axis=1)
        return bool(norms.max() <= self.R + slack and np.linalg.norm(self.A, 2) <= 1.0 + slack)


@dataclass
class PenultimateResult:
    state: PenultimateState
    risk: float
    oracle_risk: float
    iterations: int
    residual: float
    trace: list = field(default_factory=list)


@dataclass(frozen=True)
class IsometryReport:
    gram_deviation: float
    center_norm: float
    radius_deviation: float
    span_singular_values: np.ndarray

    def as_dict(self) -> dict:
        sv = self.span_singular_values
        return dict(
            gram_deviation=self.gram_deviation,
            center_norm=self.center_norm,
            radius_deviation=self.radius_deviation,
            span_sv_min=float(sv.min()) if sv.size else float("nan"),
            span_sv_max=float(sv.max()) if sv.size else float("nan"),
        )


def project_spectral(A) -> np.ndarray:
    """Clip the singular values of ``A`` at one."""
    A = np.asarray(A, dtype=np.float64)
    if not np.all(np.isfinite(A)):
        raise NumericFailure("matrix has non-finite entries")
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"SVD failed: {exc}") from exc
    if s.size == 0 or s[0] <= 1.0:
        return A.copy()
    return (U * np.minimum(s, 1.0)) @ Vt


def project_rows_to_ball(Y, R: float) -> np.ndarray:
    norms = np.linalg.norm(Y, axis=1, keepdims=True)
    return Y * np.minimum(1.0, R / np.maximum(norms, 1e-300))


def center_of_mass(state: PenultimateState) -> np.ndarray:
    return state.Y.mean(axis=0)


def span_basis(Y, rtol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis (columns) of the span of the rows of ``Y``."""
    _, s, Vt = np.linalg.svd(Y, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((Y.shape[1], 0))
    return Vt[s > rtol * s[0]].T


def check_isometry(state: PenultimateState) -> IsometryReport:
    Y, A = state.Y, state.A
    G = Y @ Y.T
    Z = state.outputs()
    Q = span_basis(Y)
    sv = np.linalg.svd(A @ Q, compute_uv=False) if Q.shape[1] else np.zeros(0)
    return IsometryReport(
        gram_deviation=float(np.abs(Z @ Z.T - G).max()),
        center_norm=float(np.linalg.norm(Y.sum(axis=0))),
        radius_deviation=float(np.abs(np.linalg.norm(Y, axis=1) - state.R).max()),
        span_singular_values=sv,
    )


def oracle_state(k: int, m: int, R: float) -> PenultimateState:
    """Exact minimizer: simplex features in the first k-1 coordinates."""
    if m < k - 1:
        raise InvalidArgument(f"need m >= k-1, got m={m}, k={k}")
    V = vertices(simplex_l2(k, R))
    # orthonormal basis of the zero-sum hyperplane in R^k
    U = np.linalg.svd(np.eye(k) - 1.0 / k)[0][:, : k - 1]
    Y = np.zeros((k, m))
    Y[:, : k - 1] = V @ U
    A = np.zeros((k, m))
    A[:, : k - 1] = U
    return PenultimateState(Y, A, float(R))


def _check_inputs(dataset: LabeledPointSet, m: int, R: float, settings: SolverSettings) -> None:
    k = dataset.k
    if k < 2:
        raise InvalidArgument("need at least two classes")
    if len(dataset) != k or sorted(dataset.labels.tolist()) != list(range(k)):
        raise InvalidArgument("penultimate toy model needs exactly one point per class")
    if int(m) != m or m < k - 1:
        raise InvalidArgument(f"feature dimension m={m} must be at least k-1={k - 1}")
    if not (R > 0 and math.isfinite(R)):
        raise InvalidArgument("radius must be positive")
    if settings.p != 2.0:
        raise UnsupportedNorm("penultimate geometry is Euclidean only")


def initial_state(k: int, m: int, R: float, seed: int = 0) -> PenultimateState:
    """Random partial isometry for A and Gaussian features at radius R/2."""
    rng = np.random.default_rng(seed)
    n = max(k, m)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = Q[:k, :m]
    Y = rng.standard_normal((k, m))
    Y *= 0.5 * R / np.linalg.norm(Y, axis=1, keepdims=True)
    return PenultimateState(Y, A, float(R))


def optimize_penultimate(
    dataset: LabeledPointSet,
    m: int,
    R: float,
    settings: SolverSettings | None = None,
    *,
    init: PenultimateState | None = None,
) -> PenultimateResult:
    """Alternating projected gradient descent on features and linear map.

    Each sweep takes one Armijo step in Y (ball projection per row) and then
    one in A (singular value clipping). Converges when the unit-step gradient
    mapping of both blocks has norm at most ``settings.tol``.
    """
    settings = settings or SolverSettings(tol=1e-8)
    _check_inputs(dataset, m, R, settings)
    k = dataset.k
    order = np.argsort(dataset.labels)
    w = dataset.weights[order]
    labels = np.arange(k)
    state0 = init or initial_state(k, m, R, settings.seed)
    Y, A = state0.Y.copy(), state0.A.copy()
    Y = project_rows_to_ball(Y, R)
    A = project_spectral(A)

    def f(Y, A):
        return float(w @ pointwise_phi(Y @ A.T, labels))

    def grads(Y, A):
        Z = Y @ A.T
        e = np.exp(Z - Z.max(axis=1, keepdims=True))
        G = w[:, None] * (e / e.sum(axis=1, keepdims=True) - np.eye(k))
        return G @ A, G.T @ Y

    def residual(Y, A):
        gY, gA = grads(Y, A)
        return float(
            np.linalg.norm(project_rows_to_ball(Y - gY, R) - Y)
            + np.linalg.norm(project_spectral(A - gA) - A)
        )

    target_gram = expected_gram(k, R)

    def record(it, L, res):
        Z = Y @ A.T
        return dict(
            iteration=it,
            risk=L,
            residual=res,
            gram_deviation=float(np.abs(Y @ Y.T - target_gram).max()),
            isometry_residual=float(np.abs(Z @ Z.T - Y @ Y.T).max()),
        )

    def block_step(X, grad, proj, step, L, fx):
        while True:
            Xn = proj(X - step * grad)
            Ln = fx(Xn)
            if Ln <= L + ARMIJO_C * float(np.sum(grad * (Xn - X))):
                return Xn, Ln, step
            if Ln - L <= ROUNDOFF * abs(L):
                return Xn, min(Ln, L), step
            step *= BACKTRACK
            if step < MIN_STEP:
                return X, L, step

    L = f(Y, A)
    res = residual(Y, A)
    trace = [record(0, L, res)]
    sY = sA = settings.step
    it = 0
    for it in range(1, settings.max_iter + 1):
        if res <= settings.tol:
            it -= 1
            break
        gY, _ = grads(Y, A)
        Y, L, sY = block_step(Y, gY, lambda X: project_rows_to_ball(X, R), sY, L, lambda X: f(X, A))
        _, gA = grads(Y, A)
        A, L, sA = block_step(A, gA, project_spectral, sA, L, lambda X: f(Y, X))
        sY, sA = min(2.0 * sY, MAX_STEP), min(2.0 * sA, MAX_STEP)
        res = residual(Y, A)
        trace.append(record(it, L, res))
    # Directions of A orthogonal to the features never receive gradient and do
    # not affect any output; drop them to return the minimal-norm map.
    # The cutoff treats the residual mean of the features (tiny at a
    # minimizer) as numerically zero, so the kept span is the simplex plane.
    Q = span_basis(Y, rtol=1e-6)
    A = A @ Q @ Q.T
    L, res = f(Y, A), residual(Y, A)
    state = PenultimateState(Y, A, float(R))
    result = PenultimateResult(state, L, oracle_risk(simplex_l2(k, R)), it, res, trace)
    if res > settings.tol:
        err = NonConverged(
            f"penultimate optimization stopped at residual {res:.3e} after {it} sweeps",
            last=result, residual=res, trace=trace,
        )
        raise err
    return result
