"""Closed-form optimal final-layer outputs on l^p balls.

For each class ``i`` the cross-entropy ``phi(i, .)`` has a unique minimizer
on the ball ``{||z||_p <= R}`` of the form ``alpha e_i + beta sum_{j != i} e_j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, NumericFailure, UnsupportedNorm
from .loss import grad_phi


def check_norm_exponent(p: float) -> float:
    p = float(p)
    if not (1.0 < p < math.inf):
        raise UnsupportedNorm(f"norm exponent p={p} unsupported, need 1 < p < inf")
    return p


def _check_k_R(k: int, R: float) -> None:
    if int(k) != k or k < 2:
        raise InvalidArgument(f"need k >= 2 classes, got {k!r}")
    if not (R > 0 and math.isfinite(R)):
        raise InvalidArgument(f"radius must be positive and finite, got {R!r}")


@dataclass(frozen=True)
class SimplexConfig:
    k: int
    R: float
    p: float
    alpha: float
    beta: float

    def constraint_residual(self) -> float:
        """Relative error of ``|alpha|^p + (k-1)|beta|^p = R^p``."""
        p = self.p
        lhs = abs(self.alpha) ** p + (self.k - 1) * abs(self.beta) ** p
        return abs(lhs / self.R**p - 1.0)

    def stationarity_residual(self) -> float:
        p = self.p
        a, b = self.alpha, self.beta
        return abs(abs(a) ** (p - 2) * a + (self.k - 1) * abs(b) ** (p - 2) * b) / self.R ** (p - 1)


def simplex_l2(k: int, R: float) -> SimplexConfig:
    _check_k_R(k, R)
    alpha = math.sqrt((k - 1) / k) * R
    beta = -R / math.sqrt(k * (k - 1))
    return SimplexConfig(int(k), float(R), 2.0, alpha, beta)


def simplex_lp(k: int, R: float, p: float) -> SimplexConfig:
    p = check_norm_exponent(p)
    _check_k_R(k, R)
    if p == 2.0:
        return simplex_l2(k, R)
    c = (k - 1) ** (1.0 / (p - 1.0))
    q = c / (1.0 + c)
    alpha = q ** (1.0 / p) * R
    beta = -(((1.0 - q) / (k - 1)) ** (1.0 / p)) * R
    return SimplexConfig(int(k), float(R), p, alpha, beta)


def vertex(config: SimplexConfig, i: int) -> np.ndarray:
    if isinstance(i, bool) or int(i) != i or not 0 <= i < config.k:
        raise InvalidArgument(f"class index {i!r} out of range for k={config.k}")
    z = np.full(config.k, config.beta)
    z[int(i)] = config.alpha
    return z


def vertices(config: SimplexConfig) -> np.ndarray:
    """All vertices as rows of a ``(k, k)`` array."""
    return config.beta + (config.alpha - config.beta) * np.eye(config.k)


def oracle_risk(config: SimplexConfig) -> float:
    """Cross-entropy at any vertex; equal for all classes by symmetry."""
    k, a, b = config.k, config.alpha, config.beta
    return math.log1p((k - 1) * math.exp(b - a))


def gram(config: SimplexConfig) -> np.ndarray:
    if config.p != 2.0:
        raise UnsupportedNorm("vertex Gram matrix is only derived for p = 2")
    V = vertices(config)
    return V @ V.T


def expected_gram(k: int, R: float) -> np.ndarray:
    return R**2 * (k * np.eye(k) - 1.0) / (k - 1)


def pairwise_distance_sq(config: SimplexConfig) -> float:
    """Squared distance between any two distinct vertices (p = 2 only)."""
    if config.p != 2.0:
        raise UnsupportedNorm("pairwise distances are only derived for p = 2")
    d2 = 2.0 * (config.alpha - config.beta) ** 2
    expected = 2.0 * config.k * config.R**2 / (config.k - 1)
    if abs(d2 - expected) > 1e-10 * max(1.0, expected):
        raise NumericFailure(f"vertex distance {d2!r} disagrees with 2kR^2/(k-1) = {expected!r}")
    return d2


def lagrange_residual(j: int, z, p: float) -> tuple[float, float]:
    """Stationarity check ``grad phi_j(z) = lam * |z|^(p-2) z``.

    ``lam`` is fitted by least squares; returns ``(residual_norm, lam)``.
    """
    p = check_norm_exponent(p)
    z = np.asarray(z, dtype=np.float64)
    g = grad_phi(j, z)
    n = np.abs(z) ** (p - 1.0) * np.sign(z)
    nn = n @ n
    if nn == 0.0:
        return float(np.linalg.norm(g)), 0.0
    lam = float(g @ n / nn)
    return float(np.linalg.norm(g - lam * n)), lam
