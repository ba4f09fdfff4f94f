"""Snapshot measures of class collapse in feature or output space."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidArgument


@dataclass(frozen=True)
class CollapseReport:
    """Deviations from an exactly collapsed, simplex-shaped, self-dual configuration.

    ``within_class_variance`` is the largest over classes of the mean squared
    distance to the class mean. ``self_duality_deviation`` is ``None`` when no
    linear map was supplied.
    """

    within_class_variance: float
    equinorm_deviation: float
    equiangular_deviation: float
    self_duality_deviation: float | None
    center: np.ndarray

    def as_dict(self) -> dict:
        d = asdict(self)
        center = d.pop("center")
        if d["self_duality_deviation"] is None:
            del d["self_duality_deviation"]
        d.update({f"center_{i}": float(v) for i, v in enumerate(center)})
        return d


def class_means(features, labels, k: int | None = None) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or labels.shape != (X.shape[0],):
        raise InvalidArgument("features must be (n, d) with one label per row")
    k = int(labels.max()) + 1 if k is None else int(k)
    counts = np.bincount(labels, minlength=k)
    if counts.size > k or np.any(counts[:k] == 0):
        raise InvalidArgument(f"every class in 0..{k - 1} needs at least one point")
    means = np.zeros((k, X.shape[1]))
    np.add.at(means, labels, X)
    return means / counts[:, None]


def _cos(u, v):
    return (u @ v.T) / np.outer(np.linalg.norm(u, axis=1), np.linalg.norm(v, axis=1))


def collapse_report(features, labels, A=None, k: int | None = None) -> CollapseReport:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    labels = np.asarray(labels).astype(np.int64)
    means = class_means(X, labels, k)
    k = means.shape[0]
    if k < 2:
        raise InvalidArgument("need at least two classes")
    sq = np.sum((X - means[labels]) ** 2, axis=1)
    within = float(max(sq[labels == i].mean() for i in range(k)))
    # classes count equally in the global center regardless of their size
    M = means.mean(axis=0)
    C = means - M
    norms = np.linalg.norm(C, axis=1)
    equinorm = float(norms.std() / norms.mean())
    off = ~np.eye(k, dtype=bool)
    equiangular = float(np.abs(_cos(C, C)[off] + 1.0 / (k - 1)).max())
    duality = None
    if A is not None:
        A = np.asarray(A, dtype=np.float64)
        if A.shape != (k, X.shape[1]):
            raise InvalidArgument(f"A must have shape {(k, X.shape[1])}, got {A.shape}")
        duality = float(np.max(1.0 - np.abs(np.diag(_cos(A, C)))))
    return CollapseReport(within, equinorm, equiangular, duality, M)
