"""Softmax cross-entropy, its derivatives and the weighted risk functional.

Everything here is a pure function of its inputs. Logits are plain 1-d
float arrays; a labeled data set is a frozen :class:`LabeledPointSet`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidArgument

WEIGHT_TOL = 1e-12


def as_logits(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise InvalidArgument(f"logit vector must be 1-d and non-empty, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise InvalidArgument("logit vector has non-finite entries")
    return z


def _check_class(j: int, k: int) -> int:
    if isinstance(j, bool) or int(j) != j or not 0 <= j < k:
        raise InvalidArgument(f"class index {j!r} out of range for k={k}")
    return int(j)


def logsumexp(z: np.ndarray) -> float:
    zmax = z.max()
    return float(zmax + np.log(np.exp(z - zmax).sum()))


def softmax(z) -> np.ndarray:
    """Softmax density of a logit vector, computed with max subtraction."""
    z = as_logits(z)
    e = np.exp(z - z.max())
    return e / e.sum()


def phi(j: int, z) -> float:
    """Cross-entropy ``log(sum_i exp(z_i)) - z_j`` of logits ``z`` for label ``j``."""
    z = as_logits(z)
    j = _check_class(j, z.size)
    d = z - z[j]
    top = d.max()
    if top > 0.0:
        return float(top + np.log(np.exp(d - top).sum()))
    # label logit is the largest: log1p keeps tiny losses from cancelling to zero
    d[j] = -np.inf
    return float(np.log1p(np.exp(d).sum()))


def grad_phi(j: int, z) -> np.ndarray:
    z = as_logits(z)
    j = _check_class(j, z.size)
    g = softmax(z)
    g[j] -= 1.0
    return g


def hess_phi(z) -> np.ndarray:
    """Hessian ``diag(pi) - pi pi^T``; it does not depend on the label."""
    pi = softmax(z)
    return np.diag(pi) - np.outer(pi, pi)


@dataclass(frozen=True)
class LabeledPointSet:
    """Finite labeled data with probability weights.

    ``ids`` name the inputs, ``labels[n]`` is the class of ``ids[n]`` and
    ``weights`` is a probability vector over the points. Weights are checked
    to sum to one within ``1e-12`` and then renormalized.
    """

    ids: tuple
    labels: np.ndarray
    weights: np.ndarray
    k: int

    def __init__(self, ids: Sequence, labels: Sequence[int], weights=None, k: int | None = None):
        ids = tuple(str(i) for i in ids)
        labels = np.asarray(labels)
        n = len(ids)
        if n == 0:
            raise InvalidArgument("data set has no points")
        if len(set(ids)) != n:
            raise InvalidArgument("input ids must be unique")
        if labels.shape != (n,):
            raise InvalidArgument("need exactly one label per point")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.mod(labels, 1) == 0):
                raise InvalidArgument("labels must be integers")
            labels = labels.astype(np.int64)
        if labels.min() < 0:
            raise InvalidArgument("labels must be non-negative")
        if k is None:
            k = int(labels.max()) + 1
        if labels.max() >= k:
            raise InvalidArgument(f"label {labels.max()} out of range for k={k}")
        if weights is None:
            weights = np.full(n, 1.0 / n)
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (n,):
            raise InvalidArgument("need exactly one weight per point")
        if not np.all(weights > 0):
            raise InvalidArgument("weights must be strictly positive")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise InvalidArgument(f"weights sum to {weights.sum()!r}, expected 1")
        weights = weights / weights.sum()
        labels = labels.astype(np.int64)
        labels.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "k", int(k))

    def __len__(self) -> int:
        return len(self.ids)

    def class_members(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.labels == i)

    def class_weights(self) -> np.ndarray:
        return np.bincount(self.labels, weights=self.weights, minlength=self.k)

    def require_nonempty_classes(self) -> None:
        empty = [i for i in range(self.k) if not np.any(self.labels == i)]
        if empty:
            raise InvalidArgument(f"classes {empty} have no points")

    @classmethod
    def one_point_classes(cls, k: int, weights=None) -> "LabeledPointSet":
        return cls([f"x{i}" for i in range(k)], np.arange(k), weights, k=k)


def output_matrix(dataset: LabeledPointSet, outputs) -> np.ndarray:
    """Stack outputs into an ``(n, k)`` array aligned with ``dataset.ids``.

    ``outputs`` is either a mapping from input id to logit vector or an
    array already aligned with the points.
    """
    if isinstance(outputs, Mapping):
        missing = [i for i in dataset.ids if i not in outputs]
        if missing:
            raise InvalidArgument(f"no output for inputs {missing[:5]}")
        Z = np.array([np.asarray(outputs[i], dtype=np.float64) for i in dataset.ids])
    else:
        Z = np.asarray(outputs, dtype=np.float64)
    if Z.shape != (len(dataset), dataset.k):
        raise InvalidArgument(f"outputs have shape {Z.shape}, expected {(len(dataset), dataset.k)}")
    if not np.all(np.isfinite(Z)):
        raise InvalidArgument("outputs have non-finite entries")
    return Z


def pointwise_phi(Z: np.ndarray, labels: np.ndarray) -> np.ndarray:
    rows = np.arange(len(labels))
    D = Z - Z[rows, labels][:, None]
    top = np.maximum(D.max(axis=1), 0.0)
    E = np.exp(D - top[:, None])
    E[rows, labels] = 0.0
    # top + log(exp(-top) + sum of the other terms), via log1p when top == 0
    out = top + np.log(np.exp(-top) + E.sum(axis=1))
    small = top == 0.0
    out[small] = np.log1p(E[small].sum(axis=1))
    return out


def risk(dataset: LabeledPointSet, outputs) -> float:
    """Weighted average of the pointwise cross-entropy."""
    Z = output_matrix(dataset, outputs)
    return float(dataset.weights @ pointwise_phi(Z, dataset.labels))
