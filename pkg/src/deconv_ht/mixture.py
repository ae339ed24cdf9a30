"""Discrete mixing distributions, count vectors and their covariances."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .kernels import KernelMatrix

__all__ = [
    "CovarianceModel",
    "DiscreteMixture",
    "CountVector",
    "mixture_pmf",
    "counts_to_freq",
    "expected_inverse",
    "expected_functional",
    "covariance_star",
    "regularized_inverse",
]

RIDGE_TRIGGER = 1e-10
RIDGE_SCALE = 1e-8


class CovarianceModel(str, enum.Enum):
    """EB: parameters i.i.d. from G. CD: parameters fixed, G is their empirical law."""

    EB = "eb"
    CD = "cd"


@dataclass(frozen=True)
class DiscreteMixture:
    support: np.ndarray
    weights: np.ndarray
    diagnostics: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        s = np.asarray(self.support, dtype=float).ravel()
        g = np.asarray(self.weights, dtype=float).ravel()
        if s.shape != g.shape:
            raise ValueError("support and weights must have the same length")
        if np.any(s <= 0):
            raise ValueError("support points must be positive")
        if np.any(g < 0):
            raise ValueError("weights must be non-negative")
        if abs(g.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {g.sum()!r}, not 1")
        s.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "weights", g)

    @classmethod
    def point_mass(cls, support, index: int) -> "DiscreteMixture":
        g = np.zeros(len(support))
        g[index] = 1.0
        return cls(support, g)

    def atoms(self, threshold: float = 0.0):
        """(support, weight) pairs with weight above ``threshold``."""
        keep = self.weights > threshold
        return list(zip(self.support[keep].tolist(), self.weights[keep].tolist()))


@dataclass(frozen=True)
class CountVector:
    """Counts of observed effort values 1..J."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1:
            raise ValueError("counts must be a vector")
        if np.any(c < 0) or np.any(c != np.round(c)):
            raise ValueError("counts must be non-negative integers")
        c = c.astype(np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_observations(cls, y, n_outcomes: int) -> "CountVector":
        y = np.asarray(y, dtype=np.int64).ravel()
        if y.size and (y.min() < 1 or y.max() > n_outcomes):
            raise ValueError(f"observations must lie in 1..{n_outcomes}")
        return cls(np.bincount(y - 1, minlength=n_outcomes))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __len__(self):
        return self.counts.size


def _check_match(P: KernelMatrix, g: DiscreteMixture):
    if g.weights.size != P.n_support:
        raise ValueError(
            f"mixture has {g.weights.size} support points, kernel has {P.n_support} columns"
        )


def mixture_pmf(P: KernelMatrix, g: DiscreteMixture) -> np.ndarray:
    _check_match(P, g)
    return P.matrix @ g.weights


def counts_to_freq(c: CountVector) -> np.ndarray:
    m = c.total
    if m == 0:
        raise ValueError("empty sample: no counts")
    return c.counts / m


def expected_inverse(g: DiscreteMixture) -> float:
    """E_G[1/S]."""
    return float(np.sum(g.weights / g.support))


def expected_functional(g: DiscreteMixture, h: Callable) -> float:
    """E_G[h(S)] for a scalar function ``h``."""
    values = np.array([h(float(s)) for s in g.support], dtype=float)
    return float(np.dot(g.weights, values))


def covariance_star(P: KernelMatrix, g: DiscreteMixture, m: int, model) -> np.ndarray:
    """Covariance of the counts with the last coordinate dropped.

    Under ``EB`` the counts are multinomial with cell probabilities
    ``f = P g``. Under ``CD`` they are a sum of independent categorical
    draws, a fraction ``g_i`` of which use column ``i``.
    """
    _check_match(P, g)
    if m < 1:
        raise ValueError("sample size must be >= 1")
    model = CovarianceModel(model)
    A = P.matrix
    w = g.weights
    if model is CovarianceModel.EB:
        f = A @ w
        full = np.diag(f) - np.outer(f, f)
    else:
        # sum_i g_i (diag(p_i) - p_i p_i^T)
        full = np.diag(A @ w) - (A * w) @ A.T
    full = m * full
    return full[:-1, :-1]


def regularized_inverse(sigma: np.ndarray) -> tuple[np.ndarray, bool]:
    """Inverse of a PSD covariance with a small ridge if it is near-singular.

    Returns the inverse and whether the ridge was applied. A zero matrix
    (all mass on outcomes that carry no variance) gives the identity.
    """
    sigma = 0.5 * (sigma + sigma.T)
    d = sigma.shape[0]
    tr = float(np.trace(sigma))
    if tr <= 0.0:
        return np.eye(d), True
    ridge = False
    if np.linalg.eigvalsh(sigma)[0] < RIDGE_TRIGGER * tr:
        sigma = sigma + RIDGE_SCALE * tr / d * np.eye(d)
        ridge = True
    inv = np.linalg.inv(sigma)
    return 0.5 * (inv + inv.T), ridge
