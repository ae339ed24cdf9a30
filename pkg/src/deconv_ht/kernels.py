"""Observation models for capped response-effort counts.

Two kernels are supported:

* truncated geometric: the number of contact attempts ``Y`` until a response,
  observed only when the response happens within ``M0`` attempts;
* shifted binomial: ``Y = 1 + W`` with ``W ~ Binomial(n, p*)``, the number of
  responses (including the current one) of a panel unit.

A kernel evaluated over a grid of candidate probabilities gives the matrix
``P`` whose column ``i`` is the pmf of ``Y`` at grid point ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import comb

__all__ = [
    "Grid",
    "TruncatedGeometric",
    "ShiftedBinomial",
    "KernelMatrix",
    "truncated_geometric_pmf",
    "response_prob",
    "per_attempt_prob",
    "shifted_binomial_pmf",
    "build_kernel_matrix",
    "default_grid",
]


@dataclass(frozen=True)
class Grid:
    """Strictly increasing support points in (0, 1]."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        if pts.size < 2:
            raise ValueError("grid needs at least 2 points")
        if not np.all(np.isfinite(pts)) or pts[0] <= 0.0 or pts[-1] > 1.0:
            raise ValueError("grid points must lie in (0, 1]")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def arange(cls, start: float, step: float, stop: float) -> "Grid":
        """Grid ``start, start + step, ..., stop`` (``stop`` included).

        Points are rounded to 12 decimals so that e.g. ``0.1, 0.12, ..., 1``
        hits 1.0 exactly.
        """
        if step <= 0 or start > stop:
            raise ValueError(f"invalid grid range start={start} step={step} stop={stop}")
        n = int(round((stop - start) / step)) + 1
        pts = np.round(start + step * np.arange(n), 12)
        if abs(pts[-1] - stop) > 1e-9:
            raise ValueError(f"step {step} does not divide [{start}, {stop}]")
        return cls(pts)

    def __len__(self):
        return self.points.size


@dataclass(frozen=True)
class TruncatedGeometric:
    """Attempts until response, capped at ``m0``.

    ``parametrization`` says whether grid points are per-attempt
    probabilities (``"p_tilde"``) or overall response probabilities
    (``"p_star"``).
    """

    m0: int
    parametrization: str = "p_tilde"

    def __post_init__(self):
        if int(self.m0) != self.m0 or self.m0 < 2:
            raise ValueError(f"attempt cap must be an integer >= 2, got {self.m0}")
        if self.parametrization not in ("p_tilde", "p_star"):
            raise ValueError(f"unknown parametrization {self.parametrization!r}")

    @property
    def support_size(self) -> int:
        return int(self.m0)


@dataclass(frozen=True)
class ShiftedBinomial:
    """``Y = 1 + W``, ``W ~ Binomial(n, p*)``; grid points are ``p*``."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"number of prior attempts must be an integer >= 1, got {self.n}")

    @property
    def support_size(self) -> int:
        return int(self.n) + 1


ObservationKernel = Union[TruncatedGeometric, ShiftedBinomial]


@dataclass(frozen=True)
class KernelMatrix:
    """Kernel pmfs over a grid.

    Attributes
    ----------
    matrix : ndarray, shape (J, kappa)
        ``matrix[j, i] = P(Y = j + 1 | grid point i)``.
    grid : Grid
        Construction grid, in the kernel's parametrization.
    p_star : ndarray, shape (kappa,)
        Overall response probability of each column. All divisions by the
        support value use these.
    kernel : ObservationKernel
    """

    matrix: np.ndarray
    grid: Grid
    p_star: np.ndarray
    kernel: ObservationKernel = field(repr=False)

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def n_outcomes(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_support(self) -> int:
        return self.matrix.shape[1]


def _check_m0(M0):
    if int(M0) != M0 or M0 < 1:
        raise ValueError(f"attempt cap must be a positive integer, got {M0}")


def truncated_geometric_pmf(p_tilde: float, M0: int) -> np.ndarray:
    """P(Y = j), j = 1..M0, for a geometric attempt count truncated at M0."""
    _check_m0(M0)
    if not 0.0 < p_tilde <= 1.0:
        raise ValueError(f"per-attempt probability must be in (0, 1], got {p_tilde}")
    M0 = int(M0)
    if p_tilde == 1.0:
        out = np.zeros(M0)
        out[0] = 1.0
        return out
    q = 1.0 - p_tilde
    untruncated = q ** np.arange(M0) * p_tilde
    return untruncated / -np.expm1(M0 * np.log1p(-p_tilde))


def response_prob(p_tilde, M0: int):
    """Probability of a response within ``M0`` attempts, ``1 - (1 - p)^M0``."""
    _check_m0(M0)
    p = np.asarray(p_tilde, dtype=float)
    if np.any(p <= 0.0) or np.any(p > 1.0):
        raise ValueError("per-attempt probability must be in (0, 1]")
    out = 1.0 - (1.0 - p) ** int(M0)
    return float(out) if out.ndim == 0 else out


def per_attempt_prob(p_star, M0: int):
    """Inverse of :func:`response_prob`."""
    _check_m0(M0)
    p = np.asarray(p_star, dtype=float)
    if np.any(p <= 0.0) or np.any(p > 1.0):
        raise ValueError("response probability must be in (0, 1]")
    out = 1.0 - (1.0 - p) ** (1.0 / int(M0))
    return float(out) if out.ndim == 0 else out


def shifted_binomial_pmf(p_star: float, n: int) -> np.ndarray:
    """P(Y = j), j = 1..n+1, where Y - 1 ~ Binomial(n, p_star)."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    if not 0.0 <= p_star <= 1.0:
        raise ValueError(f"response probability must be in [0, 1], got {p_star}")
    n = int(n)
    k = np.arange(n + 1)
    # 0.0 ** 0 == 1.0 takes care of the endpoints
    return comb(n, k) * p_star**k * (1.0 - p_star) ** (n - k)


def build_kernel_matrix(grid: Grid, kernel: ObservationKernel) -> KernelMatrix:
    pts = grid.points
    if isinstance(kernel, TruncatedGeometric):
        m0 = kernel.m0
        if kernel.parametrization == "p_tilde":
            p_tilde = pts
            p_star = response_prob(pts, m0)
        else:
            p_tilde = per_attempt_prob(pts, m0)
            p_star = pts.copy()
        cols = [truncated_geometric_pmf(float(p), m0) for p in p_tilde]
    elif isinstance(kernel, ShiftedBinomial):
        p_star = pts.copy()
        cols = [shifted_binomial_pmf(float(p), kernel.n) for p in pts]
    else:
        raise TypeError(f"unsupported kernel {kernel!r}")
    mat = np.column_stack(cols)
    p_star = np.asarray(p_star, dtype=float)
    mat.setflags(write=False)
    p_star.setflags(write=False)
    return KernelMatrix(mat, grid, p_star, kernel)


def default_grid(kernel: ObservationKernel) -> Grid:
    """0.1, 0.12, ..., 1 for the geometric kernel; 0.10, 0.11, ..., 1 otherwise."""
    if isinstance(kernel, TruncatedGeometric):
        return Grid.arange(0.1, 0.02, 1.0)
    return Grid.arange(0.1, 0.01, 1.0)
