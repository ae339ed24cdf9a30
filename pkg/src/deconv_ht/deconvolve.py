"""Estimating the mixing distribution of response probabilities.

Three fits are provided:

* :func:`fit_moments` -- unweighted least squares between observed effort
  frequencies and the mixture pmf, over the probability simplex;
* :func:`fit_mle` -- the same residual on the reduced coordinates weighted
  by the inverse covariance of the reduced frequencies, iterated from the
  moments fit;
* :func:`fit_joint` -- one stacked problem over several outcome groups,
  coupled by the known list size and optional calibration totals.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

from . import qp
from .kernels import KernelMatrix
from .mixture import (
    CountVector,
    CovarianceModel,
    DiscreteMixture,
    counts_to_freq,
    covariance_star,
    regularized_inverse,
)

__all__ = [
    "Method",
    "FitConfig",
    "GroupData",
    "CalibrationConstraint",
    "EmptyGroupError",
    "fit_moments",
    "fit_mle",
    "fit",
    "fit_joint",
]


class Method(str, enum.Enum):
    MOMENTS = "moments"
    MLE = "mle"


class EmptyGroupError(ValueError):
    pass


@dataclass(frozen=True)
class FitConfig:
    method: Method = Method.MOMENTS
    covariance_model: CovarianceModel = CovarianceModel.EB
    mle_iterations: int = 2
    report_threshold: float = 1e-6
    tol: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "covariance_model", CovarianceModel(self.covariance_model))
        if int(self.mle_iterations) != self.mle_iterations or self.mle_iterations < 1:
            raise ValueError("mle_iterations must be an integer >= 1")
        if self.report_threshold < 0:
            raise ValueError("report_threshold must be non-negative")


@dataclass(frozen=True)
class GroupData:
    """Counts for one outcome group.

    ``size`` is the responder count used for inflation when it differs from
    the number of records the counts were built from (pooled historical
    records); it defaults to ``counts.total``.
    """

    label: Hashable
    counts: CountVector
    size: int | None = None

    @property
    def m(self) -> int:
        return self.counts.total if self.size is None else int(self.size)


@dataclass(frozen=True)
class CalibrationConstraint:
    """``sum_l coef_l * m_l * E_{G_l}[1/S] = rhs`` over the listed groups."""

    group_coefficients: Mapping[Hashable, float]
    rhs: float

    def __post_init__(self):
        if not any(v != 0 for v in self.group_coefficients.values()):
            raise ValueError("calibration needs at least one nonzero coefficient")
        if not self.rhs > 0:
            raise ValueError("calibration total must be positive")


def _check_counts(counts: CountVector, P: KernelMatrix):
    if len(counts) != P.n_outcomes:
        raise ValueError(f"counts have {len(counts)} cells, kernel has {P.n_outcomes} outcomes")
    if counts.total == 0:
        raise EmptyGroupError("empty sample: no counts")


def _mixture(P: KernelMatrix, g, **diag) -> DiscreteMixture:
    return DiscreteMixture(P.p_star, g, diagnostics=diag)


def fit_moments(counts: CountVector, P: KernelMatrix, tol: float = 1e-9) -> DiscreteMixture:
    """Unweighted simplex least-squares fit of ``P g`` to the observed frequencies.

    The achieved squared residual is in ``result.diagnostics["objective"]``.
    """
    _check_counts(counts, P)
    f_hat = counts_to_freq(counts)
    g, sol, obj = qp.simplex_ls(P.matrix, f_hat, tol=tol, full_output=True)
    return _mixture(P, g, objective=obj, objectives=[obj], kkt_residual=sol.kkt_residual,
                    ridge=[], method=Method.MOMENTS.value)


def _reduced_weight(P: KernelMatrix, g: DiscreteMixture, m: int, model) -> tuple[np.ndarray, bool]:
    # inverse covariance of the reduced frequencies C*/m
    sigma = covariance_star(P, g, m, model) / float(m) ** 2
    return regularized_inverse(sigma)


def fit_mle(counts: CountVector, P: KernelMatrix, config: FitConfig | None = None) -> DiscreteMixture:
    """Iteratively reweighted fit on the first ``J - 1`` coordinates.

    Starts from :func:`fit_moments`; each pass recomputes the covariance at
    the current estimate and refits. Per-pass objectives and ridge
    activations are recorded in ``diagnostics``.
    """
    config = config or FitConfig(method=Method.MLE)
    _check_counts(counts, P)
    m = counts.total
    f_red = counts_to_freq(counts)[:-1]
    P_red = P.matrix[:-1]
    current = fit_moments(counts, P, tol=config.tol)
    objectives, ridges, kkts = [], [], []
    for _ in range(config.mle_iterations):
        W, ridge = _reduced_weight(P, current, m, config.covariance_model)
        g, sol, obj = qp.simplex_ls(P_red, f_red, W, tol=config.tol, full_output=True)
        objectives.append(obj)
        ridges.append(ridge)
        kkts.append(sol.kkt_residual)
        current = _mixture(P, g)
    return _mixture(P, current.weights, objective=objectives[-1], objectives=objectives,
                    kkt_residual=kkts[-1], ridge=ridges, method=Method.MLE.value)


def fit(counts: CountVector, P: KernelMatrix, config: FitConfig | None = None) -> DiscreteMixture:
    """Dispatch on ``config.method``."""
    config = config or FitConfig()
    if config.method is Method.MOMENTS:
        return fit_moments(counts, P, tol=config.tol)
    return fit_mle(counts, P, config)


def _block_problem(P: KernelMatrix, targets, weights, eq_rows, eq_rhs):
    L = len(targets)
    k = P.n_support
    blocks_Q, blocks_c = [], []
    for (mat, tgt), W in zip(targets, weights):
        PW = mat.T @ W
        blocks_Q.append(2.0 * PW @ mat)
        blocks_c.append(-2.0 * PW @ tgt)
    Q = np.zeros((L * k, L * k))
    for t, B in enumerate(blocks_Q):
        Q[t * k:(t + 1) * k, t * k:(t + 1) * k] = 0.5 * (B + B.T)
    c = np.concatenate(blocks_c)
    simplex = np.kron(np.eye(L), np.ones((1, k)))
    A = np.vstack([simplex] + ([np.asarray(eq_rows)] if len(eq_rows) else []))
    b = np.concatenate([np.ones(L), np.asarray(eq_rhs, dtype=float)])
    return qp.QpProblem(Q, c, A, b, np.zeros(L * k), np.ones(L * k))


def fit_joint(groups: Sequence[GroupData], P: KernelMatrix, I: float | None = None,
              calibrations: Sequence[CalibrationConstraint] = (),
              config: FitConfig | None = None) -> list[DiscreteMixture | None]:
    """Simultaneous fit of one mixture per group.

    The objective is the sum of per-group residuals (unweighted for
    ``Method.MOMENTS``, inverse-covariance weighted on reduced coordinates
    for ``Method.MLE``). Besides a simplex per group, the inflated group
    sizes must add up to the list size ``I``::

        sum_l m_l * sum_i g_li / s_i = I

    when ``I`` is given, and each calibration adds one more such row.

    Groups with no responders are left out of the problem and come back as
    ``None``. Raises :class:`deconv_ht.qp.InfeasibleError` when the
    constraints cannot be met, e.g. ``I`` below the total responder count.
    """
    config = config or FitConfig()
    if not groups:
        raise ValueError("no groups")
    labels = [gr.label for gr in groups]
    if len(set(labels)) != len(labels):
        raise ValueError("group labels must be unique")
    for gr in groups:
        if len(gr.counts) != P.n_outcomes:
            raise ValueError(f"group {gr.label!r}: counts do not match kernel outcomes")
    active = [gr for gr in groups if gr.counts.total > 0 and gr.m > 0]
    active_labels = {gr.label for gr in active}
    for cal in calibrations:
        for lab, coef in cal.group_coefficients.items():
            if lab not in labels:
                raise ValueError(f"calibration refers to unknown group {lab!r}")
            if coef != 0 and lab not in active_labels:
                raise EmptyGroupError(f"calibration uses empty group {lab!r}")
    if not active:
        raise EmptyGroupError("all groups are empty")

    k = P.n_support
    inv_s = 1.0 / P.p_star
    rows, rhs, row_names = [], [], []
    if I is not None:
        if I <= 0:
            raise ValueError("list size must be positive")
        rows.append(np.concatenate([gr.m * inv_s for gr in active]))
        rhs.append(float(I))
        row_names.append("list_size")
    for j, cal in enumerate(calibrations):
        coefs = cal.group_coefficients
        rows.append(np.concatenate([coefs.get(gr.label, 0.0) * gr.m * inv_s for gr in active]))
        rhs.append(float(cal.rhs))
        row_names.append(f"calibration[{j}]")

    freqs = [counts_to_freq(gr.counts) for gr in active]
    if not rows:
        # no coupling: the stacked problem separates
        fits = {gr.label: fit(gr.counts, P, config) for gr in active}
        return [fits.get(lab) for lab in labels]

    def solve_stacked(targets, weights):
        problem = _block_problem(P, targets, weights, rows, rhs)
        sol = qp.solve(problem, tol=config.tol)
        if sol.status is qp.Status.INFEASIBLE:
            bad = sol.infeasible_row
            # rows are offset by one simplex row per group
            name = row_names[bad - len(active)] if bad is not None and bad >= len(active) else "simplex"
            raise qp.InfeasibleError(f"joint constraints infeasible (violating row: {name})", sol)
        if not sol.converged:
            raise qp.ConvergenceError(f"joint fit did not converge (kkt {sol.kkt_residual:.3g})", sol)
        x = np.clip(sol.x, 0.0, 1.0).reshape(len(active), k)
        return x / x.sum(axis=1, keepdims=True), sol

    J = P.n_outcomes
    targets = [(P.matrix, f) for f in freqs]
    weights = [np.eye(J)] * len(active)
    G, sol = solve_stacked(targets, weights)
    objectives = [_stacked_objective(targets, weights, G)]
    ridges = []
    if config.method is Method.MLE:
        targets = [(P.matrix[:-1], f[:-1]) for f in freqs]
        for _ in range(config.mle_iterations):
            weights, flags = [], []
            for gr, g in zip(active, G):
                W, ridge = _reduced_weight(P, _mixture(P, g), gr.counts.total, config.covariance_model)
                weights.append(W)
                flags.append(ridge)
            G, sol = solve_stacked(targets, weights)
            objectives.append(_stacked_objective(targets, weights, G))
            ridges.append(flags)

    residuals = {name: float(row @ G.ravel() - r) for name, row, r in zip(row_names, rows, rhs)}
    out = {}
    for gr, g in zip(active, G):
        out[gr.label] = _mixture(P, g, objective=objectives[-1], objectives=objectives,
                                 kkt_residual=sol.kkt_residual, ridge=ridges,
                                 constraint_residuals=residuals, method=config.method.value)
    return [out.get(lab) for lab in labels]


def _stacked_objective(targets, weights, G) -> float:
    total = 0.0
    for (mat, tgt), W, g in zip(targets, weights, G):
        r = tgt - mat @ g
        total += float(r @ W @ r)
    return total
