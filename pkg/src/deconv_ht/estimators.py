"""Horvitz-Thompson type estimators of totals and proportions."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from . import qp
from ._parallel import ordered_map
from .deconvolve import FitConfig, fit
from .kernels import KernelMatrix
from .mixture import CountVector, DiscreteMixture, expected_inverse

__all__ = [
    "PopulationFrame",
    "EstimateReport",
    "BootstrapResult",
    "ht_oracle_total",
    "mht_total",
    "mht_proportions",
    "naive_proportions",
    "bootstrap_mse_term",
]

log = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.10


@dataclass(frozen=True)
class PopulationFrame:
    """Population of ``N`` units of which a list of ``I`` is approached."""

    N: float
    I: float

    def __post_init__(self):
        if not 1 <= self.I <= self.N:
            raise ValueError(f"need 1 <= I <= N, got I={self.I}, N={self.N}")

    @property
    def inflation(self) -> float:
        return self.N / self.I


@dataclass
class EstimateReport:
    estimator: str
    estimates: dict
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.estimator not in ("naive", "mht", "oracle"):
            raise ValueError(f"unknown estimator label {self.estimator!r}")


@dataclass(frozen=True)
class BootstrapResult:
    """Bootstrap estimate of the mean squared deviation of the total."""

    mse: float
    K: int
    seed: int
    failures: int
    replicates: np.ndarray = field(repr=False)

    def __float__(self):
        return float(self.mse)


def ht_oracle_total(p_stars, frame: PopulationFrame) -> float:
    """(N/I) * sum(1/p*) over responders, with the true response probabilities."""
    p = np.asarray(p_stars, dtype=float).ravel()
    if np.any(p <= 0) or np.any(p > 1):
        raise ValueError("response probabilities must be in (0, 1]")
    return frame.inflation * float(np.sum(1.0 / p))


def mht_total(g_hat: DiscreteMixture, m_l: int, frame: PopulationFrame) -> float:
    if m_l < 0:
        raise ValueError("responder count must be non-negative")
    if m_l == 0:
        return 0.0
    return frame.inflation * m_l * expected_inverse(g_hat)


def mht_proportions(fits: Sequence[tuple[int, DiscreteMixture | None]]) -> np.ndarray:
    """Proportions from responder counts inflated by each group's E[1/S].

    Groups with ``m_l = 0`` may carry ``None`` for their mixture.
    """
    inflated = np.array([0.0 if m == 0 else m * expected_inverse(g) for m, g in fits])
    if not inflated.sum() > 0:
        raise ValueError("all groups are empty")
    return inflated / inflated.sum()


def naive_proportions(m: Sequence[int]) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if not m.sum() > 0:
        raise ValueError("all groups are empty")
    return m / m.sum()


def _bootstrap_replicate(k, *, seed, weights, P, m, frame, fit_config):
    rng = np.random.default_rng([seed, k])
    components = rng.multinomial(m, weights)
    counts = np.zeros(P.n_outcomes, dtype=np.int64)
    for i in np.flatnonzero(components):
        col = P.matrix[:, i]
        counts += rng.multinomial(components[i], col / col.sum())
    try:
        g = fit(CountVector(counts), P, fit_config)
    except qp.QpError as exc:
        log.warning("bootstrap replicate %d failed: %s", k, exc)
        return np.nan
    return mht_total(g, m, frame)


def bootstrap_mse_term(g_hat: DiscreteMixture, m: int, frame: PopulationFrame, P: KernelMatrix,
                       K: int, seed: int, fit_config: FitConfig | None = None,
                       workers: int | None = None) -> BootstrapResult:
    """Parametric bootstrap of E(T_hat - (N/I) * theta)^2 treating ``g_hat`` as true.

    Each replicate draws ``m`` response probabilities i.i.d. from ``g_hat``,
    an effort value for each from the kernel, refits with ``fit_config``
    and records the total. Deviations are taken from the total implied by
    ``g_hat`` itself, ``(N/I) * m * E[1/S]``.

    Replicate ``k`` uses the generator seeded by ``(seed, k)`` so the result
    does not depend on ``workers``. Failed refits are dropped and counted;
    more than 10% failures raise.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if m < 1:
        raise ValueError("m must be >= 1")
    if g_hat.weights.size != P.n_support:
        raise ValueError("mixture does not match kernel grid")
    fit_config = fit_config or FitConfig()
    weights = np.clip(g_hat.weights, 0.0, None)
    weights = weights / weights.sum()
    job = partial(_bootstrap_replicate, seed=int(seed), weights=weights, P=P, m=int(m),
                  frame=frame, fit_config=fit_config)
    totals = np.array(ordered_map(job, range(K), workers), dtype=float)
    failed = int(np.isnan(totals).sum())
    if failed > MAX_FAILURE_FRACTION * K:
        raise RuntimeError(f"{failed} of {K} bootstrap refits failed")
    center = mht_total(g_hat, m, frame)
    ok = totals[~np.isnan(totals)]
    mse = float(np.mean((ok - center) ** 2)) if ok.size else np.nan
    return BootstrapResult(mse, K, int(seed), failed, totals)
