"""Monte Carlo comparison of the naive, modified HT and oracle proportion estimators.

Each repetition splits a list of ``I`` units into ``X = 1`` and ``X = 0``
parts, draws a per-attempt response probability for every unit from its
group's distribution, draws geometric attempt counts and keeps the units
that respond within ``M0`` attempts.

Random streams: repetition ``r`` of a scenario with seed ``s`` uses
``numpy.random.default_rng([s, r])`` (PCG64 seeded through SeedSequence),
so results do not depend on how repetitions are scheduled.
"""
from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass, field, fields, replace
from functools import partial
from typing import NamedTuple, Sequence

import numpy as np

from . import qp
from ._parallel import ordered_map
from .deconvolve import FitConfig, GroupData, fit, fit_joint
from .estimators import mht_proportions, naive_proportions
from .kernels import Grid, KernelMatrix, TruncatedGeometric, build_kernel_matrix, default_grid
from .mixture import CountVector

__all__ = [
    "Family",
    "PairSpec",
    "ScenarioConfig",
    "SummaryRow",
    "RepResult",
    "ScenarioError",
    "sample_response_prob",
    "sample_response_probs",
    "run_one_rep",
    "run_scenario",
    "run_table",
    "table_configs",
]

log = logging.getLogger(__name__)

MAX_REP_FAILURE_FRACTION = 0.05
LOW, HIGH = 0.1, 1.0


class Family(str, enum.Enum):
    TWO_POINTS = "2points"
    UNIFORM = "unif"
    NORMAL = "norm"


class ScenarioError(RuntimeError):
    pass


@dataclass(frozen=True)
class PairSpec:
    """Distributions of the per-attempt probability for X = 0 and X = 1.

    * ``2points``: group 0 puts mass 1/2 on 0.5 and 0.9; group 1 is the same
      shifted down by ``alpha``.
    * ``unif``: group 0 is U(0.1, 1); group 1 returns 0.1 with probability
      ``alpha`` and a U(0.1, 1) draw otherwise.
    * ``norm``: group 0 is N(0.5, 0.1^2) clamped to [0.1, 1]; group 1 is
      N(0.5 - alpha, 0.1^2) restricted to [0.1, 1], clamped by default or
      rejection-sampled with ``normal_group1="truncate"``.
    """

    family: Family
    alpha: float
    normal_group1: str = "censor"

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.family is Family.TWO_POINTS and not 0.5 - self.alpha > 0:
            raise ValueError("two-point shift needs alpha < 0.5")
        if self.normal_group1 not in ("censor", "truncate"):
            raise ValueError(f"normal_group1 must be 'censor' or 'truncate', got {self.normal_group1!r}")


def _truncated_normal(mean, sd, size, rng):
    out = np.empty(size)
    filled = 0
    while filled < size:
        draw = rng.normal(mean, sd, max(2 * (size - filled), 16))
        draw = draw[(draw >= LOW) & (draw <= HIGH)]
        take = min(draw.size, size - filled)
        out[filled:filled + take] = draw[:take]
        filled += take
    return out


def sample_response_probs(pair: PairSpec, group: int, size: int, rng) -> np.ndarray:
    """``size`` per-attempt probabilities for ``group`` (0 or 1)."""
    if group not in (0, 1):
        raise ValueError("group must be 0 or 1")
    shift = pair.alpha if group == 1 else 0.0
    if pair.family is Family.TWO_POINTS:
        return np.where(rng.random(size) < 0.5, 0.5, 0.9) - shift
    if pair.family is Family.UNIFORM:
        u = rng.uniform(LOW, HIGH, size)
        if group == 0:
            return u
        return np.where(rng.random(size) < pair.alpha, LOW, u)
    if group == 1 and pair.normal_group1 == "truncate":
        return _truncated_normal(0.5 - shift, 0.1, size, rng)
    return np.clip(rng.normal(0.5 - shift, 0.1, size), LOW, HIGH)


def sample_response_prob(pair: PairSpec, group: int, rng) -> float:
    return float(sample_response_probs(pair, group, 1, rng)[0])


@dataclass(frozen=True)
class ScenarioConfig:
    pair: PairSpec
    M0: int
    I: int
    pr1: float = 0.5
    reps: int = 1000
    seed: int = 0
    grid: Grid | None = None
    fit: FitConfig = field(default_factory=FitConfig)
    joint: bool = False

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not 0.0 <= self.pr1 <= 1.0:
            raise ValueError("pr1 must be in [0, 1]")
        if self.I < 1:
            raise ValueError("list size must be >= 1")
        TruncatedGeometric(self.M0)

    def kernel_matrix(self) -> KernelMatrix:
        kernel = TruncatedGeometric(self.M0, "p_tilde")
        return build_kernel_matrix(self.grid or default_grid(kernel), kernel)


class RepResult(NamedTuple):
    naive: float
    mht: float
    oracle: float
    m1: int
    m0: int


@dataclass(frozen=True)
class SummaryRow:
    family: str
    M0: int
    alpha: float
    I: int
    reps: int
    m_nv: float
    m_mht: float
    s_nv: float
    s_mht: float
    s_or: float
    m_m1: float
    m_m0: float
    failures: int = 0
    error: str | None = None

    # column labels used in tables
    LABELS = {
        "family": "G0", "M0": "M0", "alpha": "alpha",
        "m_nv": "M-NV", "m_mht": "M-MHT", "s_nv": "S-NV", "s_mht": "S-MHT",
        "s_or": "S-OR", "m_m1": "M-m1", "m_m0": "M-m0",
    }

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def _simulate_group(pair, group, n, M0, rng):
    p_tilde = sample_response_probs(pair, group, n, rng)
    attempts = rng.geometric(p_tilde) if n else np.zeros(0, dtype=np.int64)
    responded = attempts <= M0
    y = attempts[responded]
    p_star = 1.0 - (1.0 - p_tilde[responded]) ** M0
    return CountVector(np.bincount(y - 1, minlength=M0)), p_star


def run_one_rep(config: ScenarioConfig, rep_index: int, P: KernelMatrix | None = None) -> RepResult:
    P = P if P is not None else config.kernel_matrix()
    rng = np.random.default_rng([config.seed, rep_index])
    I1 = int(rng.binomial(config.I, config.pr1))
    c1, p1 = _simulate_group(config.pair, 1, I1, config.M0, rng)
    c0, p0 = _simulate_group(config.pair, 0, config.I - I1, config.M0, rng)
    m1, m0 = c1.total, c0.total

    naive = naive_proportions([m1, m0])[0]
    if config.joint:
        groups = [GroupData(1, c1), GroupData(0, c0)]
        g1, g0 = fit_joint(groups, P, config.I, (), config.fit)
    else:
        g1 = fit(c1, P, config.fit) if m1 else None
        g0 = fit(c0, P, config.fit) if m0 else None
    mht = mht_proportions([(m1, g1), (m0, g0)])[0]
    inv1, inv0 = np.sum(1.0 / p1), np.sum(1.0 / p0)
    oracle = inv1 / (inv1 + inv0)
    return RepResult(float(naive), float(mht), float(oracle), m1, m0)


def _safe_rep(rep_index, config, P):
    try:
        return run_one_rep(config, rep_index, P)
    except (qp.QpError, ValueError) as exc:
        log.warning("repetition %d failed: %s", rep_index, exc)
        return None


def run_scenario(config: ScenarioConfig, workers: int | None = None) -> SummaryRow:
    """Means and root mean squared errors over ``config.reps`` repetitions."""
    P = config.kernel_matrix()
    job = partial(_safe_rep, config=config, P=P)
    results = ordered_map(job, range(config.reps), workers)
    ok = [r for r in results if r is not None]
    failures = len(results) - len(ok)
    if failures > MAX_REP_FAILURE_FRACTION * config.reps:
        raise ScenarioError(f"{failures} of {config.reps} repetitions failed")
    arr = np.array([r[:3] for r in ok])
    counts = np.array([r[3:] for r in ok], dtype=float)
    rmse = np.sqrt(np.mean((arr - config.pr1) ** 2, axis=0))
    return SummaryRow(
        family=config.pair.family.value, M0=config.M0, alpha=config.pair.alpha, I=config.I,
        reps=config.reps, m_nv=float(arr[:, 0].mean()), m_mht=float(arr[:, 1].mean()),
        s_nv=float(rmse[0]), s_mht=float(rmse[1]), s_or=float(rmse[2]),
        m_m1=float(counts[:, 0].mean()), m_m0=float(counts[:, 1].mean()), failures=failures,
    )


def _failed_row(config: ScenarioConfig, exc) -> SummaryRow:
    nan = float("nan")
    return SummaryRow(config.pair.family.value, config.M0, config.pair.alpha, config.I,
                      config.reps, nan, nan, nan, nan, nan, nan, nan, config.reps, str(exc))


def run_table(configs: Sequence[ScenarioConfig], workers: int | None = None) -> list[SummaryRow]:
    """One row per config, in order. A failing scenario yields a NaN row with ``error`` set."""
    if not configs:
        raise ValueError("no scenarios")
    rows = []
    for cfg in configs:
        try:
            rows.append(run_scenario(cfg, workers))
        except (ScenarioError, qp.QpError, ValueError) as exc:
            log.error("scenario %s M0=%d alpha=%g failed: %s", cfg.pair.family.value, cfg.M0,
                      cfg.pair.alpha, exc)
            rows.append(_failed_row(cfg, exc))
    return rows


def table_configs(I: int, reps: int = 1000, seed: int = 0,
                  families: Sequence[str] = ("2points", "unif", "norm"),
                  m0s: Sequence[int] = (4, 5, 6, 7),
                  alphas: Sequence[float] = (0.1, 0.2, 0.3, 0.4),
                  **kwargs) -> list[ScenarioConfig]:
    """Scenario grid ordered by family, then ``M0``, then ``alpha``.

    Every scenario gets its own seed, derived from ``seed`` and its position.
    """
    if not (families and m0s and alphas):
        raise ValueError("families, m0s and alphas must be nonempty")
    normal_group1 = kwargs.pop("normal_group1", "censor")
    out = []
    for pos, (fam, m0, a) in enumerate(itertools.product(families, m0s, alphas)):
        pair = PairSpec(fam, a, normal_group1)
        sub_seed = int(np.random.SeedSequence([seed, pos]).generate_state(1)[0])
        out.append(ScenarioConfig(pair, m0, I, reps=reps, seed=sub_seed, **kwargs))
    return out


def with_reps(config: ScenarioConfig, reps: int) -> ScenarioConfig:
    return replace(config, reps=reps)
