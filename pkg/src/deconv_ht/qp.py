"""Small dense convex quadratic programs with box bounds and equalities.

Solves::

    minimize    0.5 x'Qx + c'x
    subject to  A_eq x = b_eq,  lower <= x <= upper

with a primal active-set method. A feasible start comes from a phase-one
linear program. Each iteration minimizes the objective over the free
variables within the null space of the equality rows. When the reduced
Hessian is singular and the reduced gradient has a component in its null
space, the step follows that zero-curvature direction to the nearest
bound. Every step uses an exact line search capped by the ratio test, so
the objective never increases.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "Status",
    "QpProblem",
    "QpSolution",
    "QpError",
    "InfeasibleError",
    "ConvergenceError",
    "solve",
    "simplex_ls",
]

_BOUND_SNAP = 1e-12
_EIG_REL = 1e-12
_NULL_REL = 1e-11


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    INFEASIBLE = "infeasible"


class QpError(RuntimeError):
    """Solver failure; the offending :class:`QpSolution` is attached."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class InfeasibleError(QpError):
    pass


class ConvergenceError(QpError):
    pass


@dataclass(frozen=True)
class QpProblem:
    Q: np.ndarray
    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        n = Q.shape[0]
        if Q.shape != (n, n):
            raise ValueError("Q must be square")
        c = np.asarray(self.c, dtype=float).reshape(n)
        A = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        b = np.asarray(self.b_eq, dtype=float).reshape(A.shape[0])
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        up = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        qnorm = np.abs(Q).max() if Q.size else 0.0
        if np.abs(Q - Q.T).max(initial=0.0) > 1e-10 * max(qnorm, 1.0):
            raise ValueError("Q is not symmetric")
        Q = 0.5 * (Q + Q.T)
        if n and np.linalg.eigvalsh(Q)[0] < -1e-8 * max(np.linalg.norm(Q, 2), 1e-300):
            raise ValueError("Q is not positive semidefinite")
        if np.any(lo > up):
            raise ValueError("lower bound exceeds upper bound")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(up))):
            raise ValueError("bounds must be finite")
        for name, val in (("Q", Q), ("c", c), ("A_eq", A), ("b_eq", b), ("lower", lo), ("upper", up)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.Q @ x + self.c @ x)

    def scaled(self, factor: float) -> "QpProblem":
        return QpProblem(factor * self.Q, factor * self.c, self.A_eq, self.b_eq, self.lower, self.upper)


@dataclass
class QpSolution:
    x: np.ndarray
    objective: float
    status: Status
    kkt_residual: float
    iterations: int
    history: list = field(default_factory=list, repr=False)
    infeasible_row: int | None = None

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


def _scale(problem: QpProblem) -> float:
    s = max(np.abs(problem.Q).max(initial=0.0), np.abs(problem.c).max(initial=0.0))
    return s if s > 0 else 1.0


def _feasible(A, b, lo, up):
    res = linprog(np.zeros(A.shape[1]), A_eq=A, b_eq=b, bounds=list(zip(lo, up)), method="highs")
    return res


def _phase_one(problem: QpProblem):
    """A feasible point, or ``(None, row)`` naming an equality row that breaks feasibility."""
    A, b, lo, up = problem.A_eq, problem.b_eq, problem.lower, problem.upper
    if A.shape[0] == 0:
        return np.clip(np.zeros(problem.n), lo, up), None
    res = _feasible(A, b, lo, up)
    if res.status != 0:
        bad = None
        # scan from the end: appended coupling rows are the usual culprits
        for k in reversed(range(A.shape[0])):
            keep = np.arange(A.shape[0]) != k
            if _feasible(A[keep], b[keep], lo, up).status == 0:
                bad = k
                break
        return None, bad if bad is not None else -1
    x = np.clip(res.x, lo, up)
    free = (x > lo + _BOUND_SNAP) & (x < up - _BOUND_SNAP)
    if free.any():
        dx = np.linalg.lstsq(A[:, free], b - A @ x, rcond=None)[0]
        x[free] = np.clip(x[free] + dx, lo[free], up[free])
    return x, None


def _multipliers(A, g, free):
    """Equality multipliers from stationarity on the free variables."""
    if A.shape[0] == 0:
        return np.zeros(0)
    rows = free if free.any() else np.ones_like(free)
    return np.linalg.lstsq(A[:, rows].T, g[rows], rcond=None)[0]


def _bound_violations(g, A, lam, at_lower, at_upper, fixed):
    """Sign-adjusted bound multipliers; negative entries violate optimality."""
    red = g - A.T @ lam if A.shape[0] else g.copy()
    mu = np.full(g.shape, np.inf)
    mu[at_lower] = red[at_lower]
    mu[at_upper] = -red[at_upper]
    mu[fixed] = np.inf
    return mu, red


def _kkt_residual(problem, x, lam, at_lower, at_upper, scale):
    A, b = problem.A_eq, problem.b_eq
    g = problem.Q @ x + problem.c
    fixed = problem.lower == problem.upper
    mu, red = _bound_violations(g, A, lam, at_lower, at_upper, fixed)
    free = ~(at_lower | at_upper | fixed)
    stat = np.abs(red[free]).max(initial=0.0)
    comp = max(0.0, -mu[at_lower | at_upper].min(initial=0.0))
    primal = np.abs(A @ x - b).max(initial=0.0) if A.shape[0] else 0.0
    box = max(0.0, (problem.lower - x).max(), (x - problem.upper).max())
    return max((stat + comp) / scale, primal, box)


def solve(problem: QpProblem, tol: float = 1e-9, max_iter: int | None = None) -> QpSolution:
    """Active-set solve of a convex box-and-equality QP.

    Parameters
    ----------
    problem : QpProblem
    tol : float
        Bound on the KKT residual (stationarity scaled by the largest entry
        of ``Q`` and ``c``; feasibility absolute).
    max_iter : int, optional
        Cap on active-set changes, default ``max(100, 10 n^2)``.

    Returns
    -------
    QpSolution
        ``status`` is ``INFEASIBLE`` when no point satisfies the equalities
        inside the box; ``x`` is then all NaN and ``infeasible_row`` names
        the last equality row whose removal restores feasibility (or -1).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = problem.n
    if max_iter is None:
        max_iter = max(100, 10 * n * n)
    x, bad_row = _phase_one(problem)
    if x is None:
        return QpSolution(np.full(n, np.nan), np.nan, Status.INFEASIBLE, np.inf, 0, [], bad_row)

    Q, c, A = problem.Q, problem.c, problem.A_eq
    lo, up = problem.lower, problem.upper
    scale = _scale(problem)
    fixed = lo == up
    at_lower = (x <= lo + _BOUND_SNAP) & ~fixed
    at_upper = (x >= up - _BOUND_SNAP) & ~fixed & ~at_lower
    x[at_lower] = lo[at_lower]
    x[at_upper] = up[at_upper]
    x[fixed] = lo[fixed]
    history = [problem.objective(x)]
    skip: set[int] = set()
    last_released = None
    lam = np.zeros(A.shape[0])
    status = Status.MAX_ITERATIONS
    it = 0

    for it in range(1, max_iter + 1):
        g = Q @ x + c
        free = ~(at_lower | at_upper | fixed)
        idx = np.flatnonzero(free)
        p = np.zeros(n)
        if idx.size:
            AF = A[:, idx]
            if AF.shape[0]:
                _, sv, vt = np.linalg.svd(AF)
                rank = int(np.sum(sv > 1e-12 * max(sv[0] if sv.size else 0.0, 1.0)))
                Z = vt[rank:].T
            else:
                Z = np.eye(idx.size)
            if Z.shape[1]:
                H = Z.T @ Q[np.ix_(idx, idx)] @ Z
                r = Z.T @ g[idx]
                evals, V = np.linalg.eigh(0.5 * (H + H.T))
                pos = evals > _EIG_REL * max(np.abs(evals).max(), 1e-300)
                Vn = V[:, ~pos]
                r_null = Vn @ (Vn.T @ r)
                if np.abs(r_null).max(initial=0.0) > _NULL_REL * scale:
                    p[idx] = -Z @ r_null
                else:
                    Vp = V[:, pos]
                    p[idx] = -Z @ (Vp @ ((Vp.T @ r) / evals[pos]))

        slope = float(g @ p)
        pmax = np.abs(p).max()
        moving = pmax > 1e-13 * (1.0 + np.abs(x).max()) and -slope > 1e-15 * scale * pmax
        if moving:
            curv = float(p @ Q @ p)
            alpha = -slope / curv if curv > 1e-300 else np.inf
            block = -1
            for i in idx:
                if p[i] < -1e-14 * pmax:
                    a = (lo[i] - x[i]) / p[i]
                elif p[i] > 1e-14 * pmax:
                    a = (up[i] - x[i]) / p[i]
                else:
                    continue
                a = max(a, 0.0)
                if a < alpha:
                    alpha, block = a, i
            if not np.isfinite(alpha):
                raise QpError("objective unbounded on the feasible set")
            if block == last_released and alpha == 0.0:
                # the released bound cannot be left; keep it and try another
                skip.add(block)
            else:
                if alpha > 0.0:
                    skip.clear()
                x = x + alpha * p
            last_released = None
            if block >= 0:
                if p[block] < 0:
                    x[block] = lo[block]
                    at_lower[block] = True
                else:
                    x[block] = up[block]
                    at_upper[block] = True
            np.clip(x, lo, up, out=x)
            # round-off leftovers next to a bound join the active set
            near_lo = ~(at_lower | at_upper | fixed) & (x <= lo + _BOUND_SNAP)
            near_up = ~(at_lower | at_upper | fixed | near_lo) & (x >= up - _BOUND_SNAP)
            x[near_lo], x[near_up] = lo[near_lo], up[near_up]
            at_lower |= near_lo
            at_upper |= near_up
            history.append(problem.objective(x))
            continue

        lam = _multipliers(A, g, free)
        mu, _ = _bound_violations(g, A, lam, at_lower, at_upper, fixed)
        for i in skip:
            mu[i] = np.inf
        worst = int(np.argmin(mu))
        if mu[worst] >= -tol * scale:
            status = Status.CONVERGED
            break
        at_lower[worst] = False
        at_upper[worst] = False
        last_released = worst
        history.append(history[-1])

    g = Q @ x + c
    lam = _multipliers(A, g, ~(at_lower | at_upper | fixed))
    kkt = _kkt_residual(problem, x, lam, at_lower, at_upper, scale)
    if status is Status.CONVERGED and kkt > tol:
        status = Status.MAX_ITERATIONS
    return QpSolution(x, problem.objective(x), status, float(kkt), it, history)


def simplex_ls(P_mat, target, weight=None, extra_eq=None, tol: float = 1e-9,
               max_iter: int | None = None, full_output: bool = False):
    """Weighted least squares over the probability simplex.

    Minimizes ``(target - P g)' W (target - P g)`` subject to
    ``0 <= g <= 1``, ``sum(g) = 1`` and optional extra equality rows.

    Parameters
    ----------
    P_mat : array, shape (J, kappa)
    target : array, shape (J,)
    weight : array, shape (J, J), optional
        Symmetric positive definite weight; identity when omitted.
    extra_eq : (A, b), optional
        Additional equalities ``A g = b`` with ``A`` of shape (r, kappa).
    full_output : bool
        Also return the :class:`QpSolution` and the achieved weighted
        residual.

    Raises
    ------
    InfeasibleError, ConvergenceError
    """
    P = np.asarray(P_mat, dtype=float)
    t = np.asarray(target, dtype=float)
    J, k = P.shape
    if t.shape != (J,):
        raise ValueError("target length does not match kernel rows")
    W = np.eye(J) if weight is None else np.asarray(weight, dtype=float)
    PW = P.T @ W
    Q = 2.0 * PW @ P
    Q = 0.5 * (Q + Q.T)
    c = -2.0 * PW @ t
    A = np.ones((1, k))
    b = np.ones(1)
    if extra_eq is not None:
        A_x, b_x = extra_eq
        A = np.vstack([A, np.asarray(A_x, dtype=float).reshape(-1, k)])
        b = np.concatenate([b, np.asarray(b_x, dtype=float).ravel()])
    prob = QpProblem(Q, c, A, b, np.zeros(k), np.ones(k))
    sol = solve(prob, tol=tol, max_iter=max_iter)
    if sol.status is Status.INFEASIBLE:
        raise InfeasibleError(f"constraints infeasible (row {sol.infeasible_row})", sol)
    if sol.status is not Status.CONVERGED:
        raise ConvergenceError(f"no convergence after {sol.iterations} iterations "
                               f"(kkt residual {sol.kkt_residual:.3g})", sol)
    g = np.clip(sol.x, 0.0, 1.0)
    g = g / g.sum()
    if not full_output:
        return g
    resid = t - P @ g
    return g, sol, float(resid @ W @ resid)
