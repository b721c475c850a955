"""Finite zero-sum games: a dense two-phase simplex and the defender/attacker LPs.

The defender (row player, maximizing robust accuracy) solves::

    max r   s.t.   sum_d lam_d R[d, a] >= r  for every attack a,
                   sum_d lam_d <= 1,   lam >= 0,  r >= 0

The attacker problem is the same program on the negated, transposed matrix
shifted back into [0, 1]: ``P = 1 - R.T``.  Its optimum ``r'`` is the
attacker's guaranteed error rate, so the dual game value is ``1 - r'``.
Both forms rely on payoffs lying in [0, 1]; signed games need a constant
shift first.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NumericalFailure

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numericalFailure"


@dataclass
class LpProblem:
    """maximize c @ x  subject to  A_ub @ x <= b_ub,  A_eq @ x == b_eq,  x >= 0."""

    c: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64).ravel()
        n = len(self.c)
        self.A_ub = np.asarray(self.A_ub, dtype=np.float64).reshape(-1, n)
        self.b_ub = np.asarray(self.b_ub, dtype=np.float64).ravel()
        if self.A_eq is None:
            self.A_eq, self.b_eq = np.zeros((0, n)), np.zeros(0)
        self.A_eq = np.asarray(self.A_eq, dtype=np.float64).reshape(-1, n)
        self.b_eq = np.asarray(self.b_eq, dtype=np.float64).ravel()
        if len(self.b_ub) != len(self.A_ub) or len(self.b_eq) != len(self.A_eq):
            raise ValueError("constraint matrix and right-hand side disagree in length")
        for arr in (self.c, self.A_ub, self.b_ub, self.A_eq, self.b_eq):
            if not np.all(np.isfinite(arr)):
                raise ValueError("LP coefficients must be finite")


@dataclass
class LpResult:
    x: np.ndarray
    objective: float
    status: str
    iterations: int
    duals_ub: np.ndarray = field(default_factory=lambda: np.zeros(0))


class _Tableau:
    """Row-reduced tableau; the last row holds reduced costs and (negated) objective."""

    def __init__(self, T: np.ndarray, basis: list, tol: float, bland_after: int):
        self.T = T
        self.basis = basis
        self.tol = tol
        self.bland_after = bland_after
        self.iterations = 0

    def pivot(self, row: int, col: int):
        T = self.T
        T[row] /= T[row, col]
        others = np.flatnonzero(T[:, col])
        others = others[others != row]
        T[others] -= np.outer(T[others, col], T[row])
        T[others, col] = 0.0
        self.basis[row] = col
        self.iterations += 1

    def run(self, allowed: np.ndarray, max_iter: int) -> str:
        T, tol = self.T, self.tol
        while True:
            if self.iterations >= max_iter:
                return NUMERICAL_FAILURE
            reduced = np.where(allowed, T[-1, :-1], 0.0)
            candidates = np.flatnonzero(reduced > tol)
            if candidates.size == 0:
                return OPTIMAL
            if self.iterations >= self.bland_after:
                col = int(candidates[0])  # Bland: lowest index
            else:
                col = int(candidates[np.argmax(reduced[candidates])])
            column = T[:-1, col]
            positive = np.flatnonzero(column > tol)
            if positive.size == 0:
                return UNBOUNDED
            ratios = T[positive, -1] / column[positive]
            best = ratios.min()
            ties = positive[ratios <= best + tol * max(1.0, abs(best))]
            row = int(min(ties, key=lambda r: self.basis[r]))
            self.pivot(row, col)
            if not np.all(np.isfinite(T)):
                return NUMERICAL_FAILURE


def solve_lp(problem: LpProblem, tol: float = 1e-9, max_iter: int = 50_000) -> LpResult:
    """Dense two-phase simplex.

    Pricing is Dantzig's largest-coefficient rule; after ``20 * (rows + cols)``
    pivots it switches to Bland's rule, which cannot cycle.  Infeasible and
    unbounded problems are reported through ``status``.
    """
    p = problem
    n = len(p.c)
    m_ub, m_eq = len(p.b_ub), len(p.b_eq)
    m = m_ub + m_eq
    A = np.vstack([p.A_ub, p.A_eq])
    b = np.concatenate([p.b_ub, p.b_eq])
    slack = np.zeros((m, m_ub))
    slack[np.arange(m_ub), np.arange(m_ub)] = 1.0
    flip = b < 0
    A[flip] *= -1
    b = np.where(flip, -b, b)
    slack[flip] *= -1
    needs_art = np.flatnonzero(flip | (np.arange(m) >= m_ub))
    art = np.zeros((m, len(needs_art)))
    art[needs_art, np.arange(len(needs_art))] = 1.0
    n_cols = n + m_ub + len(needs_art)
    T = np.zeros((m + 1, n_cols + 1))
    T[:m, :n] = A
    T[:m, n:n + m_ub] = slack
    T[:m, n + m_ub:n_cols] = art
    T[:m, -1] = b
    basis = [n + i if i < m_ub and not flip[i] else -1 for i in range(m)]
    for k, i in enumerate(needs_art):
        basis[i] = n + m_ub + k
    bland_after = 20 * (m + n_cols)
    tab = _Tableau(T, basis, tol, bland_after)
    art_cols = np.arange(n + m_ub, n_cols)

    if len(needs_art):
        # phase 1: maximize -sum(artificials), expressed in the starting basis
        T[-1, :] = 0.0
        T[-1, art_cols] = -1.0
        T[-1] += T[needs_art].sum(axis=0)
        status = tab.run(np.ones(n_cols, dtype=bool), max_iter)
        if status != OPTIMAL:
            return LpResult(np.full(n, np.nan), float("nan"), status, tab.iterations)
        if T[-1, -1] > tol * max(1.0, np.abs(b).max(initial=0.0)) * 10:
            return LpResult(np.full(n, np.nan), float("nan"), INFEASIBLE, tab.iterations)
        # drive artificials out of the basis; drop rows that turn out redundant
        keep = np.ones(m + 1, dtype=bool)
        for r in range(m):
            if tab.basis[r] in art_cols:
                row = T[r, :n + m_ub]
                cols = np.flatnonzero(np.abs(row) > tol)
                if cols.size:
                    tab.pivot(r, int(cols[0]))
                else:
                    keep[r] = False
        if not keep.all():
            tab.T = T = T[keep]
            tab.basis = [bcol for bcol, k in zip(tab.basis, keep[:-1]) if k]
    allowed = np.zeros(n_cols, dtype=bool)
    allowed[:n + m_ub] = True

    # phase 2
    cost = np.zeros(n_cols)
    cost[:n] = p.c
    T[-1, :] = 0.0
    T[-1, :n_cols] = cost
    for r, bcol in enumerate(tab.basis):
        if cost[bcol] != 0.0:
            T[-1] -= cost[bcol] * T[r]
    status = tab.run(allowed, max_iter)
    x_all = np.zeros(n_cols)
    for r, bcol in enumerate(tab.basis):
        x_all[bcol] = T[r, -1]
    x = x_all[:n]
    objective = float(p.c @ x)
    duals = -T[-1, n:n + m_ub].copy()
    if status != OPTIMAL:
        return LpResult(x, objective, status, tab.iterations, duals)
    return LpResult(x, objective, OPTIMAL, tab.iterations, duals)


@dataclass
class GameSolution:
    lambda_d: Optional[np.ndarray]
    lambda_a: Optional[np.ndarray]
    value_primal: float
    value_dual: float
    iterations: int
    status: str
    strategy_ids: Optional[list] = None
    attack_ids: Optional[list] = None

    @property
    def duality_gap(self) -> float:
        return abs(self.value_primal - self.value_dual)


def _as_matrix(R) -> np.ndarray:
    values = getattr(R, "values", R)
    R = np.asarray(values, dtype=np.float64)
    if R.ndim != 2 or R.size == 0:
        raise ValueError("payoff matrix must be a nonempty 2-D array")
    return R


def _normalize(v: np.ndarray) -> np.ndarray:
    v = np.maximum(np.asarray(v, dtype=np.float64), 0.0)
    s = v.sum()
    if s <= 0:
        return np.full(len(v), 1.0 / len(v))
    return v / s


def _row_maximin(P: np.ndarray, tol: float):
    """Row player's LP on P: (row strategy, value, column strategy from duals, iterations, status)."""
    rows, cols = P.shape
    A_ub = np.zeros((cols + 1, rows + 1))
    A_ub[:cols, :rows] = -P.T
    A_ub[:cols, rows] = 1.0
    A_ub[cols, :rows] = 1.0
    b_ub = np.zeros(cols + 1)
    b_ub[cols] = 1.0
    c = np.zeros(rows + 1)
    c[rows] = 1.0
    res = solve_lp(LpProblem(c, A_ub, b_ub), tol=tol)
    if res.status != OPTIMAL:
        return None, float("nan"), None, res.iterations, res.status
    return _normalize(res.x[:rows]), float(res.x[rows]), _normalize(res.duals_ub[:cols]), res.iterations, OPTIMAL


def _check_range(R: np.ndarray):
    if R.min() < 0.0 or R.max() > 1.0:
        raise ValueError("payoffs must lie in [0, 1]; shift and scale signed games first")


def solve_defender(R, tol: float = 1e-9) -> GameSolution:
    """Defender's maximin strategy; the attacker strategy is read off the LP duals."""
    M = _as_matrix(R)
    _check_range(M)
    lam_d, value, lam_a, iters, status = _row_maximin(M, tol)
    return GameSolution(lam_d, lam_a, value, value, iters, status,
                        getattr(R, "strategy_ids", None), getattr(R, "attack_ids", None))


def solve_attacker(R, tol: float = 1e-9) -> GameSolution:
    """Attacker's minimax strategy from its own LP on ``1 - R.T``."""
    M = _as_matrix(R)
    _check_range(M)
    lam_a, err, lam_d, iters, status = _row_maximin(1.0 - M.T, tol)
    value = 1.0 - err if status == OPTIMAL else float("nan")
    return GameSolution(lam_d, lam_a, value, value, iters, status,
                        getattr(R, "strategy_ids", None), getattr(R, "attack_ids", None))


def solve_game(R, tol: float = 1e-9, gap_tol: float = 1e-7) -> GameSolution:
    """Solve both LPs; strategies come from their own programs, values must agree."""
    primal = solve_defender(R, tol)
    dual = solve_attacker(R, tol)
    status = primal.status if primal.status != OPTIMAL else dual.status
    sol = GameSolution(primal.lambda_d, dual.lambda_a, primal.value_primal, dual.value_primal,
                       primal.iterations + dual.iterations, status, primal.strategy_ids, primal.attack_ids)
    if status == OPTIMAL and sol.duality_gap > gap_tol:
        sol.status = NUMERICAL_FAILURE
    return sol


def require_optimal(sol: GameSolution) -> GameSolution:
    if sol.status != OPTIMAL:
        raise NumericalFailure(f"game solve ended with status {sol.status}")
    return sol


@dataclass
class FictitiousPlayResult:
    lambda_d: np.ndarray
    lambda_a: np.ndarray
    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower


def fictitious_play(R, iterations: int) -> FictitiousPlayResult:
    """Simultaneous fictitious play; the bracket [lower, upper] always contains the game value."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    M = _as_matrix(R)
    D, A = M.shape
    count_d = np.zeros(D)
    count_a = np.zeros(A)
    row_totals = np.zeros(D)  # payoff of each defender row against the attacker's history
    col_totals = np.zeros(A)
    lower, upper = -np.inf, np.inf
    d, a = 0, 0
    for t in range(1, iterations + 1):
        count_d[d] += 1
        count_a[a] += 1
        col_totals += M[d]
        row_totals += M[:, a]
        lower = max(lower, col_totals.min() / t)
        upper = min(upper, row_totals.max() / t)
        d = int(np.argmax(row_totals))
        a = int(np.argmin(col_totals))
    return FictitiousPlayResult(count_d / iterations, count_a / iterations, float(lower), float(upper))


@dataclass
class EquilibriumReport:
    value: float
    defender_deviation: float  # best pure defender payoff minus value
    attacker_deviation: float  # value minus best pure attacker payoff
    support_violation: float
    tol: float

    @property
    def defender_ok(self) -> bool:
        return self.defender_deviation <= self.tol

    @property
    def attacker_ok(self) -> bool:
        return self.attacker_deviation <= self.tol

    @property
    def slackness_ok(self) -> bool:
        return self.support_violation <= self.tol

    @property
    def passed(self) -> bool:
        return self.defender_ok and self.attacker_ok and self.slackness_ok


def verify_equilibrium(R, lambda_d, lambda_a, tol: float = 1e-6, support_tol: float = 1e-9) -> EquilibriumReport:
    """Check that neither player gains by a pure deviation and that supported strategies attain the value."""
    M = _as_matrix(R)
    ld = np.asarray(lambda_d, dtype=np.float64)
    la = np.asarray(lambda_a, dtype=np.float64)
    row_payoff = M @ la
    col_payoff = ld @ M
    value = float(ld @ row_payoff)
    support = np.concatenate([np.abs(row_payoff[ld > support_tol] - value),
                              np.abs(col_payoff[la > support_tol] - value)])
    return EquilibriumReport(value, float(row_payoff.max() - value), float(value - col_payoff.min()),
                             float(support.max(initial=0.0)), tol)
