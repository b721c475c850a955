import itertools
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from advgame.errors import NumericalFailure
from advgame.lp import (INFEASIBLE, OPTIMAL, UNBOUNDED, LpProblem, fictitious_play, require_optimal, solve_attacker,
                        solve_defender, solve_game, solve_lp, verify_equilibrium)


def vertex_oracle(c, A_ub, b_ub, A_eq=None, b_eq=None):
    """Best objective over all basic feasible points; None when infeasible.  Small n only."""
    n = len(c)
    rows = [(a, b, False) for a, b in zip(A_ub, b_ub)]
    rows += [(a, b, True) for a, b in zip(A_eq if A_eq is not None else [], b_eq if b_eq is not None else [])]
    rows += [(-np.eye(n)[i], 0.0, False) for i in range(n)]
    best = None
    for combo in itertools.combinations(range(len(rows)), n):
        M = np.array([rows[i][0] for i in combo])
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, np.array([rows[i][1] for i in combo]))
        ok = all((abs(a @ x - b) <= 1e-8) if eq else (a @ x <= b + 1e-8) for a, b, eq in rows)
        if ok and (best is None or c @ x > best):
            best = float(c @ x)
    return best


@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 4), m=st.integers(1, 4), eq=st.booleans())
def test_simplex_matches_vertex_enumeration(seed, n, m, eq):
    rng = np.random.default_rng(seed)
    c = rng.integers(-5, 6, size=n).astype(float)
    A = rng.integers(-4, 5, size=(m, n)).astype(float)
    b = rng.integers(-3, 8, size=m).astype(float)
    # a box keeps every instance bounded so the oracle's vertex maximum is the optimum
    A = np.vstack([A, np.eye(n)])
    b = np.concatenate([b, np.full(n, 10.0)])
    A_eq = b_eq = None
    if eq:
        A_eq = rng.integers(-2, 3, size=(1, n)).astype(float)
        b_eq = rng.integers(0, 4, size=1).astype(float)
    res = solve_lp(LpProblem(c, A, b, A_eq, b_eq))
    expect = vertex_oracle(c, A, b, A_eq, b_eq)
    if expect is None:
        assert res.status == INFEASIBLE
    else:
        assert res.status == OPTIMAL
        assert res.objective == pytest.approx(expect, abs=1e-8)
        assert np.all(res.x >= -1e-9)
        assert np.all(A @ res.x <= b + 1e-7)


def test_unbounded_and_infeasible():
    assert solve_lp(LpProblem([1.0, 1.0], [[1.0, -1.0]], [1.0])).status == UNBOUNDED
    assert solve_lp(LpProblem([1.0], [[1.0], [-1.0]], [1.0, -2.0])).status == INFEASIBLE


def test_degenerate_problem_terminates():
    # classic cycling example under Dantzig pricing without an anti-cycling rule
    c = np.array([10.0, -57.0, -9.0, -24.0])
    A = np.array([[0.5, -5.5, -2.5, 9.0], [0.5, -1.5, -0.5, 1.0], [1.0, 0.0, 0.0, 0.0]])
    b = np.array([0.0, 0.0, 1.0])
    res = solve_lp(LpProblem(c, A, b))
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(1.0)


def test_identity_game_exact():
    sol = solve_game(np.eye(2))
    assert sol.status == OPTIMAL
    assert abs(sol.value_primal - 0.5) <= 1e-9 and abs(sol.value_dual - 0.5) <= 1e-9
    assert np.allclose(sol.lambda_d, 0.5, atol=1e-9) and np.allclose(sol.lambda_a, 0.5, atol=1e-9)


def closed_form_2x2(R):
    (a, b), (c, d) = R
    den = a - b - c + d
    return (d - c) / den, (d - b) / den, (a * d - b * c) / den


def test_two_by_two_reference_game():
    R = np.array([[0.8, 0.2], [0.3, 0.7]])
    p, q, v = closed_form_2x2(R)
    sol = solve_game(R)
    assert sol.value_primal == pytest.approx(0.5, abs=1e-9)
    assert sol.lambda_d == pytest.approx([0.4, 0.6], abs=1e-7)
    assert sol.lambda_d[0] == pytest.approx(p, abs=1e-7)
    assert sol.lambda_a[0] == pytest.approx(q, abs=1e-7)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_random_2x2_without_saddle_matches_closed_form(seed):
    rng = np.random.default_rng(seed)
    hi, lo = rng.uniform(0.55, 1, 2), rng.uniform(0, 0.45, 2)
    R = np.array([[hi[0], lo[0]], [lo[1], hi[1]]])  # diagonal dominant: no pure saddle
    p, q, v = closed_form_2x2(R)
    sol = solve_game(R)
    assert sol.value_primal == pytest.approx(v, abs=1e-9)
    assert sol.lambda_d[0] == pytest.approx(p, abs=1e-7)
    assert sol.lambda_a[0] == pytest.approx(q, abs=1e-7)


def test_dominated_strategies():
    R = np.array([[0.8, 0.9], [0.1, 0.2]])
    sol = solve_game(R)
    assert sol.lambda_d == pytest.approx([1, 0]) and sol.lambda_a == pytest.approx([1, 0])
    assert sol.value_primal == pytest.approx(0.8)


def test_random_games_strong_duality_and_equilibrium():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    for _ in range(200):
        R = rng.random((rng.integers(1, 41), rng.integers(1, 41)))
        sol = solve_game(R)
        assert sol.status == OPTIMAL
        assert sol.duality_gap <= 1e-7
        assert verify_equilibrium(R, sol.lambda_d, sol.lambda_a, 1e-6).passed
        assert sol.value_primal >= R.min(axis=1).max() - 1e-7
        assert sol.value_primal >= R.mean(axis=0).min() - 1e-7
    assert time.perf_counter() - t0 < 10


def test_fictitious_play_brackets_the_value():
    rng = np.random.default_rng(1)
    for _ in range(10):
        R = rng.random((5, 7))
        v = solve_game(R).value_primal
        fp = fictitious_play(R, 4000)
        assert fp.lower - 1e-12 <= v <= fp.upper + 1e-12
        assert fp.width < 0.05


def test_duals_agree_with_attacker_program():
    R = np.random.default_rng(2).random((6, 4))
    d, a = solve_defender(R), solve_attacker(R)
    assert d.value_primal == pytest.approx(a.value_primal, abs=1e-9)
    # the dual-derived attacker strategy is also optimal
    assert (d.lambda_a @ R.T).max() == pytest.approx(d.value_primal, abs=1e-9)


def test_verify_equilibrium_rejects_bad_strategies():
    R = np.array([[0.8, 0.2], [0.3, 0.7]])
    rep = verify_equilibrium(R, [1.0, 0.0], [0.5, 0.5])
    assert not rep.passed and rep.defender_ok and not rep.attacker_ok


def test_payoff_range_enforced_and_require_optimal():
    with pytest.raises(ValueError):
        solve_game(np.array([[1.5]]))
    sol = solve_game(np.eye(2))
    sol.status = "numericalFailure"
    with pytest.raises(NumericalFailure):
        require_optimal(sol)


def test_small_textbook_programs():
    res = solve_lp(LpProblem([1.0], [[1.0]], [1.0]))
    assert res.status == OPTIMAL and res.x == pytest.approx([1.0])
    res = solve_lp(LpProblem([1.0, 1.0], [[1.0, 1.0]], [1.0]))
    assert res.objective == pytest.approx(1.0)


def test_row_dominance_game():
    sol = solve_game(np.array([[0.9, 0.8], [0.1, 0.2]]))
    assert sol.value_primal == pytest.approx(0.8, abs=1e-9)
    assert sol.lambda_d == pytest.approx([1, 0], abs=1e-9)
    assert sol.lambda_a == pytest.approx([0, 1], abs=1e-9)


def test_fictitious_play_identity_and_constant():
    fp = fictitious_play(np.eye(2), 100_000)
    assert fp.lower <= 0.5 <= fp.upper and fp.width < 0.01
    const = fictitious_play(np.full((3, 4), 0.3), 1)
    assert const.lower == pytest.approx(0.3) and const.upper == pytest.approx(0.3)


def test_perturbed_strategies_fail_verification():
    R = np.array([[0.8, 0.2], [0.3, 0.7]])
    rep = verify_equilibrium(R, [0.6, 0.4], [0.5, 0.5])  # 0.2 mass swapped
    assert not rep.passed
    dom = np.array([[0.9, 0.8], [0.1, 0.2]])
    assert not verify_equilibrium(dom, [0.5, 0.5], [0.5, 0.5]).defender_ok


def test_value_between_maximin_and_minimax():
    rng = np.random.default_rng(4)
    for _ in range(50):
        R = rng.random((rng.integers(1, 9), rng.integers(1, 9)))
        v = solve_game(R).value_primal
        assert R.min(axis=1).max() - 1e-9 <= v <= R.max(axis=0).min() + 1e-9


def test_scale_shift_equivariance():
    rng = np.random.default_rng(5)
    for _ in range(20):
        R = rng.random((5, 6))
        a, b = 0.5, 0.25
        sol = solve_game(a * R + b)
        assert verify_equilibrium(R, sol.lambda_d, sol.lambda_a, 1e-6 / a).passed
        assert sol.value_primal == pytest.approx(a * solve_game(R).value_primal + b, abs=1e-9)
