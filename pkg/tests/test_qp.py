import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from socpsqp.qp import (
    INFEASIBLE_QP,
    OPTIMAL_QP,
    QpProblem,
    QpRow,
    WarmData,
    extended_rows,
    solve_qp,
    verify_farkas,
    verify_qp_kkt,
)


def brute_force_qp(qp, feas_tol=1e-8):
    """Independent oracle: enumerate active subsets of the extended rows,
    solve each equality-constrained KKT system, keep the feasible-optimal one.

    Returns (status, objective).  Status mirrors the solver's.
    """
    A, b, is_eq, _ = extended_rows(qp)
    R, n = A.shape
    eq_idx = tuple(np.flatnonzero(is_eq))
    le_idx = [i for i in range(R) if not is_eq[i]]

    # feasibility via an LP oracle
    res = linprog(np.zeros(n), A_ub=A[~is_eq] if (~is_eq).any() else None,
                  b_ub=b[~is_eq] if (~is_eq).any() else None,
                  A_eq=A[is_eq] if is_eq.any() else None,
                  b_eq=b[is_eq] if is_eq.any() else None,
                  bounds=[(None, None)] * n, method="highs")
    if res.status == 2:
        return INFEASIBLE_QP, None

    best = None
    for k in range(0, n - len(eq_idx) + 1):
        for extra in itertools.combinations(le_idx, k):
            subset = eq_idx + extra
            t = len(subset)
            K = np.zeros((n + t, n + t))
            K[:n, :n] = qp.H
            rhs = np.concatenate([-qp.g, b[list(subset)]]) if t else -qp.g
            if t:
                As = A[list(subset)]
                K[:n, n:] = As.T
                K[n:, :n] = As
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            d, lam = sol[:n], sol[n:]
            if np.max(np.abs(K @ sol - rhs)) > 1e-7 * max(1.0, np.max(np.abs(rhs))):
                continue
            resid = A @ d - b
            if np.any(np.where(is_eq, np.abs(resid), resid) > feas_tol):
                continue
            if t and np.any(lam[len(eq_idx):] < -1e-7):
                continue
            obj = 0.5 * d @ (qp.H @ d) + qp.g @ d
            if best is None or obj < best - 1e-12:
                best = obj
    return (OPTIMAL_QP, best) if best is not None else (INFEASIBLE_QP, None)


def _random_qp(rng):
    n = int(rng.integers(2, 5))
    k = int(rng.integers(0, n + 1))
    F = rng.normal(size=(k, n))
    H = F.T @ F
    if rng.random() < 0.5:
        H += np.eye(n) * rng.uniform(0.1, 2.0)
    g = rng.normal(size=n) * 2
    rows = []
    for i in range(int(rng.integers(0, 4))):
        a = rng.normal(size=n)
        sense = "EQ" if rng.random() < 0.25 else "LE"
        rhs = float(rng.normal()) * 2
        rows.append(QpRow(a, rhs, sense, ("r", i)))
    lower = rng.uniform(-4, -1, size=n)
    upper = rng.uniform(1, 4, size=n)
    return QpProblem(H, g, rows, lower, upper)


def test_trivial_examples():
    qp = QpProblem(np.array([[1.0]]), np.array([1.0]), [],
                   np.array([0.0]), np.array([np.inf]))
    sol = solve_qp(qp)
    assert sol.status == OPTIMAL_QP
    assert sol.d[0] == pytest.approx(0.0, abs=1e-12)
    assert sol.bound_duals[0] == pytest.approx(1.0, abs=1e-9)

    qp = QpProblem(np.eye(2), np.array([1.0, -2.0]))
    sol = solve_qp(qp)
    assert np.allclose(sol.d, [-1.0, 2.0], atol=1e-10)

    qp = QpProblem(np.array([[1.0]]), np.zeros(1),
                   [QpRow(np.array([1.0]), -1.0, "LE"),
                    QpRow(np.array([-1.0]), 0.0, "LE")])
    sol = solve_qp(qp)
    assert sol.status == INFEASIBLE_QP
    assert verify_farkas(qp, sol.farkas)
    y = sol.farkas / np.max(np.abs(sol.farkas))
    assert np.allclose(y, [1.0, 1.0])


def test_brute_force_equivalence():
    rng = np.random.default_rng(2024)
    infeasible_seen = 0
    for case in range(500):
        qp = _random_qp(rng)
        sol = solve_qp(qp)
        status, obj = brute_force_qp(qp)
        assert sol.status == status, f"case {case}: {sol.status} vs {status}"
        if status == OPTIMAL_QP:
            assert sol.kkt_residual <= 1e-9
            assert sol.objective == pytest.approx(obj, abs=1e-7)
        else:
            infeasible_seen += 1
            assert sol.farkas is not None and verify_farkas(qp, sol.farkas)
    assert infeasible_seen > 0  # the generator must exercise the Farkas path


def test_determinism():
    rng = np.random.default_rng(42)
    qp = _random_qp(rng)
    a = solve_qp(qp)
    b = solve_qp(qp)
    assert a.d.tobytes() == b.d.tobytes()
    assert a.row_duals.tobytes() == b.row_duals.tobytes()
    assert a.basis == b.basis


def test_warm_start_consistency():
    rng = np.random.default_rng(3)
    qp = QpProblem(np.eye(3), np.array([-3.0, -2.0, 1.0]),
                   [QpRow(np.array([1.0, 1.0, 0.0]), 1.0, "LE", "r0"),
                    QpRow(np.array([1.0, 0.0, 1.0]), 0.5, "LE", "r1")],
                   np.full(3, -2.0), np.full(3, 2.0))
    base = solve_qp(qp)
    assert base.status == OPTIMAL_QP
    g2 = qp.g + rng.uniform(-1e-6, 1e-6, size=3)
    qp2 = QpProblem(qp.H, g2, qp.rows, qp.lower, qp.upper)
    warm = solve_qp(qp2, warm=WarmData(base.basis, base.d))
    assert warm.status == OPTIMAL_QP
    assert set(warm.basis) == set(base.basis)


def test_verify_qp_kkt():
    qp = QpProblem(np.eye(2), np.array([1.0, -2.0]),
                   [QpRow(np.array([1.0, 0.0]), 5.0, "LE", "row")])
    sol = solve_qp(qp)
    assert verify_qp_kkt(qp, sol) <= 1e-9
    sol.d = sol.d + np.array([1e-3, 0.0])
    assert verify_qp_kkt(qp, sol) >= 1e-4

    qp0 = QpProblem(np.zeros((1, 1)), np.zeros(1))
    sol0 = solve_qp(qp0)
    assert sol0.status == OPTIMAL_QP
    assert verify_qp_kkt(qp0, sol0) == 0.0


def test_symmetry_validation():
    H = np.array([[1.0, 0.5], [0.2, 1.0]])
    with pytest.raises(ValueError):
        QpProblem(H, np.zeros(2))


def test_degenerate_lp_terminates():
    # many redundant rows through the optimum; Bland/stagnation guards must
    # still terminate at the right value
    n = 4
    rows = []
    for i in range(12):
        a = np.zeros(n)
        a[i % n] = 1.0
        rows.append(QpRow(a, 1.0, "LE", ("dup", i)))
    qp = QpProblem(np.zeros((n, n)), -np.ones(n), rows,
                   np.zeros(n), np.full(n, np.inf))
    sol = solve_qp(qp)
    assert sol.status == OPTIMAL_QP
    assert sol.objective == pytest.approx(-4.0, abs=1e-9)
