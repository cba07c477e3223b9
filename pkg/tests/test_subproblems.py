import numpy as np
import pytest

from socpsqp.cuts import init_Y0
from socpsqp.model import EQ, LE, ConeProblem, ConeSpec, LinearRow, classify_cones
from socpsqp.qp import OPTIMAL_QP, solve_qp
from socpsqp.soc import grad_residual, residual
from socpsqp.subproblems import (
    build_hessian,
    build_master_qp,
    build_newton_qp,
    build_soc_qp,
    recover_duals,
    update_mu,
)


def _single_cone_problem():
    # one Q2 cone plus a linear row keeping things bounded
    return ConeProblem(2, np.array([1.0, 0.3]),
                       [LinearRow([0], [1.0], 5.0, LE)], cones=[(0, 1)])


def _cone_keys(qp):
    return [r.key for r in qp.rows if r.key[0] != "row"]


def test_master_qp_row_counts():
    prob = _single_cone_problem()
    x = np.array([2.0, 0.5])  # interior, barred nonzero -> j in D
    Y = [init_Y0(2)]
    H = np.zeros((2, 2))
    qp = build_master_qp(prob, x, H, Y, {0})
    keys = _cone_keys(qp)
    assert keys.count(("lin", 0)) == 1
    assert keys.count(("head", 0)) == 1
    assert sum(1 for k in keys if k[0] == "cut") == 2
    assert len(qp.rows) == len(prob.rows) + 4

    # j not in D: no linearization row
    qp2 = build_master_qp(prob, np.array([2.0, 0.0]), H, Y, set())
    assert ("lin", 0) not in _cone_keys(qp2)


def test_master_qp_zero_step_feasible():
    prob = _single_cone_problem()
    x = np.array([2.0, 0.5])
    Y = [init_Y0(2)]
    qp = build_master_qp(prob, x, np.zeros((2, 2)), Y, {0})
    for r in qp.rows:
        resid = -r.rhs  # value of the row at d = 0
        assert resid <= 1e-12 if r.sense == LE else abs(resid) <= 1e-12
    assert np.all(qp.lower <= 0.0) and np.all(qp.upper >= 0.0)


def test_newton_qp_structure():
    prob = ConeProblem(4, np.zeros(4), [], cones=[(0, 1), (2, 3)])
    x = np.array([2.0, 0.5, 1.0, 0.3])
    Y = [init_Y0(2), init_Y0(2)]
    H = np.zeros((4, 4))
    # E_hat empty, every cone in D: pure linearizations plus head bounds
    qp = build_newton_qp(prob, x, H, Y, {0, 1}, set())
    keys = _cone_keys(qp)
    assert set(keys) == {("lin", 0), ("head", 0), ("lin", 1), ("head", 1)}
    # E_hat = all cones: identical row set to the master QP
    qp_all = build_newton_qp(prob, x, H, Y, {0, 1}, {0, 1})
    master = build_master_qp(prob, x, H, Y, {0, 1})
    assert sorted(map(str, _cone_keys(qp_all))) == sorted(map(str, _cone_keys(master)))
    # j in E_hat but not in D: only cuts and the head bound
    qp_e = build_newton_qp(prob, np.array([0.0, 0.0, 1.0, 0.3]), H, Y, {1}, {0})
    keys_e = [k for k in _cone_keys(qp_e) if k[1] == 0]
    assert ("lin", 0) not in keys_e and ("head", 0) in keys_e
    assert sum(1 for k in keys_e if k[0] == "cut") == 2


def test_newton_rows_subset_of_master():
    rng = np.random.default_rng(0)
    prob = ConeProblem(5, rng.normal(size=5), [], cones=[(0, 1, 2), (3, 4)])
    for _ in range(20):
        x = rng.uniform(-1, 2, size=5)
        x[0], x[3] = abs(x[0]), abs(x[3])
        E, D, _ = classify_cones(x, prob.cones)
        Y = [init_Y0(3), init_Y0(2)]
        newton = build_newton_qp(prob, x, np.zeros((5, 5)), Y, D, E)
        master = build_master_qp(prob, x, np.zeros((5, 5)), Y, D)
        master_keys = {str(k) for k in _cone_keys(master)}
        assert {str(k) for k in _cone_keys(newton)} <= master_keys


def test_soc_qp_relinearizes():
    prob = _single_cone_problem()
    x = np.array([2.0, 1.5])
    d_S = np.array([-0.5, -0.4])
    Y = [init_Y0(2)]
    H = np.eye(2) * 0.5
    qp = build_soc_qp(prob, x, d_S, H, Y, {0}, set())
    lin = next(r for r in qp.rows if r.key == ("lin", 0))
    base = x + d_S
    g = grad_residual(base)
    assert np.allclose(lin.coeffs, g)
    assert lin.rhs == pytest.approx(-residual(base))
    # objective is the fast QP's expanded at d_S
    assert np.allclose(qp.g, prob.objective + H @ d_S)


def test_recover_duals_reconstruction():
    prob = _single_cone_problem()
    x = np.array([2.0, 0.5])
    Y = [init_Y0(2)]
    H = np.zeros((2, 2))
    qp = build_master_qp(prob, x, H, Y, {0})
    sol = solve_qp(qp)
    assert sol.status == OPTIMAL_QP
    step = recover_duals(prob, x, sol.d, H, qp, sol)
    # z_hat = c + H d + A'lam - bound_duals, and complementarity at x + d
    A, _, _ = prob.row_matrix()
    expect = prob.objective + H @ sol.d + A.T @ step.lambda_hat - step.bound_duals
    assert np.max(np.abs(step.z_hat - expect)) <= 1e-9
    xn = x + step.d
    assert abs(xn @ step.z_hat) <= 1e-8
    assert step.mu_hat.min() >= 0.0


def test_recover_duals_trivial():
    # no rows, H = 0: z_hat must equal the objective vector
    prob = ConeProblem(2, np.array([1.0, 0.2]), [],
                       lower=np.array([0.0, -1.0]), upper=np.array([5.0, 1.0]),
                       cones=[(0, 1)])
    x = np.array([1.0, 0.5])
    Y = [init_Y0(2)]
    H = np.zeros((2, 2))
    qp = build_newton_qp(prob, x, H, Y, {0}, set())
    sol = solve_qp(qp)
    step = recover_duals(prob, x, sol.d, H, qp, sol)
    assert np.allclose(step.z_hat, prob.objective - step.bound_duals, atol=1e-12)


def test_update_mu():
    cones = [ConeSpec((0, 1, 2))]
    x = np.array([5.0, 3.0, 4.0])
    g = grad_residual(x)  # (-1, .6, .8), squared norm 2
    nu = [np.array([1.0, 0.0, 0.0])]
    mu = update_mu(np.array([2.0]), nu, x, x, {0}, {0}, cones)
    assert mu[0] == pytest.approx(2.0 - (-1.0) / 2.0)
    # nu = 0 keeps the basic update
    mu = update_mu(np.array([2.0]), [np.zeros(3)], x, x, {0}, {0}, cones)
    assert mu[0] == pytest.approx(2.0)
    # newly differentiable cone uses the new gradient
    mu = update_mu(np.array([0.0]), nu, x, np.array([1.0, 0.0, 0.0]), {0}, set(), cones)
    assert mu[0] == pytest.approx(0.5)
    # absent from D_next: zero
    mu = update_mu(np.array([2.0]), nu, x, x, set(), {0}, cones)
    assert mu[0] == 0.0
    # clamped at zero
    mu = update_mu(np.array([0.0]), [np.array([-1.0, 0.0, 0.0])], x, x, {0}, {0}, cones)
    assert mu[0] == 0.0


def test_build_hessian():
    cones = [ConeSpec((0, 1, 2))]
    H = build_hessian(np.zeros(1), np.array([5.0, 3.0, 4.0]), {0}, cones, 3)
    assert not np.any(H.H)
    H = build_hessian(np.array([2.0]), np.array([1.0, 1.0, 0.0]), {0}, cones, 3)
    assert np.allclose(H.H[1:, 1:], [[0.0, 0.0], [0.0, 2.0]])
    assert not H.scaled
    # rescale: spectral norm mu/|xbar| = 4 with c_H = 1
    H = build_hessian(np.array([4.0]), np.array([1.0, 1.0, 0.0]), {0}, cones, 3, c_H=1.0)
    assert H.scaled
    assert np.allclose(H.H[1:, 1:], [[0.0, 0.0], [0.0, 1.0]])


def test_hessian_psd():
    rng = np.random.default_rng(1)
    cones = [ConeSpec((0, 1, 2)), ConeSpec((3, 4))]
    for _ in range(30):
        x = rng.uniform(-2, 2, size=5)
        D = {j for j in range(2) if np.linalg.norm(x[np.asarray(cones[j].indices)][1:]) > 1e-8}
        H = build_hessian(rng.uniform(0, 3, size=2), x, D, cones, 5)
        w = np.linalg.eigvalsh(H.H)
        assert w.min() >= -1e-9 * max(1.0, w.max())
