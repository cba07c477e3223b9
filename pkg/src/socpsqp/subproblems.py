"""Assembly of the three QP families (master cut QP, fast step QP, second-order
correction QP), dual recovery, and the Hessian/multiplier recursion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qp import QpProblem, QpRow
from .soc import grad_residual, hess_residual, residual


@dataclass
class SqpHessian:
    H: np.ndarray
    mu: np.ndarray
    scaled: bool = False


@dataclass
class StepResult:
    """Primal step with the recovered multiplier estimates.

    z_hat = c + H d + A'lam_hat - bound_duals; on each cone block it equals
    -mu_hat_j grad r_j(x_j) + nu_hat_j, where nu_hat aggregates the cut and
    head duals of the outer approximation.
    """

    d: np.ndarray
    lambda_hat: np.ndarray
    bound_duals: np.ndarray
    mu_hat: np.ndarray
    nu_hat: list
    eta_hat: np.ndarray
    z_hat: np.ndarray
    qp_status: str
    basis: tuple = ()
    qp_iterations: int = 0


class DualRecoveryError(RuntimeError):
    """The QP duals do not reproduce z_hat on some cone block."""


def build_hessian(mu, x, D, cones, n, c_H=1e12):
    """H = sum_{j in D} mu_j hess r_j(x_j), rescaled to spectral norm <= c_H.

    Each block has eigenvalues mu_j/||xbar_j|| (or zero), so the spectral norm
    is available in closed form.
    """
    H = np.zeros((n, n))
    norm = 0.0
    for j in D:
        if mu[j] == 0.0:
            continue
        idx = np.asarray(cones[j].indices)
        xj = x[idx]
        H[np.ix_(idx, idx)] = mu[j] * hess_residual(xj)
        if idx.size >= 3:
            norm = max(norm, mu[j] / np.linalg.norm(xj[1:]))
    scaled = False
    if norm > c_H:
        H *= c_H / norm
        scaled = True
    return SqpHessian(H=H, mu=np.asarray(mu, dtype=float), scaled=scaled)


def _shifted_problem_rows(problem, x):
    rows = []
    for i, r in enumerate(problem.rows):
        rows.append(QpRow(r.dense(problem.num_vars), r.rhs - float(r.values @ x[r.indices]), r.sense, ("row", i)))
    return rows


def _embed(vec, idx, n):
    out = np.zeros(n)
    out[idx] = vec
    return out


def _lin_row(problem, x, j):
    idx = np.asarray(problem.cones[j].indices)
    xj = x[idx]
    g = grad_residual(xj)
    return QpRow(_embed(g, idx, problem.num_vars), -residual(xj), "LE", ("lin", j))


def _head_row(problem, x, j):
    cone = problem.cones[j]
    a = np.zeros(problem.num_vars)
    a[cone.head] = -1.0
    return QpRow(a, x[cone.head], "LE", ("head", j))


def _cut_rows(problem, x, Y, j):
    idx = np.asarray(problem.cones[j].indices)
    xj = x[idx]
    rows = []
    for l, y in enumerate(Y.generators):
        g = grad_residual(y)
        rows.append(QpRow(_embed(g, idx, problem.num_vars), -float(g @ xj), "LE", ("cut", j, l)))
    return rows


def build_master_qp(problem, x, H, Y, D):
    """QP over d: objective c'd + d'Hd/2; rows A(x+d), linearizations on D,
    and every cone's head bound plus all accumulated cuts."""
    rows = _shifted_problem_rows(problem, x)
    for j in range(len(problem.cones)):
        if j in D:
            rows.append(_lin_row(problem, x, j))
        rows.append(_head_row(problem, x, j))
        rows.extend(_cut_rows(problem, x, Y[j], j))
    return QpProblem(
        H=H,
        g=problem.objective.copy(),
        rows=rows,
        lower=problem.lower - x,
        upper=problem.upper - x,
    )


def build_newton_qp(problem, x, H, Y, D, E_hat):
    """Relaxation of the master QP: cuts only on E_hat, linearizations on D,
    head bounds on (D \\ E_hat) and E_hat.  With E_hat = all cones the row set
    matches build_master_qp."""
    rows = _shifted_problem_rows(problem, x)
    for j in range(len(problem.cones)):
        if j in D:
            rows.append(_lin_row(problem, x, j))
            if j not in E_hat:
                rows.append(_head_row(problem, x, j))
        if j in E_hat:
            rows.append(_head_row(problem, x, j))
            rows.extend(_cut_rows(problem, x, Y[j], j))
    return QpProblem(
        H=H,
        g=problem.objective.copy(),
        rows=rows,
        lower=problem.lower - x,
        upper=problem.upper - x,
    )


def build_soc_qp(problem, x, d_S, H, Y, D, E_hat):
    """Second-order correction: same structure as the fast QP, re-linearized
    at x + d_S; the objective is the fast QP's shifted to s."""
    base = x + d_S
    rows = _shifted_problem_rows(problem, base)
    for j in range(len(problem.cones)):
        idx = np.asarray(problem.cones[j].indices)
        if j in D and np.linalg.norm(base[idx][1:]) > 0.0:
            rows.append(_lin_row(problem, base, j))
        if j in D and j not in E_hat:
            rows.append(_head_row(problem, base, j))
        if j in E_hat:
            rows.append(_head_row(problem, base, j))
            rows.extend(_cut_rows(problem, base, Y[j], j))
    return QpProblem(
        H=H,
        g=problem.objective + H @ d_S,
        rows=rows,
        lower=problem.lower - base,
        upper=problem.upper - base,
    )


def recover_duals(problem, x, d, H, qp, sol, check_tol=1e-6):
    """Extract per-cone multipliers from a solved subproblem.

    mu_hat comes from the linearization rows, nu_hat aggregates cut duals and
    the head dual as -sum sigma_l grad r(y_l) + eta e0, and z_hat is rebuilt
    from stationarity.  The per-block reconstruction is cross-checked.
    """
    n = problem.num_vars
    p = len(problem.cones)
    m = problem.num_rows
    lam = np.zeros(m)
    mu_hat = np.zeros(p)
    eta_hat = np.zeros(p)
    nu_hat = [np.zeros(c.dim) for c in problem.cones]
    lin_grad = [None] * p
    H_eff = H if sol.hessian_shift == 0.0 else H + sol.hessian_shift * np.eye(n)

    for row, dual in zip(qp.rows, sol.row_duals):
        tag = row.key[0]
        if tag == "row":
            lam[row.key[1]] = dual
        elif tag == "lin":
            j = row.key[1]
            mu_hat[j] = dual
            lin_grad[j] = row.coeffs[np.asarray(problem.cones[j].indices)]
        elif tag == "head":
            j = row.key[1]
            eta_hat[j] += dual
            nu_hat[j][0] += dual
        elif tag == "cut":
            j = row.key[1]
            if dual != 0.0:
                idx = np.asarray(problem.cones[j].indices)
                nu_hat[j] -= dual * row.coeffs[idx]

    A, b, _ = problem.row_matrix()
    z_hat = problem.objective + H_eff @ d + A.T @ lam - sol.bound_duals

    worst = 0.0
    for j in range(p):
        idx = np.asarray(problem.cones[j].indices)
        expect = nu_hat[j].copy()
        if lin_grad[j] is not None:
            expect -= mu_hat[j] * lin_grad[j]
        worst = max(worst, float(np.max(np.abs(z_hat[idx] - expect))))
    if worst > check_tol:
        raise DualRecoveryError(f"z_hat reconstruction residual {worst:.3e}")

    return StepResult(
        d=d,
        lambda_hat=lam,
        bound_duals=sol.bound_duals,
        mu_hat=mu_hat,
        nu_hat=nu_hat,
        eta_hat=eta_hat,
        z_hat=z_hat,
        qp_status=sol.status,
        basis=sol.basis,
        qp_iterations=sol.iterations,
    )


def update_mu(mu_hat, nu_hat, x_next, x_curr, D_next, D_curr, cones):
    """Condense the split (mu_hat, nu_hat) dual information into one multiplier
    per cone for the next Hessian, clamped at zero."""
    p = len(cones)
    mu = np.zeros(p)
    for j in range(p):
        idx = np.asarray(cones[j].indices)
        if j in D_next and j in D_curr:
            g = grad_residual(x_curr[idx])
            mu[j] = mu_hat[j] - float(g @ nu_hat[j]) / float(g @ g)
        elif j in D_next:
            g = grad_residual(x_next[idx])
            mu[j] = -float(g @ nu_hat[j]) / float(g @ g)
    return np.maximum(mu, 0.0)
