"""Cone residual geometry: r, its derivatives, supporting hyperplanes, and
dual-cone membership certificates.

A cone point is a plain 1-d array whose first entry is the head component and
whose remaining entries are the barred part.
"""

from __future__ import annotations

import numpy as np


class NondifferentiableError(ValueError):
    """Raised when a derivative of r is requested at a zero barred part."""


def residual(p):
    """r(p) = ||pbar|| - p0; negative inside the cone, zero on its boundary."""
    p = np.asarray(p, dtype=float)
    return float(np.linalg.norm(p[1:]) - p[0])


def grad_residual(p):
    """Gradient (-1, pbar'/||pbar||)'; the barred block has unit norm."""
    p = np.asarray(p, dtype=float)
    nb = np.linalg.norm(p[1:])
    if nb == 0.0:
        raise NondifferentiableError("r is not differentiable where the barred part is zero")
    g = np.empty_like(p)
    g[0] = -1.0
    g[1:] = p[1:] / nb
    return g


def hess_residual(p):
    """Hessian of r: zero head row/column, I/||pbar|| - pbar pbar'/||pbar||^3."""
    p = np.asarray(p, dtype=float)
    pb = p[1:]
    nb = np.linalg.norm(pb)
    if nb == 0.0:
        raise NondifferentiableError("r has no Hessian where the barred part is zero")
    H = np.zeros((p.size, p.size))
    H[1:, 1:] = np.eye(pb.size) / nb - np.outer(pb, pb) / nb**3
    return H


def cut_value(y, x):
    """grad r(y)'x = ybar'xbar/||ybar|| - x0; <= 0 for every x in the cone."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    nb = np.linalg.norm(y[1:])
    if nb == 0.0:
        raise ValueError("generator with zero barred part defines no hyperplane")
    return float(y[1:] @ x[1:] / nb - x[0])


def in_outer_cone(x, hyperplanes, slack=1e-12):
    """Membership in the polyhedral outer cone: head >= 0 and all cuts <= 0."""
    x = np.asarray(x, dtype=float)
    if x[0] < -slack:
        return False
    return all(cut_value(y, x) <= slack for y in hyperplanes.generators)


def phi_certificate(z, y):
    """Phi(z, y) = z0 - ||zbar + ybar||_1 - ||ybar||.

    Phi >= 0 certifies that z lies in the dual of the cone generated by the
    initial axis generators together with y; Phi > 0 certifies interior
    membership.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    nb = np.linalg.norm(y[1:])
    if nb == 0.0:
        raise ValueError("certificate point y must have a nonzero barred part")
    return float(z[0] - np.linalg.norm(z[1:] + y[1:], 1) - nb)


def certificate_decomposition(z, y):
    """Constructive dual-cone weights for the Phi >= 0 case.

    Returns (sigma_plus, sigma_minus, sigma_y, eta) such that
    z = -sum_i sigma_plus_i grad r(-e_i) - sum_i sigma_minus_i grad r(e_i)
        - sigma_y grad r(y) + eta e0.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    phi = phi_certificate(z, y)
    if phi < 0:
        raise ValueError("no certificate: Phi(z, y) < 0")
    s = z[1:] + y[1:]
    sigma_plus = np.maximum(s, 0.0)
    sigma_minus = np.maximum(-s, 0.0)
    sigma_y = float(np.linalg.norm(y[1:]))
    eta = phi
    return sigma_plus, sigma_minus, sigma_y, eta


def dual_cone_decompose(z, hyperplanes, tol=1e-9):
    """Express z as -sum_l sigma_l grad r(y_l) + eta e0 with sigma, eta >= 0.

    Solved as a small nonnegative feasibility problem through the QP engine.
    Returns (sigma, eta) on success and None when the subproblem finds no
    decomposition (which proves non-membership only if it certifies
    infeasibility exactly; callers in tests treat None as "not found").
    """
    from .qp import QpProblem, QpRow, solve_qp, OPTIMAL_QP

    z = np.asarray(z, dtype=float)
    gens = hyperplanes.generators
    m = len(gens)
    nj = z.size
    M = np.zeros((nj, m + 1))
    for l, y in enumerate(gens):
        M[:, l] = -grad_residual(y)
    M[0, m] = 1.0
    rows = [
        QpRow(M[i, :], z[i], "EQ", ("component", i))
        for i in range(nj)
    ]
    # least-squares weights biased toward the head direction, so canonical
    # points decompose canonically (z = e0 gives eta = z0, sigma = 0)
    g = np.zeros(m + 1)
    g[m] = -z[0]
    qp = QpProblem(
        H=np.eye(m + 1),
        g=g,
        rows=rows,
        lower=np.zeros(m + 1),
        upper=np.full(m + 1, np.inf),
    )
    sol = solve_qp(qp)
    if sol.status != OPTIMAL_QP:
        return None
    w = sol.d
    if np.max(np.abs(M @ w - z)) > tol:
        return None
    return w[:m], float(w[m])
