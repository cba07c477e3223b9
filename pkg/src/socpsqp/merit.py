"""Exact penalty function, its piecewise-linear model decrease, the relaxed
sufficient-decrease test, and the penalty-parameter update."""

from __future__ import annotations

import numpy as np

from .model import classify_cones
from .soc import residual

C_DEC = 1e-6
C_INC = 2.0
EPS_MACH = np.finfo(float).eps


def penalty_value(problem, x, rho):
    """phi(x; rho) = c'x + rho * sum_j [r_j(x_j)]+."""
    total = float(problem.objective @ x)
    viol = 0.0
    for j in range(len(problem.cones)):
        viol += max(residual(problem.cone_block(x, j)), 0.0)
    return total + rho * viol


def model_decrease(problem, x, d, rho, D):
    """m(x+d; rho) - m(x; rho) = c'd - rho * sum_{j in D} [r_j(x_j)]+.

    Valid when d solves a subproblem, so the linearized residuals at x+d are
    nonpositive and the model's penalty terms vanish there.
    """
    dec = float(problem.objective @ d)
    for j in D:
        dec -= rho * max(residual(problem.cone_block(x, j)), 0.0)
    return dec


def accept_step(problem, x, d, rho, c_dec=C_DEC):
    """Relaxed sufficient-decrease test for the trial point x + d.

    phi(x+d) - phi(x) - 10 eps |phi(x)| <= c_dec * (model decrease); the
    slack absorbs cancellation error when both sides are near zero.
    """
    _, D, _ = classify_cones(x, problem.cones)
    phi_old = penalty_value(problem, x, rho)
    phi_new = penalty_value(problem, x + d, rho)
    dec = model_decrease(problem, x, d, rho, D)
    return phi_new - phi_old - 10.0 * EPS_MACH * abs(phi_old) <= c_dec * dec


def rho_new(rho_old, z, cones, c_inc=C_INC):
    """Keep rho when it strictly dominates the dual head norms, else enlarge.

    z is laid out over all variables; the test uses the infinity norm of the
    cone head components z_{j0}.
    """
    heads = np.array([z[c.head] for c in cones]) if cones else np.zeros(0)
    bound = float(np.max(np.abs(heads))) if heads.size else 0.0
    if rho_old > bound:
        return rho_old
    return c_inc * bound
