"""Outer solve loop: fast SQP steps with extremal-set expansion, an optional
second-order correction, the master cutting loop, penalty bookkeeping, and
termination on the SOCP KKT error."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import merit
from .cuts import init_Y0, update_dual, update_primal
from .model import (
    ACTIVE_TOL,
    INFEASIBLE,
    ITERATION_LIMIT,
    OPTIMAL,
    SUBPROBLEM_FAILURE,
    PrimalDualTriple,
    SolveReport,
    classify_cones,
    kkt_error,
)
from .qp import (
    INFEASIBLE_QP,
    OPTIMAL_QP,
    QpProblem,
    QpRow,
    WarmData,
    solve_qp,
)
from .subproblems import (
    DualRecoveryError,
    build_hessian,
    build_master_qp,
    build_newton_qp,
    build_soc_qp,
    recover_duals,
    update_mu,
)


@dataclass
class SolverConfig:
    tol: float = 1e-7
    max_iters: int = 200
    max_inner_iters: int = 100
    enable_soc_step: bool = False
    c_dec: float = merit.C_DEC
    c_inc: float = merit.C_INC
    c_H: float = 1e12
    rho_init: float = 50.0
    active_tol: float = ACTIVE_TOL
    trace_sink: object = None
    paranoid: bool = False  # assert iterate invariants after every step

    def __post_init__(self):
        if not (0 < self.c_dec < 1):
            raise ValueError("c_dec must lie in (0, 1)")
        if self.c_inc <= 1:
            raise ValueError("c_inc must exceed 1")
        for name in ("tol", "c_H", "rho_init", "active_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class _State:
    x: np.ndarray
    lam: np.ndarray
    bound_duals: np.ndarray
    mu: np.ndarray
    rho: float
    Y: list
    warm_newton: WarmData = None
    warm_master: WarmData = None
    stats: dict = field(default_factory=lambda: {
        "total_iters": 0,
        "sqp_step_iters": 0,
        "qp_newton_solves": 0,
        "qp_master_solves": 0,
        "model_decrease_violations": 0,
    })


class _Abort(Exception):
    def __init__(self, status, message=""):
        self.status = status
        self.message = message


def _dual_estimate(problem, lam, bound_duals):
    """zcheck = c + A'lam - bound_duals over the full variable space."""
    A, _, _ = problem.row_matrix()
    return problem.objective + A.T @ lam - bound_duals


def project_start(problem, x):
    """Project a point onto the linear rows, bounds, and nonnegative cone heads.

    Returns x unchanged when it already satisfies them all; raises the solve's
    Infeasible/SubproblemFailure outcome otherwise propagated by the caller.
    """
    n = problem.num_vars
    target = np.asarray(x, dtype=float)
    A, b, is_eq, _ = problem.extended_rows()
    heads = [c.head for c in problem.cones]
    resid = A @ target - b
    ok = np.all(np.where(is_eq, np.abs(resid) <= 1e-9, resid <= 1e-9)) if resid.size else True
    if ok and all(target[h] >= -1e-9 for h in heads):
        return target
    rows = [QpRow(r.dense(n), r.rhs, r.sense, ("row", i)) for i, r in enumerate(problem.rows)]
    lower = problem.lower.copy()
    for h in heads:
        lower[h] = max(lower[h], 0.0)
    qp = QpProblem(H=np.eye(n), g=-target, rows=rows, lower=lower, upper=problem.upper)
    sol = solve_qp(qp)
    if sol.status == INFEASIBLE_QP:
        raise _Abort(INFEASIBLE, "linear constraints are infeasible")
    if sol.status != OPTIMAL_QP:
        raise _Abort(SUBPROBLEM_FAILURE, "projection QP failed")
    return sol.d


def _initial_point(problem, start):
    target = np.zeros(problem.num_vars) if start is None else np.asarray(start.x, dtype=float)
    return project_start(problem, target)


def _init_hyperplanes(problem, zcheck):
    """Axis generators plus -zcheck per cone, filtered by the dual-update guards."""
    Y = []
    for j, cone in enumerate(problem.cones):
        Yj = init_Y0(cone.dim)
        zj = zcheck[np.asarray(cone.indices)]
        Yj = update_dual(Yj, np.ones(cone.dim), zj)  # x stands in as nonzero
        Y.append(Yj)
    return Y


def _solve_subproblem(problem, x, H_eff, qp, warm, state, counter):
    state.stats[counter] += 1
    sol = solve_qp(qp, warm=warm)
    if sol.status == INFEASIBLE_QP:
        raise _Abort(INFEASIBLE, "a subproblem relaxation is infeasible")
    if sol.status != OPTIMAL_QP:
        return None
    try:
        return recover_duals(problem, x, sol.d, H_eff, qp, sol)
    except DualRecoveryError:
        return None


def _check_model_decrease(problem, x, step, rho, D, state, config):
    """Record violations of the model-decrease sign condition.

    Whenever the candidate rho strictly dominates the dual head norms, the
    piecewise-linear model difference of a subproblem step must be
    nonpositive.
    """
    heads = np.array([step.z_hat[c.head] for c in problem.cones]) if problem.cones else np.zeros(0)
    bound = float(np.max(np.abs(heads))) if heads.size else 0.0
    if rho > bound:
        dec = merit.model_decrease(problem, x, step.d, rho, D)
        if dec > 1e-10:
            state.stats["model_decrease_violations"] += 1


def fast_step_loop(problem, x, H, Y, D, E, state, config):
    """Solve the fast QP, growing E_hat until no cone outside it hits a zero head.

    Returns (step, E_hat) or (None, E_hat) when the QP fails and the caller
    must fall through to the master loop.  Infeasibility aborts the solve.
    """
    E_hat = set(E)
    heads = np.array([c.head for c in problem.cones], dtype=np.intp) if problem.cones else np.zeros(0, dtype=np.intp)
    for _ in range(len(problem.cones) + 1):
        qp = build_newton_qp(problem, x, H.H, Y, D, E_hat)
        step = _solve_subproblem(problem, x, H.H, qp, state.warm_newton, state, "qp_newton_solves")
        if step is None:
            return None, E_hat
        state.warm_newton = WarmData(step.basis, step.d)
        if not len(heads):
            return step, E_hat
        new_heads = x[heads] + step.d[heads]
        hitting = {j for j in range(len(problem.cones)) if new_heads[j] <= config.active_tol}
        if hitting <= E_hat:
            return step, E_hat
        E_hat |= hitting
    return step, E_hat


def solve(problem, start=None, config=None):
    """Run the cutting-plane SQP method on a cone problem.

    The returned report carries the final primal-dual triple, the SOCP KKT
    error, and per-iteration statistics; per-iteration trace records go to
    ``config.trace_sink`` when set and are kept on the report.
    """
    config = config or SolverConfig()
    n = problem.num_vars
    p = len(problem.cones)
    trace = []

    def emit(rec):
        trace.append(rec)
        if config.trace_sink is not None:
            config.trace_sink(rec)

    def report(status, state, err, message=""):
        zc = _dual_estimate(problem, state.lam, state.bound_duals)
        z_cone = np.zeros(n)
        for c in problem.cones:
            idx = np.asarray(c.indices)
            z_cone[idx] = zc[idx]
        triple = PrimalDualTriple(state.x, state.lam, z_cone, state.bound_duals)
        return SolveReport(
            status=status,
            triple=triple,
            kkt_error=err,
            total_iters=state.stats["total_iters"],
            sqp_step_iters=state.stats["sqp_step_iters"],
            qp_newton_solves=state.stats["qp_newton_solves"],
            qp_master_solves=state.stats["qp_master_solves"],
            final_rho=state.rho,
            objective=float(problem.objective @ state.x),
            trace=trace,
            model_decrease_violations=state.stats["model_decrease_violations"],
            message=message,
        )

    lam0 = np.zeros(problem.num_rows) if start is None else np.asarray(start.lam, dtype=float)
    bd0 = np.zeros(n)
    state = _State(
        x=np.zeros(n),
        lam=lam0,
        bound_duals=bd0,
        mu=np.ones(p),
        rho=config.rho_init,
        Y=[],
    )
    try:
        state.x = _initial_point(problem, start)
    except _Abort as stop:
        state.Y = []
        return report(stop.status, state, np.inf, stop.message)

    zcheck0 = _dual_estimate(problem, state.lam, state.bound_duals)
    state.Y = _init_hyperplanes(problem, zcheck0)
    if start is not None:
        # a warm start at the solution should return without iterating
        err0 = kkt_error(problem, state.x, state.lam, state.bound_duals)
        if err0 <= config.tol:
            return report(OPTIMAL, state, err0)
        for j, c in enumerate(problem.cones):
            zj = zcheck0[np.asarray(c.indices)]
            state.mu[j] = max(float(zj[0]), 0.0)

    try:
        for it in range(config.max_iters):
            state.stats["total_iters"] = it + 1
            E, D, _ = classify_cones(state.x, problem.cones, config.active_tol)
            H = build_hessian(state.mu, state.x, D, problem.cones, n, config.c_H)

            step_kind = None
            inner_used = 0
            accepted = None
            rho_candidate = state.rho

            fast, E_hat = fast_step_loop(problem, state.x, H, state.Y, D, E, state, config)
            if fast is not None:
                rho_candidate = merit.rho_new(state.rho, fast.z_hat, problem.cones, config.c_inc)
                _check_model_decrease(problem, state.x, fast, rho_candidate, D, state, config)
                if merit.accept_step(problem, state.x, fast.d, rho_candidate, config.c_dec):
                    accepted = fast
                    step_kind = "fast"
                elif config.enable_soc_step:
                    qp = build_soc_qp(problem, state.x, fast.d, H.H, state.Y, D, E_hat)
                    soc = _solve_subproblem(problem, state.x, H.H, qp, None, state, "qp_newton_solves")
                    if soc is not None:
                        d_total = fast.d + soc.d
                        soc.d = d_total
                        heads_ok = all(
                            state.x[c.head] + d_total[c.head] > config.active_tol or j in E_hat
                            for j, c in enumerate(problem.cones)
                        )
                        phi_old = merit.penalty_value(problem, state.x, rho_candidate)
                        phi_new = merit.penalty_value(problem, state.x + d_total, rho_candidate)
                        dec = merit.model_decrease(problem, state.x, fast.d, rho_candidate, D)
                        ok = (
                            phi_new - phi_old - 10.0 * merit.EPS_MACH * abs(phi_old)
                            <= config.c_dec * dec
                        )
                        if ok and heads_ok:
                            accepted = soc
                            step_kind = "soc"

            if accepted is not None:
                # fast path bookkeeping: cut off the current iterate, adopt the
                # QP's multipliers directly
                new_Y = [update_primal(state.Y[j], state.x[np.asarray(c.indices)])
                         for j, c in enumerate(problem.cones)]
                state.mu = accepted.mu_hat.copy()
                state.stats["sqp_step_iters"] += 1
            else:
                # master cutting loop: refine the outer approximation until a
                # trial point achieves sufficient decrease
                step_kind = "master"
                for l in range(config.max_inner_iters):
                    inner_used = l + 1
                    qp = build_master_qp(problem, state.x, H.H, state.Y, D)
                    cand = _solve_subproblem(problem, state.x, H.H, qp, state.warm_master, state, "qp_master_solves")
                    if cand is None:
                        raise _Abort(SUBPROBLEM_FAILURE, "master QP failed after all fallbacks")
                    state.warm_master = WarmData(cand.basis, cand.d)
                    rho_candidate = merit.rho_new(state.rho, cand.z_hat, problem.cones, config.c_inc)
                    _check_model_decrease(problem, state.x, cand, rho_candidate, D, state, config)
                    if merit.accept_step(problem, state.x, cand.d, rho_candidate, config.c_dec):
                        accepted = cand
                        break
                    trial = state.x + cand.d
                    zcheck = _dual_estimate(problem, cand.lambda_hat, cand.bound_duals)
                    for j, c in enumerate(problem.cones):
                        idx = np.asarray(c.indices)
                        state.Y[j] = update_primal(state.Y[j], trial[idx])
                        state.Y[j] = update_dual(state.Y[j], trial[idx], zcheck[idx], config.active_tol)
                if accepted is None:
                    raise _Abort(SUBPROBLEM_FAILURE, "inner cutting loop exhausted its iteration cap")
                new_Y = [update_primal(state.Y[j], state.x[np.asarray(c.indices)])
                         for j, c in enumerate(problem.cones)]
                x_next = state.x + accepted.d
                _, D_next, _ = classify_cones(x_next, problem.cones, config.active_tol)
                state.mu = update_mu(accepted.mu_hat, accepted.nu_hat, x_next, state.x,
                                     D_next, D, problem.cones)

            # shared tail: dual-point cuts at the pre-step iterate, then move
            zcheck = _dual_estimate(problem, accepted.lambda_hat, accepted.bound_duals)
            for j, c in enumerate(problem.cones):
                idx = np.asarray(c.indices)
                new_Y[j] = update_dual(new_Y[j], state.x[idx], zcheck[idx], config.active_tol)
            state.Y = new_Y
            state.x = state.x + accepted.d
            state.lam = accepted.lambda_hat
            state.bound_duals = accepted.bound_duals
            state.rho = rho_candidate

            if config.paranoid:
                A, b, is_eq, _ = problem.extended_rows()
                resid = A @ state.x - b
                if resid.size:
                    assert np.all(np.where(is_eq, np.abs(resid), resid) <= 1e-9)
                assert all(state.x[c.head] >= -1e-9 for c in problem.cones)
                assert state.mu.min() >= 0.0 if state.mu.size else True

            err = kkt_error(problem, state.x, state.lam, state.bound_duals)
            emit({
                "iteration": it,
                "step": step_kind,
                "inner": inner_used,
                "rho": state.rho,
                "phi": merit.penalty_value(problem, state.x, state.rho),
                "kkt_error": err,
            })
            if err <= config.tol:
                return report(OPTIMAL, state, err)
        return report(ITERATION_LIMIT, state,
                      kkt_error(problem, state.x, state.lam, state.bound_duals))
    except _Abort as stop:
        return report(stop.status, state,
                      kkt_error(problem, state.x, state.lam, state.bound_duals),
                      stop.message)


def warm_start_from(report):
    """Package a previous solve's primal-dual answer for reuse.

    Only (x, lambda, bound duals) carry over; cone duals are re-derived on the
    new problem as c' + A''lambda.
    """
    t = report.triple
    return PrimalDualTriple(t.x.copy(), t.lam.copy(), np.zeros_like(t.x), t.bound_duals.copy())
