"""Second-order cone programming by SQP on refining polyhedral outer
approximations, with an active-set QP engine, a nondegenerate instance
generator, and a benchmark harness."""

from .cuts import HyperplaneSet, init_Y0, is_duplicate, update_dual, update_primal
from .driver import SolverConfig, fast_step_loop, solve, warm_start_from
from .model import (
    EQ,
    INFEASIBLE,
    ITERATION_LIMIT,
    LE,
    OPTIMAL,
    SUBPROBLEM_FAILURE,
    ConeProblem,
    ConeSpec,
    LinearRow,
    PrimalDualTriple,
    SolveReport,
    classify_cones,
    kkt_error,
)
from .qp import QpProblem, QpRow, QpSolution, WarmData, solve_qp, verify_farkas, verify_qp_kkt

__all__ = [
    "ConeProblem",
    "ConeSpec",
    "LinearRow",
    "PrimalDualTriple",
    "SolveReport",
    "SolverConfig",
    "HyperplaneSet",
    "QpProblem",
    "QpRow",
    "QpSolution",
    "WarmData",
    "LE",
    "EQ",
    "OPTIMAL",
    "INFEASIBLE",
    "ITERATION_LIMIT",
    "SUBPROBLEM_FAILURE",
    "classify_cones",
    "kkt_error",
    "solve",
    "warm_start_from",
    "fast_step_loop",
    "solve_qp",
    "verify_qp_kkt",
    "verify_farkas",
    "init_Y0",
    "update_primal",
    "update_dual",
    "is_duplicate",
]
