"""Problem and solution data types, cone bookkeeping, and the KKT-error metric."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LE = "LE"
EQ = "EQ"

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
ITERATION_LIMIT = "IterationLimit"
SUBPROBLEM_FAILURE = "SubproblemFailure"

# Numeric "is this exactly zero" tests on iterates share the extremal-active
# identification scale.
ACTIVE_TOL = 1e-6
DIFF_TOL = 1e-8


@dataclass(frozen=True)
class ConeSpec:
    """Index set of one second-order cone; the first index is the head variable."""

    indices: tuple

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if len(self.indices) < 2:
            raise ValueError("cone dimension must be at least 2")
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("cone indices must be distinct")

    @property
    def dim(self):
        return len(self.indices)

    @property
    def head(self):
        return self.indices[0]


@dataclass(frozen=True)
class LinearRow:
    """One linear constraint a'x <= rhs or a'x == rhs, stored sparsely."""

    indices: np.ndarray
    values: np.ndarray
    rhs: float
    sense: str

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.intp))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "rhs", float(self.rhs))
        if self.sense not in (LE, EQ):
            raise ValueError(f"unknown row sense {self.sense!r}")
        if self.indices.shape != self.values.shape:
            raise ValueError("row indices and values must have equal length")

    def dense(self, n):
        a = np.zeros(n)
        a[self.indices] = self.values
        return a


class ConeProblem:
    """A second-order cone program

        min c'x  s.t.  linear rows (LE/EQ), variable bounds, x_j in each cone.

    Bounds and equality rows are first class; internally they are folded into
    one extended row system when the polyhedral part is needed as a whole.
    """

    def __init__(self, num_vars, objective, rows, lower=None, upper=None, cones=()):
        self.num_vars = int(num_vars)
        self.objective = np.asarray(objective, dtype=float)
        self.rows = list(rows)
        self.lower = (
            np.full(self.num_vars, -np.inf)
            if lower is None
            else np.asarray(lower, dtype=float)
        )
        self.upper = (
            np.full(self.num_vars, np.inf)
            if upper is None
            else np.asarray(upper, dtype=float)
        )
        self.cones = [c if isinstance(c, ConeSpec) else ConeSpec(tuple(c)) for c in cones]
        self._ext_cache = None
        self.validate()

    def validate(self):
        n = self.num_vars
        if self.objective.shape != (n,):
            raise ValueError("objective length does not match num_vars")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bound vectors must have length num_vars")
        if np.any(self.lower > self.upper):
            raise ValueError("some lower bound exceeds its upper bound")
        seen = set()
        for cone in self.cones:
            for i in cone.indices:
                if not 0 <= i < n:
                    raise ValueError("cone index out of range")
                if i in seen:
                    raise ValueError("cone index sets must be disjoint")
                seen.add(i)
        for row in self.rows:
            if row.indices.size and (row.indices.min() < 0 or row.indices.max() >= n):
                raise ValueError("row coefficient index out of range")

    @property
    def num_rows(self):
        return len(self.rows)

    def cone_block(self, x, j):
        return x[np.asarray(self.cones[j].indices)]

    def off_cone_indices(self):
        in_cone = set()
        for c in self.cones:
            in_cone.update(c.indices)
        return np.array([i for i in range(self.num_vars) if i not in in_cone], dtype=np.intp)

    def row_matrix(self):
        """Dense (A, b, is_eq) for the declared rows only."""
        A = np.zeros((len(self.rows), self.num_vars))
        b = np.zeros(len(self.rows))
        is_eq = np.zeros(len(self.rows), dtype=bool)
        for i, row in enumerate(self.rows):
            A[i, row.indices] = row.values
            b[i] = row.rhs
            is_eq[i] = row.sense == EQ
        return A, b, is_eq

    def extended_rows(self):
        """Rows plus finite bounds folded in as rows.

        Returns (A, b, is_eq, bound_map) where bound_map[k] = (var, +1|-1) for
        appended bound rows (upper: +x_i <= up, lower: -x_i <= -lo) and the
        first len(self.rows) entries of A are the declared rows.
        """
        if self._ext_cache is not None:
            return self._ext_cache
        A, b, is_eq = self.row_matrix()
        extra_rows = []
        extra_rhs = []
        bound_map = []
        for i in range(self.num_vars):
            if np.isfinite(self.lower[i]):
                e = np.zeros(self.num_vars)
                e[i] = -1.0
                extra_rows.append(e)
                extra_rhs.append(-self.lower[i])
                bound_map.append((i, -1))
            if np.isfinite(self.upper[i]):
                e = np.zeros(self.num_vars)
                e[i] = 1.0
                extra_rows.append(e)
                extra_rhs.append(self.upper[i])
                bound_map.append((i, +1))
        if extra_rows:
            A = np.vstack([A, np.array(extra_rows)])
            b = np.concatenate([b, np.array(extra_rhs)])
            is_eq = np.concatenate([is_eq, np.zeros(len(extra_rows), dtype=bool)])
        self._ext_cache = (A, b, is_eq, bound_map)
        return self._ext_cache


@dataclass
class PrimalDualTriple:
    """Primal point with row multipliers, cone-block duals, and bound duals.

    ``bound_duals`` is signed per variable like a reduced cost: positive at an
    active lower bound, negative at an active upper bound, so stationarity
    reads c + A'lam - z - bound_duals = 0.
    """

    x: np.ndarray
    lam: np.ndarray
    z: np.ndarray
    bound_duals: np.ndarray = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.lam = np.asarray(self.lam, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.bound_duals is None:
            self.bound_duals = np.zeros_like(self.x)
        else:
            self.bound_duals = np.asarray(self.bound_duals, dtype=float)


@dataclass
class SolveReport:
    status: str
    triple: PrimalDualTriple
    kkt_error: float
    total_iters: int = 0
    sqp_step_iters: int = 0
    qp_newton_solves: int = 0
    qp_master_solves: int = 0
    final_rho: float = 0.0
    objective: float = np.nan
    trace: list = field(default_factory=list)
    model_decrease_violations: int = 0
    message: str = ""


def _fold_bound_duals(bound_map, bound_duals):
    """Map signed per-variable bound duals onto the appended bound rows."""
    out = np.zeros(len(bound_map))
    for k, (i, side) in enumerate(bound_map):
        v = bound_duals[i]
        if side < 0:  # lower-bound row -x <= -lo carries the positive part
            out[k] = max(v, 0.0)
        else:
            out[k] = max(-v, 0.0)
    return out


def kkt_error(problem, x, lam, bound_duals=None):
    """Violation of the SOCP optimality conditions at (x, lam).

    The dual estimate is formed internally as zcheck = c + A'lam with bounds
    folded in as rows; the result is the max over primal violation,
    complementarity, multiplier sign violation, and the per-cone residuals
    of x, zcheck, and their inner product.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if x.shape != (problem.num_vars,):
        raise ValueError("x has wrong dimension")
    if lam.shape != (problem.num_rows,):
        raise ValueError("lambda has wrong dimension")
    A, b, is_eq, bound_map = problem.extended_rows()
    if bound_duals is None:
        lam_ext = np.concatenate([lam, np.zeros(len(bound_map))])
    else:
        lam_ext = np.concatenate([lam, _fold_bound_duals(bound_map, np.asarray(bound_duals))])

    resid = A @ x - b
    primal = 0.0
    if resid.size:
        primal = float(np.max(np.where(is_eq, np.abs(resid), np.maximum(resid, 0.0))))
    compl = float(np.max(np.abs(resid * lam_ext))) if resid.size else 0.0
    sign = 0.0
    if resid.size:
        sign = float(np.max(np.where(is_eq, 0.0, np.maximum(-lam_ext, 0.0))))

    zcheck = problem.objective + A.T @ lam_ext
    cone_err = 0.0
    for j in range(len(problem.cones)):
        xj = problem.cone_block(x, j)
        zj = problem.cone_block(zcheck, j)
        rx = np.linalg.norm(xj[1:]) - xj[0]
        rz = np.linalg.norm(zj[1:]) - zj[0]
        cone_err = max(cone_err, max(rx, 0.0), max(rz, 0.0), abs(float(xj @ zj)))
    return max(primal, compl, sign, cone_err)


def classify_cones(x, cones, eps_extremal=ACTIVE_TOL, eps_diff=DIFF_TOL):
    """Partition cone indices into (extremal E, differentiable D, neither N)."""
    E, D, N = set(), set(), set()
    for j, cone in enumerate(cones):
        xj = x[np.asarray(cone.indices)]
        if np.max(np.abs(xj)) < eps_extremal:
            E.add(j)
        elif np.linalg.norm(xj[1:]) > eps_diff:
            D.add(j)
        else:
            N.add(j)
    return E, D, N
