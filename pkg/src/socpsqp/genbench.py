"""Random nondegenerate instance generation with a planted primal-dual
solution, plus the cold-start / warm-start / refinement benchmark harness."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .driver import SolverConfig, project_start, solve, warm_start_from
from .model import (
    EQ,
    OPTIMAL,
    ConeProblem,
    ConeSpec,
    LinearRow,
    PrimalDualTriple,
    classify_cones,
    kkt_error,
)
from .soc import grad_residual, residual

EXTREMAL = "Extremal"
INTERIOR = "Interior"
BOUNDARY = "Boundary"

_MAX_ATTEMPTS = 20
_COMPL_MARGIN = -1e-3
_COND_FLOOR = 1e-5


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GenParams:
    n: int
    m: int
    k0: int
    ki: int
    kb: int
    density: float
    seed: int

    @property
    def p(self):
        return self.k0 + self.ki + self.kb

    def __post_init__(self):
        if min(self.n, self.m) <= 0 or min(self.k0, self.ki, self.kb) < 0 or self.p <= 0:
            raise ValueError("sizes must be positive and cone counts nonnegative")
        if not 0 < self.density <= 1:
            raise ValueError("density must lie in (0, 1]")
        if self.n <= 2 * self.p:
            raise ValueError("need n > 2p")
        s_ext = (self.m + self.kb) // 2 if self.k0 else 0
        if self.n <= self.m + self.kb + s_ext:
            raise ValueError("need n > m + kb + floor((m + kb)/2)")
        if self.k0 and s_ext < 2 * self.k0:
            raise ValueError("extremal cone dimensions cannot reach 2 each")
        if (self.ki + self.kb) and self.m + self.kb < 2 * (self.ki + self.kb):
            raise ValueError("non-extremal cone dimensions cannot reach 2 each")


@dataclass
class GeneratedInstance:
    problem: ConeProblem
    planted: PrimalDualTriple
    activity: list
    params: GenParams

    @property
    def extremal_set(self):
        return {j for j, a in enumerate(self.activity) if a == EXTREMAL}


def _composition(rng, total, parts):
    """Uniform composition of `total` into `parts` integers, each >= 2."""
    if parts == 0:
        if total != 0:
            raise GenerationError("cannot place cone dimensions")
        return []
    extra = total - 2 * parts
    if extra < 0:
        raise GenerationError("cannot place cone dimensions")
    if parts == 1:
        return [total]
    cuts = np.sort(rng.choice(extra + parts - 1, size=parts - 1, replace=False))
    bars = np.concatenate([[-1], cuts, [extra + parts - 1]])
    return [int(bars[i + 1] - bars[i] - 1 + 2) for i in range(parts)]


def _unit_direction(rng, k):
    while True:
        v = rng.uniform(-10.0, 10.0, size=k)
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            return v / nv


def _sample_rows(rng, m, n, density):
    """Rows with entries U(-5,5) at the given density, resampled until each new
    row keeps a residual of norm >= 1e-8 after projection onto the previous ones."""
    A = np.zeros((m, n))
    basis = np.zeros((m, n))
    filled = 0
    for i in range(m):
        for _ in range(200):
            mask = rng.random(n) < density
            if not mask.any():
                continue
            row = np.where(mask, rng.uniform(-5.0, 5.0, size=n), 0.0)
            r = row - basis[:filled].T @ (basis[:filled] @ row)
            r = r - basis[:filled].T @ (basis[:filled] @ r)
            nr = np.linalg.norm(r)
            if nr >= 1e-8:
                A[i] = row
                basis[filled] = r / nr
                filled += 1
                break
        else:
            raise GenerationError("could not sample independent rows")
    return A


def nondegeneracy_screen(instance):
    """Proxy for a primal/dual condition screen.

    Passes iff (a) x*_j + z*_j is interior with residual <= -1e-3 on every
    cone, and (b) the active-constraint Jacobian at x* has relative smallest
    singular value >= 1e-5.
    """
    prob = instance.problem
    x = instance.planted.x
    z = instance.planted.z
    for j, cone in enumerate(prob.cones):
        idx = np.asarray(cone.indices)
        if residual(x[idx] + z[idx]) > _COMPL_MARGIN:
            return False
    A, _, _ = prob.row_matrix()
    rows = [A]
    n = prob.num_vars
    for j, cone in enumerate(prob.cones):
        idx = np.asarray(cone.indices)
        if instance.activity[j] == BOUNDARY:
            g = np.zeros((1, n))
            g[0, idx] = grad_residual(x[idx])
            rows.append(g)
        elif instance.activity[j] == EXTREMAL:
            eye = np.zeros((cone.dim, n))
            eye[np.arange(cone.dim), idx] = 1.0
            rows.append(eye)
    fixed = [i for i in prob.off_cone_indices() if x[i] == 0.0 and prob.lower[i] == 0.0]
    if fixed:
        eye = np.zeros((len(fixed), n))
        eye[np.arange(len(fixed)), np.asarray(fixed)] = 1.0
        rows.append(eye)
    J = np.vstack(rows)
    sv = np.linalg.svd(J, compute_uv=False)
    return bool(sv[-1] >= _COND_FLOOR * sv[0])


def _attempt_generate(params, rng):
    n, m = params.n, params.m
    k0, ki, kb = params.k0, params.ki, params.kb
    s_ext = (m + kb) // 2 if k0 else 0
    dims = _composition(rng, s_ext, k0) + _composition(rng, m + kb, ki + kb)

    cones = []
    pos = 0
    for d in dims:
        cones.append(ConeSpec(tuple(range(pos, pos + d))))
        pos += d
    num_cone_vars = pos
    off = np.arange(num_cone_vars, n)

    x = np.zeros(n)
    z = np.zeros(n)
    activity = []
    for j, cone in enumerate(cones):
        idx = np.asarray(cone.indices)
        d = cone.dim
        if j < k0:
            activity.append(EXTREMAL)
            direction = _unit_direction(rng, d - 1)
            z0 = rng.uniform(1.0, 5.0)
            eps = rng.uniform(0.0, 1.0)
            z[idx[0]] = z0
            z[idx[1:]] = z0 / (2.0 + eps) * direction
        elif j < k0 + ki:
            activity.append(INTERIOR)
            direction = _unit_direction(rng, d - 1)
            x0 = rng.uniform(1.0, 5.0)
            eps = rng.uniform(0.0, 1.0)
            x[idx[0]] = x0
            x[idx[1:]] = x0 / (2.0 + eps) * direction
        else:
            activity.append(BOUNDARY)
            direction = _unit_direction(rng, d - 1)
            x0 = rng.uniform(1.0, 5.0)
            x[idx[0]] = x0
            x[idx[1:]] = x0 * direction
            beta = rng.uniform(1.0, 5.0)
            z[idx[0]] = beta * x0
            z[idx[1:]] = -beta * x[idx[1:]]

    n_fix = n - m - kb - s_ext
    n_free = n - n_fix - num_cone_vars
    if n_fix < 0 or n_fix > off.size:
        raise GenerationError("fixed-variable count out of range")
    z_off = np.zeros(n)
    for t in range(n_fix):
        z_off[off[t]] = rng.uniform(1.0, 5.0)
    for t in range(n_fix, n_fix + max(n_free, 0)):
        x[off[t]] = rng.uniform(1.0, 5.0)

    A = _sample_rows(rng, m, n, params.density)
    lam = rng.uniform(1.0, 10.0, size=m)
    b = A @ x
    c = -(A.T @ lam) + z + z_off

    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    for cone in cones:
        upper[cone.head] = 1000.0
    lower[off] = 0.0
    upper[off] = 1000.0

    rows = [
        LinearRow(np.flatnonzero(A[i]), A[i][np.flatnonzero(A[i])], b[i], EQ)
        for i in range(m)
    ]
    problem = ConeProblem(n, c, rows, lower, upper, cones)
    planted = PrimalDualTriple(x, lam, z, bound_duals=z_off)
    return GeneratedInstance(problem, planted, activity, params)


def generate(params):
    """Build one instance per the planted-solution recipe, rejecting draws that
    fail the nondegeneracy screen or the planted KKT check."""
    rng = np.random.default_rng(params.seed)
    for _ in range(_MAX_ATTEMPTS):
        inst = _attempt_generate(params, rng)
        if not nondegeneracy_screen(inst):
            continue
        err = kkt_error(inst.problem, inst.planted.x, inst.planted.lam,
                        inst.planted.bound_duals)
        if err <= 1e-8:
            return inst
    raise GenerationError(f"no acceptable instance within {_MAX_ATTEMPTS} attempts")


def _instance_seed(seed, size_index, rep):
    ss = np.random.SeedSequence([int(seed), int(size_index), int(rep)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _perturb_objective(problem, rng, level):
    c = problem.objective.copy()
    count = max(1, round(0.1 * problem.num_vars))
    idx = rng.choice(problem.num_vars, size=count, replace=False)
    c[idx] += rng.uniform(-level, level, size=count)
    return ConeProblem(problem.num_vars, c, problem.rows, problem.lower,
                       problem.upper, problem.cones)


def _pollute_to_target(instance, rng, lo, hi):
    """Scale a random primal-dual perturbation so the projected start's KKT
    error lands in [lo, hi]."""
    prob = instance.problem
    x, lam = instance.planted.x, instance.planted.lam
    bd = instance.planted.bound_duals
    u = rng.standard_normal(prob.num_vars)
    u /= np.linalg.norm(u)
    v = rng.standard_normal(lam.size)
    v /= np.linalg.norm(v)

    def start_error(a):
        xs = project_start(prob, x + a * u)
        return kkt_error(prob, xs, lam + a * v, bd)

    target = np.sqrt(lo * hi)
    a = 1e-6
    for _ in range(8):
        err = start_error(a)
        if lo <= err <= hi:
            return x + a * u, lam + a * v, err
        # the error is close to linear in the amplitude; jump proportionally
        a *= target / max(err, 1e-300)
    left, right = a / 16.0, a * 16.0
    for _ in range(80):
        mid = np.sqrt(left * right)
        err = start_error(mid)
        if err < lo:
            left = mid
        elif err > hi:
            right = mid
        else:
            return x + mid * u, lam + mid * v, err
    raise GenerationError("could not pollute the start into the target band")


@dataclass
class BenchmarkResult:
    suite: str
    columns: list
    rows: list
    per_instance: list = field(default_factory=list)

    def to_text(self):
        widths = [max(len(str(c)), max((len(_fmt(r[i])) for r in self.rows), default=0))
                  for i, c in enumerate(self.columns)]
        out = ["  ".join(str(c).rjust(w) for c, w in zip(self.columns, widths))]
        for r in self.rows:
            out.append("  ".join(_fmt(v).rjust(w) for v, w in zip(r, widths)))
        return "\n".join(out)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(self.columns)
        w.writerows([[_fmt(v) for v in r] for r in self.rows])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def run_benchmark(suite, sizes, repeats=30, seed=0, density=0.5, tol=1e-7,
                  level=1e-3, refine_band=(1e-6, 1e-5), refine_tol=1e-9,
                  max_iters=200):
    """Aggregate per-size solver statistics for one experiment protocol.

    suite: "cold" solves from scratch; "warm" re-solves after perturbing 10%
    of the objective entries by +-level, started from the unperturbed
    solution; "refine" starts from a planted optimum polluted into
    refine_band and solves to refine_tol.
    """
    if suite not in ("cold", "warm", "refine"):
        raise ValueError(f"unknown suite {suite!r}")
    columns = ["n", "m", "K", "solved", "total_iter", "sqp_iter",
               "qp_newton", "qp_master"]
    if suite == "refine":
        columns += ["start_error", "final_error"]
    rows = []
    per_instance = []
    for si, (n, m, K) in enumerate(sizes):
        recs = []
        for rep in range(repeats):
            iseed = _instance_seed(seed, si, rep)
            params = GenParams(n=n, m=m, k0=K, ki=K, kb=K, density=density, seed=iseed)
            inst = generate(params)
            rng = np.random.default_rng(iseed ^ 0x9E3779B97F4A7C15)
            if suite == "cold":
                rep_out = solve(inst.problem, config=SolverConfig(tol=tol, max_iters=max_iters))
                rec = _record(inst, rep_out)
            elif suite == "warm":
                base = solve(inst.problem, config=SolverConfig(tol=tol, max_iters=max_iters))
                perturbed = _perturb_objective(inst.problem, rng, level)
                rep_out = solve(perturbed, start=warm_start_from(base),
                                config=SolverConfig(tol=tol, max_iters=max_iters))
                rec = _record(inst, rep_out)
                rec["base_status"] = base.status
            else:
                xs, lams, err0 = _pollute_to_target(inst, rng, *refine_band)
                start = PrimalDualTriple(xs, lams, np.zeros(n), instance_bound_duals(inst))
                rep_out = solve(inst.problem, start=start,
                                config=SolverConfig(tol=refine_tol, max_iters=max_iters))
                rec = _record(inst, rep_out)
                rec["start_error"] = err0
            recs.append(rec)
            per_instance.append(rec)
        solved = [r for r in recs if r["status"] == OPTIMAL]
        row = [n, m, K, f"{len(solved)}/{len(recs)}",
               _mean(solved, "total_iters"), _mean(solved, "sqp_step_iters"),
               _mean(solved, "qp_newton_solves"), _mean(solved, "qp_master_solves")]
        if suite == "refine":
            row += [_mean(recs, "start_error"), _mean(solved, "kkt_error")]
        rows.append(row)
    return BenchmarkResult(suite=suite, columns=columns, rows=rows,
                           per_instance=per_instance)


def instance_bound_duals(inst):
    return inst.planted.bound_duals.copy()


def _mean(recs, key):
    vals = [r[key] for r in recs if key in r]
    return float(np.mean(vals)) if vals else float("nan")


def _record(inst, rep):
    E_final, _, _ = classify_cones(rep.triple.x, inst.problem.cones)
    return {
        "status": rep.status,
        "total_iters": rep.total_iters,
        "sqp_step_iters": rep.sqp_step_iters,
        "qp_newton_solves": rep.qp_newton_solves,
        "qp_master_solves": rep.qp_master_solves,
        "kkt_error": rep.kkt_error,
        "final_rho": rep.final_rho,
        "identified": E_final == inst.extremal_set,
        "kkt_history": [t["kkt_error"] for t in rep.trace],
        "model_decrease_violations": rep.model_decrease_violations,
    }
