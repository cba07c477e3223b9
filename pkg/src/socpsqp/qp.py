"""Dense convex QP engine.

Primal active-set method on a null-space QR factorization of the working-set
matrix, with incremental row addition/removal, warm starts, verified Farkas
infeasibility certificates, and a perturbation/reorder fallback chain.

Solves  min 1/2 d'Hd + g'd  over linear rows (LE/EQ) and variable bounds.
Bounds are folded into an extended row system internally; multipliers follow
the convention  Hd + g + A'lam - bound_duals = 0  with lam >= 0 on LE rows and
bound_duals nonnegative at active lower bounds, nonpositive at active uppers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr_delete, qr_insert, solve_triangular

OPTIMAL_QP = "Optimal"
INFEASIBLE_QP = "Infeasible"
FAILED_QP = "Failed"

KKT_TOL = 1e-9
_RANK_TOL = 1e-11
_FEAS_TOL = 1e-9
_EXPAND_TOL = 1e-12
_REFRESH_EVERY = 200


@dataclass(frozen=True)
class QpRow:
    coeffs: np.ndarray
    rhs: float
    sense: str
    key: object = None

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))
        object.__setattr__(self, "rhs", float(self.rhs))
        if self.sense not in ("LE", "EQ"):
            raise ValueError(f"unknown sense {self.sense!r}")


class QpProblem:
    def __init__(self, H, g, rows=(), lower=None, upper=None):
        self.g = np.asarray(g, dtype=float)
        n = self.g.size
        self.H = np.asarray(H, dtype=float)
        if self.H.shape != (n, n):
            raise ValueError("H must be n-by-n")
        scale = max(1.0, float(np.max(np.abs(self.H))) if self.H.size else 0.0)
        if self.H.size and float(np.max(np.abs(self.H - self.H.T))) > 1e-12 * scale:
            raise ValueError("H must be symmetric")
        self.rows = list(rows)
        self.lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
        self.upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bounds must have length n")
        if np.any(self.lower > self.upper):
            raise ValueError("inconsistent bounds")
        for r in self.rows:
            if r.coeffs.shape != (n,):
                raise ValueError("row coefficient length mismatch")

    @property
    def n(self):
        return self.g.size


@dataclass
class WarmData:
    """Previous solve's active keys and point, reused to hot-start."""

    active_keys: tuple = ()
    point: np.ndarray = None


@dataclass
class QpSolution:
    status: str
    d: np.ndarray = None
    row_duals: np.ndarray = None
    bound_duals: np.ndarray = None
    kkt_residual: float = np.inf
    farkas: np.ndarray = None
    basis: tuple = ()
    hessian_shift: float = 0.0
    iterations: int = 0
    objective: float = np.nan


class _Unbounded(Exception):
    pass


class _Stalled(Exception):
    pass


def extended_rows(qp):
    """Rows plus finite bounds as rows; returns (A, b, is_eq, keys).

    Bound rows are keyed ("__lb", i) / ("__ub", i) and appended after the
    declared rows, lower bounds as -x_i <= -lo.
    """
    n = qp.n
    mats = [r.coeffs for r in qp.rows]
    rhs = [r.rhs for r in qp.rows]
    is_eq = [r.sense == "EQ" for r in qp.rows]
    keys = [r.key if r.key is not None else ("__row", i) for i, r in enumerate(qp.rows)]
    for i in range(n):
        if np.isfinite(qp.lower[i]):
            e = np.zeros(n)
            e[i] = -1.0
            mats.append(e)
            rhs.append(-qp.lower[i])
            is_eq.append(False)
            keys.append(("__lb", i))
        if np.isfinite(qp.upper[i]):
            e = np.zeros(n)
            e[i] = 1.0
            mats.append(e)
            rhs.append(qp.upper[i])
            is_eq.append(False)
            keys.append(("__ub", i))
    A = np.array(mats) if mats else np.zeros((0, n))
    return A, np.array(rhs, dtype=float), np.array(is_eq, dtype=bool), keys


class _WorkingSet:
    """Ordered working set with a maintained QR factorization of A_W'."""

    def __init__(self, A):
        self.A = A
        self.n = A.shape[1]
        self.W = []
        self.in_W = np.zeros(A.shape[0], dtype=bool)
        self.Q = np.eye(self.n)
        self.R = np.zeros((self.n, 0))
        self._updates = 0

    def bulk_append(self, indices):
        """Append an independent subset of `indices` in one pivoted
        factorization instead of row-by-row insertions."""
        from scipy.linalg import qr as _qr

        cand = [i for i in dict.fromkeys(indices) if not self.in_W[i]]
        if not cand:
            return
        t = self.t
        if t >= self.n:
            return
        cols = self.A[cand].T
        C = self.Q.T @ cols
        Q2, R2, piv = _qr(C[t:, :], mode="full", pivoting=True)
        norms = np.linalg.norm(cols, axis=0)
        tol = _RANK_TOL * max(float(norms.max()), 1e-30)
        rank = 0
        for k in range(min(len(cand), self.n - t)):
            if abs(R2[k, k]) <= tol:
                break
            rank += 1
        if rank == 0:
            return
        self.Q = np.concatenate([self.Q[:, :t], self.Q[:, t:] @ Q2], axis=1)
        newR = np.zeros((self.n, t + rank))
        newR[:, :t] = self.R
        newR[:t, t:] = C[:t, piv[:rank]]
        newR[t:, t:] = R2[:, :rank]
        self.R = newR
        added = [cand[piv[k]] for k in range(rank)]
        self.W.extend(added)
        self.in_W[np.asarray(added, dtype=np.intp)] = True
        self._updates = 0

    @property
    def t(self):
        return len(self.W)

    def _refresh(self):
        if self.W:
            self.Q, self.R = np.linalg.qr(self.A[self.W].T, mode="complete")
        else:
            self.Q, self.R = np.eye(self.n), np.zeros((self.n, 0))
        self._updates = 0

    def try_add(self, i):
        t = self.t
        if t >= self.n:
            return False
        a = self.A[i]
        Q2, R2 = qr_insert(self.Q, self.R, a, t, which="col")
        if abs(R2[t, t]) <= _RANK_TOL * max(np.linalg.norm(a), 1e-30):
            return False
        self.Q, self.R = Q2, R2
        self.W.append(i)
        self.in_W[i] = True
        self._updates += 1
        if self._updates > _REFRESH_EVERY:
            self._refresh()
        return True

    def remove(self, pos):
        i = self.W.pop(pos)
        self.in_W[i] = False
        self.Q, self.R = qr_delete(self.Q, self.R, pos, 1, which="col")
        self._updates += 1
        if self._updates > _REFRESH_EVERY:
            self._refresh()

    def try_swap(self, i, is_eq):
        """Admit a blocking row that is nearly dependent on the working set by
        exchanging it against the working row it most depends on."""
        t = self.t
        if t == 0:
            return self.try_add(i)
        c = solve_triangular(self.R[:t, :t], self.Q[:, :t].T @ self.A[i], lower=False)
        best = None
        for k in range(t):
            if is_eq[self.W[k]]:
                continue
            if best is None or abs(c[k]) > abs(c[best]):
                best = k
        if best is None or abs(c[best]) < 1e-8:
            return False
        row = self.W[best]
        self.remove(best)
        if self.try_add(i):
            return True
        self.try_add(row)
        return False

    def null_basis(self):
        return self.Q[:, self.t:]

    def multipliers(self, grad):
        """lam_W solving A_W' lam = -grad (exact when grad is in range)."""
        t = self.t
        if t == 0:
            return np.zeros(0)
        return solve_triangular(self.R[:t, :t], -(self.Q[:, :t].T @ grad), lower=False)

    def project_onto_active(self, d, b):
        """Minimal-norm correction making the working rows exactly tight."""
        t = self.t
        if t == 0:
            return d
        res = b[self.W] - self.A[self.W] @ d
        if np.max(np.abs(res)) == 0.0:
            return d
        return d + self.Q[:, :t] @ solve_triangular(self.R[:t, :t].T, res, lower=True)


def _exit_kkt(H, g, A, b, is_eq, d, lam):
    """Quick full KKT residual of an exit candidate over the extended rows."""
    stat = float(np.max(np.abs(H @ d + g + A.T @ lam))) if lam.size else float(np.max(np.abs(H @ d + g)))
    if not lam.size:
        return stat
    resid = A @ d - b
    prim = float(np.max(np.where(is_eq, np.abs(resid), np.maximum(resid, 0.0))))
    sign = float(np.max(np.where(is_eq, 0.0, np.maximum(-lam, 0.0))))
    compl = float(np.max(np.abs(lam * resid)))
    return max(stat, prim, sign, compl)


def _factor_hessian(H):
    """Low-rank factor Hs with H = Hs Hs' (H is PSD); None when H = 0,
    the scalar alpha when H = alpha I."""
    if not np.any(H):
        return None
    n = H.shape[0]
    diag = H[0, 0]
    if diag > 0.0 and not np.any(H != diag * np.eye(n)):
        return float(diag)
    w, U = np.linalg.eigh(H)
    keep = w > max(float(w[-1]), 0.0) * 1e-13
    if not keep.any():
        return None
    return U[:, keep] * np.sqrt(w[keep])


def _active_set_min(H, g, A, b, is_eq, d0, W0, pivot="first", max_iter=None):
    """Minimize from a feasible d0; returns (d, lam_ext, working-set indices, iters).

    Raises _Unbounded when an infinite-descent direction meets no blocking
    row, _Stalled when the iteration cap trips.
    """
    n = g.size
    m = A.shape[0]
    if max_iter is None:
        max_iter = 20 * (m + n) + 2000
    ws = _WorkingSet(A)
    d = d0.copy()
    eq_first = [i for i in W0 if is_eq[i]]
    ws.bulk_append(eq_first)
    ws.bulk_append([i for i in W0 if not is_eq[i]])
    Hs = _factor_hessian(H)

    last = pivot == "last"
    bland = False
    degen = 0
    it = 0
    best_obj = np.inf
    last_progress = 0
    while it < max_iter:
        it += 1
        obj = float(0.5 * (d @ (H @ d)) + g @ d)
        if obj < best_obj - 1e-13 * max(1.0, abs(best_obj)):
            best_obj = obj
            last_progress = it
        elif it - last_progress > 600:
            raise _Stalled
        grad = H @ d + g
        gscale = max(1.0, float(np.max(np.abs(grad))))
        t = ws.t
        p = None
        inf_dir = False
        if t < n:
            Z = ws.null_basis()
            rhs = -(Z.T @ grad)
            if float(np.max(np.abs(rhs))) > 1e-13 * gscale:
                if Hs is None:
                    # pure LP direction: projected steepest descent
                    p = Z @ (rhs / np.linalg.norm(rhs))
                    inf_dir = True
                elif isinstance(Hs, float):
                    p = Z @ (rhs / Hs)
                    if float(np.max(np.abs(p))) <= 1e-15 * max(1.0, float(np.max(np.abs(d)))):
                        p = None
                else:
                    # reduced Hessian Z'HZ = (Z'Hs)(Z'Hs)'; split rhs into its
                    # range and null components through a thin SVD
                    Wm = Z.T @ Hs
                    Uu, sv, _ = np.linalg.svd(Wm, full_matrices=False)
                    pos = sv > (sv[0] if sv.size else 0.0) * 3e-6
                    Ur = Uu[:, pos]
                    proj = Ur.T @ rhs
                    null_part = rhs - Ur @ proj
                    if float(np.max(np.abs(null_part))) > 1e-11 * gscale:
                        p = Z @ (null_part / np.linalg.norm(null_part))
                        inf_dir = True
                    else:
                        p = Z @ (Ur @ (proj / sv[pos] ** 2))
                        if float(np.max(np.abs(p))) <= 1e-15 * max(1.0, float(np.max(np.abs(d)))):
                            p = None

        if p is None:
            lam_W = ws.multipliers(grad)
            cand = [
                k for k, i in enumerate(ws.W)
                if not is_eq[i] and lam_W[k] < -1e-10
            ]
            if not cand:
                # with near-parallel active rows the drift projection can hurt
                # more than it helps; keep whichever exit verifies better
                def _filled(lv):
                    lam = np.zeros(m)
                    if ws.W:
                        lam[np.asarray(ws.W)] = lv
                    return lam

                lam_raw = _filled(lam_W)
                err_raw = _exit_kkt(H, g, A, b, is_eq, d, lam_raw)
                d_proj = ws.project_onto_active(d, b)
                lam_proj = _filled(ws.multipliers(H @ d_proj + g))
                err_proj = _exit_kkt(H, g, A, b, is_eq, d_proj, lam_proj)
                if err_proj < err_raw:
                    return d_proj, lam_proj, list(ws.W), it
                return d, lam_raw, list(ws.W), it
            if bland:
                k = min(cand, key=lambda k: ws.W[k])
            elif last:
                k = min(cand, key=lambda k: (lam_W[k], -ws.W[k]))
            else:
                k = min(cand, key=lambda k: (lam_W[k], ws.W[k]))
            ws.remove(k)
            continue

        # two-pass expanded ratio test: every ascending row bounds the step
        # within the expansion delta, then the largest pivot among blockers is
        # taken, which keeps near-parallel cut pairs from degrading the basis
        s = A @ p
        slack = b - A @ d
        mask = (~ws.in_W) & (~is_eq) & (s > 0.0)
        cap = np.inf if inf_dir else 1.0
        blocked = False
        alpha = cap
        if mask.any():
            idxs = np.flatnonzero(mask)
            si = s[idxs]
            expanded = (slack[idxs] + _EXPAND_TOL) / si
            amax = min(float(expanded.min()), cap)
            ratios = slack[idxs] / si
            cand = ratios <= amax
            if cand.any() and amax < cap:
                ci = idxs[cand]
                if bland:
                    j = int(ci.min())
                else:
                    sc = s[ci]
                    best = sc >= 0.9 * float(sc.max())
                    j = int(ci[best].max() if last else ci[best].min())
                alpha = min(max(float(slack[j] / s[j]), 0.0), cap)
                blocked = True
            else:
                alpha = cap
        if not blocked and inf_dir:
            raise _Unbounded
        if alpha > 0.0:
            d = d + alpha * p
        if alpha > 1e-11:
            degen = 0
            bland = False
        else:
            degen += 1
            if degen > 40:
                bland = True
        if blocked and not ws.try_add(j):
            # blocker numerically dependent on the working set: exchange it
            # against its dominant contributor, else give up on this attempt
            if not ws.try_swap(j, is_eq) and alpha <= 1e-11:
                raise _Stalled
    raise _Stalled


def _initial_working_set(A, b, is_eq, d, warm_rows):
    tight = np.abs(A @ d - b) <= _FEAS_TOL * np.maximum(1.0, np.abs(b))
    order = [i for i in range(A.shape[0]) if is_eq[i]]
    order += [i for i in warm_rows if not is_eq[i] and tight[i]]
    return order


def _phase1(A, b, is_eq, keys, lower, upper, warm=None):
    """Find a feasible point, or return a Farkas certificate.

    Returns (d, warm_rows, None) on success and (None, None, y) when the
    residual LP proves the row system empty; y is a certificate over the
    extended rows.
    """
    n = A.shape[1]
    m = A.shape[0]
    d0 = np.zeros(n) if warm is None or warm.point is None else np.array(warm.point, dtype=float)
    d0 = np.minimum(np.maximum(d0, lower), upper)
    warm_rows = []
    if warm is not None and warm.active_keys:
        key_pos = {k: i for i, k in enumerate(keys)}
        warm_rows = [key_pos[k] for k in warm.active_keys if k in key_pos]

    resid = A @ d0 - b
    tol = _FEAS_TOL * np.maximum(1.0, np.abs(b))
    viol = np.where(is_eq, np.abs(resid) > tol, resid > tol)
    if not viol.any():
        return d0, warm_rows, None

    vi = np.flatnonzero(viol)
    V = vi.size
    sign = np.where(resid[vi] >= 0, 1.0, -1.0)
    A2 = np.zeros((m + V, n + V))
    A2[:m, :n] = A
    A2[vi, n + np.arange(V)] = -sign
    A2[m + np.arange(V), n + np.arange(V)] = -1.0  # -t_k <= 0
    b2 = np.concatenate([b, np.zeros(V)])
    is_eq2 = np.concatenate([is_eq, np.zeros(V, dtype=bool)])
    g2 = np.concatenate([np.zeros(n), np.ones(V)])
    d20 = np.concatenate([d0, np.abs(resid[vi])])
    W0 = [i for i in range(m) if is_eq2[i]]
    tight = np.abs(resid) <= _FEAS_TOL * np.maximum(1.0, np.abs(b))
    W0 += [i for i in warm_rows if not is_eq[i] and not viol[i] and tight[i]]
    H2 = np.zeros((n + V, n + V))
    d2, lam2, W2, _ = _active_set_min(H2, g2, A2, b2, is_eq2, d20, W0)
    infeas = float(d2[n:].sum())
    if infeas > _FEAS_TOL:
        return None, None, lam2[:m]
    d = d2[:n]
    warm_rows = [i for i in W2 if i < m] + warm_rows
    return d, warm_rows, None


def _split_duals(qp, keys, lam_ext):
    m = len(qp.rows)
    row_duals = lam_ext[:m].copy()
    bound_duals = np.zeros(qp.n)
    for k, key in enumerate(keys[m:], start=m):
        tag, i = key
        if tag == "__lb":
            bound_duals[i] += lam_ext[k]
        else:
            bound_duals[i] -= lam_ext[k]
    return row_duals, bound_duals


def verify_qp_kkt(qp, sol):
    """Recompute the infinity-norm KKT residual independently of the solver.

    Uses the Hessian the solution was produced for (including any
    regularization shift recorded on it).
    """
    d = sol.d
    H = qp.H if sol.hessian_shift == 0.0 else qp.H + sol.hessian_shift * np.eye(qp.n)
    stat = H @ d + qp.g - sol.bound_duals
    err = 0.0
    for r, lam in zip(qp.rows, sol.row_duals):
        stat += lam * r.coeffs
        resid = float(r.coeffs @ d - r.rhs)
        if r.sense == "LE":
            err = max(err, resid, -min(lam, 0.0))
        else:
            err = max(err, abs(resid))
        err = max(err, abs(lam * resid))
    err = max(err, float(np.max(np.abs(stat))) if stat.size else 0.0)
    lo_res = qp.lower - d
    up_res = d - qp.upper
    for i in range(qp.n):
        lo_dual = max(sol.bound_duals[i], 0.0)
        up_dual = max(-sol.bound_duals[i], 0.0)
        if np.isfinite(qp.lower[i]):
            err = max(err, lo_res[i], abs(lo_dual * lo_res[i]))
        elif lo_dual > 0.0:
            err = max(err, lo_dual)
        if np.isfinite(qp.upper[i]):
            err = max(err, up_res[i], abs(up_dual * up_res[i]))
        elif up_dual > 0.0:
            err = max(err, up_dual)
    return float(err)


def verify_farkas(qp, y):
    """Check a certificate of row-system infeasibility.

    y lives on the extended rows (rows then finite-bound rows); it must be
    nonnegative on LE rows, combine the rows to zero, and give y'b < 0.
    """
    A, b, is_eq, _ = extended_rows(qp)
    y = np.asarray(y, dtype=float)
    if y.shape != (A.shape[0],):
        return False
    scale = float(np.max(np.abs(y))) if y.size else 0.0
    if scale == 0.0:
        return False
    y = y / scale
    if np.any(y[~is_eq] < -1e-9):
        return False
    if float(np.max(np.abs(A.T @ y))) > 1e-9 * max(1.0, float(np.max(np.abs(A)))):
        return False
    return float(y @ b) < -1e-10


def _attempt(qp, shift, pivot, warm):
    A, b, is_eq, keys = extended_rows(qp)
    try:
        d0, warm_rows, farkas = _phase1(A, b, is_eq, keys, qp.lower, qp.upper, warm)
        if farkas is not None:
            sol = QpSolution(status=INFEASIBLE_QP, farkas=farkas)
            if not verify_farkas(qp, farkas):
                return QpSolution(status=FAILED_QP)
            return sol
        H = qp.H if shift == 0.0 else qp.H + shift * np.eye(qp.n)
        W0 = _initial_working_set(A, b, is_eq, d0, warm_rows)
        d, lam_ext, W, iters = _active_set_min(H, qp.g, A, b, is_eq, d0, W0, pivot=pivot)
    except (_Unbounded, _Stalled, np.linalg.LinAlgError):
        return QpSolution(status=FAILED_QP)
    row_duals, bound_duals = _split_duals(qp, keys, lam_ext)
    sol = QpSolution(
        status=OPTIMAL_QP,
        d=d,
        row_duals=row_duals,
        bound_duals=bound_duals,
        basis=tuple(keys[i] for i in W),
        hessian_shift=shift,
        iterations=iters,
        objective=float(0.5 * d @ (qp.H @ d) + qp.g @ d),
    )
    sol.kkt_residual = verify_qp_kkt(qp, sol)
    return sol


def solve_qp(qp, warm=None):
    """Solve the QP with the fallback chain.

    (1) active-set solve (warm if given); (2) retry with H + 1e-7 I;
    (3) cold retry with the opposite pivoting order.  Optimal solutions are
    returned only with an independently verified KKT residual <= 1e-9 (of the
    system actually solved); Infeasible only with a verified Farkas vector.
    """
    for shift, pivot, wm in ((0.0, "first", warm), (1e-7, "first", warm), (0.0, "last", None)):
        sol = _attempt(qp, shift, pivot, wm)
        if sol.status == INFEASIBLE_QP:
            return sol
        if sol.status == OPTIMAL_QP and sol.kkt_residual <= KKT_TOL:
            return sol
    return QpSolution(status=FAILED_QP)
