"""Per-cone hyperplane-generating sets: initialization, primal and dual
update rules, and near-duplicate filtering."""

from __future__ import annotations

import numpy as np

from .soc import residual

DEDUP_TOL = 1e-10


class HyperplaneSet:
    """Generating points y (stored, not their normals) for one cone's cuts.

    Points added by the primal rule have a nonzero barred part and a
    nonnegative head; dual-rule points may carry a negative head, which is
    harmless because cuts depend on the barred direction only.
    """

    def __init__(self, generators=()):
        self.generators = [np.asarray(g, dtype=float) for g in generators]
        self._directions = [g[1:] / np.linalg.norm(g[1:]) for g in self.generators]

    def __len__(self):
        return len(self.generators)

    def __iter__(self):
        return iter(self.generators)

    def copy(self):
        new = HyperplaneSet.__new__(HyperplaneSet)
        new.generators = list(self.generators)
        new._directions = list(self._directions)
        return new

    def is_duplicate(self, v):
        """True when v's normalized barred direction matches a stored one."""
        v = np.asarray(v, dtype=float)
        nb = np.linalg.norm(v[1:])
        if nb == 0.0:
            raise ValueError("duplicate test needs a nonzero barred part")
        d = v[1:] / nb
        return any(np.max(np.abs(d - e)) <= DEDUP_TOL for e in self._directions)

    def _append(self, v):
        v = np.asarray(v, dtype=float)
        self.generators.append(v)
        self._directions.append(v[1:] / np.linalg.norm(v[1:]))


def init_Y0(n_j):
    """The initial axis generators +-e_i, i = 1..n_j-1.

    Their cuts read x_i - x0 <= 0 and -x_i - x0 <= 0, so the origin is an
    extreme point of the induced outer cone.
    """
    if n_j < 2:
        raise ValueError("cone dimension must be at least 2")
    gens = []
    for i in range(1, n_j):
        e = np.zeros(n_j)
        e[i] = 1.0
        gens.append(e.copy())
        e2 = np.zeros(n_j)
        e2[i] = -1.0
        gens.append(e2)
    return HyperplaneSet(gens)


def update_primal(Y, x):
    """Add x as a generator iff xbar != 0 and r(x) > 0 (and not a duplicate).

    The new cut excludes x from all future outer approximations.
    """
    x = np.asarray(x, dtype=float)
    if np.linalg.norm(x[1:]) == 0.0 or residual(x) <= 0.0:
        return Y
    if Y.is_duplicate(x):
        return Y
    out = Y.copy()
    out._append(x)
    return out


def update_dual(Y, x, z, zero_tol=1e-6):
    """Add -z as a generator iff x != 0, zbar != 0 and r(z) < 0.

    Skipped at extremal-active blocks (x numerically zero): the cone is
    already pinned there and no additional hyperplane is needed.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.max(np.abs(x), initial=0.0) < zero_tol:
        return Y
    if np.linalg.norm(z[1:]) == 0.0 or residual(z) >= 0.0:
        return Y
    if Y.is_duplicate(-z):
        return Y
    out = Y.copy()
    out._append(-z)
    return out


def is_duplicate(Y, v):
    return Y.is_duplicate(v)
