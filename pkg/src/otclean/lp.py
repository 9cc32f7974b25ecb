"""Dense two-phase simplex for small equality-form linear programs.

Solves ``min c.x  s.t.  A x = b, x >= 0`` and returns an optimal basic
feasible solution.  Pivoting follows Bland's rule (lowest eligible index for
both entering and leaving variables), which rules out cycling on degenerate
vertices; transport problems are highly degenerate, so this matters.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OTCleanError, SizeCapError

MAX_VARIABLES = 4096
PIVOT_TOL = 1e-11
COST_TOL = 1e-11


class LPInfeasible(OTCleanError, RuntimeError):
    pass


class LPUnbounded(OTCleanError, RuntimeError):
    pass


@dataclass
class LPResult:
    x: np.ndarray
    fun: float
    basis: np.ndarray
    pivots: int


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    factor = T[:, col].copy()
    factor[row] = 0.0
    T -= np.outer(factor, T[row])


def _run(T: np.ndarray, basis: np.ndarray, ncols: int, max_pivots: int) -> int:
    """Bland-rule simplex on tableau ``T`` whose last row holds reduced costs.

    Only the first ``ncols`` columns may enter the basis.
    """
    pivots = 0
    m = T.shape[0] - 1
    while True:
        red = T[-1, :ncols]
        eligible = np.flatnonzero(red < -COST_TOL)
        if eligible.size == 0:
            return pivots
        col = int(eligible[0])
        column = T[:m, col]
        pos = np.flatnonzero(column > PIVOT_TOL)
        if pos.size == 0:
            raise LPUnbounded("objective is unbounded below")
        ratios = T[pos, -1] / column[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
        row = int(ties[np.argmin(basis[ties])])
        _pivot(T, row, col)
        basis[row] = col
        pivots += 1
        if pivots > max_pivots:
            raise OTCleanError("simplex exceeded its pivot budget")


def solve_lp(c, A_eq, b_eq, max_variables: int = MAX_VARIABLES) -> LPResult:
    c = np.asarray(c, dtype=float)
    A = np.array(A_eq, dtype=float)
    b = np.array(b_eq, dtype=float)
    m, n = A.shape
    if n > max_variables:
        raise SizeCapError(f"{n} variables exceeds the dense simplex cap of {max_variables}")
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    # phase 1: artificial basis, minimise the sum of artificials
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = np.arange(n, n + m)
    budget = 50 * (n + m) + 1000
    pivots = _run(T, basis, n, budget)
    if -T[-1, -1] > 1e-9 * max(1.0, b.sum()):
        raise LPInfeasible(f"no feasible point (phase-1 residual {-T[-1, -1]:.3e})")

    # drive remaining artificials out; rows where that is impossible are redundant
    keep = []
    for r in range(m):
        if basis[r] >= n:
            cand = np.flatnonzero(np.abs(T[r, :n]) > 1e-9)
            if cand.size:
                _pivot(T, r, int(cand[0]))
                basis[r] = int(cand[0])
                pivots += 1
                keep.append(r)
        else:
            keep.append(r)
    T = np.vstack([T[keep][:, list(range(n)) + [n + m]], np.zeros((1, n + 1))])
    basis = basis[keep]

    # phase 2
    T[-1, :n] = c
    T[-1, -1] = 0.0
    for r, j in enumerate(basis):
        T[-1] -= c[j] * T[r]
    pivots += _run(T, basis, n, budget)

    x = np.zeros(n)
    x[basis] = T[:-1, -1]
    x[np.abs(x) < 1e-15] = 0.0
    x = np.maximum(x, 0.0)
    return LPResult(x=x, fun=float(c @ x), basis=basis.copy(), pivots=pivots)
