"""Dense two-phase tableau simplex with Bland's anti-cycling rule.

Solves   min c.x  s.t.  A x = b,  x >= 0.

Deterministic: entering variable is the lowest-index column with negative reduced
cost, leaving variable the lowest-index basic variable among ratio-test ties.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverError


@dataclass
class LPResult:
    x: np.ndarray
    value: float
    duals: np.ndarray
    basis: np.ndarray
    iterations: int


def _pivot(T, r, j):
    row = T[r] / T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, row)
    T[r] = row


def _bland_loop(T, basis, allowed, tol, max_iter, it0):
    m = T.shape[0] - 1
    it = it0
    while True:
        red = T[m, :-1]
        cand = np.flatnonzero((red < -tol) & allowed)
        if cand.size == 0:
            return it
        j = int(cand[0])
        col = T[:m, j]
        pos = col > tol
        if not np.any(pos):
            raise SolverError("linear program is unbounded")
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / col[pos]
        rmin = ratios.min()
        ties = np.flatnonzero(ratios <= rmin + tol * max(1.0, abs(rmin)))
        r = int(ties[np.argmin(basis[ties])])
        _pivot(T, r, j)
        basis[r] = j
        it += 1
        if it >= max_iter:
            raise SolverError(f"simplex iteration cap {max_iter} reached")


def simplex(c, A_eq, b_eq, tol: float = 1e-9, max_iter: int = 200_000) -> LPResult:
    c = np.asarray(c, dtype=float)
    A = np.array(A_eq, dtype=float)
    b = np.array(b_eq, dtype=float)
    m, n = A.shape
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b *= sign

    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    basis = np.arange(n, n + m)

    allowed = np.ones(n + m, dtype=bool)
    it = _bland_loop(T, basis, allowed, tol, max_iter, 0)
    if -T[m, -1] > 1e-7:
        raise SolverError(f"linear program is infeasible (phase-one residual {-T[m, -1]:.3g})")

    # drive zero-level artificials out of the basis; rows where that fails are redundant
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if basis[r] >= n:
            nz = np.flatnonzero(np.abs(T[r, :n]) > tol)
            if nz.size:
                _pivot(T, r, int(nz[0]))
                basis[r] = int(nz[0])
            else:
                keep[r] = False
    rows = np.flatnonzero(keep)
    T = np.vstack([T[rows], np.zeros((1, T.shape[1]))])
    basis = basis[rows]
    mk = len(rows)

    cost = np.concatenate([c, np.zeros(m)])
    T[mk, :-1] = cost - cost[basis] @ T[:mk, :-1]
    T[mk, -1] = -cost[basis] @ T[:mk, -1]
    allowed = np.concatenate([np.ones(n, dtype=bool), np.zeros(m, dtype=bool)])
    it = _bland_loop(T, basis, allowed, tol, max_iter, it)

    x = np.zeros(n + m)
    x[basis] = T[:mk, -1]
    x = np.maximum(x[:n], 0.0)
    # B^-1 is recorded in the artificial columns: y^T = c_B^T B^-1 (row signs undone)
    duals = (cost[basis] @ T[:mk, n:n + m]) * sign
    return LPResult(x=x, value=float(c @ x), duals=duals, basis=basis.copy(), iterations=it)
