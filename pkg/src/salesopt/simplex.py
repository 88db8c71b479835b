"""Dense two-phase simplex for desk-scale assignment LPs.

Maximizes c'x subject to mixed <=/>=/= rows and x >= 0. Deterministic:
Dantzig pricing with lowest-index tie-breaks, switching to Bland's rule
after an iteration budget to rule out cycling. Returns a basic solution,
so vertices of integral polytopes come back integral.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

LE, GE, EQ = "LE", "GE", "EQ"

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7


class LpError(Exception):
    pass


class InfeasibleError(LpError):
    """The constraint system admits no feasible point."""


class SolverError(LpError):
    """The solver failed to certify an optimum (should not happen)."""


@dataclass(frozen=True)
class SimplexResult:
    x: np.ndarray
    objective: float
    iterations: int


def _pivot(T: np.ndarray, cost: np.ndarray, basis: np.ndarray, r: int, s: int) -> None:
    T[r] /= T[r, s]
    col = T[:, s].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    cost -= cost[s] * T[r]
    basis[r] = s


def _iterate(
    T: np.ndarray, cost: np.ndarray, basis: np.ndarray, bland_after: int, max_iter: int
) -> int:
    it = 0
    while True:
        reduced = cost[:-1]
        if it >= bland_after:
            negatives = np.nonzero(reduced < -PIVOT_TOL)[0]
            if negatives.size == 0:
                return it
            s = int(negatives[0])
        else:
            s = int(np.argmin(reduced))
            if reduced[s] >= -PIVOT_TOL:
                return it
        colvals = T[:, s]
        pos = colvals > PIVOT_TOL
        if not pos.any():
            raise SolverError("unbounded direction in a bounded LP; check constraint rows")
        ratios = np.full(T.shape[0], np.inf)
        ratios[pos] = T[pos, -1] / colvals[pos]
        rmin = ratios.min()
        ties = np.nonzero(ratios <= rmin + PIVOT_TOL)[0]
        r = int(ties[np.argmin(basis[ties])])
        _pivot(T, cost, basis, r, s)
        it += 1
        if it > max_iter:
            raise SolverError(f"simplex exceeded {max_iter} iterations")


def solve(
    c: np.ndarray,
    A: np.ndarray,
    senses: Sequence[str],
    b: np.ndarray,
) -> SimplexResult:
    """Maximize c'x s.t. A x (<=|>=|=) b, x >= 0."""
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float)).copy()
    b = np.asarray(b, dtype=float).copy()
    senses = list(senses)
    m, n = A.shape
    if c.shape[0] != n or b.shape[0] != m or len(senses) != m:
        raise ValueError("inconsistent LP dimensions")
    if any(s not in (LE, GE, EQ) for s in senses):
        raise ValueError(f"row senses must be one of {LE}/{GE}/{EQ}")

    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0
    senses = [({LE: GE, GE: LE, EQ: EQ}[s] if f else s) for s, f in zip(senses, flip)]

    n_slack = sum(1 for s in senses if s in (LE, GE))
    n_art = sum(1 for s in senses if s in (GE, EQ))
    ncols = n + n_slack + n_art
    T = np.zeros((m, ncols + 1))
    T[:, :n] = A
    T[:, -1] = b
    basis = np.full(m, -1, dtype=np.int64)
    col = n
    for i, s in enumerate(senses):
        if s == LE:
            T[i, col] = 1.0
            basis[i] = col
            col += 1
        elif s == GE:
            T[i, col] = -1.0
            col += 1
    art_start = col
    for i, s in enumerate(senses):
        if s in (GE, EQ):
            T[i, col] = 1.0
            basis[i] = col
            col += 1

    bland_after = 5 * (m + ncols) + 50
    max_iter = 50_000 + 100 * (m + ncols)
    iterations = 0

    if n_art:
        c1 = np.zeros(ncols)
        c1[art_start:] = -1.0
        cost = c1[basis] @ T
        cost[:-1] -= c1
        iterations += _iterate(T, cost, basis, bland_after, max_iter)
        if cost[-1] < -FEAS_TOL:
            raise InfeasibleError(
                f"no feasible point: minimal constraint violation {-cost[-1]:.6g}"
            )
        keep_rows = []
        for i in range(m):
            if basis[i] >= art_start:
                pivot_col = -1
                for j in range(art_start):
                    if abs(T[i, j]) > PIVOT_TOL and j not in set(basis):
                        pivot_col = j
                        break
                if pivot_col >= 0:
                    _pivot(T, cost, basis, i, pivot_col)
                    keep_rows.append(i)
                # else: redundant row, drop it
            else:
                keep_rows.append(i)
        T = T[keep_rows][:, list(range(art_start)) + [ncols]]
        basis = basis[keep_rows]
        ncols = art_start
        m = len(keep_rows)

    c2 = np.zeros(ncols)
    c2[:n] = c
    cost = c2[basis] @ T
    cost[:-1] -= c2
    iterations += _iterate(T, cost, basis, bland_after, max_iter)

    x_full = np.zeros(ncols)
    x_full[basis] = T[:, -1]
    x = x_full[:n]
    return SimplexResult(x=x, objective=float(c @ x), iterations=iterations)
