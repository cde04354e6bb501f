"""Dense simplex solver for small box-constrained linear programs.

Solves  max c.x  subject to  A x <= b,  0 <= x <= u  with b > 0, which is the
shape of every optimal-license program here (the origin is always feasible, so
no phase-1 step is needed).  Bland's pivoting rule keeps the method finite and
deterministic; problem sizes are tiny (tens of variables), so the dense
tableau is more than fast enough.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-10


@dataclass(frozen=True)
class LpSolution:
    x: np.ndarray
    value: float
    duals: np.ndarray  # one multiplier per row of A (then per upper bound)
    iterations: int


def solve_box_lp(c, A, b, upper) -> LpSolution:
    """Maximize ``c @ x`` over ``A x <= b``, ``0 <= x <= upper``.

    ``b`` and ``upper`` must be non-negative so the slack basis is feasible.
    """
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    u = np.asarray(upper, dtype=float)
    n = c.size
    if A.shape[1] != n or b.shape != (A.shape[0],) or u.shape != (n,):
        raise ValueError("inconsistent LP dimensions")
    if np.any(b < 0) or np.any(u < 0):
        raise ValueError("right-hand sides must be non-negative")

    # Fold the upper bounds in as ordinary rows; slacks form the initial basis.
    A_full = np.vstack([A, np.eye(n)])
    b_full = np.concatenate([b, u])
    m_rows = A_full.shape[0]

    # Tableau columns: n structural vars, m_rows slacks, rhs.
    T = np.zeros((m_rows + 1, n + m_rows + 1))
    T[:m_rows, :n] = A_full
    T[:m_rows, n : n + m_rows] = np.eye(m_rows)
    T[:m_rows, -1] = b_full
    T[-1, :n] = -c  # objective row holds reduced costs of a max problem
    basis = list(range(n, n + m_rows))

    iterations = 0
    max_iter = 200 * (n + m_rows)
    while True:
        reduced = T[-1, :-1]
        entering = -1
        for j in range(n + m_rows):  # Bland: lowest improving index
            if reduced[j] < -PIVOT_TOL:
                entering = j
                break
        if entering < 0:
            break
        col = T[:m_rows, entering]
        rhs = T[:m_rows, -1]
        best_ratio = np.inf
        leaving = -1
        for i in range(m_rows):
            if col[i] > PIVOT_TOL:
                ratio = rhs[i] / col[i]
                if ratio < best_ratio - PIVOT_TOL or (
                    abs(ratio - best_ratio) <= PIVOT_TOL
                    and (leaving < 0 or basis[i] < basis[leaving])
                ):
                    best_ratio = ratio
                    leaving = i
        if leaving < 0:
            raise RuntimeError("LP is unbounded, which a box LP cannot be")
        pivot = T[leaving, entering]
        T[leaving] /= pivot
        for i in range(m_rows + 1):
            if i != leaving and abs(T[i, entering]) > 0.0:
                T[i] -= T[i, entering] * T[leaving]
        basis[leaving] = entering
        iterations += 1
        if iterations > max_iter:
            raise RuntimeError("simplex failed to terminate")

    x = np.zeros(n)
    for i, var in enumerate(basis):
        if var < n:
            x[var] = T[i, -1]
    # Reduced costs over the slack columns are the dual multipliers.
    duals = T[-1, n : n + m_rows].copy()
    duals[np.abs(duals) < PIVOT_TOL] = 0.0
    return LpSolution(x=x, value=float(c @ x), duals=duals, iterations=iterations)
