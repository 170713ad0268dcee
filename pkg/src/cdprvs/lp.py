"""Small dense phase-I simplex for box-constrained equality feasibility.

Solves: does x exist with ``A_eq @ x = b_eq`` and ``lo <= x <= hi``?
Sized for wrench feasibility (6 equations, a handful of cables); no sparse
machinery, Bland's rule for anti-cycling.
"""

from __future__ import annotations

import numpy as np


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    col_vals = T[:, col].copy()
    col_vals[row] = 0.0
    T -= np.outer(col_vals, T[row])


def box_feasible(A_eq, b_eq, lo, hi, tol: float = 1e-7, max_iter: int = 500):
    """Return ``(feasible, x)``; ``x`` is a feasible point or ``None``."""
    A = np.asarray(A_eq, dtype=float)
    b = np.asarray(b_eq, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    m, n = A.shape
    if np.any(hi < lo):
        return False, None
    span = hi - lo

    # Shift y = x - lo so 0 <= y <= span; add slacks y + s = span.
    # Rows: [A 0] y = b - A lo ; [I I] [y s] = span
    rhs = np.concatenate([b - A @ lo, span])
    M = np.zeros((m + n, 2 * n))
    M[:m, :n] = A
    M[m:, :n] = np.eye(n)
    M[m:, n:] = np.eye(n)
    neg = rhs < 0
    M[neg] *= -1.0
    rhs[neg] *= -1.0

    # Artificials only on the equality rows; slack rows start basic on s.
    n_art = m
    ncol = 2 * n + n_art
    T = np.zeros((m + n + 1, ncol + 1))
    T[: m + n, : 2 * n] = M
    T[:m, 2 * n : 2 * n + m] = np.eye(m)
    T[: m + n, -1] = rhs
    basis = [2 * n + i for i in range(m)] + [n + j for j in range(n)]
    # A slack row flipped sign (span < 0) cannot happen: span >= 0 here.

    # Phase-I objective: minimize sum of artificials.
    T[-1, :] = 0.0
    T[-1, 2 * n : 2 * n + m] = 1.0
    for i in range(m):
        T[-1] -= T[i]

    scale = max(1.0, float(np.abs(rhs).max(initial=0.0)))
    eps = 1e-12 * scale
    for _ in range(max_iter):
        cost = T[-1, :-1]
        entering = next((j for j in range(ncol) if cost[j] < -eps), None)
        if entering is None:
            break
        colv = T[: m + n, entering]
        ratios = np.full(m + n, np.inf)
        pos = colv > eps
        ratios[pos] = T[: m + n, -1][pos] / colv[pos]
        best = ratios.min()
        if not np.isfinite(best):
            break  # unbounded direction cannot occur in phase I
        ties = np.flatnonzero(np.isclose(ratios, best, rtol=0.0, atol=eps))
        row = min(ties, key=lambda r: basis[r])
        _pivot(T, row, entering)
        basis[row] = entering

    y = np.zeros(ncol)
    for r, j in enumerate(basis):
        y[j] = T[r, -1]
    x = lo + np.clip(y[:n], 0.0, span)
    residual = float(np.linalg.norm(A @ x - b))
    if -T[-1, -1] <= tol * scale and residual <= tol * scale:
        return True, x
    return False, None
