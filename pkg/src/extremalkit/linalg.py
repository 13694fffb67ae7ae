"""Small exact and floating linear-algebra helpers used by span tests."""
from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import numpy as np


def is_exact(value) -> bool:
    return isinstance(value, (int, Fraction)) and not isinstance(value, bool)


def rational_rank(rows: Sequence[Sequence]) -> int:
    """Rank by fraction-exact Gaussian elimination."""
    m = [[Fraction(v) for v in row] for row in rows]
    if not m:
        return 0
    ncols = len(m[0])
    rank = 0
    for col in range(ncols):
        pivot = next((r for r in range(rank, len(m)) if m[r][col] != 0), None)
        if pivot is None:
            continue
        m[rank], m[pivot] = m[pivot], m[rank]
        p = m[rank][col]
        for r in range(len(m)):
            if r != rank and m[r][col] != 0:
                factor = m[r][col] / p
                m[r] = [a - factor * b for a, b in zip(m[r], m[rank])]
        rank += 1
        if rank == len(m):
            break
    return rank


def rational_solve(a: Sequence[Sequence], b: Sequence) -> list:
    """Solve a square rational system exactly; raises on singular input."""
    n = len(a)
    m = [[Fraction(v) for v in row] + [Fraction(rhs)] for row, rhs in zip(a, b)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if m[r][col] != 0), None)
        if pivot is None:
            raise ZeroDivisionError("singular matrix")
        m[col], m[pivot] = m[pivot], m[col]
        p = m[col][col]
        m[col] = [v / p for v in m[col]]
        for r in range(n):
            if r != col and m[r][col] != 0:
                factor = m[r][col]
                m[r] = [x - factor * y for x, y in zip(m[r], m[col])]
    return [m[r][n] for r in range(n)]


def rational_det(a: Sequence[Sequence]) -> Fraction:
    m = [[Fraction(v) for v in row] for row in a]
    n = len(m)
    det = Fraction(1)
    for col in range(n):
        pivot = next((r for r in range(col, n) if m[r][col] != 0), None)
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            m[col], m[pivot] = m[pivot], m[col]
            det = -det
        p = m[col][col]
        det *= p
        for r in range(col + 1, n):
            if m[r][col] != 0:
                factor = m[r][col] / p
                m[r] = [x - factor * y for x, y in zip(m[r], m[col])]
    return det


def float_rank(rows, rel_tol: float) -> tuple[int, np.ndarray]:
    """Numerical rank: singular values above ``rel_tol * s_max``."""
    a = np.asarray(rows, dtype=float)
    if a.size == 0:
        return 0, np.zeros(0)
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0, s
    return int(np.sum(s > rel_tol * s[0])), s


def lstsq_residual(columns, target) -> float:
    """Relative residual of the least-squares fit of ``target`` by ``columns``.

    Scaled by the larger of ``|target|`` and the largest singular value of
    the columns, so a target that vanishes up to rounding is not rejected.
    """
    b = np.asarray(target, dtype=float)
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return 0.0
    a = np.asarray(columns, dtype=float)
    if a.size == 0:
        return 1.0
    coef, *_ = np.linalg.lstsq(a.T, b, rcond=None)
    scale = max(norm_b, float(np.linalg.norm(a, 2)))
    return float(np.linalg.norm(a.T @ coef - b) / scale)
