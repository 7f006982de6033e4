"""Slow, independent reference implementations used to cross-check results.

These deliberately avoid the code paths of the main implementations: the
spectrum oracle diagonalizes the Gram matrix with hand-rolled cyclic Jacobi
rotations instead of LAPACK, and the Spearman oracle assigns ranks by explicit
sorting and tie grouping instead of library rank statistics. Intended for
desk-scale inputs (n, d <= 12) and test suites only.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .errors import LengthMismatchError, TooFewError

__all__ = ["oracle_spectrum", "oracle_spearman"]


def _jacobi_eigenvalues(gram: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps the upper triangle in fixed row-major order until the off-diagonal
    Frobenius norm falls below ``tol`` relative to the matrix scale, so the
    result is deterministic for a fixed input.
    """
    a = np.array(gram, dtype=np.float64)
    m = a.shape[0]
    scale = max(1.0, float(np.linalg.norm(a)))
    mask = ~np.eye(m, dtype=bool)
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(a[mask]))
        if off <= tol * scale:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
    return np.diag(a).copy()


def oracle_spectrum(matrix: np.ndarray) -> np.ndarray:
    """Singular values of a small dense matrix, sorted non-increasing.

    Computed as square roots of the eigenvalues of M^T M (or M M^T, whichever
    Gram matrix is smaller) obtained by cyclic Jacobi iteration.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("oracle_spectrum expects a 2-D matrix")
    gram = m.T @ m if m.shape[1] <= m.shape[0] else m @ m.T
    eigenvalues = _jacobi_eigenvalues(gram)
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    return np.sqrt(np.sort(eigenvalues)[::-1])


def _average_ranks(values: Sequence[float]) -> list[float]:
    """Fractional ranks by explicit sort and tie grouping (1-based)."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        # positions i..j share the average of ranks i+1..j+1
        average = (i + j + 2) / 2.0
        for k in range(i, j + 1):
            ranks[order[k]] = average
        i = j + 1
    return ranks


def oracle_spearman(h: Sequence[float], h_gt: Sequence[float]) -> Optional[float]:
    """Spearman correlation evaluated literally from mean-centered ranks."""
    if len(h) != len(h_gt):
        raise LengthMismatchError(f"{len(h)} vs {len(h_gt)} values")
    if len(h) < 2:
        raise TooFewError("need at least 2 values")
    ra = _average_ranks(h)
    rb = _average_ranks(h_gt)
    mean_a = sum(ra) / len(ra)
    mean_b = sum(rb) / len(rb)
    num = sum((x - mean_a) * (y - mean_b) for x, y in zip(ra, rb))
    var_a = sum((x - mean_a) ** 2 for x in ra)
    var_b = sum((y - mean_b) ** 2 for y in rb)
    if var_a == 0.0 or var_b == 0.0:
        return None
    return num / math.sqrt(var_a * var_b)
