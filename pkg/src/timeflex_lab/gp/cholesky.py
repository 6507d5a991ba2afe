"""Blocked Cholesky factorisation that reports where positive definiteness fails."""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    def __init__(self, index: int, pivot: float):
        super().__init__(f"matrix is not positive definite: pivot {index} is {pivot:.3e}")
        self.index = index
        self.pivot = pivot


def _unblocked(A: np.ndarray, offset: int) -> None:
    """In-place lower Cholesky of a small block (left-looking, row by row)."""
    n = A.shape[0]
    for j in range(n):
        row = A[j, :j]
        d = A[j, j] - row @ row
        if not d > 0.0:
            raise NotPositiveDefiniteError(offset + j, float(d))
        A[j, j] = np.sqrt(d)
        if j + 1 < n:
            A[j + 1 :, j] = (A[j + 1 :, j] - A[j + 1 :, :j] @ row) / A[j, j]


def cholesky(A: np.ndarray, block: int = 256, overwrite: bool = False) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == A``.

    Right-looking blocked algorithm: factor a diagonal block, solve the panel
    below it, then apply a rank-``block`` update to the trailing matrix.  Only
    the lower triangle of ``A`` is read.
    """
    A = np.array(A, dtype=np.float64, copy=not overwrite, order="C")
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"cholesky needs a square matrix, got shape {A.shape}")
    n = A.shape[0]
    for k in range(0, n, block):
        e = min(k + block, n)
        _unblocked(A[k:e, k:e], k)
        if e < n:
            # panel: L21 = A21 L11^-T
            A[e:, k:e] = solve_triangular(A[k:e, k:e], A[e:, k:e].T, lower=True, check_finite=False).T
            panel = A[e:, k:e]
            A[e:, e:] -= panel @ panel.T
    for k in range(0, n, block):
        e = min(k + block, n)
        A[k:e, k:e] = np.tril(A[k:e, k:e])
        A[k:e, e:] = 0.0
    return A
