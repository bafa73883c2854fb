from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from misspec_lab.core.types import RANK_TOL


def span_basis(X: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """
    Orthonormal basis (d×r columns) of the row span of *X*.

    Rank is read off the diagonal of a column-pivoted QR of Xᵀ: pivots whose
    |R_ii| falls below ``tol·|R_00|`` are treated as zero.
    """
    Q, R, _ = sla.qr(X.T, mode="economic", pivoting=True, check_finite=False)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros((X.shape[1], 0))
    rank = int(np.sum(diag > tol * diag[0]))
    return Q[:, :rank]


def reduce_to_span(X: np.ndarray, tol: float = RANK_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Coordinates of the rows of *X* in their own span: returns ``(X @ B, B)``."""
    B = span_basis(X, tol)
    return X @ B, B
