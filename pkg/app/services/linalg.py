"""
Small dense linear algebra helpers: cyclic Jacobi eigensolver and SVD-based
rank / null-space decisions
"""
import logging
from typing import Optional, Tuple

import numpy as np
from scipy import linalg as sla

from app.core.config import settings
from app.core.exceptions import NoConvergence

logger = logging.getLogger(__name__)


def jacobi_eigh(A: np.ndarray, tol: Optional[float] = None,
                max_sweeps: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations

    Args:
        A: symmetric n x n matrix
        tol: stop when the off-diagonal Frobenius norm falls below tol * max(1, ||A||)
        max_sweeps: maximum number of full (p, q) sweeps

    Returns:
        (w, V) with eigenvalues w ascending and orthonormal eigenvectors in the
        columns of V, so that A V = V diag(w)
    """
    tol = settings.JACOBI_TOL if tol is None else tol
    max_sweeps = settings.JACOBI_MAX_SWEEPS if max_sweeps is None else max_sweeps

    A = np.array(A, dtype=float)
    n = A.shape[0]
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    scale = max(1.0, float(np.linalg.norm(A)))

    # entries below this cannot move the off-diagonal norm across tol * scale
    tiny = 1e-6 * tol * scale / max(n, 1)

    for sweep in range(max_sweeps):
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if not np.isfinite(off):
            raise NoConvergence("Jacobi eigensolver diverged", dim=n, sweep=sweep)
        if off < tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= tiny:
                    A[p, q] = A[q, p] = 0.0
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                elif tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c

                # A <- J^T A J with J the (p, q) plane rotation
                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0

                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise NoConvergence(
            f"Jacobi eigensolver did not converge in {max_sweeps} sweeps",
            dim=n)

    logger.debug("Jacobi converged after %d sweeps (n=%d)", sweep, n)
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def rank_tol(A: np.ndarray, tol: Optional[float] = None) -> float:
    """Absolute singular-value threshold: tol scaled by the matrix norm"""
    tol = settings.RANK_TOL if tol is None else tol
    if A.size == 0:
        return tol
    return tol * max(1.0, float(np.linalg.norm(A, 2)))


def matrix_rank(A: np.ndarray, tol: Optional[float] = None) -> int:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0
    sv = sla.svdvals(A)
    return int(np.sum(sv > rank_tol(A, tol)))


def null_space(A: np.ndarray, tol: Optional[float] = None) -> np.ndarray:
    """Orthonormal basis of the null space of A, as columns"""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return np.eye(A.shape[1])
    return sla.null_space(A, rcond=rank_tol(A, tol) / max(sla.svdvals(A)[0], 1e-300))


def column_span(A: np.ndarray, tol: Optional[float] = None) -> np.ndarray:
    """Orthonormal basis of the column space of A, as columns"""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0 or not np.any(A):
        return np.zeros((A.shape[0], 0))
    return sla.orth(A, rcond=rank_tol(A, tol) / sla.svdvals(A)[0])


def same_subspace(A: np.ndarray, B: np.ndarray, tol: float = 1e-8) -> bool:
    """True when the column spans of A and B coincide at tolerance"""
    ra = matrix_rank(A, tol) if A.size else 0
    rb = matrix_rank(B, tol) if B.size else 0
    if ra != rb:
        return False
    if ra == 0:
        return True
    return matrix_rank(np.hstack([A, B]), tol) == ra


def smallest_singular_value(A: np.ndarray) -> float:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0.0
    return float(sla.svdvals(A)[-1])


def spd_whitener(G: np.ndarray) -> np.ndarray:
    """
    Lower Cholesky factor L of an SPD matrix, G = L L^T. Coordinates y of a vector
    map to orthonormal coordinates L^T y.
    """
    return sla.cholesky(G, lower=True)
