"""Tension distribution for over-actuated cable sets.

All three operations are pure linear algebra on the wrench map ``A``
passed by the caller (either sign convention works; the null space and
residuals are identical).  Decompositions use SVD with a deterministic
rank tolerance so rank decisions and basis ordering are reproducible.
"""

from __future__ import annotations

import numpy as np

from .errors import RankDeficiencyError


def _svd_rank(A: np.ndarray):
    U, s, Vt = np.linalg.svd(A, full_matrices=True)
    if s.size == 0:
        return U, s, Vt, 0
    tol = s[0] * max(A.shape) * np.finfo(float).eps * 16
    return U, s, Vt, int(np.sum(s > tol))


def pinv_tensions(A: np.ndarray, tau_m: np.ndarray) -> np.ndarray:
    """Minimum-2-norm tensions T with A T = tau_m.

    Raises RankDeficiencyError (reporting the numerical rank) when A loses
    row rank, i.e. at a singular cable configuration.
    """
    A = np.asarray(A, dtype=float)
    tau_m = np.asarray(tau_m, dtype=float)
    U, s, Vt, rank = _svd_rank(A)
    if rank < A.shape[0]:
        raise RankDeficiencyError(
            f"wrench map is rank deficient (rank {rank} < {A.shape[0]})"
        )
    return Vt[:rank].T @ ((U.T @ tau_m)[:rank] / s[:rank])


def null_space(A: np.ndarray) -> np.ndarray:
    """Orthonormal basis of ker(A), sign-normalized for reproducibility.

    Columns are ordered by the SVD and flipped so the first entry of
    significant magnitude in each column is positive.  Returns an
    N x 0 matrix when A has full column rank.
    """
    A = np.asarray(A, dtype=float)
    _, _, Vt, rank = _svd_rank(A)
    N = Vt[rank:].T
    for k in range(N.shape[1]):
        col = N[:, k]
        lead = np.argmax(np.abs(col) > 1e-12)
        if col[lead] < 0:
            N[:, k] = -col
    return N


def distribute(A: np.ndarray, tau_m: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Tensions T = A^T (A A^T)^{-1} tau_m + N_A lam.

    The null-space term adds antagonistic tension without changing the
    wrench: A (N_A lam) = 0.
    """
    A = np.asarray(A, dtype=float)
    lam = np.asarray(lam, dtype=float)
    T = pinv_tensions(A, tau_m)
    N = null_space(A)
    if lam.shape != (N.shape[1],):
        raise ValueError(
            f"lambda must have {N.shape[1]} entries (degree of redundancy), got {lam.shape}"
        )
    return T + N @ lam
