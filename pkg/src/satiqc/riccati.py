"""Algebraic Riccati equation solver (Hamiltonian ordered-Schur method)."""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla

__all__ = ["solve_are", "are_residual"]


def are_residual(A, B, C, R, X) -> float:
    """Frobenius norm of A'X + XA - (XB + C')R^{-1}(B'X + C)."""
    A, B, C, R, X = map(np.atleast_2d, (A, B, C, R, X))
    K = np.linalg.solve(R, B.T @ X + C)
    res = A.T @ X + X @ A - (X @ B + C.T) @ K
    return float(np.linalg.norm(res, "fro"))


def solve_are(A, B, C, R) -> np.ndarray:
    """Stabilizing symmetric solution of

        A'X + XA - (XB + C') R^{-1} (B'X + C) = 0.

    R must be nonsingular (it may be indefinite).  The solution is taken
    from the stable invariant subspace of the associated Hamiltonian
    matrix via an ordered real Schur decomposition; the returned X makes
    A - B R^{-1} (B'X + C) Hurwitz.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = A.shape[0]
    m = R.shape[0]
    if B.shape != (n, m) or C.shape != (m, n):
        raise ValueError("inconsistent ARE dimensions")
    sv = np.linalg.svd(R, compute_uv=False)
    if sv.size == 0 or sv[-1] < 1e-12 * max(1.0, sv[0]):
        raise ValueError("singular R")
    if n == 0:
        return np.zeros((0, 0))
    Ri = np.linalg.inv(R)
    Ah = A - B @ Ri @ C
    G = B @ Ri @ B.T
    Qh = C.T @ Ri @ C
    H = np.block([[Ah, -G], [Qh, -Ah.T]])
    ev = np.linalg.eigvals(H)
    if np.any(np.abs(ev.real) < 1e-9 * max(1.0, np.max(np.abs(ev)))):
        raise ValueError("no stabilizing solution: Hamiltonian eigenvalues on the imaginary axis")
    T, Z, sdim = sla.schur(H, output="real", sort=lambda x: x.real < 0)
    if sdim != n:
        raise ValueError("no stabilizing solution: stable subspace has wrong dimension")
    U1 = Z[:n, :n]
    U2 = Z[n:, :n]
    X = np.linalg.solve(U1.T, U2.T).T
    X = 0.5 * (X + X.T)
    return X
