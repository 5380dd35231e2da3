"""State-space containers and dense linear-algebra kernels.

Everything downstream (multiplier factorization, plant interconnection,
closed-loop assembly) is built on the small set of operations here:
realizations, series/parallel composition, frequency response, stability
tests, and minimal realization.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

__all__ = [
    "StateSpace",
    "SignatureMatrix",
    "eigenvalues",
    "is_hurwitz",
    "series",
    "parallel",
    "minimal_realization",
    "stable_antistable_split",
]


def _as_matrix(M, rows=None, cols=None) -> np.ndarray:
    A = np.atleast_2d(np.asarray(M, dtype=float))
    if rows is not None and cols is not None and A.size == 0:
        A = A.reshape(rows, cols)
    return A


@dataclass(frozen=True)
class StateSpace:
    """Real LTI state-space realization (A, B, C, D).

    n = 0 is allowed and denotes a static gain with transfer D.  Instances
    are immutable; all composition operations return new objects.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A)
        D = _as_matrix(self.D)
        n = A.shape[0]
        p, m = D.shape
        B = _as_matrix(self.B, n, m)
        C = _as_matrix(self.C, p, n)
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape != (n, m):
            raise ValueError(f"B shape {B.shape} inconsistent with A {A.shape} and D {D.shape}")
        if C.shape != (p, n):
            raise ValueError(f"C shape {C.shape} inconsistent with A {A.shape} and D {D.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @staticmethod
    def static(D) -> "StateSpace":
        D = _as_matrix(D)
        p, m = D.shape
        return StateSpace(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0)), D)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.D.shape[1]

    @property
    def p(self) -> int:
        return self.D.shape[0]

    def freqresp(self, w: float) -> np.ndarray:
        """Transfer matrix at s = jw, via a linear solve per input column."""
        if self.n == 0:
            return self.D.astype(complex)
        s = 1j * float(w)
        X = np.linalg.solve(s * np.eye(self.n) - self.A, self.B)
        return self.C @ X + self.D

    def poles(self) -> np.ndarray:
        return eigenvalues(self.A) if self.n else np.zeros(0, dtype=complex)

    def transpose(self) -> "StateSpace":
        return StateSpace(self.A.T, self.C.T, self.B.T, self.D.T)

    def __add__(self, other: "StateSpace") -> "StateSpace":
        return parallel(self, other)

    def __neg__(self) -> "StateSpace":
        return StateSpace(self.A, self.B, -self.C, -self.D)


@dataclass(frozen=True)
class SignatureMatrix:
    """W = diag(I_m1, -I_m2)."""

    m1: int
    m2: int

    def __post_init__(self):
        if self.m1 < 0 or self.m2 < 0:
            raise ValueError("channel counts must be nonnegative")

    @property
    def size(self) -> int:
        return self.m1 + self.m2

    def as_matrix(self) -> np.ndarray:
        return np.diag(np.concatenate([np.ones(self.m1), -np.ones(self.m2)]))


def eigenvalues(M) -> np.ndarray:
    """All eigenvalues of a real square matrix (with multiplicity)."""
    M = _as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    if M.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    return np.linalg.eigvals(M)


def is_hurwitz(M, margin: float = 0.0) -> bool:
    """True iff every eigenvalue of M has real part < -margin."""
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    ev = eigenvalues(M)
    if ev.size == 0:
        return True
    return bool(np.max(ev.real) < -margin)


def series(g1: StateSpace, g2: StateSpace) -> StateSpace:
    """Realization of g2 * g1 (g1 feeds g2)."""
    if g1.p != g2.m:
        raise ValueError(f"dimension mismatch: g1 has {g1.p} outputs, g2 has {g2.m} inputs")
    n1, n2 = g1.n, g2.n
    A = np.block([
        [g1.A, np.zeros((n1, n2))],
        [g2.B @ g1.C, g2.A],
    ]) if n1 + n2 else np.zeros((0, 0))
    B = np.vstack([g1.B, g2.B @ g1.D])
    C = np.hstack([g2.D @ g1.C, g2.C])
    D = g2.D @ g1.D
    return StateSpace(A, B, C, D)


def parallel(g1: StateSpace, g2: StateSpace) -> StateSpace:
    """Realization of g1 + g2."""
    if g1.m != g2.m or g1.p != g2.p:
        raise ValueError("parallel connection needs matching input/output dimensions")
    A = sla.block_diag(g1.A, g2.A)
    B = np.vstack([g1.B, g2.B])
    C = np.hstack([g1.C, g2.C])
    return StateSpace(A, B, C, g1.D + g2.D)


def _reachable_basis(A: np.ndarray, B: np.ndarray, tol: float) -> np.ndarray:
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    K = np.hstack(blocks) if blocks else np.zeros((n, 0))
    if K.shape[1] == 0:
        return np.zeros((n, 0))
    U, sv, _ = np.linalg.svd(K, full_matrices=False)
    ref = sv[0] if sv.size else 0.0
    r = int(np.sum(sv > tol * max(1.0, ref)))
    return U[:, :r]


def minimal_realization(g: StateSpace, tol: float = 1e-9) -> StateSpace:
    """Remove unreachable and unobservable states.

    Projects onto an orthonormal basis of the reachable subspace (a
    rank-revealing SVD of the Krylov stack), then repeats on the dual
    system for observability.  Frequency response is preserved since the
    discarded subspaces are invariant.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A, B, C, D = g.A, g.B, g.C, g.D
    for _ in range(2):
        if A.shape[0] > 0:
            V = _reachable_basis(A, B, tol)
            A = V.T @ A @ V
            B = V.T @ B
            C = C @ V
        A, B, C = A.T, C.T, B.T  # dual: observability pass, then back
    return StateSpace(A, B, C, D)


def stable_antistable_split(g: StateSpace, margin: float = 0.0):
    """Split g = g_stable + g_antistable + D.

    Uses an ordered real Schur form (stable eigenvalues first) followed by
    a Sylvester-equation block-diagonalization.  The stable-part state
    coordinates are an orthonormal basis of the stable invariant subspace.
    Raises if eigenvalues sit on the imaginary axis (within margin).
    """
    n = g.n
    if n == 0:
        zero = StateSpace.static(np.zeros_like(g.D))
        return StateSpace.static(np.zeros_like(g.D)), zero, g.D
    ev = eigenvalues(g.A)
    if np.any(np.abs(ev.real) <= margin):
        raise ValueError("eigenvalues on the imaginary axis; no stable/antistable split")
    T, Z, sdim = sla.schur(g.A, output="real", sort=lambda x: x.real < 0)
    Bz = Z.T @ g.B
    Cz = g.C @ Z
    if sdim == n:
        return StateSpace(g.A, g.B, g.C, np.zeros_like(g.D)), \
            StateSpace.static(np.zeros_like(g.D)), g.D
    if sdim == 0:
        return StateSpace.static(np.zeros_like(g.D)), \
            StateSpace(g.A, g.B, g.C, np.zeros_like(g.D)), g.D
    T11, T12, T22 = T[:sdim, :sdim], T[:sdim, sdim:], T[sdim:, sdim:]
    S = sla.solve_sylvester(T11, -T22, -T12)
    Bs = Bz[:sdim] - S @ Bz[sdim:]
    Cs = Cz[:, :sdim]
    Ba = Bz[sdim:]
    Ca = Cz[:, :sdim] @ S + Cz[:, sdim:]
    p, m = g.D.shape
    stab = StateSpace(T11, Bs, Cs, np.zeros((p, m)))
    anti = StateSpace(T22, Ba, Ca, np.zeros((p, m)))
    return stab, anti, g.D
