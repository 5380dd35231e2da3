"""Hard J-spectral factorization of IQC multipliers.

Pipeline (per multiplier): minimal realization of the proper part,
stable/antistable split, algebraic Riccati solve, congruence factor M of
the constant part, then assembly of the spectral factor
Psi = (A_s, B_s, W M^{-T} (B_s' X + C_s), M).  Factors are converted to
the upper-triangular synthesis form with identity bottom rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .statespace import (StateSpace, SignatureMatrix, is_hurwitz,
                         minimal_realization, stable_antistable_split)
from .riccati import solve_are
from .multipliers import Multiplier, CHECK_GRID

__all__ = [
    "FactoredIQC",
    "TriangularFactor",
    "UncertaintyBlock",
    "j_spectral_factorize",
    "to_triangular",
    "proportional_sector_factor",
    "make_uncertainty_iqc",
    "check_hard_iqc",
    "factor_signature",
]

DEFAULT_EPS_REG = 1e-6


def factor_signature(D: np.ndarray, m1: int, m2: int, tol: float = 1e-8) -> np.ndarray:
    """M with M' W M = D, W = diag(I_m1, -I_m2).

    For the scalar two-channel case the convention follows the worked
    factorization: a null first column [1; 1] when d11 vanishes, an
    e1-aligned first column otherwise.  Kronecker-structured D lifts the
    scalar convention; anything else falls back to an eigendecomposition.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    n = m1 + m2
    if D.shape != (n, n):
        raise ValueError("D has wrong dimensions")
    scale = max(1.0, float(np.max(np.abs(D))))
    if m1 == 1 and m2 == 1:
        d11, d12, d22 = D[0, 0], D[0, 1], D[1, 1]
        det = d11 * d22 - d12 * d12
        if det >= -tol * scale ** 2:
            raise ValueError("constant part does not have signature (1, 1)")
        if abs(d11) <= tol * scale:
            if abs(d12) <= tol * scale:
                raise ValueError("singular constant part")
            mv = np.array([1.0, 1.0])
            mw = np.array([(d12 + d22 / d12) / 2.0, (d22 / d12 - d12) / 2.0])
        elif d11 > 0:
            mv = np.array([np.sqrt(d11), 0.0])
            mw = np.array([d12 / np.sqrt(d11), np.sqrt(-det / d11)])
        else:
            raise ValueError("first channel of the constant part is negative")
        return np.column_stack([mv, mw])
    if m1 == m2:
        nu = m1
        core = np.array([[D[0, 0], D[0, nu]], [D[nu, 0], D[nu, nu]]])
        if np.allclose(D, np.kron(core, np.eye(nu)), atol=tol * scale):
            return np.kron(factor_signature(core, 1, 1, tol), np.eye(nu))
    lam, V = np.linalg.eigh(D)
    order = np.argsort(-lam)
    lam, V = lam[order], V[:, order]
    if np.sum(lam > tol * scale) != m1 or np.sum(lam < -tol * scale) != m2:
        raise ValueError("constant part signature does not match (m1, m2)")
    return np.diag(np.sqrt(np.abs(lam))) @ V.T


@dataclass(frozen=True)
class FactoredIQC:
    """Hard J-spectral factorization (Psi, W) of a multiplier."""

    psi: StateSpace
    w: SignatureMatrix
    m1: int
    m2: int
    kind: str
    multiplier: Multiplier | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.m1 + self.m2

    def identity_residual(self, grid=CHECK_GRID) -> float:
        """max_w || Psi(jw)* W Psi(jw) - Pi(jw) ||_F over the grid."""
        if self.multiplier is None:
            return 0.0
        W = self.w.as_matrix()
        worst = 0.0
        for w in grid:
            F = self.psi.freqresp(w)
            worst = max(worst, float(np.linalg.norm(
                F.conj().T @ W @ F - self.multiplier.pi(w), "fro")))
        return worst

    def inverse_a_matrix(self) -> np.ndarray:
        """A-matrix of Psi^{-1} (must be Hurwitz for a valid factor)."""
        psi = self.psi
        if psi.n == 0:
            return np.zeros((0, 0))
        return psi.A - psi.B @ np.linalg.solve(psi.D, psi.C)

    def to_dict(self) -> dict:
        """JSON-serializable form (for CLI-side caching of factors)."""
        return {
            "kind": self.kind,
            "m1": self.m1, "m2": self.m2,
            "psi": {k: getattr(self.psi, k).tolist() for k in "ABCD"},
            "epsilon_applied": float(self.diagnostics.get("epsilon_applied", 0.0)),
        }


@dataclass(frozen=True)
class TriangularFactor:
    """Synthesis-form factor [[PsiBar11, PsiBar12], [0, I]].

    Realization pieces of the top block row: z1 = c x + d1 v + d2 w with
    xdot = a x + b1 v + b2 w; the bottom rows are identically [0, I].
    ``scale`` multiplies Psi~ W Psi to recover the source multiplier (1 for
    the plain Schur-complement conversion).
    """

    a: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    c: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    m1: int
    m2: int
    kind: str
    scale: float = 1.0

    def __post_init__(self):
        for name in ("a", "b1", "b2", "c", "d1", "d2"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def psi_bar(self) -> StateSpace:
        """Full factor with the stacked [0, I] bottom rows."""
        B = np.hstack([self.b1, self.b2])
        C = np.vstack([self.c, np.zeros((self.m2, self.n))])
        D = np.block([
            [self.d1, self.d2],
            [np.zeros((self.m2, self.m1)), np.eye(self.m2)],
        ])
        return StateSpace(self.a, B, C, D)

    def top_row(self, w: float) -> np.ndarray:
        """[PsiBar11(jw), PsiBar12(jw)]."""
        return StateSpace(self.a, np.hstack([self.b1, self.b2]), self.c,
                          np.hstack([self.d1, self.d2])).freqresp(w)

    def to_dict(self) -> dict:
        """JSON-serializable form (for CLI-side caching of factors)."""
        return {"kind": self.kind, "m1": self.m1, "m2": self.m2,
                "scale": self.scale,
                **{k: getattr(self, k).tolist()
                   for k in ("a", "b1", "b2", "c", "d1", "d2")}}


def j_spectral_factorize(mult: Multiplier, eps_reg: float = DEFAULT_EPS_REG,
                         tol: float = 1e-9) -> FactoredIQC:
    """Hard J-spectral factorization of a para-Hermitian multiplier.

    Applies the epsilon-perturbation to the (1,1) block of the constant
    part when it is singular; the perturbation is folded into the returned
    multiplier so the frequency identity is exact, and recorded in the
    diagnostics.
    """
    if not mult.satisfies_sign_conditions():
        raise ValueError("multiplier fails the sign conditions; not J-factorizable")
    m1, m2 = mult.m1, mult.m2
    proper = minimal_realization(mult.proper_part(), tol)
    stab, _anti, _D0 = stable_antistable_split(proper)
    Ds = mult.D.copy()
    sv = np.linalg.svd(Ds, compute_uv=False)
    eps_applied = 0.0
    if sv[-1] < 1e-8 * max(1.0, sv[0]):
        eps_applied = eps_reg
        Ds = Ds + sla.block_diag(eps_reg * np.eye(m1), np.zeros((m2, m2)))
        mult = Multiplier(mult.zs, Ds, m1, m2, kind=mult.kind, params=dict(mult.params))
    X = solve_are(stab.A, stab.B, stab.C, Ds)
    M = factor_signature(Ds, m1, m2)
    W = SignatureMatrix(m1, m2)
    Cpsi = W.as_matrix() @ np.linalg.solve(M.T, stab.B.T @ X + stab.C)
    psi = StateSpace(stab.A, stab.B, Cpsi, M)
    fac = FactoredIQC(psi, W, m1, m2, kind=mult.kind, multiplier=mult,
                      diagnostics={"epsilon_applied": eps_applied,
                                   "are_solution": X,
                                   "stable_order": stab.n})
    if psi.n and not is_hurwitz(psi.A):
        raise ValueError("factor is unstable")
    if not is_hurwitz(fac.inverse_a_matrix()):
        raise ValueError("factor inverse is unstable")
    return fac


def to_triangular(fac: FactoredIQC, tol: float = 1e-9) -> TriangularFactor:
    """Schur-complement conversion to the [[*, *], [0, I]] synthesis form.

    PsiBar11 = Psi11 - Psi12 Psi22^{-1} Psi21 and PsiBar12 = Psi12 Psi22^{-1},
    realized by constraining the factor's second output block to equal the
    second input.  State dimension is minimized afterwards.
    """
    psi = fac.psi
    m1, m2 = fac.m1, fac.m2
    B1, B2 = psi.B[:, :m1], psi.B[:, m1:]
    C1, C2 = psi.C[:m1, :], psi.C[m1:, :]
    M11, M12 = psi.D[:m1, :m1], psi.D[:m1, m1:]
    M21, M22 = psi.D[m1:, :m1], psi.D[m1:, m1:]
    sv = np.linalg.svd(M22, compute_uv=False)
    if sv.size == 0 or sv[-1] < 1e-10 * max(1.0, sv[0]):
        raise ValueError("Psi22 feedthrough is singular; triangular form undefined")
    Mi = np.linalg.inv(M22)
    Ab = psi.A - B2 @ Mi @ C2
    Bb1 = B1 - B2 @ Mi @ M21
    Bb2 = B2 @ Mi
    Cb = C1 - M12 @ Mi @ C2
    Db1 = M11 - M12 @ Mi @ M21
    Db2 = M12 @ Mi
    red = minimal_realization(StateSpace(Ab, np.hstack([Bb1, Bb2]), Cb,
                                         np.hstack([Db1, Db2])), tol)
    return TriangularFactor(red.A, red.B[:, :m1], red.B[:, m1:], red.C,
                            Db1, Db2, m1, m2, kind=fac.kind)


def proportional_sector_factor(alpha: float, eps: float = 0.01) -> TriangularFactor:
    """Triangular factor of the transformed sector multiplier, exact up to scale.

    The transformed sector multiplier admits a triangular factor satisfying
    scale * PsiBar~ W PsiBar = Pi exactly (no epsilon regularization):
    with kappa^2 = 1/eps and beta = 2 + eps,

        d = kappa / sqrt(kappa^2 + beta),   scale = kappa^2 + beta,
        PsiBar = [[1/((s+alpha) d scale), d], [0, 1]].

    Unlike the Schur-complement conversion of the regularized factor, this
    form keeps the dead-zone feedthrough (d close to 1), which preserves
    the sector information in the synthesis inequalities.
    """
    if alpha <= 0 or eps <= 0:
        raise ValueError("alpha and eps must be positive")
    kappa2 = 1.0 / eps
    beta = 2.0 + eps
    lam0 = kappa2 + beta
    d = np.sqrt(kappa2 / lam0)
    c_num = 1.0 / (d * lam0)
    return TriangularFactor(
        a=[[-alpha]], b1=[[1.0]], b2=[[0.0]],
        c=[[c_num]], d1=[[0.0]], d2=[[d]],
        m1=1, m2=1, kind="sector_transformed", scale=lam0)


@dataclass(frozen=True)
class UncertaintyBlock:
    """One block of the structured uncertainty: repeated scalar or full."""

    kind: str       # "scalar" (repeated scalar, size = multiplicity) or "full"
    size: int

    def __post_init__(self):
        if self.kind not in ("scalar", "full"):
            raise ValueError("block kind must be 'scalar' or 'full'")
        if self.size < 1:
            raise ValueError("block size must be positive")


def make_uncertainty_iqc(block: UncertaintyBlock, b: float) -> FactoredIQC:
    """Static factored IQC for one uncertainty block: Psi = diag(b I, I).

    The signature matrix records the channel split only; the actual scaling
    (a symmetric matrix for repeated-scalar blocks, a scalar for full
    blocks) is a synthesis decision variable, so the factor carries just
    the structure tag.
    """
    if b <= 0:
        raise ValueError("uncertainty bound b must be positive")
    k = block.size
    psi = StateSpace.static(sla.block_diag(b * np.eye(k), np.eye(k)))
    return FactoredIQC(psi, SignatureMatrix(k, k), k, k,
                       kind=f"uncertainty_{block.kind}",
                       multiplier=None,
                       diagnostics={"bound": b, "block": block})


def _foh_state_response(A, B, u, step):
    """States of xdot = A x + B u(t), u piecewise linear between samples.

    Diagonalizes A and runs one first-order recursion per eigenmode
    (vectorized with lfilter); exact for the interpolated input.
    """
    from scipy.signal import lfilter

    n = A.shape[0]
    lam, V = np.linalg.eig(A)
    Bm = np.linalg.solve(V, B)          # modal input matrix
    h = step
    E = np.exp(lam * h)
    small = np.abs(lam) < 1e-12
    lam_safe = np.where(small, 1.0, lam)
    g1 = np.where(small, h, (E - 1.0) / lam_safe)
    i2 = np.where(small, 0.5 * h * h, (g1 - h) / lam_safe)
    c1 = i2 / h                  # weight of u_{k+1}
    c0 = g1 - c1                 # weight of u_k
    drive = Bm @ u               # (n_modes, T)
    T = drive.shape[1]
    ks = np.arange(T)
    xm = np.empty_like(drive, dtype=complex)
    for i in range(n):
        b = np.array([c1[i], c0[i]], dtype=complex)
        a = np.array([1.0, -E[i]], dtype=complex)
        y = lfilter(b, a, drive[i])
        # remove the spurious response to the k = 0 sample so x[0] = 0
        xm[i] = y - (c1[i] * drive[i, 0]) * E[i] ** ks
    return (V @ xm).real


def check_hard_iqc(fac: FactoredIQC, probe, horizon: float, step: float = 1e-3,
                   tol: float = 1e-6) -> bool:
    """Hard-IQC property test along a sampled probe signal pair.

    probe is (v, w) sampled at ``step``; the factor is simulated with zero
    initial state (first-order-hold input reconstruction) and the running
    integral of z' W z must stay above -tol for every truncation time up
    to the horizon.
    """
    v, w = probe
    v = np.atleast_2d(np.asarray(v, dtype=float))
    w = np.atleast_2d(np.asarray(w, dtype=float))
    if v.shape[0] != fac.m1:
        v = v.reshape(fac.m1, -1)
    if w.shape[0] != fac.m2:
        w = w.reshape(fac.m2, -1)
    n_t = min(v.shape[1], w.shape[1], int(round(horizon / step)) + 1)
    psi, Wm = fac.psi, fac.w.as_matrix()
    u = np.vstack([v[:, :n_t], w[:, :n_t]])
    if psi.n:
        x = _foh_state_response(psi.A, psi.B, u, step)
        z = psi.C @ x + psi.D @ u
    else:
        z = psi.D @ u
    quad = np.einsum("it,ij,jt->t", z, Wm, z)
    running = np.concatenate([[0.0], np.cumsum(0.5 * (quad[1:] + quad[:-1]) * step)])
    scale = 1.0 + float(np.max(np.abs(running)))
    return bool(np.min(running) >= -tol * scale)
