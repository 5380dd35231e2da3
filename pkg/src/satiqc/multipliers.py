"""IQC multiplier constructors.

A multiplier Pi(s) is para-Hermitian: Pi = Z + Z~ + D with Z stable and
strictly proper.  Each constructor below builds Z analytically (partial
fractions of the defining expression) and stores the full realization of
the proper part alongside the constant term, so the factorization pipeline
can run minimal realization and stable-part extraction on it unchanged.

Channel convention: the first m1 inputs are the nonlinearity input channel
(v after the loop transformation), the last m2 the dead-zone output w.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .statespace import StateSpace, SignatureMatrix, is_hurwitz

__all__ = [
    "Multiplier",
    "make_sector_multiplier",
    "make_popov_multiplier",
    "make_zames_falb_multiplier",
    "make_transformed_sector_multiplier",
    "impulse_response_l1_norm",
    "DEFAULT_EPS",
    "default_zf_filter",
]

DEFAULT_EPS = 0.01

# frequency grid used for multiplier sign/Hermitian checks; 1e6 stands in
# for the point at infinity
CHECK_GRID = np.concatenate([np.logspace(-3, 3, 40), [1e6]])


def _kron_channels(M2: np.ndarray, nu: int) -> np.ndarray:
    """Expand a 2x2 channel pattern to (2 nu)x(2 nu) block form."""
    return np.kron(M2, np.eye(nu))


@dataclass(frozen=True)
class Multiplier:
    """Para-Hermitian rational multiplier Pi = Zs + Zs~ + D.

    ``proper_part`` realizes Zs + Zs~ (strictly proper, mixed poles); the
    derived property ``pi`` gives Pi(jw) pointwise.  m1/m2 partition the
    channels.
    """

    zs: StateSpace            # stable, strictly proper part
    D: np.ndarray             # constant part, symmetric
    m1: int
    m2: int
    kind: str = "generic"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        object.__setattr__(self, "D", D)
        if D.shape != (self.m1 + self.m2, self.m1 + self.m2):
            raise ValueError("constant part has wrong dimensions")
        if self.zs.n and not is_hurwitz(self.zs.A):
            raise ValueError("proper-part realization must be stable")

    @property
    def size(self) -> int:
        return self.m1 + self.m2

    def proper_part(self) -> StateSpace:
        """Realization of Zs + Zs~ (poles mirrored across the axis)."""
        z = self.zs
        if z.n == 0:
            return StateSpace.static(np.zeros_like(self.D))
        A = sla.block_diag(z.A, -z.A.T)
        B = np.vstack([z.B, -z.C.T])
        C = np.hstack([z.C, z.B.T])
        return StateSpace(A, B, C, np.zeros_like(self.D))

    def pi(self, w: float) -> np.ndarray:
        """Pi(jw)."""
        z = self.zs.freqresp(w)
        return z + z.conj().T + self.D

    def is_para_hermitian(self, grid=CHECK_GRID, tol: float = 1e-9) -> bool:
        return all(np.linalg.norm(self.pi(w) - self.pi(w).conj().T) < tol for w in grid)

    def satisfies_sign_conditions(self, grid=CHECK_GRID, tol: float = 0.0) -> bool:
        """Pi11(jw) > 0 and Pi22(jw) < 0 on the grid (infinity proxied)."""
        for w in grid:
            P = self.pi(w)
            p11 = P[:self.m1, :self.m1]
            p22 = P[self.m1:, self.m1:]
            if self.m1 and np.min(np.linalg.eigvalsh(0.5 * (p11 + p11.conj().T)).real) <= tol:
                return False
            if self.m2 and np.max(np.linalg.eigvalsh(0.5 * (p22 + p22.conj().T)).real) >= -tol:
                return False
        return True


def make_sector_multiplier(eps: float = DEFAULT_EPS, nu: int = 1) -> Multiplier:
    """Static sector multiplier [[eps, 1], [1, -2-eps]] (per channel).

    Encodes the [0, 1] sector of the dead-zone, regularized so the sign
    conditions hold strictly.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    D = _kron_channels(np.array([[eps, 1.0], [1.0, -2.0 - eps]]), nu)
    zs = StateSpace.static(np.zeros_like(D))
    return Multiplier(zs, D, nu, nu, kind="sector", params={"eps": eps})


def make_popov_multiplier(alpha: float, eps: float = DEFAULT_EPS, nu: int = 1) -> Multiplier:
    """Loop-transformed Popov multiplier.

    diag(1/(s+a), 1)~ [[eps, -s], [s, -eps]] diag(1/(s+a), 1); its stable
    strictly proper part is [eps/(2a); -a] / (s+a) on the first channel and
    the constant part is [[0, 1], [1, -eps]].
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if eps <= 0:
        raise ValueError("eps must be positive")
    Az = -alpha * np.eye(nu)
    Bz = np.hstack([np.eye(nu), np.zeros((nu, nu))])
    Cz = np.vstack([eps / (2 * alpha) * np.eye(nu), -alpha * np.eye(nu)])
    D = _kron_channels(np.array([[0.0, 1.0], [1.0, -eps]]), nu)
    zs = StateSpace(Az, Bz, Cz, np.zeros_like(D))
    return Multiplier(zs, D, nu, nu, kind="popov", params={"alpha": alpha, "eps": eps})


def impulse_response_l1_norm(h: StateSpace, t_max: float = 200.0, n_steps: int = 200001) -> float:
    """L1 norm of the impulse response of a stable SISO-per-channel filter.

    Closed form for first-order systems; composite trapezoid on |C e^{At} B|
    otherwise, with the tail beyond t_max bounded by the slowest pole.
    """
    if h.n == 0:
        return 0.0
    if not is_hurwitz(h.A):
        raise ValueError("impulse response filter must be stable")
    if h.n == 1 and h.B.shape[1] == 1 and h.C.shape[0] == 1:
        a = float(h.A[0, 0])
        return abs(float(h.C[0, 0] * h.B[0, 0])) / abs(a)
    t = np.linspace(0.0, t_max, n_steps)
    dt = t[1] - t[0]
    E = sla.expm(h.A * dt)
    x = h.B.copy()
    vals = np.empty(n_steps)
    for i in range(n_steps):
        vals[i] = np.linalg.norm(h.C @ x, 2)
        x = E @ x
    total = float(np.trapezoid(vals, dx=dt))
    decay = -float(np.max(np.linalg.eigvals(h.A).real))
    tail = vals[-1] / decay
    return total + tail


def default_zf_filter() -> StateSpace:
    """Default Zames-Falb weighting H(s) = 1/(s+2); L1 norm 1/2."""
    return StateSpace([[-2.0]], [[1.0]], [[1.0]], [[0.0]])


def make_zames_falb_multiplier(alpha: float, eps: float = DEFAULT_EPS,
                               h: StateSpace | None = None, nu: int = 1) -> Multiplier:
    """Loop-transformed Zames-Falb multiplier.

    diag(1/(s+a), 1)~ [[eps, 1+H], [1+H~, -2-eps-H-H~]] diag(1/(s+a), 1)
    with H stable, strictly proper and L1-bounded by 1.  h=None uses the
    default 1/(s+2); a static zero h collapses to the transformed sector
    multiplier.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if eps <= 0:
        raise ValueError("eps must be positive")
    if h is None:
        h = default_zf_filter()
    if np.any(h.D != 0.0):
        raise ValueError("Zames-Falb filter must be strictly proper")
    if h.n and not is_hurwitz(h.A):
        raise ValueError("Zames-Falb filter must be stable")
    l1 = impulse_response_l1_norm(h)
    if l1 > 1.0 + 1e-9:
        raise ValueError(f"L1 bound violated: impulse-response norm {l1:.6g} > 1")
    if nu != 1 and h.n:
        raise ValueError("dynamic Zames-Falb filters are implemented per scalar channel")
    nh = h.n
    h_alpha = (h.C @ np.linalg.solve(alpha * np.eye(nh) - h.A, h.B)).item() if nh else 0.0
    b_const = -(2.0 + eps)
    if nh == 0:
        Az = -alpha * np.eye(nu)
        Bz = np.hstack([np.eye(nu), np.zeros((nu, nu))])
        Cz = np.vstack([eps / (2 * alpha) * np.eye(nu), np.eye(nu)])
        D = _kron_channels(np.array([[0.0, 0.0], [0.0, b_const]]), nu)
        zs = StateSpace(Az, Bz, Cz, np.zeros_like(D))
        kind = "sector_transformed"
    else:
        # stable part columns: channel 1 shares the pole at -alpha, channel 2
        # carries the two H-driven branches (merged later by minreal)
        Az = sla.block_diag(-alpha * np.eye(1), h.A, h.A)
        Bz = np.zeros((1 + 2 * nh, 2))
        Bz[0, 0] = 1.0
        Bz[1:1 + nh, 1:] = np.linalg.solve(alpha * np.eye(nh) - h.A, h.B)
        Bz[1 + nh:, 1:] = h.B
        Cz = np.zeros((2, 1 + 2 * nh))
        Cz[0, 0] = eps / (2 * alpha)
        Cz[1, 0] = 1.0 + h_alpha
        Cz[0, 1:1 + nh] = h.C
        Cz[1, 1 + nh:] = -h.C
        D = np.array([[0.0, 0.0], [0.0, b_const]])
        zs = StateSpace(Az, Bz, Cz, np.zeros_like(D))
        kind = "zames_falb"
    return Multiplier(zs, D, nu, nu, kind=kind,
                      params={"alpha": alpha, "eps": eps, "h": h})


def make_transformed_sector_multiplier(alpha: float, eps: float = DEFAULT_EPS,
                                       nu: int = 1) -> Multiplier:
    """Sector multiplier wrapped with diag(1/(s+a), 1) (Zames-Falb with H = 0)."""
    h0 = StateSpace.static([[0.0]])
    return make_zames_falb_multiplier(alpha, eps, h0, nu)
