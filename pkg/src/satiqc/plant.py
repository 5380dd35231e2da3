"""Saturated uncertain LFT plant, loop transformation, and closed-loop assembly."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .statespace import is_hurwitz, eigenvalues
from .factorization import TriangularFactor, FactoredIQC

__all__ = [
    "UncertaintyStructure",
    "SaturatedLFTPlant",
    "AugmentedPlant",
    "FilterStack",
    "ClosedLoop",
    "saturate",
    "deadzone",
    "loop_transform",
    "attach_filters",
]


def saturate(u, u_bar):
    """Componentwise saturation to [-u_bar, u_bar]."""
    u = np.asarray(u, dtype=float)
    u_bar = np.broadcast_to(np.asarray(u_bar, dtype=float), u.shape)
    return np.clip(u, -u_bar, u_bar)


def deadzone(u, u_bar):
    """Dead-zone nonlinearity u - Sat(u), componentwise."""
    u = np.asarray(u, dtype=float)
    u_bar = np.asarray(u_bar, dtype=float)
    if u_bar.ndim and u_bar.shape != u.shape and u_bar.size != u.size:
        if u_bar.size != 1:
            raise ValueError("dimension mismatch between u and u_bar")
    if np.any(u_bar <= 0):
        raise ValueError("saturation bound must be positive")
    return u - saturate(u, u_bar)


@dataclass(frozen=True)
class UncertaintyStructure:
    """Block structure of the time-varying uncertainty.

    scalar_blocks lists multiplicities of repeated-scalar blocks,
    full_blocks the sizes of full blocks; bound is the common norm bound.
    An empty structure (n_q = 0) is allowed.
    """

    scalar_blocks: tuple = ()
    full_blocks: tuple = ()
    bound: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "scalar_blocks", tuple(int(m) for m in self.scalar_blocks))
        object.__setattr__(self, "full_blocks", tuple(int(r) for r in self.full_blocks))
        if any(m < 1 for m in self.scalar_blocks + self.full_blocks):
            raise ValueError("block sizes must be positive")
        if self.n_q > 0 and self.bound <= 0:
            raise ValueError("uncertainty bound must be positive")

    @property
    def n_q(self) -> int:
        return sum(self.scalar_blocks) + sum(self.full_blocks)

    def blocks(self):
        """Yield (kind, size, offset) per block in channel order."""
        off = 0
        for m in self.scalar_blocks:
            yield ("scalar", m, off)
            off += m
        for r in self.full_blocks:
            yield ("full", r, off)
            off += r

    def sample(self, rng: np.random.Generator, t: float = 0.0,
               mode: str = "sin") -> np.ndarray:
        """A time sample of an admissible uncertainty matrix Delta(t)."""
        if self.n_q == 0:
            return np.zeros((0, 0))
        parts = []
        for kind, size, off in self.blocks():
            if kind == "scalar":
                if mode == "sin":
                    d = self.bound * np.sin(t + off)
                else:
                    d = self.bound * (2 * rng.random() - 1)
                parts.append(d * np.eye(size))
            else:
                if mode == "sin":
                    M = np.full((size, size), np.sin(t + off)) / size
                else:
                    M = rng.standard_normal((size, size))
                s = np.linalg.svd(M, compute_uv=False)[0]
                if s > 0:
                    M = M / s
                parts.append(self.bound * M)
        return sla.block_diag(*parts)


@dataclass(frozen=True)
class SaturatedLFTPlant:
    """Uncertain LFT plant with input saturation.

        xdot = A x + B1 p + B2 d + B0 Sat(u)
        q    = C0 x + D01 p + D02 d + D00 Sat(u)
        e    = C1 x + D11 p + D12 d + D10 Sat(u)
        p    = Delta q

    The control enters only through Sat(u), so the loop transformation
    (u as an auxiliary state driven by v) is always well defined.
    """

    A: np.ndarray
    B0: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C0: np.ndarray
    D00: np.ndarray
    D01: np.ndarray
    D02: np.ndarray
    C1: np.ndarray
    D10: np.ndarray
    D11: np.ndarray
    D12: np.ndarray
    structure: UncertaintyStructure = field(default_factory=UncertaintyStructure)
    u_bar: np.ndarray = field(default_factory=lambda: np.array([1.0]))
    alpha: float = 1.0

    def __post_init__(self):
        def fix(name, rows, cols):
            M = np.asarray(getattr(self, name), dtype=float)
            M = np.atleast_2d(M)
            if M.size == 0:
                M = M.reshape(rows, cols)
            if M.shape != (rows, cols):
                raise ValueError(f"{name} must be {rows}x{cols}, got {M.shape}")
            object.__setattr__(self, name, M)

        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        object.__setattr__(self, "A", A)
        nx = A.shape[0]
        if A.shape != (nx, nx):
            raise ValueError("A must be square")
        nu = np.atleast_2d(np.asarray(self.B0, dtype=float)).shape[1]
        nq = self.structure.n_q
        nd = np.atleast_2d(np.asarray(self.B2, dtype=float)).shape[1]
        ne = np.atleast_2d(np.asarray(self.C1, dtype=float)).reshape(-1, nx if nx else 1).shape[0] \
            if np.asarray(self.C1).size else np.atleast_2d(np.asarray(self.D12)).shape[0]
        ne = np.atleast_2d(np.asarray(self.D12, dtype=float)).shape[0]
        fix("B0", nx, nu)
        fix("B1", nx, nq)
        fix("B2", nx, nd)
        fix("C0", nq, nx)
        fix("D00", nq, nu)
        fix("D01", nq, nq)
        fix("D02", nq, nd)
        fix("C1", ne, nx)
        fix("D10", ne, nu)
        fix("D11", ne, nq)
        fix("D12", ne, nd)
        u_bar = np.asarray(self.u_bar, dtype=float).reshape(-1)
        if u_bar.size == 1 and nu > 1:
            u_bar = np.full(nu, u_bar[0])
        if u_bar.size != nu:
            raise ValueError("u_bar must have one entry per control channel")
        if np.any(u_bar <= 0):
            raise ValueError("u_bar must be positive")
        object.__setattr__(self, "u_bar", u_bar)
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if nx and not is_hurwitz(self.A):
            warnings.warn("plant A matrix is not Hurwitz (Assumption 1 violated)")
        if nx and not _stabilizable(self.A, np.hstack([self.B1, self.B0])):
            warnings.warn("(A, [B1 B0]) is not stabilizable (Assumption 1 violated)")

    @property
    def nx(self):
        return self.A.shape[0]

    @property
    def nu(self):
        return self.B0.shape[1]

    @property
    def nq(self):
        return self.structure.n_q

    @property
    def nd(self):
        return self.B2.shape[1]

    @property
    def ne(self):
        return self.C1.shape[0]


def _stabilizable(A, B, tol=1e-8) -> bool:
    """PBH test: rank [A - sI, B] = n at every unstable eigenvalue."""
    n = A.shape[0]
    for lam in eigenvalues(A):
        if lam.real >= -tol:
            M = np.hstack([A - lam * np.eye(n), B])
            if np.linalg.matrix_rank(M, tol=1e-9 * max(1.0, np.abs(lam))) < n:
                return False
    return True


@dataclass(frozen=True)
class AugmentedPlant:
    """Loop-transformed plant with state [x; u] and inputs (p, w, d, v)."""

    plant: SaturatedLFTPlant

    @property
    def alpha(self):
        return self.plant.alpha

    @property
    def n(self):
        return self.plant.nx + self.plant.nu

    def a_block(self) -> np.ndarray:
        p = self.plant
        return np.block([
            [p.A, p.B0],
            [np.zeros((p.nu, p.nx)), -p.alpha * np.eye(p.nu)],
        ])

    def b_p(self) -> np.ndarray:
        p = self.plant
        return np.vstack([p.B1, np.zeros((p.nu, p.nq))])

    def b_w(self) -> np.ndarray:
        p = self.plant
        return np.vstack([-p.B0, np.zeros((p.nu, p.nu))])

    def b_d(self) -> np.ndarray:
        p = self.plant
        return np.vstack([p.B2, np.zeros((p.nu, p.nd))])

    def b_v(self) -> np.ndarray:
        p = self.plant
        return np.vstack([np.zeros((p.nx, p.nu)), np.eye(p.nu)])

    def c_q(self) -> np.ndarray:
        p = self.plant
        return np.hstack([p.C0, p.D00])

    def c_e(self) -> np.ndarray:
        p = self.plant
        return np.hstack([p.C1, p.D10])

    def block_matrix(self) -> np.ndarray:
        """The full transformed realization over [x, u, p, w, d, v]."""
        p = self.plant
        top = np.hstack([self.a_block(), self.b_p(), self.b_w(), self.b_d(), self.b_v()])
        qrow = np.hstack([self.c_q(), p.D01, -p.D00, p.D02, np.zeros((p.nq, p.nu))])
        erow = np.hstack([self.c_e(), p.D11, -p.D10, p.D12, np.zeros((p.ne, p.nu))])
        return np.vstack([top, qrow, erow])


def loop_transform(plant: SaturatedLFTPlant) -> AugmentedPlant:
    """Absorb the loop-transformation factor into the plant.

    The dead-zone input u becomes a state driven by udot = -alpha u + v;
    Sat(u) = u - w splits the saturated-input columns into a +column on the
    u state and a -column on the dead-zone output w.
    """
    return AugmentedPlant(plant)


@dataclass(frozen=True)
class FilterStack:
    """Block-diagonal stack of nonlinearity IQC filters (one per multiplier)."""

    factors: tuple

    def __post_init__(self):
        facs = tuple(self.factors)
        if not facs:
            raise ValueError("at least one nonlinearity IQC filter is required")
        nu = facs[0].m1
        for f in facs:
            if f.m1 != nu or f.m2 != nu:
                raise ValueError("filter channel widths must match the control dimension")
        object.__setattr__(self, "factors", facs)

    @property
    def count(self) -> int:
        return len(self.factors)

    @property
    def nu(self) -> int:
        return self.factors[0].m1

    @property
    def n_psi(self) -> int:
        return sum(f.n for f in self.factors)

    def a_matrix(self) -> np.ndarray:
        return sla.block_diag(*[f.a for f in self.factors]) if self.n_psi else np.zeros((0, 0))

    def b1(self) -> np.ndarray:
        return np.vstack([f.b1 for f in self.factors]) if self.n_psi else np.zeros((0, self.nu))

    def b2(self) -> np.ndarray:
        return np.vstack([f.b2 for f in self.factors]) if self.n_psi else np.zeros((0, self.nu))

    def c_rows(self):
        """Per-filter output row over the stacked filter state."""
        rows = []
        off = 0
        for f in self.factors:
            C = np.zeros((self.nu, self.n_psi))
            C[:, off:off + f.n] = f.c
            rows.append(C)
            off += f.n
        return rows


def _uncertainty_feedthroughs(structure: UncertaintyStructure,
                              unc_filters) -> list:
    """Per-block (D1k, D2k, size, offset) of the static uncertainty filters."""
    out = []
    filters = list(unc_filters) if unc_filters is not None else []
    blocks = list(structure.blocks())
    if filters and len(filters) != len(blocks):
        raise ValueError("one uncertainty filter per block is required")
    for i, (kind, size, off) in enumerate(blocks):
        if filters:
            f = filters[i]
            b = f.diagnostics.get("bound", structure.bound)
            if f.m1 != size or f.m2 != size:
                raise ValueError("uncertainty filter size mismatch")
        else:
            b = structure.bound
        out.append((b * np.eye(size), np.zeros((size, size)), size, off))
    return out


@dataclass(frozen=True)
class ClosedLoop:
    """Augmented closed loop of plant, IQC filters, and (optional) gains.

    With gains absent this is the open interconnection (v free), carrying
    the constant blocks the synthesis LMI substitutes decision variables
    into; with gains present all closed-loop matrices are materialized.
    """

    aug: AugmentedPlant
    filters: FilterStack
    unc: tuple          # per-block (D1k, D2k, size, offset)
    Fc: np.ndarray | None = None
    Hc: np.ndarray | None = None

    # ---- dimensions ----
    @property
    def plant(self) -> SaturatedLFTPlant:
        return self.aug.plant

    @property
    def n_cl(self) -> int:
        return self.aug.n + self.filters.n_psi

    @property
    def nu(self) -> int:
        return self.plant.nu

    @property
    def nq(self) -> int:
        return self.plant.nq

    # ---- open-interconnection blocks (controller-free) ----
    def a0(self) -> np.ndarray:
        n_psi = self.filters.n_psi
        return np.block([
            [self.aug.a_block(), np.zeros((self.aug.n, n_psi))],
            [np.zeros((n_psi, self.aug.n)), self.filters.a_matrix()],
        ])

    def b_v(self) -> np.ndarray:
        return np.vstack([self.aug.b_v(), self.filters.b1()])

    def b_p(self) -> np.ndarray:
        return np.vstack([self.aug.b_p(), np.zeros((self.filters.n_psi, self.nq))])

    def b_w0(self) -> np.ndarray:
        return np.vstack([self.aug.b_w(), self.filters.b2()])

    def b_d(self) -> np.ndarray:
        return np.vstack([self.aug.b_d(), np.zeros((self.filters.n_psi, self.plant.nd))])

    def c_q_full(self) -> np.ndarray:
        return np.hstack([self.aug.c_q(), np.zeros((self.nq, self.filters.n_psi))])

    def c_e_full(self) -> np.ndarray:
        return np.hstack([self.aug.c_e(), np.zeros((self.plant.ne, self.filters.n_psi))])

    def unc_rows(self):
        """Per-block (C_row, Dp, Dw, Dd) of the z_Delta1 outputs."""
        p = self.plant
        rows = []
        for D1k, D2k, size, off in self.unc:
            E = np.zeros((size, self.nq))
            E[:, off:off + size] = np.eye(size)
            D1 = D1k @ E
            rows.append((
                D1 @ self.c_q_full(),
                D1 @ p.D01 + D2k @ E,
                -D1 @ p.D00,
                D1 @ p.D02,
            ))
        return rows

    # ---- Eq.(17)-style materialized matrices ----
    def with_gains(self, Fc, Hc) -> "ClosedLoop":
        Fc = np.atleast_2d(np.asarray(Fc, dtype=float))
        Hc = np.atleast_2d(np.asarray(Hc, dtype=float))
        if Fc.shape != (self.nu, self.n_cl):
            raise ValueError(f"Fc must be {self.nu}x{self.n_cl}")
        if Hc.shape != (self.nu, self.nu):
            raise ValueError(f"Hc must be {self.nu}x{self.nu}")
        return ClosedLoop(self.aug, self.filters, self.unc, Fc, Hc)

    def _need_gains(self):
        if self.Fc is None or self.Hc is None:
            raise ValueError("closed-loop matrices require controller gains")

    def a_cl(self) -> np.ndarray:
        self._need_gains()
        return self.a0() + self.b_v() @ self.Fc

    def b_cl0(self) -> np.ndarray:
        return self.b_p()

    def b_cl1(self) -> np.ndarray:
        self._need_gains()
        return self.b_w0() + self.b_v() @ self.Hc

    def b_cl2(self) -> np.ndarray:
        return self.b_d()

    def delta_output_rows(self):
        """Stacked (C_clDelta1, D_clDelta10, D_clDelta11, D_clDelta12)."""
        rows = self.unc_rows()
        if not rows:
            z = np.zeros((0, 0))
            return (np.zeros((0, self.n_cl)), np.zeros((0, self.nq)),
                    np.zeros((0, self.nu)), np.zeros((0, self.plant.nd)))
        return tuple(np.vstack(cols) for cols in zip(*rows))

    def nonlin_output_rows(self):
        """Per-filter (C_clN1, D_clN11); D_clN10 and D_clN12 vanish."""
        self._need_gains()
        out = []
        for Cl, f in zip(self.filters.c_rows(), self.filters.factors):
            C = np.hstack([np.zeros((self.nu, self.aug.n)), Cl]) + f.d1 @ self.Fc
            D11w = f.d1 @ self.Hc + f.d2
            out.append((C, D11w))
        return out

    def e_row(self):
        p = self.plant
        return (self.c_e_full(), p.D11, -p.D10, p.D12)

    def well_posed(self) -> bool:
        """Sufficient well-posedness check of the p = Delta q algebraic loop."""
        p = self.plant
        if p.nq == 0:
            return True
        return float(np.linalg.norm(p.D01, 2)) * p.structure.bound < 1.0


def attach_filters(aug: AugmentedPlant, nonlin_filters, unc_filters=None,
                   controller=None) -> ClosedLoop:
    """Wire the IQC filters (and optionally a controller) into the plant.

    nonlin_filters: TriangularFactor list (one per nonlinearity IQC).
    unc_filters: FactoredIQC list (one static factor per uncertainty block);
    defaults to the structure's bound when omitted.  controller, if given,
    is the pair (Fc, Hc).
    """
    filters = FilterStack(tuple(nonlin_filters))
    if filters.nu != aug.plant.nu:
        raise ValueError("filter channel width must equal the control dimension")
    unc = tuple(_uncertainty_feedthroughs(aug.plant.structure, unc_filters))
    cl = ClosedLoop(aug, filters, unc)
    if not cl.well_posed():
        raise ValueError("interconnection is not well posed: ||D01|| * b >= 1")
    if controller is not None:
        Fc, Hc = controller
        cl = cl.with_gains(Fc, Hc)
    return cl
