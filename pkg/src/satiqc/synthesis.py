"""Scaled-bounded-real-lemma LMIs: analysis, synthesis, pole regions, baseline.

The synthesis inequality is affine in (Q, Gamma_hat, lambda_hat_l,
lambda_hat, F_hat, H_hat, gamma) after the congruence transformation and
the scalar relaxation; gamma enters linearly, so the gain bound is
minimized directly (a bisection fallback is kept for ill-conditioned
backends).  Controller gains are recovered as Fc = F_hat Q^{-1} and
Hc = H_hat / lambda_hat.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .lmi import LmiProblem, AffExpr, bmat, he
from .plant import ClosedLoop, SaturatedLFTPlant, UncertaintyStructure
from .statespace import eigenvalues

__all__ = [
    "SynthesisOptions",
    "SynthesisResult",
    "build_synthesis_lmi",
    "build_analysis_lmi",
    "add_pole_region",
    "build_antiwindup_lmi",
    "solve_synthesis",
    "solve_analysis",
    "solve_antiwindup",
    "analysis_certificate_margin",
]


@dataclass(frozen=True)
class SynthesisOptions:
    """Knobs of the synthesis program.

    scalings: "free" keeps the relaxation scalar and the per-IQC inverse
    scalings as decision variables (the fully convexified program);
    "anchored" pins both at the relaxation's exactness point (unit
    scaling), which regularizes the otherwise scale-degenerate single-IQC
    designs.  feedthrough enables the dead-zone feedback term Hc.
    q_max bounds Q to avoid numerical singularity; q_min sets the
    positive-definiteness margin.
    """

    scalings: str = "free"
    feedthrough: bool = True
    q_max: float | None = 1e6
    q_min: float = 1e-7
    strictness: float = 1e-8
    pole_region: tuple | None = None      # (rho, theta)
    gamma_min: float = 1e-7
    # lower bound on the inverse scalings in free mode; bounds the recovered
    # multiplier weights (lambda <= 1/floor) so certificates stay well scaled
    scaling_floor: float = 1e-2


@dataclass
class SynthesisResult:
    gamma: float
    Fc: np.ndarray
    Hc: np.ndarray
    lambdas: np.ndarray
    Gamma: np.ndarray
    Q: np.ndarray
    closed_loop: ClosedLoop
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "Fc": self.Fc.tolist(),
            "Hc": self.Hc.tolist(),
            "lambdas": self.lambdas.tolist(),
            "Gamma": self.Gamma.tolist(),
            "Q": self.Q.tolist(),
            "diagnostics": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                            for k, v in self.diagnostics.items()},
        }


def _gamma_hat_expr(prob: LmiProblem, structure: UncertaintyStructure, prefix: str):
    """Block-diagonal scaling expression and the per-block sub-expressions."""
    nq = structure.n_q
    if nq == 0:
        return None, []
    blocks = []
    for i, (kind, size, off) in enumerate(structure.blocks()):
        if kind == "scalar" and size > 1:
            Xi = prob.sym(f"{prefix}_X{i}", size)
            prob.require_pos_def(Xi, name=f"{prefix}_X{i}_pd")
        else:
            chi = prob.scalar(f"{prefix}_chi{i}", lb=prob.strictness)
            Xi = prob.scalar_times(chi, np.eye(size))
        blocks.append((Xi, size, off))
    rows = []
    for Xi, size, off in blocks:
        right_w = nq - off - size
        row = []
        if off:
            row.append(np.zeros((size, off)))
        row.append(Xi)
        if right_w:
            row.append(np.zeros((size, right_w)))
        rows.append(row)
    return bmat(rows), blocks


def build_synthesis_lmi(cl: ClosedLoop, opts: SynthesisOptions = SynthesisOptions()):
    """Assemble the convex state-feedback synthesis program.

    Returns (prob, meta); meta carries the variable names needed for gain
    recovery.  cl must be the open interconnection (no gains).
    """
    plant = cl.plant
    n_cl = cl.n_cl
    nu, nq, nd, ne = plant.nu, plant.nq, plant.nd, plant.ne
    N = cl.filters.count
    prob = LmiProblem(strictness=opts.strictness)

    Q = prob.sym("Q", n_cl)
    gam = prob.scalar("gamma", lb=opts.gamma_min)
    Fh = prob.rect("F_hat", nu, n_cl)
    if opts.scalings == "anchored":
        lam_hat = AffExpr.constant(np.ones((1, 1)))
        lam_hat_l = [AffExpr.constant(np.ones((1, 1))) for _ in range(N)]
    else:
        lam_hat = prob.scalar("lam_hat", lb=opts.scaling_floor)
        lam_hat_l = [prob.scalar(f"lam_hat_{l}", lb=opts.scaling_floor) for l in range(N)]
    if opts.feedthrough:
        Hh = prob.rect("H_hat", nu, nu)
    else:
        Hh = AffExpr.constant(np.zeros((nu, nu)))

    Ghat, gblocks = _gamma_hat_expr(prob, plant.structure, "Ghat")

    A0, Bv = cl.a0(), cl.b_v()
    Bp, Bw0, Bd = cl.b_p(), cl.b_w0(), cl.b_d()
    Ce = cl.c_e_full()

    AQ = Q.lmul(A0) + Fh.lmul(Bv)
    r11 = he(AQ)
    r31 = _scalar_mul(prob, lam_hat, Bw0.T) + Hh.T.rmul(Bv.T)
    sum_lhl = lam_hat_l[0]
    for e in lam_hat_l[1:]:
        sum_lhl = sum_lhl + e
    r33 = _scalar_mul(prob, sum_lhl, np.eye(nu)) + _scalar_mul(prob, lam_hat, -2.0 * N * np.eye(nu))
    r44 = _scalar_mul(prob, gam, -np.eye(nd))
    r77 = _scalar_mul(prob, gam, -np.eye(ne))
    R71 = Q.lmul(Ce)
    R73 = _scalar_mul(prob, lam_hat, -plant.D10)

    # nonlinearity IQC rows
    O61_rows, O63_rows, r66_rows = [], [], []
    for l, (Cl, f) in enumerate(zip(cl.filters.c_rows(), cl.filters.factors)):
        Cfull = np.hstack([np.zeros((nu, cl.aug.n)), Cl])
        O61_rows.append(Q.lmul(Cfull) + Fh.lmul(f.d1))
        O63_rows.append(Hh.lmul(f.d1) + _scalar_mul(prob, lam_hat, f.d2))
        r66_rows.append(_scalar_mul(prob, lam_hat_l[l], -np.eye(nu)))
    O61 = bmat([[r] for r in O61_rows])
    O63 = bmat([[r] for r in O63_rows])
    r66 = bmat([[r66_rows[i] if i == j else np.zeros((nu, nu)) for j in range(N)]
                for i in range(N)])

    Z = np.zeros
    if nq:
        r21 = Ghat.rmul(Bp.T)
        r22 = -Ghat
        # uncertainty IQC rows: Omega_5*
        O51_rows, O52_rows, O53_rows, O54_rows = [], [], [], []
        for (D1k, D2k, size, off) in cl.unc:
            E = np.zeros((size, nq))
            E[:, off:off + size] = np.eye(size)
            D1 = D1k @ E
            O51_rows.append(Q.lmul(D1 @ cl.c_q_full()))
            O52_rows.append(Ghat.lmul(D1 @ plant.D01 + D2k @ E))
            O53_rows.append(_scalar_mul(prob, lam_hat, -D1 @ plant.D00))
            O54_rows.append(AffExpr.constant(D1 @ plant.D02))
        O51 = bmat([[r] for r in O51_rows])
        O52 = bmat([[r] for r in O52_rows])
        O53 = bmat([[r] for r in O53_rows])
        O54 = bmat([[r] for r in O54_rows])
        R72 = Ghat.lmul(plant.D11)
        M = bmat([
            [r11,   r21.T,            r31.T,          Bd,             O51.T,            O61.T,            R71.T],
            [r21,   r22,              Z((nq, nu)),    Z((nq, nd)),    O52.T,            Z((nq, N * nu)),  R72.T],
            [r31,   Z((nu, nq)),      r33,            Z((nu, nd)),    O53.T,            O63.T,            R73.T],
            [Bd.T,  Z((nd, nq)),      Z((nd, nu)),    r44,            O54.T,            Z((nd, N * nu)),  plant.D12.T],
            [O51,   O52,              O53,            O54,            -Ghat,            Z((nq, N * nu)),  Z((nq, ne))],
            [O61,   Z((N * nu, nq)),  O63,            Z((N * nu, nd)), Z((N * nu, nq)), r66,              Z((N * nu, ne))],
            [R71,   R72,              R73,            plant.D12,      Z((ne, nq)),      Z((ne, N * nu)),  r77],
        ])
    else:
        M = bmat([
            [r11,   r31.T,           Bd,           O61.T,            R71.T],
            [r31,   r33,             Z((nu, nd)),  O63.T,            R73.T],
            [Bd.T,  Z((nd, nu)),     r44,          Z((nd, N * nu)),  plant.D12.T],
            [O61,   O63,             Z((N * nu, nd)), r66,           Z((N * nu, ne))],
            [R71,   R73,             plant.D12,    Z((ne, N * nu)),  r77],
        ])
    prob.require_neg_def(M, name="synthesis")
    prob.require_pos_def(Q - AffExpr.constant(opts.q_min * np.eye(n_cl)), name="Q_pd", margin=0.0)
    if opts.q_max is not None:
        prob.require_neg_def(Q - AffExpr.constant(opts.q_max * np.eye(n_cl)), name="Q_cap", margin=0.0)
    if opts.pole_region is not None:
        add_pole_region(prob, AQ, Q, *opts.pole_region)
    prob.minimize("gamma")
    meta = {
        "n_cl": n_cl, "N": N, "nq": nq, "opts": opts, "gblocks": gblocks,
        "AQ_blocks": (A0, Bv),
    }
    return prob, meta


def _scalar_mul(prob: LmiProblem, scalar_expr: AffExpr, M) -> AffExpr:
    """(scalar expression) * constant matrix, accepting constant scalars."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not scalar_expr.lin:
        return AffExpr.constant(scalar_expr.const.item() * M)
    return prob.scalar_times(scalar_expr, M)


def add_pole_region(prob: LmiProblem, AQ: AffExpr, Q: AffExpr, rho: float, theta: float):
    """Closed-loop pole clustering: Re(s) < -rho inside a sector of half-angle theta.

    Both inequalities share the synthesis variable Q (the common-solution
    convexification), with A_cl entering in its variable-substituted form.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    if not (0 < theta < np.pi / 2):
        raise ValueError("theta must be in (0, pi/2)")
    n = AQ.shape[0]
    prob.require_neg_def(he(AQ) + Q * (2.0 * rho), name="pole_shift")
    s, c = np.sin(theta), np.cos(theta)
    sym = he(AQ) * s
    skew = (AQ - AQ.T) * c
    prob.require_neg_def(bmat([[sym, skew], [skew.T, sym]]), name="pole_sector")


def solve_synthesis(cl: ClosedLoop, opts: SynthesisOptions = SynthesisOptions(),
                    gap: float = 1e-9, feas_tol: float = 1e-7,
                    solver: str = "auto") -> SynthesisResult:
    prob, meta = build_synthesis_lmi(cl, opts)
    info = prob.solve(gap=gap, feas_tol=feas_tol, solver=solver)
    if info.status not in ("optimal", "optimal_inaccurate") or info.objective is None:
        raise RuntimeError(f"synthesis failed: {info.status}")
    a = info.assignment
    Q = a["Q"]
    Fh = a["F_hat"]
    nu = cl.plant.nu
    Hh = a.get("H_hat", np.zeros((nu, nu)))
    lam_hat = a.get("lam_hat", 1.0)
    N = meta["N"]
    lam_hat_l = np.array([a.get(f"lam_hat_{l}", 1.0) for l in range(N)])
    Fc = np.linalg.solve(Q.T, np.atleast_2d(Fh).T).T
    Hc = np.atleast_2d(Hh) / lam_hat
    lambdas = 1.0 / lam_hat_l
    Gamma_hat = _gamma_from_blocks(meta["gblocks"], a, cl.plant.structure)
    Gamma = np.linalg.inv(Gamma_hat) if Gamma_hat.size else Gamma_hat
    gaps = lam_hat ** -2 * lam_hat_l - 2.0 / lam_hat + 1.0 / lam_hat_l
    result = SynthesisResult(
        gamma=float(info.objective),
        Fc=Fc, Hc=Hc, lambdas=lambdas, Gamma=Gamma, Q=Q,
        closed_loop=cl.with_gains(Fc, Hc),
        diagnostics={
            "status": info.status, "solver": info.solver,
            "margins": info.margins, "lam_hat": lam_hat,
            "relaxation_gap": gaps, "scalings": opts.scalings,
            "feedthrough": opts.feedthrough,
        })
    return result


def _gamma_from_blocks(gblocks, assignment, structure: UncertaintyStructure,
                       prefix: str = "Ghat") -> np.ndarray:
    nq = structure.n_q
    if nq == 0:
        return np.zeros((0, 0))
    G = np.zeros((nq, nq))
    for i, (kind, size, off) in enumerate(structure.blocks()):
        if kind == "scalar" and size > 1:
            G[off:off + size, off:off + size] = assignment[f"{prefix}_X{i}"]
        else:
            G[off:off + size, off:off + size] = assignment[f"{prefix}_chi{i}"] * np.eye(size)
    return G


# ---------------------------------------------------------------------------
# analysis LMI (fixed controller)
# ---------------------------------------------------------------------------

def build_analysis_lmi(cl: ClosedLoop, gamma_fixed: float | None = None,
                       strictness: float = 1e-8):
    """Robust-performance analysis program for a fixed closed loop.

    Affine in (P, X_k, chi_k, lambda_l, gamma): the uncertainty and
    nonlinearity quadratic terms enter linearly because the closed-loop
    matrices are constant, and the performance term is Schur-complemented
    into a -gamma I block.
    """
    cl._need_gains()
    plant = cl.plant
    n_cl, nu, nq, nd, ne = cl.n_cl, plant.nu, plant.nq, plant.nd, plant.ne
    N = cl.filters.count
    prob = LmiProblem(strictness=strictness)
    P = prob.sym("P", n_cl)
    prob.require_pos_def(P, name="P_pd")
    if gamma_fixed is None:
        gam = prob.scalar("gamma", lb=1e-9)
    else:
        gam = AffExpr.constant(np.array([[float(gamma_fixed)]]))
    lam = [prob.scalar(f"lam_{l}", lb=prob.strictness) for l in range(N)]
    Gamma, gblocks = _gamma_hat_expr(prob, plant.structure, "G")

    Acl = cl.a_cl()
    B0c, B1c, B2c = cl.b_cl0(), cl.b_cl1(), cl.b_cl2()

    r11 = he(P.rmul(Acl))
    sum_lam = lam[0]
    for e in lam[1:]:
        sum_lam = sum_lam + e
    r33 = _scalar_mul(prob, sum_lam, -np.eye(nu))
    r44 = _scalar_mul(prob, gam, -np.eye(nd))
    Z = np.zeros
    if nq:
        core = bmat([
            [r11, P.rmul(B0c), P.rmul(B1c), P.rmul(B2c)],
            [P.rmul(B0c).T, -Gamma, Z((nq, nu)), Z((nq, nd))],
            [P.rmul(B1c).T, Z((nu, nq)), r33, Z((nu, nd))],
            [P.rmul(B2c).T, Z((nd, nq)), Z((nd, nu)), r44],
        ])
    else:
        core = bmat([
            [r11, P.rmul(B1c), P.rmul(B2c)],
            [P.rmul(B1c).T, r33, Z((nu, nd))],
            [P.rmul(B2c).T, Z((nd, nu)), r44],
        ])

    # uncertainty terms, linear in the scalings
    if nq:
        rows = cl.unc_rows()
        for i, ((kind, size, off), (Cr, Dp, Dw, Dd)) in enumerate(
                zip(plant.structure.blocks(), rows)):
            Theta = np.hstack([Cr, Dp, Dw, Dd])   # size x core_n
            Xi = gblocks[i][0]
            core = core + Xi.lmul(Theta.T).rmul(Theta)
    # nonlinearity terms
    for l, (Cn, Dw) in enumerate(cl.nonlin_output_rows()):
        if nq:
            Xi_row = np.hstack([Cn, np.zeros((nu, nq)), Dw, np.zeros((nu, nd))])
        else:
            Xi_row = np.hstack([Cn, Dw, np.zeros((nu, nd))])
        core = core + _scalar_mul(prob, lam[l], Xi_row.T @ Xi_row)

    Ce, De0, De1, De2 = cl.e_row()
    if nq:
        Erow = np.hstack([Ce, De0, De1, De2])
    else:
        Erow = np.hstack([Ce, De1, De2])
    M = bmat([
        [core, AffExpr.constant(Erow.T)],
        [AffExpr.constant(Erow), _scalar_mul(prob, gam, -np.eye(ne))],
    ])
    prob.require_neg_def(M, name="analysis")
    if gamma_fixed is None:
        prob.minimize("gamma")
    return prob, {"gblocks": gblocks, "N": N}


def solve_analysis(cl: ClosedLoop, solver: str = "auto") -> dict:
    """Minimize the certified gain for a fixed closed loop."""
    prob, meta = build_analysis_lmi(cl)
    info = prob.solve(solver=solver)
    if info.status not in ("optimal", "optimal_inaccurate") or info.objective is None:
        return {"status": info.status, "gamma": None}
    a = info.assignment
    return {
        "status": info.status,
        "gamma": float(info.objective),
        "P": a["P"],
        "lambdas": np.array([a[f"lam_{l}"] for l in range(meta["N"])]),
        "Gamma": _gamma_from_blocks(meta["gblocks"], a, cl.plant.structure, prefix="G")
        if cl.plant.nq else np.zeros((0, 0)),
        "margins": info.margins,
        "solver": info.solver,
    }


def analysis_certificate_margin(cl: ClosedLoop, P, Gamma, lambdas, gamma) -> float:
    """Largest eigenvalue of the analysis inequality at a given certificate.

    Substituting a synthesis solution (P = Q^{-1}, Gamma = Gamma_hat^{-1},
    lambda_l = 1/lambda_hat_l) here is the round-trip soundness check: a
    valid synthesis must give a nonpositive value (up to tolerance).
    """
    plant = cl.plant
    nq, nu, nd, ne = plant.nq, plant.nu, plant.nd, plant.ne
    P = np.atleast_2d(P)
    lambdas = np.atleast_1d(lambdas)
    Acl = cl.a_cl()
    blocks_pa = P @ Acl
    r11 = blocks_pa + blocks_pa.T
    B0c, B1c, B2c = cl.b_cl0(), cl.b_cl1(), cl.b_cl2()
    Z = np.zeros
    if nq:
        core = np.block([
            [r11, P @ B0c, P @ B1c, P @ B2c],
            [(P @ B0c).T, -np.atleast_2d(Gamma), Z((nq, nu)), Z((nq, nd))],
            [(P @ B1c).T, Z((nu, nq)), -np.sum(lambdas) * np.eye(nu), Z((nu, nd))],
            [(P @ B2c).T, Z((nd, nq)), Z((nd, nu)), -gamma * np.eye(nd)],
        ])
    else:
        core = np.block([
            [r11, P @ B1c, P @ B2c],
            [(P @ B1c).T, -np.sum(lambdas) * np.eye(nu), Z((nu, nd))],
            [(P @ B2c).T, Z((nd, nu)), -gamma * np.eye(nd)],
        ])
    if nq:
        for (kind, size, off), (Cr, Dp, Dw, Dd) in zip(plant.structure.blocks(), cl.unc_rows()):
            Theta = np.hstack([Cr, Dp, Dw, Dd])
            Xk = np.atleast_2d(Gamma)[off:off + size, off:off + size]
            core = core + Theta.T @ Xk @ Theta
    for l, (Cn, Dw) in enumerate(cl.nonlin_output_rows()):
        if nq:
            row = np.hstack([Cn, np.zeros((nu, nq)), Dw, np.zeros((nu, nd))])
        else:
            row = np.hstack([Cn, Dw, np.zeros((nu, nd))])
        core = core + lambdas[l] * (row.T @ row)
    Ce, De0, De1, De2 = cl.e_row()
    Erow = np.hstack([Ce, De0, De1, De2]) if nq else np.hstack([Ce, De1, De2])
    M = np.block([[core, Erow.T], [Erow, -gamma * np.eye(ne)]])
    M = 0.5 * (M + M.T)
    # scale-relative margin: badly conditioned certificates carry entries of
    # very different magnitude, so the raw eigenvalue is normalized by the
    # matrix scale
    scale = max(1.0, float(np.max(np.abs(M))))
    return float(np.max(np.linalg.eigvalsh(M)) / scale)


# ---------------------------------------------------------------------------
# anti-windup baseline (static sector condition, no loop transformation)
# ---------------------------------------------------------------------------

def build_antiwindup_lmi(plant: SaturatedLFTPlant, q_max: float | None = 1e5,
                         strictness: float = 1e-6):
    """Static sector-condition baseline with u = Fc x + Hc w.

    Treats the dead-zone through w' L (u - w) >= 0 with a diagonal
    multiplier; the uncertainty channel is not used.
    """
    nx, nu, nd, ne = plant.nx, plant.nu, plant.nd, plant.ne
    prob = LmiProblem(strictness=strictness)
    Q = prob.sym("Q", nx)
    gam = prob.scalar("gamma", lb=1e-7)
    Fh = prob.rect("F_hat", nu, nx)
    Hh = prob.rect("H_hat", nu, nu)
    g_diag = [prob.scalar(f"Gm_{i}", lb=prob.strictness) for i in range(nu)]
    Gm = bmat([[g_diag[i] if i == j else np.zeros((1, 1)) for j in range(nu)]
               for i in range(nu)])
    AQ = Q.lmul(plant.A) + Fh.lmul(plant.B0)
    r11 = he(AQ)
    r21 = Gm.rmul(-plant.B0.T) + Hh.T.rmul(plant.B0.T) + Fh
    r22 = he(Hh) - Gm * 2.0
    r41 = Q.lmul(plant.C1) + Fh.lmul(plant.D10)
    r42 = Gm.lmul(-plant.D10) + Hh.lmul(plant.D10)
    Z = np.zeros
    M = bmat([
        [r11, r21.T, plant.B2, r41.T],
        [r21, r22, Z((nu, nd)), r42.T],
        [plant.B2.T, Z((nd, nu)), _scalar_mul(prob, gam, -np.eye(nd)), plant.D12.T],
        [r41, r42, plant.D12, _scalar_mul(prob, gam, -np.eye(ne))],
    ])
    prob.require_neg_def(M, name="antiwindup")
    prob.require_pos_def(Q, name="Q_pd")
    if q_max is not None:
        prob.require_neg_def(Q - AffExpr.constant(q_max * np.eye(nx)), name="Q_cap", margin=0.0)
    prob.minimize("gamma")
    return prob


def solve_antiwindup(plant: SaturatedLFTPlant, q_max: float | None = 1e5,
                     solver: str = "auto") -> dict:
    prob = build_antiwindup_lmi(plant, q_max=q_max)
    info = prob.solve(solver=solver)
    if info.status not in ("optimal", "optimal_inaccurate") or info.objective is None:
        raise RuntimeError(f"anti-windup synthesis failed: {info.status}")
    a = info.assignment
    Q = a["Q"]
    Fc = np.linalg.solve(Q.T, np.atleast_2d(a["F_hat"]).T).T
    Gm = np.diag([a[f"Gm_{i}"] for i in range(plant.nu)])
    Hc = np.atleast_2d(a["H_hat"]) @ np.linalg.inv(Gm)
    return {"gamma": float(info.objective), "Fc": Fc, "Hc": Hc, "Q": Q,
            "status": info.status, "solver": info.solver, "margins": info.margins}
