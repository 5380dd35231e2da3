"""Small LMI modeling layer and conic-solver backend.

Decision variables (symmetric, rectangular, scalar) are flattened to a
global scalar vector; matrix-valued affine expressions carry coefficient
tensors per variable.  ``lower_to_sdp`` emits the standard-form data
(objective vector plus one affine-in-x symmetric matrix per constraint),
which the backend hands to a conic solver.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["LmiProblem", "AffExpr", "bmat", "he", "SdpData", "SolveInfo"]


@dataclass(frozen=True)
class _Var:
    name: str
    offset: int
    kind: str
    shape: tuple

    @property
    def dim(self) -> int:
        if self.kind == "sym":
            n = self.shape[0]
            return n * (n + 1) // 2
        if self.kind == "rect":
            return self.shape[0] * self.shape[1]
        return 1


def _sym_basis(n: int) -> np.ndarray:
    """Basis tensors for the n(n+1)/2 parameterization of S^n."""
    k = n * (n + 1) // 2
    E = np.zeros((n, n, k))
    idx = 0
    for i in range(n):
        for j in range(i, n):
            E[i, j, idx] = 1.0
            E[j, i, idx] = 1.0
            idx += 1
    return E


def _sym_unflatten(x: np.ndarray, n: int) -> np.ndarray:
    M = np.zeros((n, n))
    idx = 0
    for i in range(n):
        for j in range(i, n):
            M[i, j] = x[idx]
            M[j, i] = x[idx]
            idx += 1
    return M


class AffExpr:
    """Matrix-valued affine expression: const + sum_v lin[v] . x_v."""

    __slots__ = ("shape", "const", "lin")

    def __init__(self, shape, const=None, lin=None):
        self.shape = tuple(shape)
        self.const = np.zeros(self.shape) if const is None else np.asarray(const, dtype=float).reshape(self.shape)
        self.lin = {} if lin is None else lin  # name -> (m, n, k) tensor

    @staticmethod
    def constant(M) -> "AffExpr":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return AffExpr(M.shape, M.copy(), {})

    def copy(self) -> "AffExpr":
        return AffExpr(self.shape, self.const.copy(), {k: v.copy() for k, v in self.lin.items()})

    # -- algebra ------------------------------------------------------------
    def __add__(self, other):
        other = other if isinstance(other, AffExpr) else AffExpr.constant(other)
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        out = self.copy()
        out.const = out.const + other.const
        for k, v in other.lin.items():
            out.lin[k] = out.lin.get(k, 0) + v
        return out

    __radd__ = __add__

    def __sub__(self, other):
        other = other if isinstance(other, AffExpr) else AffExpr.constant(other)
        return self + (other * -1.0)

    def __rsub__(self, other):
        return AffExpr.constant(other) + (self * -1.0)

    def __mul__(self, scalar: float):
        out = AffExpr(self.shape, self.const * scalar,
                      {k: v * scalar for k, v in self.lin.items()})
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    @property
    def T(self) -> "AffExpr":
        m, n = self.shape
        return AffExpr((n, m), self.const.T,
                       {k: np.transpose(v, (1, 0, 2)) for k, v in self.lin.items()})

    def lmul(self, L) -> "AffExpr":
        """L @ expr for a constant matrix L."""
        L = np.atleast_2d(np.asarray(L, dtype=float))
        out_shape = (L.shape[0], self.shape[1])
        return AffExpr(out_shape, L @ self.const,
                       {k: np.einsum("ij,jlk->ilk", L, v) for k, v in self.lin.items()})

    def rmul(self, R) -> "AffExpr":
        """expr @ R for a constant matrix R."""
        R = np.atleast_2d(np.asarray(R, dtype=float))
        out_shape = (self.shape[0], R.shape[1])
        return AffExpr(out_shape, self.const @ R,
                       {k: np.einsum("ijk,jl->ilk", v, R) for k, v in self.lin.items()})

    def evaluate(self, assignment: dict) -> np.ndarray:
        M = self.const.copy()
        for k, v in self.lin.items():
            M = M + v @ np.asarray(assignment[k], dtype=float).reshape(-1)
        return M


def he(expr: AffExpr) -> AffExpr:
    """He{X} = X + X'."""
    return expr + expr.T


def bmat(rows) -> AffExpr:
    """Assemble a block matrix of AffExpr / constant arrays."""
    rows = [[e if isinstance(e, AffExpr) else AffExpr.constant(e) for e in row]
            for row in rows]
    row_heights = [row[0].shape[0] for row in rows]
    col_widths = [e.shape[1] for e in rows[0]]
    for row in rows:
        if [e.shape[1] for e in row] != col_widths:
            raise ValueError("inconsistent block column widths")
        if len({e.shape[0] for e in row}) != 1:
            raise ValueError("inconsistent block row heights")
    m, n = sum(row_heights), sum(col_widths)
    out = AffExpr((m, n))
    r0 = 0
    for row, h in zip(rows, row_heights):
        c0 = 0
        for e, w in zip(row, col_widths):
            out.const[r0:r0 + h, c0:c0 + w] = e.const
            for k, v in e.lin.items():
                if k not in out.lin:
                    kdim = v.shape[2]
                    out.lin[k] = np.zeros((m, n, kdim))
                out.lin[k][r0:r0 + h, c0:c0 + w, :] += v
            c0 += w
        r0 += h
    return out


@dataclass
class SdpData:
    """Standard-form SDP: min c'x subject to F0_i + sum_j x_j F_ij <= -margin_i I."""

    c: np.ndarray
    constraints: list            # list of (F0, Fmat(m^2 x K), m, margin, name)
    lin_lb: list                 # list of (row-vector a, lb): a.x >= lb
    var_order: list              # list of _Var

    @property
    def num_scalars(self) -> int:
        return int(self.c.size)

    def eval_constraint(self, i: int, x: np.ndarray) -> np.ndarray:
        F0, Fmat, m, _margin, _name = self.constraints[i]
        return (F0.reshape(m, m) + (Fmat @ x).reshape(m, m))


@dataclass
class SolveInfo:
    status: str
    objective: float | None
    assignment: dict
    margins: dict
    solver: str


class LmiProblem:
    """Affine symmetric-matrix inequality problem with a linear objective."""

    def __init__(self, strictness: float = 1e-8):
        self.strictness = strictness
        self._vars: dict[str, _Var] = {}
        self._offset = 0
        self._constraints = []    # (AffExpr, sense, margin, name); sense: "neg"
        self._lin_lb = []         # (name, component-index or None, lb)
        self._objective: str | None = None

    # -- variables ----------------------------------------------------------
    def _register(self, name, kind, shape) -> _Var:
        if name in self._vars:
            raise ValueError(f"variable {name!r} already declared")
        v = _Var(name, self._offset, kind, shape)
        self._vars[name] = v
        self._offset += v.dim
        return v

    def sym(self, name: str, n: int) -> AffExpr:
        v = self._register(name, "sym", (n, n))
        return AffExpr((n, n), np.zeros((n, n)), {name: _sym_basis(n)})

    def rect(self, name: str, m: int, n: int) -> AffExpr:
        v = self._register(name, "rect", (m, n))
        E = np.zeros((m, n, m * n))
        for i in range(m):
            for j in range(n):
                E[i, j, i * n + j] = 1.0
        return AffExpr((m, n), np.zeros((m, n)), {name: E})

    def scalar(self, name: str, lb: float | None = None) -> AffExpr:
        v = self._register(name, "scalar", (1, 1))
        if lb is not None:
            self._lin_lb.append((name, lb))
        return AffExpr((1, 1), np.zeros((1, 1)), {name: np.ones((1, 1, 1))})

    def scalar_times(self, name_expr: AffExpr, M) -> AffExpr:
        """(scalar expr) * constant matrix."""
        if name_expr.shape != (1, 1):
            raise ValueError("expected a scalar expression")
        M = np.atleast_2d(np.asarray(M, dtype=float))
        lin = {k: np.einsum("abk,ij->ijk", v, M) for k, v in name_expr.lin.items()}
        return AffExpr(M.shape, name_expr.const.item() * M, lin)

    # -- constraints ----------------------------------------------------------
    def require_neg_def(self, expr: AffExpr, name: str = "", margin: float | None = None):
        if expr.shape[0] != expr.shape[1]:
            raise ValueError("definiteness constraints need square expressions")
        self._constraints.append((expr, margin if margin is not None else self.strictness, name))

    def require_pos_def(self, expr: AffExpr, name: str = "", margin: float | None = None):
        self.require_neg_def(expr * -1.0, name=name, margin=margin)

    def require_scalar_lb(self, name: str, lb: float):
        if name not in self._vars or self._vars[name].kind != "scalar":
            raise ValueError(f"{name!r} is not a scalar variable")
        self._lin_lb.append((name, lb))

    def minimize(self, scalar_name: str):
        if scalar_name not in self._vars or self._vars[scalar_name].kind != "scalar":
            raise ValueError("objective must be a declared scalar variable")
        self._objective = scalar_name

    @property
    def variables(self):
        return dict(self._vars)

    # -- lowering -------------------------------------------------------------
    def lower_to_sdp(self) -> SdpData:
        """Flatten to standard conic form; every constraint becomes PSD-cone data."""
        K = self._offset
        c = np.zeros(K)
        if self._objective is not None:
            v = self._vars[self._objective]
            c[v.offset] = 1.0
        cons = []
        for expr, margin, name in self._constraints:
            m = expr.shape[0]
            Fmat = np.zeros((m * m, K))
            for vname, tensor in expr.lin.items():
                v = self._vars.get(vname)
                if v is None:
                    raise ValueError(f"constraint references undeclared variable {vname!r}")
                Fmat[:, v.offset:v.offset + v.dim] = tensor.reshape(m * m, v.dim)
            cons.append((expr.const.reshape(m * m).copy(), Fmat, m, margin, name))
        lbs = []
        for vname, lb in self._lin_lb:
            v = self._vars[vname]
            a = np.zeros(K)
            a[v.offset] = 1.0
            lbs.append((a, lb))
        return SdpData(c, cons, lbs, list(self._vars.values()))

    def unflatten(self, x: np.ndarray) -> dict:
        out = {}
        for v in self._vars.values():
            xi = x[v.offset:v.offset + v.dim]
            if v.kind == "sym":
                out[v.name] = _sym_unflatten(xi, v.shape[0])
            elif v.kind == "rect":
                out[v.name] = xi.reshape(v.shape)
            else:
                out[v.name] = float(xi[0])
        return out

    # -- solving ----------------------------------------------------------------
    def solve(self, gap: float = 1e-9, feas_tol: float = 1e-7,
              solver: str = "auto", verbose: bool = False) -> SolveInfo:
        import cvxpy as cp

        sdp = self.lower_to_sdp()
        K = sdp.num_scalars
        x = cp.Variable(K)
        constraints = []
        for F0, Fmat, m, margin, _name in sdp.constraints:
            vec = cp.Constant(F0 + (margin * np.eye(m)).ravel()) + cp.Constant(Fmat) @ x
            R = cp.reshape(vec, (m, m), order="C")
            constraints.append(0.5 * (R + R.T) << 0)
        for a, lb in sdp.lin_lb:
            constraints.append(a @ x >= lb)
        objective = cp.Minimize(sdp.c @ x) if np.any(sdp.c) else cp.Minimize(0)
        problem = cp.Problem(objective, constraints)

        def margins_at(xv):
            out = {}
            for i, (F0, Fmat, m, _margin, name) in enumerate(sdp.constraints):
                M = sdp.eval_constraint(i, xv)
                M = 0.5 * (M + M.T)
                scale = max(1.0, float(np.max(np.abs(M))))
                out[name or f"lmi_{i}"] = float(np.max(np.linalg.eigvalsh(M)) / scale)
            return out

        order = ["CLARABEL", "SCS"] if solver == "auto" else [solver.upper()]
        best = None            # (objective, xv, status, margins, solver)
        last_status = "solver_failure"
        for sname in order:
            try:
                if sname == "SCS":
                    problem.solve(solver=cp.SCS, eps=max(gap, 1e-9),
                                  max_iters=20000, verbose=verbose)
                else:
                    problem.solve(solver=getattr(cp, sname), verbose=verbose)
            except Exception:
                continue
            last_status = problem.status
            if problem.status not in ("optimal", "optimal_inaccurate") or x.value is None:
                continue
            xv = np.asarray(x.value, dtype=float).reshape(-1)
            mg = margins_at(xv)
            valid = max(mg.values()) <= feas_tol
            obj = float(sdp.c @ xv) if np.any(sdp.c) else 0.0
            cand = (obj, xv, problem.status, mg, sname, valid)
            if valid and problem.status == "optimal":
                best = cand
                break
            if best is None or (valid and not best[5]):
                best = cand
        if best is None:
            return SolveInfo(last_status, None, {}, {}, order[-1])
        obj, xv, status, mg, used, valid = best
        if valid and status == "optimal_inaccurate":
            status = "optimal_inaccurate"   # solver-reported, but verified feasible
        elif not valid:
            status = "invalid_solution"
        return SolveInfo(status, obj, self.unflatten(xv), mg, used)
