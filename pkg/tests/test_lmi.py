import numpy as np
import pytest

from satiqc.lmi import LmiProblem, AffExpr, bmat, he


def test_scalar_lp_like():
    prob = LmiProblem()
    g = prob.scalar("gamma", lb=0.5)
    prob.require_neg_def(prob.scalar_times(g, -np.eye(2)), name="gneg")
    prob.minimize("gamma")
    info = prob.solve()
    assert info.status in ("optimal", "optimal_inaccurate")
    assert abs(info.objective - 0.5) < 1e-6


def test_lyapunov_feasibility():
    A = -np.eye(2)
    prob = LmiProblem()
    P = prob.sym("P", 2)
    prob.require_pos_def(P - AffExpr.constant(0.1 * np.eye(2)), margin=0.0)
    prob.require_neg_def(he(P.rmul(A)), name="lyap")
    info = prob.solve()
    assert info.status in ("optimal", "optimal_inaccurate")
    Pv = info.assignment["P"]
    M = Pv @ A + A.T @ Pv
    assert np.max(np.linalg.eigvalsh(M)) < 0


def test_affexpr_algebra_roundtrip():
    prob = LmiProblem()
    X = prob.sym("X", 2)
    Y = prob.rect("Y", 1, 2)
    s = prob.scalar("s")
    L = np.array([[1.0, 2.0], [0.0, 1.0]])
    R = np.array([[1.0], [3.0]])
    expr = X.lmul(L).rmul(R) + Y.T + prob.scalar_times(s, np.array([[2.0], [0.0]]))
    rng = np.random.default_rng(0)
    Xv = rng.standard_normal((2, 2))
    Xv = 0.5 * (Xv + Xv.T)
    Yv = rng.standard_normal((1, 2))
    sv = 1.7
    # flatten the symmetric assignment the same way the problem does
    xflat = Xv[np.triu_indices(2)]
    got = expr.evaluate({"X": xflat, "Y": Yv.ravel(), "s": np.array([sv])})
    ref = L @ Xv @ R + Yv.T + sv * np.array([[2.0], [0.0]])
    assert np.allclose(got, ref)


def test_bmat_and_transpose():
    prob = LmiProblem()
    X = prob.sym("X", 2)
    M = bmat([[X, np.zeros((2, 1))], [np.zeros((1, 2)), -np.eye(1)]])
    assert M.shape == (3, 3)
    T = M.T
    assert T.shape == (3, 3)
    with pytest.raises(ValueError):
        bmat([[X, np.zeros((1, 1))]])


def test_lower_to_sdp_roundtrip_evaluation():
    # constraint evaluation at random assignments matches the expression
    prob = LmiProblem()
    X = prob.sym("X", 2)
    g = prob.scalar("g")
    A = np.array([[0.0, 1.0], [-2.0, -3.0]])
    expr = he(X.rmul(A)) + prob.scalar_times(g, -np.eye(2))
    prob.require_neg_def(expr, name="c0", margin=0.0)
    prob.minimize("g")
    sdp = prob.lower_to_sdp()
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.standard_normal(sdp.num_scalars)
        M = sdp.eval_constraint(0, x)
        a = prob.unflatten(x)
        Xv, gv = a["X"], a["g"]
        ref = Xv @ A + A.T @ Xv - gv * np.eye(2)
        assert np.max(np.abs(M - ref)) < 1e-12


def test_variable_count_bookkeeping():
    prob = LmiProblem()
    prob.sym("Q", 3)
    prob.rect("F", 2, 3)
    prob.scalar("g")
    sdp = prob.lower_to_sdp()
    assert sdp.num_scalars == 6 + 6 + 1
    with pytest.raises(ValueError):
        prob.sym("Q", 2)


def test_undeclared_variable_rejected():
    prob = LmiProblem()
    X = prob.sym("X", 2)
    other = LmiProblem()
    Y = other.sym("Y", 2)
    prob.require_neg_def(X + Y, name="bad")
    with pytest.raises(ValueError, match="undeclared"):
        prob.lower_to_sdp()


def test_infeasible_detected():
    prob = LmiProblem()
    X = prob.sym("X", 1)
    prob.require_pos_def(X - AffExpr.constant(np.eye(1)), margin=0.0)
    prob.require_neg_def(X + AffExpr.constant(np.eye(1)), margin=0.0)
    info = prob.solve()
    assert info.status not in ("optimal",)
