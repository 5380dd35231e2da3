import numpy as np
import pytest

from satiqc.riccati import solve_are, are_residual
from satiqc.statespace import is_hurwitz


def closed_loop(A, B, C, R, X):
    return A - B @ np.linalg.solve(R, np.atleast_2d(B).T @ X + C)


def test_worked_popov_stable_part():
    # stable part of the transformed Popov multiplier at alpha = 1:
    # the row-selection coordinates give C_s = [-0.005; 1] and X = 0.9950
    A = np.array([[-1.0]])
    B = np.array([[-1.0, 0.0]])
    C = np.array([[-0.005], [1.0]])
    R = np.array([[0.0, 1.0], [1.0, -0.01]])
    X = solve_are(A, B, C, R)
    assert abs(X[0, 0] - 0.9950) < 1e-6
    assert are_residual(A, B, C, R, X) < 1e-10
    assert is_hurwitz(closed_loop(A, B, C, R, X))


def test_printed_stable_part_variant():
    # with the first output entry printed as -0.32 the same equation has the
    # stabilizing solution 7.68 (exact by hand: 0.01 (X+0.32)^2 = 0.64)
    A = np.array([[-1.0]])
    B = np.array([[-1.0, 0.0]])
    C = np.array([[-0.32], [1.0]])
    R = np.array([[0.0, 1.0], [1.0, -0.01]])
    X = solve_are(A, B, C, R)
    assert abs(X[0, 0] - 7.68) < 1e-9
    assert are_residual(A, B, C, R, X) < 1e-10
    assert is_hurwitz(closed_loop(A, B, C, R, X))


def test_scalar_trivial():
    X = solve_are([[-1.0]], [[1.0]], [[0.0]], [[1.0]])
    assert abs(X[0, 0]) < 1e-12


def test_lqr_cross_check():
    # with C = 0 and R > 0 the equation reduces to A'X + XA - XBR^{-1}B'X = 0
    # whose stabilizing solution is X = 0 for stable A
    rng = np.random.default_rng(2)
    A = rng.standard_normal((3, 3))
    A = A - (np.max(np.linalg.eigvals(A).real) + 0.5) * np.eye(3)
    B = rng.standard_normal((3, 2))
    X = solve_are(A, B, np.zeros((2, 3)), np.eye(2))
    assert np.linalg.norm(X) < 1e-9


def test_random_stabilizable_instances():
    # 100 random instances with a stabilizing solution (rejection-sampled:
    # indefinite-R equations legitimately lack solutions for some data)
    rng = np.random.default_rng(42)
    n_ok = 0
    attempts = 0
    while n_ok < 100 and attempts < 400:
        attempts += 1
        n = int(rng.integers(1, 5))
        A = rng.standard_normal((n, n))
        A = A - (np.max(np.linalg.eigvals(A).real) + 1.0) * np.eye(n)
        B = rng.standard_normal((n, 2))
        C = 0.3 * rng.standard_normal((2, n))
        R = np.array([[0.2, 1.0], [1.0, -0.5]]) + 0.05 * rng.standard_normal()
        R = 0.5 * (R + R.T)
        try:
            X = solve_are(A, B, C, R)
        except ValueError:
            continue
        res = are_residual(A, B, C, R, X)
        assert res < 1e-8 * (1.0 + np.linalg.norm(X))
        assert is_hurwitz(closed_loop(A, B, C, R, X))
        assert np.allclose(X, X.T)
        n_ok += 1
    assert n_ok == 100


def test_singular_r_rejected():
    with pytest.raises(ValueError, match="singular"):
        solve_are([[-1.0]], [[1.0, 0.0]], [[0.0], [0.0]], np.zeros((2, 2)))


def test_imaginary_axis_rejected():
    # A = 0, B = 1, C = 0, R = -1: Hamiltonian eigenvalues on the axis
    with pytest.raises(ValueError, match="stabilizing"):
        solve_are([[0.0]], [[1.0]], [[0.0]], [[-1.0]])
