import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from decoupling.blockalg import BlockVector
from decoupling.linsolve import CGSolver, SolverError, cg_solve, power_max_eig


def laplacian_1d(n, shift=0.0):
    return sp.diags([-np.ones(n - 1), (2 + shift) * np.ones(n), -np.ones(n - 1)],
                    [-1, 0, 1], format="csr")


@pytest.mark.parametrize("precond", ["jacobi", None])
def test_cg_solves_spd_system(precond):
    A = laplacian_1d(50, shift=0.1)
    x_true = np.sin(np.arange(50))
    x, rep = cg_solve(A, A @ x_true, tol=1e-12, precond=precond)
    assert rep.converged
    assert np.linalg.norm(A @ x - A @ x_true) <= 1e-12 * np.linalg.norm(A @ x_true)
    np.testing.assert_allclose(x, x_true, atol=1e-8)


def test_zero_rhs_returns_zero_without_iterations():
    x, rep = cg_solve(laplacian_1d(5, 1.0), np.zeros(5))
    assert rep.iterations == 0 and rep.converged
    assert not np.any(x)


def test_block_vector_round_trip():
    A = laplacian_1d(6, 1.0)
    b = BlockVector([np.ones(2), np.ones(4)])
    x, rep = cg_solve(A, b, tol=1e-12)
    assert isinstance(x, BlockVector) and x.sizes == (2, 4)
    np.testing.assert_allclose(A @ x.data, b.data, atol=1e-10)


def test_operator_types_agree():
    A = laplacian_1d(20, 0.5)
    b = np.cos(np.arange(20.0))
    ref, _ = cg_solve(A, b, tol=1e-12)
    for op in (A.toarray(), spla.aslinearoperator(A), lambda v: A @ v):
        x, rep = cg_solve(op, b, tol=1e-12)
        assert rep.converged
        np.testing.assert_allclose(x, ref, atol=1e-9)


def test_consistent_singular_system():
    A = laplacian_1d(30)
    A = A.tolil()
    A[0, 0] = A[-1, -1] = 1.0  # Neumann: constants in the kernel
    A = A.tocsr()
    b = np.sin(np.linspace(0, 2 * np.pi, 30))
    b -= b.mean()
    x, rep = cg_solve(A, b, tol=1e-11)
    assert rep.converged
    np.testing.assert_allclose(A @ x, b, atol=1e-9)


def test_max_iter_reports_best_iterate():
    A = laplacian_1d(200, 1e-4)
    x, rep = cg_solve(A, np.ones(200), tol=1e-14, max_iter=3, precond=None)
    assert not rep.converged and rep.iterations == 3
    with pytest.raises(SolverError) as err:
        CGSolver(tol=1e-14, max_iter=3, precondition=False).solve(A, np.ones(200), strict=True)
    assert err.value.report.iterations == 3


def test_non_finite_rhs_raises():
    with pytest.raises(SolverError):
        cg_solve(laplacian_1d(4, 1.0), np.array([1.0, np.nan, 0.0, 0.0]))


def test_warm_start_converges_immediately():
    A = laplacian_1d(10, 1.0)
    b = np.ones(10)
    x, _ = cg_solve(A, b, tol=1e-12)
    _, rep = cg_solve(A, b, tol=1e-10, x0=x)
    assert rep.iterations == 0


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**31))
def test_power_iteration_matches_dense_pencil(n, seed):
    import scipy.linalg as la
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n))
    A = G @ G.T + 0.1 * np.eye(n)
    H = rng.standard_normal((n, n))
    B = H @ H.T + n * np.eye(n)
    est = power_max_eig(lambda x: A @ x, lambda x: B @ x, lambda r: np.linalg.solve(B, r), n,
                        tol=1e-13, max_iter=20000)
    lam = la.eigh(A, B, eigvals_only=True)[-1]
    assert est.value <= lam * (1 + 1e-10)
    if est.converged:
        assert est.value == pytest.approx(lam, rel=1e-5)


def test_power_iteration_restarts_when_start_is_in_kernel():
    # the all-ones start vector is annihilated by the projection
    A = np.diag([0.0, 1.0, 3.0])
    project = lambda x: x - x.mean()  # noqa: E731
    Q = np.array([[1, 1, 1], [1, -1, 0], [1, 1, -2]], dtype=float).T
    Q /= np.linalg.norm(Q, axis=0)
    Ap = Q @ A @ Q.T
    est = power_max_eig(lambda x: Ap @ x, lambda x: x, lambda r: r, 3, tol=1e-12,
                        max_iter=500, project=project)
    assert est.converged
    assert est.value == pytest.approx(3.0, rel=1e-8)
