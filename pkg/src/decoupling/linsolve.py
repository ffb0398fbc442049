"""Preconditioned conjugate gradients and power iteration for SPD pencils."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .blockalg import BlockOperator, BlockVector


class SolverError(RuntimeError):
    def __init__(self, message: str, report: "SolveReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_residual: float
    converged: bool


@dataclass(frozen=True)
class EigenEstimate:
    value: float
    iterations: int
    converged: bool


def _as_action(op) -> tuple[Callable[[np.ndarray], np.ndarray], Optional[np.ndarray]]:
    """Return (matvec, diagonal or None) for the supported operator types."""
    if isinstance(op, BlockOperator):
        op = op.to_sparse()
    if sp.issparse(op):
        mat = op.tocsr()
        return (lambda x: mat @ x), mat.diagonal()
    if isinstance(op, np.ndarray):
        return (lambda x: op @ x), np.diag(op).copy()
    if isinstance(op, spla.LinearOperator):
        return op.matvec, None
    if callable(op):
        return op, None
    raise TypeError(f"unsupported operator type {type(op).__name__}")


def jacobi(diagonal: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    d = np.asarray(diagonal, dtype=float)
    inv = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 1.0)
    return lambda r: inv * r


def cg_solve(
    op,
    rhs,
    tol: float = 1e-10,
    max_iter: int = 10000,
    precond: Optional[Callable[[np.ndarray], np.ndarray]] | str = "jacobi",
    x0=None,
):
    """Solve op x = rhs for symmetric positive (semi)definite ``op``.

    Converged means ||rhs - op x|| <= tol ||rhs|| in the Euclidean norm.
    ``rhs`` may be a BlockVector, in which case a BlockVector is returned.
    ``precond="jacobi"`` uses the operator diagonal when it is available.
    A singular ``op`` is fine as long as the system is consistent.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    sizes = rhs.sizes if isinstance(rhs, BlockVector) else None
    b = rhs.data if sizes is not None else np.asarray(rhs, dtype=float)
    matvec, diag = _as_action(op)

    def wrap(x):
        return BlockVector.from_flat(x, sizes) if sizes is not None else x

    if not np.all(np.isfinite(b)):
        raise SolverError("non-finite right-hand side")
    if precond == "jacobi":
        precond = jacobi(diag) if diag is not None else None
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return wrap(np.zeros_like(b)), SolveReport(0, 0.0, True)

    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(x0.data if isinstance(x0, BlockVector) else x0, dtype=float)
        r = b - matvec(x)
    res = np.linalg.norm(r) / bnorm
    if res <= tol:
        return wrap(x), SolveReport(0, res, True)

    z = precond(r) if precond else r
    p = z.copy()
    rz = r @ z
    best_x, best_res = x.copy(), res
    for it in range(1, max_iter + 1):
        q = matvec(p)
        pq = p @ q
        if not np.isfinite(pq):
            raise SolverError(f"non-finite value in CG at iteration {it}")
        if pq <= 0:
            # breakdown: operator not positive on the search direction
            break
        step = rz / pq
        x += step * p
        r -= step * q
        res = np.linalg.norm(r) / bnorm
        if res < best_res:
            best_x, best_res = x.copy(), res
        if res <= tol:
            return wrap(x), SolveReport(it, res, True)
        z = precond(r) if precond else r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    else:
        it = max_iter
    return wrap(best_x), SolveReport(it, best_res, False)


@dataclass(frozen=True)
class CGSolver:
    """Solver handle carrying tolerance settings; stateless and re-entrant."""

    tol: float = 1e-10
    max_iter: int = 10000
    precondition: bool = True

    def solve(self, op, rhs, x0=None, strict: bool = False):
        x, report = cg_solve(
            op, rhs, tol=self.tol, max_iter=self.max_iter,
            precond="jacobi" if self.precondition else None, x0=x0,
        )
        if strict and not report.converged:
            raise SolverError(
                f"CG did not converge in {report.iterations} iterations "
                f"(residual {report.final_residual:.3e}, tol {self.tol:.1e})",
                report,
            )
        return x, report


def power_max_eig(
    apply_a: Callable[[np.ndarray], np.ndarray],
    apply_b: Callable[[np.ndarray], np.ndarray],
    solve_b: Callable[[np.ndarray], np.ndarray],
    n: int,
    tol: float = 1e-8,
    max_iter: int = 1000,
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    seed: int = 0,
) -> EigenEstimate:
    """Largest eigenvalue of the symmetric pencil A x = lambda B x.

    Iterates x <- B^{-1} A x from the normalised all-ones vector and
    returns the Rayleigh quotient (Ax, x)/(Bx, x).  Stops when its relative
    increment drops below ``tol``.  ``project`` removes a common null space
    of A and B.  On breakdown (A x = 0 or (Bx, x) <= 0) the iteration
    restarts from a seeded random vector.
    """
    rng = np.random.default_rng(seed)
    x = np.ones(n) / np.sqrt(n)
    restarts = 0
    lam_old = None
    for it in range(1, max_iter + 1):
        if project is not None:
            x = project(x)
        ax = apply_a(x)
        bx = apply_b(x)
        xbx = x @ bx
        if np.linalg.norm(ax) <= 1e-12 * (1.0 + np.linalg.norm(x)) or xbx <= 0 \
                or np.linalg.norm(x) < 1e-10:
            if restarts >= 3:
                return EigenEstimate(float("nan"), it, False)
            restarts += 1
            x = rng.standard_normal(n)
            lam_old = None
            continue
        lam = (x @ ax) / xbx
        if lam_old is not None and abs(lam - lam_old) <= tol * abs(lam):
            return EigenEstimate(float(lam), it, True)
        lam_old = lam
        y = solve_b(ax)
        nrm = np.sqrt(abs(y @ apply_b(y)))
        if not np.isfinite(nrm) or nrm == 0:
            raise SolverError("power iteration produced a non-finite or zero iterate")
        x = y / nrm
    return EigenEstimate(float(lam_old), max_iter, False)
