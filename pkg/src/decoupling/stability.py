"""Checks of the stability hypotheses and per-step diagnostics.

Operators here are in bilinear-form representation, like everywhere in the
package: an operator inequality B >= C between operators on H becomes
x^T (B_M - C_M) x >= 0 for their Gram matrices, and eigenvalues of B - C
in H are generalized eigenvalues of the pencil (B_M - C_M, M).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .blockalg import (BlockOperator, BlockVector, Metric, NormKind, alternating_triangular_split,
                       extract_diagonal, project_out, triangular_parts)
from .linsolve import CGSolver, SolverError, power_max_eig
from .schemes import THREE_LEVEL, SchemeKind, SchemeSpec

DENSE_CAP = 400
DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class GammaBound:
    gamma: float
    converged: bool
    iterations: int


@dataclass(frozen=True)
class InequalityResult:
    holds: bool | None  # None: indeterminate
    margin: float
    method: str
    converged: bool = True


@dataclass(frozen=True)
class EnergyValue:
    E: float
    quarter_term: float
    r_term: float
    a_term: float


def _matvec(op) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(op, BlockOperator):
        op = op.to_sparse()
    if sp.issparse(op) or isinstance(op, np.ndarray):
        return lambda x: op @ x
    if isinstance(op, spla.LinearOperator):
        return op.matvec
    if callable(op):
        return op
    raise TypeError(f"unsupported operator type {type(op).__name__}")


def _to_dense(op, n: int) -> np.ndarray:
    if isinstance(op, BlockOperator):
        return op.to_dense()
    if sp.issparse(op):
        return op.toarray()
    if isinstance(op, np.ndarray):
        return op
    mv = _matvec(op)
    return np.column_stack([mv(e) for e in np.eye(n)])


def _metric_matrix(metric: Metric | None, n: int):
    return sp.identity(n, format="csr") if metric is None else metric.to_sparse()


def estimate_gamma(K: BlockOperator, D: BlockOperator | None = None, tol: float = DEFAULT_TOL,
                   max_iter: int = 2000, solver: CGSolver | None = None,
                   nullspace: Sequence[BlockVector] = ()) -> GammaBound:
    """Smallest gamma with A <= gamma D; D defaults to the block diagonal of A.

    Power iteration on the pencil (K, K_D).  A block-diagonal D is inverted
    block by block.  ``nullspace`` is the common kernel of K and D (constants
    for pure Neumann problems) and is projected out of every iterate.
    """
    solver = solver or CGSolver(tol=1e-11, max_iter=20000)
    D = extract_diagonal(K) if D is None else D
    Ks, Ds = K.to_sparse(), D.to_sparse()
    sizes = K.sizes
    offs = np.concatenate(([0], np.cumsum(sizes)))
    block_diagonal = all(a == b for a, b in D.keys())

    def checked(op, rhs):
        x, rep = solver.solve(op, rhs)
        if not rep.converged:
            raise SolverError(f"D-solve failed in gamma estimate: "
                              f"residual {rep.final_residual:.2e}", rep)
        return x

    def solve_d(rhs):
        if not block_diagonal:
            return checked(Ds, rhs)
        out = np.zeros_like(rhs)
        for a in range(K.p):
            sl = slice(offs[a], offs[a + 1])
            out[sl] = checked(D.block(a, a), rhs[sl])
        return out

    project = None
    if nullspace:
        def project(x):
            return project_out(BlockVector.from_flat(x, sizes), nullspace, None).data

    est = power_max_eig(lambda x: Ks @ x, lambda x: Ds @ x, solve_d, Ks.shape[0],
                        tol=tol, max_iter=max_iter, project=project)
    return GammaBound(est.value, est.converged, est.iterations)


def check_operator_inequality(B, C, metric: Metric | None = None, tol: float = DEFAULT_TOL,
                              dense_cap: int = DENSE_CAP, solver: CGSolver | None = None,
                              max_iter: int = 5000) -> InequalityResult:
    """Does B >= C hold?  margin = min generalized eigenvalue of (B - C, M).

    Dense eigensolver up to ``dense_cap`` unknowns, otherwise shifted power
    iteration: first the dominant magnitude s of M^{-1}(B - C), then the top
    eigenvalue of the positive pencil (2s M - (B - C), M), giving
    mu_min = 2s - lambda.  An unconverged iteration yields holds=None.
    """
    bmv, cmv = _matvec(B), _matvec(C)
    n = _infer_dim(B, C, metric)
    Mmat = _metric_matrix(metric, n)
    if n <= dense_cap:
        diff = _to_dense(B, n) - _to_dense(C, n)
        diff = 0.5 * (diff + diff.T)
        mu = la.eigh(diff, Mmat.toarray(), eigvals_only=True)[0]
        return InequalityResult(bool(mu >= -tol), float(mu), "dense")

    solver = solver or CGSolver(tol=1e-11, max_iter=20000)

    def msolve(x):
        y, rep = solver.solve(Mmat, x)
        if not rep.converged:
            raise SolverError("metric solve failed", rep)
        return y

    def diff(x):
        return bmv(x) - cmv(x)

    # dominant |mu| of the pencil by plain power iteration on M^{-1}(B - C)
    x = np.ones(n) / np.sqrt(n)
    s_old, s = 0.0, 0.0
    converged = False
    for _ in range(max_iter):
        y = msolve(diff(x))
        s = np.sqrt((y @ (Mmat @ y)) / (x @ (Mmat @ x)))
        if abs(s - s_old) <= 1e-6 * s:
            converged = True
            break
        s_old = s
        x = y / np.linalg.norm(y)
    shift = 2.0 * s if s > 0 else 1.0
    est = power_max_eig(lambda v: shift * (Mmat @ v) - diff(v), lambda v: Mmat @ v, msolve, n,
                        tol=min(tol, 1e-10), max_iter=max_iter)
    mu = shift - est.value
    if not (converged and est.converged):
        return InequalityResult(None, float(mu), "iterative", False)
    return InequalityResult(bool(mu >= -tol), float(mu), "iterative", True)


def _infer_dim(*ops) -> int:
    for op in ops:
        if isinstance(op, Metric):
            return sum(op.sizes)
        shape = getattr(op, "shape", None)
        if shape is not None:
            return int(shape[0])
    raise ValueError("cannot infer the operator dimension")


def _M_solver(metric: Metric, solver: CGSolver | None):
    solver = solver or CGSolver(tol=1e-12, max_iter=20000)
    Mmat = metric.to_sparse()

    def msolve(x):
        y, rep = solver.solve(Mmat, x)
        if not rep.converged:
            raise SolverError("metric solve failed", rep)
        return y
    return msolve


def two_level_operators(spec: SchemeSpec, K: BlockOperator, metric: Metric, tau: float,
                     solver: CGSolver | None = None):
    """(B, (tau/2) A) of the canonical form B (y' - y)/tau + A y = 0, Gram representation.

    For the triangular schemes only the symmetric part of B enters (B u, u).
    Returns None for schemes without a two-level canonical form in y.
    """
    k, s = spec.kind, spec.sigma
    Ms, Ks = metric.to_sparse(), K.to_sparse()
    n = Ks.shape[0]
    C = 0.5 * tau * Ks
    if k is SchemeKind.WEIGHTED:
        return Ms + s * tau * Ks, C
    if k in (SchemeKind.EXPLICIT_IMPLICIT_DIAG, SchemeKind.REGULARIZED_ADDITIVE_ROWS):
        return Ms + s * tau * extract_diagonal(K).to_sparse(), C
    if k in (SchemeKind.TRIANGULAR, SchemeKind.TRIANGULAR_WEIGHTED):
        L, D, _ = triangular_parts(K)
        c = tau if k is SchemeKind.TRIANGULAR else s * tau
        half = 1.0 if k is SchemeKind.TRIANGULAR else 0.5
        T = L.to_sparse() + half * D.to_sparse()
        return Ms + c * 0.5 * (T + T.T), C
    if k is SchemeKind.FACTORIZED_ATM:
        K1, K2 = alternating_triangular_split(K)
        left = (Ms + s * tau * K1.to_sparse()).tocsr()
        right = (Ms + s * tau * K2.to_sparse()).tocsr()
        msolve = _M_solver(metric, solver)
        B = spla.LinearOperator((n, n), matvec=lambda x: left @ msolve(right @ x), dtype=float)
        return B, C
    return None


def energy_operator(spec: SchemeSpec, K: BlockOperator, metric: Metric, tau: float,
                    solver: CGSolver | None = None):
    """R of the three-level form B (y' - y_prev)/(2 tau) + R (y' - 2y + y_prev) + A y = 0."""
    s = spec.sigma
    if spec.kind is SchemeKind.THREE_LEVEL_DIAG:
        return s * extract_diagonal(K).to_sparse()
    if spec.kind is SchemeKind.THREE_LEVEL_ATM:
        K1, K2 = alternating_triangular_split(K)
        K1s, K2s = K1.to_sparse(), K2.to_sparse()
        base = ((metric.to_sparse() + s * tau * K.to_sparse()) / (2 * tau)).tocsr()
        msolve = _M_solver(metric, solver)
        n = base.shape[0]
        return spla.LinearOperator(
            (n, n), matvec=lambda x: base @ x + s * s * tau * (K1s @ msolve(K2s @ x)), dtype=float)
    raise ValueError(f"{spec.kind.value} is not a three-level scheme")


def three_level_operators(spec: SchemeSpec, K: BlockOperator, metric: Metric, tau: float,
                     solver: CGSolver | None = None):
    """((B, 0), (R, A/4)) pairs for the three-level stability conditions."""
    R = energy_operator(spec, K, metric, tau, solver)
    Ms, Ks = metric.to_sparse(), K.to_sparse()
    n = Ms.shape[0]
    if spec.kind is SchemeKind.THREE_LEVEL_DIAG:
        B = Ms
    else:
        B = Ms + spec.sigma * tau * Ks
    zero = sp.csr_matrix((n, n))
    return (B, zero), (R, 0.25 * Ks)


def threelevel_energy(y_next: BlockVector, y_curr: BlockVector, K, R) -> EnergyValue:
    """E = 1/4 (A(y'+y), y'+y) + (R(y'-y), y'-y) - 1/4 (A(y'-y), y'-y)."""
    kmv, rmv = _matvec(K), _matvec(R)
    s = y_next.data + y_curr.data
    r = y_next.data - y_curr.data
    q = 0.25 * float(s @ kmv(s))
    rr = float(r @ rmv(r))
    a = 0.25 * float(r @ kmv(r))
    return EnergyValue(q + rr - a, q, rr, a)


DEFECT_KINDS = (
    SchemeKind.EXPLICIT_IMPLICIT_DIAG,
    SchemeKind.TRIANGULAR,
    SchemeKind.FACTORIZED_ATM,
    SchemeKind.THREE_LEVEL_DIAG,
    SchemeKind.THREE_LEVEL_ATM,
)


def splitting_defect(kind, y_next: BlockVector, y_curr: BlockVector,
                     y_prev: BlockVector | None, K: BlockOperator, metric: Metric,
                     sigma: float, tau: float, solver: CGSolver | None = None) -> BlockVector:
    """Residual the splitting trajectory leaves in the unsplit reference scheme.

    Reference schemes: backward Euler for ExplicitImplicitDiag and Triangular,
    the weighted scheme with the same sigma for the two alternating-triangular
    schemes, and the unsplit three-level scheme with weight 1/4 (equivalently
    Crank-Nicolson on half-sums) for ThreeLevelDiag:

        ExplicitImplicitDiag   (A - sigma D)(y' - y)
        Triangular             L* (y' - y)
        FactorizedATM          -sigma^2 tau A1 A2 (y' - y)
        ThreeLevelATM          -sigma^2 tau A1 A2 (y' - 2y + y_prev)
        ThreeLevelDiag         (A/4 - sigma D)(y' - 2y + y_prev)
    """
    kind = SchemeKind(kind)
    if kind not in DEFECT_KINDS:
        raise ValueError(f"no splitting-defect formula for {kind.value}")
    msolve = _M_solver(metric, solver)
    sizes = y_curr.sizes

    def as_h(gram: np.ndarray) -> BlockVector:
        return BlockVector.from_flat(msolve(gram), sizes)

    if kind in (SchemeKind.THREE_LEVEL_DIAG, SchemeKind.THREE_LEVEL_ATM):
        if y_prev is None:
            raise ValueError(f"{kind.value} defect needs y_prev")
        d = y_next.data - 2 * y_curr.data + y_prev.data
    else:
        d = y_next.data - y_curr.data

    Ks = K.to_sparse()
    if kind is SchemeKind.EXPLICIT_IMPLICIT_DIAG:
        return as_h(Ks @ d - sigma * (extract_diagonal(K).to_sparse() @ d))
    if kind is SchemeKind.TRIANGULAR:
        _, _, Lt = triangular_parts(K)
        return as_h(Lt.to_sparse() @ d)
    if kind is SchemeKind.THREE_LEVEL_DIAG:
        return as_h(0.25 * (Ks @ d) - sigma * (extract_diagonal(K).to_sparse() @ d))
    K1, K2 = alternating_triangular_split(K)
    inner_ = msolve(K2.to_sparse() @ d)
    return as_h(-sigma * sigma * tau * (K1.to_sparse() @ inner_))


def guaranteed_quantities(spec: SchemeSpec) -> tuple[str, ...]:
    """Quantities that the stability theory keeps non-increasing for ``spec``.

    Values are NormKind values or ``"energy"``; the statements hold only
    when the weight is admissible (see ``schemes.sigma_warning``).
    """
    k = spec.kind
    if k is SchemeKind.WEIGHTED:
        return tuple(nk.value for nk in NormKind)
    if k in THREE_LEVEL:
        return ("energy",)
    if k in (SchemeKind.COMPONENTWISE_COLUMNS, SchemeKind.REGULARIZED_ADDITIVE_COLUMNS):
        return (NormKind.A_INVERSE.value,)
    if k is SchemeKind.STRANG_SYMMETRIZED and spec.decomposition == "columns":
        return (NormKind.A_INVERSE.value,)
    return (NormKind.A.value,)


def max_step_ratio(values: Sequence[float], floor: float = 0.0) -> float:
    """max_n v[n+1] / v[n]; steps from a value <= ``floor`` count only if they grow past it."""
    worst = 0.0 if len(values) < 2 else -np.inf
    for prev, cur in zip(values[:-1], values[1:]):
        if prev <= floor:
            r = 1.0 if cur <= floor else np.inf
        else:
            r = cur / prev
        worst = max(worst, r)
    return float(worst)
