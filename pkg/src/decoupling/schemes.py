"""Decoupled time stepping for du/dt + A u = 0 on a direct sum of spaces.

All schemes are written in mass-matrix form: the operator A is represented
by its stiffness blocks K_ab with (A u, v) = u^T K v, and the identity by the
block-diagonal metric M.  A scheme such as (y' - y)/tau + A y = 0 is therefore
implemented as M (y' - y) + tau K y = 0 and M^{-1} K is never formed.

Every implicit substep reduces to an SPD solve with a diagonal block
M_a + c K_aa (or, for the unsplit weighted scheme, with M + c K).
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Iterator, Optional

import numpy as np
import scipy.sparse as sp

from .blockalg import BlockOperator, BlockVector, Metric
from .linsolve import CGSolver, SolverError


class SchemeKind(str, enum.Enum):
    WEIGHTED = "Weighted"
    EXPLICIT_IMPLICIT_DIAG = "ExplicitImplicitDiag"
    TRIANGULAR = "Triangular"
    TRIANGULAR_WEIGHTED = "TriangularWeighted"
    FACTORIZED_ATM = "FactorizedATM"
    THREE_LEVEL_DIAG = "ThreeLevelDiag"
    THREE_LEVEL_ATM = "ThreeLevelATM"
    COMPONENTWISE_ROWS = "ComponentwiseRows"
    COMPONENTWISE_COLUMNS = "ComponentwiseColumns"
    REGULARIZED_ADDITIVE_ROWS = "RegularizedAdditiveRows"
    REGULARIZED_ADDITIVE_COLUMNS = "RegularizedAdditiveColumns"
    STRANG_SYMMETRIZED = "StrangSymmetrized"


THREE_LEVEL = {SchemeKind.THREE_LEVEL_DIAG, SchemeKind.THREE_LEVEL_ATM}


class StabilityWarning(UserWarning):
    """The weight lies outside the range covered by the stability theory."""


@dataclass(frozen=True)
class SchemeSpec:
    kind: SchemeKind
    sigma: float = 1.0
    decomposition: str = "rows"  # only read by StrangSymmetrized

    def __post_init__(self):
        object.__setattr__(self, "kind", SchemeKind(self.kind))
        if not np.isfinite(self.sigma):
            raise ValueError(f"sigma must be finite, got {self.sigma}")
        if self.decomposition not in ("rows", "columns"):
            raise ValueError(f"decomposition must be 'rows' or 'columns', got {self.decomposition!r}")

    @property
    def three_level(self) -> bool:
        return self.kind in THREE_LEVEL

    @property
    def order(self) -> int:
        """Formal order of accuracy in tau."""
        k = self.kind
        if k in THREE_LEVEL or k is SchemeKind.STRANG_SYMMETRIZED:
            return 2
        if k in (SchemeKind.WEIGHTED, SchemeKind.FACTORIZED_ATM) and self.sigma == 0.5:
            return 2
        return 1

    def label(self) -> str:
        if self.kind is SchemeKind.STRANG_SYMMETRIZED:
            return f"{self.kind.value}({self.decomposition})"
        return f"{self.kind.value}(sigma={self.sigma:g})"


@dataclass(frozen=True)
class TimeGrid:
    tau: float
    N: int

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if int(self.N) != self.N or self.N < 0:
            raise ValueError(f"N must be a non-negative integer, got {self.N}")

    @property
    def T(self) -> float:
        return self.N * self.tau


@dataclass
class SteppingState:
    y: BlockVector
    y_prev: Optional[BlockVector] = None
    n: int = 0
    t: float = 0.0
    cg_iters: int = 0


def sigma_warning(spec: SchemeSpec, p: int, gamma: float | None = None) -> str | None:
    """Message describing why ``spec.sigma`` is not covered by the theory, or None.

    ``gamma`` is the constant in A <= gamma D; when unknown the bound
    gamma <= p is used.
    """
    s, k = spec.sigma, spec.kind
    g = p if gamma is None else gamma
    if k in (SchemeKind.WEIGHTED, SchemeKind.FACTORIZED_ATM, SchemeKind.THREE_LEVEL_ATM,
             SchemeKind.COMPONENTWISE_ROWS, SchemeKind.COMPONENTWISE_COLUMNS):
        if s < 0.5:
            return f"{k.value} is unconditionally stable only for sigma >= 1/2 (sigma={s:g})"
    elif k is SchemeKind.TRIANGULAR_WEIGHTED:
        if s < 1.0:
            return f"{k.value} is proven stable for sigma >= 1 (sigma={s:g})"
    elif k is SchemeKind.EXPLICIT_IMPLICIT_DIAG:
        if 2 * s < g:
            return f"{k.value} needs 2*sigma >= gamma (sigma={s:g}, gamma<={g:g})"
    elif k is SchemeKind.THREE_LEVEL_DIAG:
        if 4 * s <= g:
            return f"{k.value} needs 4*sigma > gamma (sigma={s:g}, gamma<={g:g})"
    elif k in (SchemeKind.REGULARIZED_ADDITIVE_ROWS, SchemeKind.REGULARIZED_ADDITIVE_COLUMNS):
        if s < p / 2:
            return f"{k.value} is proven stable for sigma >= p/2 (sigma={s:g}, p={p})"
    return None


def warn_sigma(spec: SchemeSpec, p: int, gamma: float | None = None) -> None:
    msg = sigma_warning(spec, p, gamma)
    if msg:
        warnings.warn(msg, StabilityWarning, stacklevel=3)


class Stepper:
    """Base class: caches the shifted block matrices and counts CG iterations."""

    kind: SchemeKind

    def __init__(self, K: BlockOperator, metric: Metric, tau: float, sigma: float,
                 solver: CGSolver | None = None):
        if K.sizes != metric.sizes:
            raise ValueError(f"operator sizes {K.sizes} do not match metric sizes {metric.sizes}")
        self.K = K
        self.metric = metric
        self.tau = float(tau)
        self.sigma = float(sigma)
        self.solver = solver or CGSolver()
        self.p = K.p
        self._mats: dict = {}
        self._iters = 0

    # -- linear algebra helpers --------------------------------------------

    def _shifted_block(self, a: int, c: float) -> sp.csr_matrix:
        key = (a, c)
        if key not in self._mats:
            mat = self.metric.matrices[a]
            blk = self.K.block(a, a)
            self._mats[key] = (mat + c * blk).tocsr() if blk is not None and c else mat
        return self._mats[key]

    def _solve(self, mat, rhs: np.ndarray, x0=None) -> np.ndarray:
        x, report = self.solver.solve(mat, rhs, x0=x0)
        self._iters += report.iterations
        if not report.converged:
            raise SolverError(
                f"CG did not converge (residual {report.final_residual:.3e}, "
                f"tol {self.solver.tol:.1e}, {report.iterations} iterations)", report)
        return x

    def solve_block(self, a: int, c: float, rhs: np.ndarray, x0=None) -> np.ndarray:
        """Solve (M_a + c K_aa) x = rhs."""
        return self._solve(self._shifted_block(a, c), rhs, x0)

    def solve_mass(self, a: int, rhs: np.ndarray) -> np.ndarray:
        return self._solve(self.metric.matrices[a], rhs)

    def solve_full(self, c: float, rhs: BlockVector) -> BlockVector:
        """Solve the coupled system (M + c K) x = rhs."""
        key = ("full", c)
        if key not in self._mats:
            self._mats[key] = (self.metric.to_sparse() + c * self.K.to_sparse()).tocsr()
        return BlockVector.from_flat(self._solve(self._mats[key], rhs.data), rhs.sizes)

    def Krow(self, a: int, y: BlockVector, only: Callable[[int], bool] | None = None) -> np.ndarray:
        """sum over b (optionally filtered) of K_ab y_b, ascending b."""
        out = np.zeros(self.K.sizes[a])
        for b in range(self.p):
            if only is not None and not only(b):
                continue
            blk = self.K.block(a, b)
            if blk is not None:
                out += blk @ y[b]
        return out

    # -- shared substeps ----------------------------------------------------

    def row_substep(self, y: BlockVector, a: int, impl: float, expl: float) -> np.ndarray:
        """Increment z_a of (I + impl R_a A) z = -expl R_a A y (other components stay)."""
        return self.solve_block(a, impl, -expl * self.Krow(a, y))

    def column_substep(self, y: BlockVector, a: int, impl: float, expl: float) -> BlockVector:
        """Increment z of (I + impl A R_a) z = -expl A R_a y.

        The diagonal component needs a solve with M_a + impl K_aa; the others
        follow explicitly (up to a mass-matrix solve) from
        M_b z_b = -expl K_ba (y_a + (impl/expl) z_a).
        """
        z = BlockVector.zeros(y.sizes)
        Kaa = self.K.block(a, a)
        rhs = -expl * (Kaa @ y[a]) if Kaa is not None else np.zeros(y.sizes[a])
        z[a] = self.solve_block(a, impl, rhs)
        w = y[a] + (impl / expl) * z[a]
        for b in range(self.p):
            Kba = self.K.block(b, a)
            if b == a or Kba is None:
                continue
            z[b] = self.solve_mass(b, -expl * (Kba @ w))
        return z

    # -- stepping -----------------------------------------------------------

    def advance(self, state: SteppingState) -> BlockVector:
        raise NotImplementedError

    def step(self, state: SteppingState) -> SteppingState:
        self._iters = 0
        try:
            y_new = self.advance(state)
        except SolverError as exc:
            raise SolverError(f"step {state.n} -> {state.n + 1}: {exc}", exc.report) from exc
        if not np.all(np.isfinite(y_new.data)):
            raise FloatingPointError(f"non-finite solution at step {state.n + 1}")
        three = self.kind in THREE_LEVEL
        return SteppingState(
            y=y_new, y_prev=state.y if three else None,
            n=state.n + 1, t=(state.n + 1) * self.tau, cg_iters=self._iters,
        )


class WeightedStepper(Stepper):
    """(M + sigma tau K)(y' - y) = -tau K y."""

    kind = SchemeKind.WEIGHTED

    def advance(self, state):
        y = state.y
        dy = self.solve_full(self.sigma * self.tau, -self.tau * self.K.apply(y))
        return y + dy


class ExplicitImplicitDiagStepper(Stepper):
    """Diagonal blocks at the new level, coupling explicit; components independent.

    (M_a + sigma tau K_aa) y'_a = (M_a + sigma tau K_aa) y_a - tau (K y)_a
    """

    kind = SchemeKind.EXPLICIT_IMPLICIT_DIAG

    def advance(self, state):
        y = state.y
        c = self.sigma * self.tau
        comps = []
        for a in range(self.p):
            B = self._shifted_block(a, c)
            rhs = B @ y[a] - self.tau * self.Krow(a, y)
            comps.append(self._solve(B, rhs, x0=y[a]))
        return BlockVector(comps)


class TriangularStepper(Stepper):
    """Lower triangle and diagonal implicit, upper triangle explicit (forward sweep).

    (M_a + tau K_aa) y'_a = M_a y_a - tau sum_{b<a} K_ab y'_b - tau sum_{b>a} K_ab y_b
    """

    kind = SchemeKind.TRIANGULAR

    def advance(self, state):
        y = state.y
        y_new = y.copy()
        for a in range(self.p):
            rhs = self.metric.matrices[a] @ y[a]
            rhs -= self.tau * self.Krow(a, y_new, only=lambda b: b < a)
            rhs -= self.tau * self.Krow(a, y, only=lambda b: b > a)
            y_new[a] = self.solve_block(a, self.tau, rhs, x0=y[a])
        return y_new


class TriangularWeightedStepper(Stepper):
    """Canonical two-level scheme with B = M + sigma tau (L + D/2)."""

    kind = SchemeKind.TRIANGULAR_WEIGHTED

    def advance(self, state):
        y = state.y
        c = self.sigma * self.tau
        dy = BlockVector.zeros(y.sizes)
        for a in range(self.p):
            rhs = -self.tau * self.Krow(a, y) - c * self.Krow(a, dy, only=lambda b: b < a)
            dy[a] = self.solve_block(a, c / 2, rhs)
        return y + dy


class FactorizedATMStepper(Stepper):
    """B = (M + sigma tau K1) M^{-1} (M + sigma tau K2), K1 = L + D/2, K2 = K1^T.

    Two half-sweeps:
        (M + sigma tau K1)(y_half - y) = -sigma tau K y
        (M + sigma tau K2)(y' - y)     = M (y_half - y) / sigma
    which at sigma = 1 is the Douglas-Rachford form and at sigma = 1/2 the
    Peaceman-Rachford form, intermediate level included.
    """

    kind = SchemeKind.FACTORIZED_ATM

    def advance(self, state):
        y = state.y
        c = self.sigma * self.tau
        w = BlockVector.zeros(y.sizes)
        for a in range(self.p):
            rhs = -c * self.Krow(a, y) - c * self.Krow(a, w, only=lambda b: b < a)
            w[a] = self.solve_block(a, c / 2, rhs)
        self.last_half = y + w
        dy = BlockVector.zeros(y.sizes)
        for a in reversed(range(self.p)):
            rhs = self.metric.matrices[a] @ w[a] / self.sigma
            rhs -= c * self.Krow(a, dy, only=lambda b: b > a)
            dy[a] = self.solve_block(a, c / 2, rhs)
        return y + dy


class ThreeLevelDiagStepper(Stepper):
    """(y' - y_prev)/(2 tau) + sigma D (y' - 2y + y_prev) + A y = 0, per component.

    With z = y' - y_prev:
        (M_a + 2 sigma tau K_aa) z_a = -2 tau (K y)_a + 4 sigma tau K_aa (y_a - y_prev_a)
    """

    kind = SchemeKind.THREE_LEVEL_DIAG

    def advance(self, state):
        if state.y_prev is None:
            raise ValueError("three-level step needs y_prev; use first_step_init for step 1")
        y, yp = state.y, state.y_prev
        c = self.sigma * self.tau
        y_new = yp.copy()
        for a in range(self.p):
            rhs = -2 * self.tau * self.Krow(a, y)
            Kaa = self.K.block(a, a)
            if Kaa is not None:
                rhs += 4 * c * (Kaa @ (y[a] - yp[a]))
            y_new[a] = yp[a] + self.solve_block(a, 2 * c, rhs)
        return y_new


class ThreeLevelATMStepper(Stepper):
    """Three-level alternating-triangular scheme, regularizer on the second difference.

    (I + sigma tau A)(y' - y)/tau + sigma^2 tau A1 A2 (y' - 2y + y_prev) + A y = 0

    realized by two triangular sweeps with d = y - y_prev:
        (M + sigma tau K1) w = -tau K y - sigma tau K2 d
        (M + sigma tau K2)(y' - y) = M w + sigma tau K2 d
    At sigma = 1/2 this is the Peaceman-Rachford pair with the
    source terms -f, +f, f = (tau/4) A2 d.
    """

    kind = SchemeKind.THREE_LEVEL_ATM

    def advance(self, state):
        if state.y_prev is None:
            raise ValueError("three-level step needs y_prev; use first_step_init for step 1")
        y, yp = state.y, state.y_prev
        c = self.sigma * self.tau
        d = y - yp
        K2d = [c * self.Krow(a, d, only=lambda b: b > a) for a in range(self.p)]
        for a in range(self.p):
            Kaa = self.K.block(a, a)
            if Kaa is not None:
                K2d[a] += 0.5 * c * (Kaa @ d[a])
        w = BlockVector.zeros(y.sizes)
        for a in range(self.p):
            rhs = -self.tau * self.Krow(a, y) - K2d[a] - c * self.Krow(a, w, only=lambda b: b < a)
            w[a] = self.solve_block(a, c / 2, rhs)
        dy = BlockVector.zeros(y.sizes)
        for a in reversed(range(self.p)):
            rhs = self.metric.matrices[a] @ w[a] + K2d[a]
            rhs -= c * self.Krow(a, dy, only=lambda b: b > a)
            dy[a] = self.solve_block(a, c / 2, rhs)
        return y + dy


class ComponentwiseRowsStepper(Stepper):
    """Sequential fractional steps with the row operators R_a A, a = 1..p."""

    kind = SchemeKind.COMPONENTWISE_ROWS

    def advance(self, state):
        y = state.y.copy()
        for a in range(self.p):
            y[a] += self.row_substep(y, a, self.sigma * self.tau, self.tau)
        return y


class ComponentwiseColumnsStepper(Stepper):
    """Sequential fractional steps with the column operators A R_a, a = 1..p."""

    kind = SchemeKind.COMPONENTWISE_COLUMNS

    def advance(self, state):
        y = state.y.copy()
        for a in range(self.p):
            y.axpy(1.0, self.column_substep(y, a, self.sigma * self.tau, self.tau))
        return y


class RegularizedAdditiveRowsStepper(Stepper):
    """y' = y + sum_a q_a, (I + sigma tau R_a A) q_a = -tau R_a A y; q_a independent."""

    kind = SchemeKind.REGULARIZED_ADDITIVE_ROWS

    def advance(self, state):
        y = state.y
        out = y.copy()
        for a in range(self.p):
            out[a] += self.row_substep(y, a, self.sigma * self.tau, self.tau)
        return out


class RegularizedAdditiveColumnsStepper(Stepper):
    """y' = y + sum_a q_a, (I + sigma tau A R_a) q_a = -tau A R_a y; q_a independent."""

    kind = SchemeKind.REGULARIZED_ADDITIVE_COLUMNS

    def advance(self, state):
        y = state.y
        corrections = [self.column_substep(y, a, self.sigma * self.tau, self.tau)
                       for a in range(self.p)]
        out = y.copy()
        for q in corrections:  # fixed ascending order
            out.axpy(1.0, q)
        return out


class StrangSymmetrizedStepper(Stepper):
    """Symmetric sweep 1..p, p..1 over halved row (or column) operators, each Crank-Nicolson."""

    kind = SchemeKind.STRANG_SYMMETRIZED

    def __init__(self, *args, decomposition: str = "rows", **kwargs):
        super().__init__(*args, **kwargs)
        self.decomposition = decomposition

    def advance(self, state):
        y = state.y.copy()
        order = list(range(self.p)) + list(reversed(range(self.p)))
        impl, expl = self.tau / 4, self.tau / 2
        for a in order:
            if self.decomposition == "rows":
                y[a] += self.row_substep(y, a, impl, expl)
            else:
                y.axpy(1.0, self.column_substep(y, a, impl, expl))
        return y


_STEPPERS = {
    SchemeKind.WEIGHTED: WeightedStepper,
    SchemeKind.EXPLICIT_IMPLICIT_DIAG: ExplicitImplicitDiagStepper,
    SchemeKind.TRIANGULAR: TriangularStepper,
    SchemeKind.TRIANGULAR_WEIGHTED: TriangularWeightedStepper,
    SchemeKind.FACTORIZED_ATM: FactorizedATMStepper,
    SchemeKind.THREE_LEVEL_DIAG: ThreeLevelDiagStepper,
    SchemeKind.THREE_LEVEL_ATM: ThreeLevelATMStepper,
    SchemeKind.COMPONENTWISE_ROWS: ComponentwiseRowsStepper,
    SchemeKind.COMPONENTWISE_COLUMNS: ComponentwiseColumnsStepper,
    SchemeKind.REGULARIZED_ADDITIVE_ROWS: RegularizedAdditiveRowsStepper,
    SchemeKind.REGULARIZED_ADDITIVE_COLUMNS: RegularizedAdditiveColumnsStepper,
    SchemeKind.STRANG_SYMMETRIZED: StrangSymmetrizedStepper,
}


def make_stepper(spec: SchemeSpec, K: BlockOperator, metric: Metric, tau: float,
                 solver: CGSolver | None = None, warn: bool = True,
                 gamma: float | None = None) -> Stepper:
    if spec.kind in (SchemeKind.TRIANGULAR_WEIGHTED, SchemeKind.FACTORIZED_ATM,
                     SchemeKind.THREE_LEVEL_ATM, SchemeKind.TRIANGULAR) and not K.symmetric:
        raise ValueError(f"{spec.kind.value} needs a block-symmetric operator")
    if warn:
        warn_sigma(spec, K.p, gamma)
    cls = _STEPPERS[spec.kind]
    sigma = 0.5 if spec.kind is SchemeKind.STRANG_SYMMETRIZED else spec.sigma
    if cls is StrangSymmetrizedStepper:
        return cls(K, metric, tau, sigma, solver, decomposition=spec.decomposition)
    return cls(K, metric, tau, sigma, solver)


def first_step_init(y0: BlockVector, K: BlockOperator, metric: Metric, sigma: float,
                    tau: float, solver: CGSolver | None = None) -> SteppingState:
    """Second initial level for three-level schemes: (M + sigma tau K)(v - y0) = -tau K y0.

    Returns the state at n = 1 with y_prev = y0.
    """
    st = WeightedStepper(K, metric, tau, sigma, solver)
    out = st.step(SteppingState(y0.copy()))
    out.y_prev = y0.copy()
    return out


def step(spec: SchemeSpec, state: SteppingState, K: BlockOperator, metric: Metric,
         tau: float, solver: CGSolver | None = None) -> SteppingState:
    return make_stepper(spec, K, metric, tau, solver).step(state)


def step_weighted(state, K, metric, sigma, tau, solver=None):
    return step(SchemeSpec(SchemeKind.WEIGHTED, sigma), state, K, metric, tau, solver)


def step_explicit_implicit_diag(state, K, metric, sigma, tau, solver=None):
    return step(SchemeSpec(SchemeKind.EXPLICIT_IMPLICIT_DIAG, sigma), state, K, metric, tau, solver)


def step_triangular(state, K, metric, tau, solver=None):
    return step(SchemeSpec(SchemeKind.TRIANGULAR), state, K, metric, tau, solver)


def step_triangular_weighted(state, K, metric, sigma, tau, solver=None):
    return step(SchemeSpec(SchemeKind.TRIANGULAR_WEIGHTED, sigma), state, K, metric, tau, solver)


def step_factorized_atm(state, K, metric, sigma, tau, solver=None):
    return step(SchemeSpec(SchemeKind.FACTORIZED_ATM, sigma), state, K, metric, tau, solver)


def step_threelevel_diag(state, K, metric, sigma, tau, solver=None):
    return step(SchemeSpec(SchemeKind.THREE_LEVEL_DIAG, sigma), state, K, metric, tau, solver)


def step_threelevel_atm(state, K, metric, tau, solver=None, sigma=0.5):
    return step(SchemeSpec(SchemeKind.THREE_LEVEL_ATM, sigma), state, K, metric, tau, solver)


def step_componentwise(state, K, metric, sigma, tau, decomposition="rows", solver=None):
    kind = {"rows": SchemeKind.COMPONENTWISE_ROWS,
            "columns": SchemeKind.COMPONENTWISE_COLUMNS}[decomposition]
    return step(SchemeSpec(kind, sigma), state, K, metric, tau, solver)


def step_regularized_additive(state, K, metric, sigma, tau, decomposition="rows", solver=None):
    kind = {"rows": SchemeKind.REGULARIZED_ADDITIVE_ROWS,
            "columns": SchemeKind.REGULARIZED_ADDITIVE_COLUMNS}[decomposition]
    return step(SchemeSpec(kind, sigma), state, K, metric, tau, solver)


def step_strang_symmetrized(state, K, metric, tau, decomposition="rows", solver=None):
    spec = SchemeSpec(SchemeKind.STRANG_SYMMETRIZED, 0.5, decomposition)
    return step(spec, state, K, metric, tau, solver)


Monitor = Callable[[SteppingState], dict]


@dataclass
class StepRecord:
    state: SteppingState
    values: dict = field(default_factory=dict)


def run(spec: SchemeSpec, y0: BlockVector, K: BlockOperator, metric: Metric,
        grid: TimeGrid, solver: CGSolver | None = None,
        monitors: Iterable[Monitor] = (), gamma: float | None = None) -> Iterator[StepRecord]:
    """Yield one record for the initial state and one after each of the N steps.

    Three-level schemes take their first step with ``first_step_init`` at the
    scheme's own sigma.  Monitors are called on every state and their dicts
    are merged into ``StepRecord.values``.  ``gamma`` sharpens the weight
    admissibility warning.
    """
    monitors = list(monitors)
    stepper = make_stepper(spec, K, metric, grid.tau, solver, gamma=gamma)

    def record(state):
        values = {}
        for mon in monitors:
            values.update(mon(state))
        return StepRecord(state, values)

    state = SteppingState(y0.copy())
    yield record(state)
    for n in range(grid.N):
        if spec.three_level and state.y_prev is None:
            state = first_step_init(state.y, K, metric, stepper.sigma, grid.tau, stepper.solver)
        else:
            state = stepper.step(state)
        yield record(state)


def integrate(spec: SchemeSpec, y0: BlockVector, K: BlockOperator, metric: Metric,
              grid: TimeGrid, solver: CGSolver | None = None,
              gamma: float | None = None) -> SteppingState:
    """Final state only."""
    state = None
    for rec in run(spec, y0, K, metric, grid, solver, gamma=gamma):
        state = rec.state
    return state


def trajectory(spec: SchemeSpec, y0: BlockVector, K: BlockOperator, metric: Metric,
               grid: TimeGrid, solver: CGSolver | None = None,
               gamma: float | None = None) -> list[BlockVector]:
    return [rec.state.y for rec in run(spec, y0, K, metric, grid, solver, gamma=gamma)]
