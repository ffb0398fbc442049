"""Experiment commands behind the CLI: run, compare, convergence, stability."""
from __future__ import annotations

import math
import warnings
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from . import stability as stab
from .blockalg import BlockOperator, BlockVector, Metric, NormKind, norm_in
from .config import RunConfig
from .fem import AssembledProblem, assemble_problem, triangulate_unit_square
from .linsolve import CGSolver
from .output import CsvWriter, write_json, write_vtk
from .schemes import (SchemeSpec, StabilityWarning, SteppingState, TimeGrid, run,
                      sigma_warning)

NORM_COLUMNS = {NormKind.A_INVERSE: "norm_Ainv", NormKind.IDENTITY: "norm_I", NormKind.A: "norm_A"}
MONOTONE_RTOL = 1e-10


class NumericalFailure(RuntimeError):
    """A run produced non-finite values or an unusable result."""


# A fixed two-block SPD system (blocks of size 2) with a non-identity metric,
# used as the matrix-exponential oracle for order checks.
DENSE_K = np.array([
    [3.0, 1.0, 0.5, 0.2],
    [1.0, 2.0, 0.3, 0.4],
    [0.5, 0.3, 4.0, 1.0],
    [0.2, 0.4, 1.0, 2.5],
])
DENSE_M = (np.array([[2.0, 0.5], [0.5, 1.0]]), np.array([[1.5, 0.2], [0.2, 1.0]]))
DENSE_Y0 = np.array([1.0, -0.5, 0.25, 0.8])


def dense_system() -> tuple[BlockOperator, Metric, BlockVector]:
    blocks = {(a, b): sp.csr_matrix(DENSE_K[2 * a:2 * a + 2, 2 * b:2 * b + 2])
              for a in range(2) for b in range(2)}
    K = BlockOperator((2, 2), blocks, symmetric=True)
    metric = Metric([sp.csr_matrix(m) for m in DENSE_M])
    return K, metric, BlockVector.from_flat(DENSE_Y0, (2, 2))


def dense_exact(t: float) -> np.ndarray:
    M = la.block_diag(*DENSE_M)
    return la.expm(-t * np.linalg.solve(M, DENSE_K)) @ DENSE_Y0


def solver_for(cfg: RunConfig) -> CGSolver:
    return CGSolver(tol=cfg.solver_tol, max_iter=cfg.solver_max_iter)


def build_problem(cfg: RunConfig) -> AssembledProblem:
    w0 = None
    if cfg.initial_data == "zero":
        zero = lambda x1, x2: np.zeros_like(x1)  # noqa: E731
        w0 = (zero, zero)
    mesh = triangulate_unit_square(cfg.m)
    return assemble_problem(mesh, cfg.coefficients, w0, lumped_mass=cfg.lumped_mass,
                            transfer=cfg.transfer)


def norm_monitor(K: BlockOperator, metric: Metric, solver: CGSolver,
                 nullspace=()) -> Callable[[SteppingState], dict]:
    def monitor(state):
        return {col: norm_in(state.y, K, metric, kind, solver, nullspace)
                for kind, col in NORM_COLUMNS.items()}
    return monitor


def energy_monitor(spec: SchemeSpec, K: BlockOperator, metric: Metric, tau: float,
                   solver: CGSolver) -> Callable[[SteppingState], dict]:
    R = stab.energy_operator(spec, K, metric, tau, CGSolver(tol=min(solver.tol, 1e-12),
                                                           max_iter=solver.max_iter))

    def monitor(state):
        if state.y_prev is None:
            return {}
        return {"energy": stab.threelevel_energy(state.y, state.y_prev, K, R).E}
    return monitor


def _check_finite(row: dict, n: int) -> None:
    bad = [k for k, v in row.items() if v is not None and not math.isfinite(v)]
    if bad:
        raise NumericalFailure(f"non-finite {', '.join(bad)} at step {n}")


def _gamma_hint(spec: SchemeSpec, problem: AssembledProblem) -> float | None:
    """gamma estimate when it decides the weight warning, else None."""
    if sigma_warning(spec, problem.K.p) is None:
        return None
    return stab.estimate_gamma(problem.K, nullspace=problem.nullspace).gamma


def _monitors(spec, problem, cfg, solver):
    mons = [norm_monitor(problem.K, problem.metric, solver, problem.nullspace)]
    if spec.three_level:
        mons.append(energy_monitor(spec, problem.K, problem.metric, cfg.tau, solver))
    return mons


def cmd_run(cfg: RunConfig, out_dir: str | Path) -> dict:
    """Integrate the configured scheme; write run.csv and VTK snapshots."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    solver = solver_for(cfg)
    spec = cfg.scheme
    grid = TimeGrid(cfg.tau, cfg.N)
    snaps = set(cfg.snapshot_steps)
    written = []
    with CsvWriter(out / "run.csv") as csv:
        for rec in run(spec, problem.u0, problem.K, problem.metric, grid, solver,
                       _monitors(spec, problem, cfg, solver), gamma=_gamma_hint(spec, problem)):
            st = rec.state
            row = {"n": st.n, "t": st.n * cfg.tau, "cg_iters": st.cg_iters, **rec.values}
            _check_finite(row, st.n)
            csv.write(row)
            if st.n in snaps:
                path = out / f"snapshot_{st.n:06d}.vtk"
                write_vtk(path, cfg.m, {"w1": st.y[0], "w2": st.y[1]},
                          title=f"{spec.label()} n={st.n} t={st.n * cfg.tau:.17g}")
                written.append(path.name)
    return {"csv": "run.csv", "snapshots": written, "final": st.y}


def difference_measures(y: BlockVector, ref: BlockVector, metric: Metric,
                        eps_norm: str = "mass") -> dict:
    """eps_a = ||y_a - ref_a|| (mass or Euclidean), delta_a = max-node |y_a - ref_a|."""
    out = {}
    for a in range(y.p):
        d = y[a] - ref[a]
        if eps_norm == "mass":
            eps = math.sqrt(max(float(d @ (metric.matrices[a] @ d)), 0.0))
        else:
            eps = float(np.linalg.norm(d))
        out[f"eps_{a + 1}"] = eps
        out[f"delta_{a + 1}"] = float(np.abs(d).max()) if d.size else 0.0
    return out


def cmd_compare(cfg: RunConfig, out_dir: str | Path) -> dict:
    """Run scheme and reference in lockstep; write compare.csv with eps and delta."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    if problem.K.p != 2:
        raise NumericalFailure("compare expects a two-component problem")
    solver = solver_for(cfg)
    grid = TimeGrid(cfg.tau, cfg.N)
    spec, ref = cfg.scheme, cfg.reference
    gamma = _gamma_hint(spec, problem)
    runs = zip(
        run(spec, problem.u0, problem.K, problem.metric, grid, solver,
            _monitors(spec, problem, cfg, solver), gamma=gamma),
        run(ref, problem.u0, problem.K, problem.metric, grid, solver, gamma=gamma),
    )
    max_eps = [0.0, 0.0]
    with CsvWriter(out / "compare.csv") as csv:
        for rec, rrec in runs:
            st = rec.state
            diff = difference_measures(st.y, rrec.state.y, problem.metric, cfg.eps_norm)
            row = {"n": st.n, "t": st.n * cfg.tau, "cg_iters": st.cg_iters, **rec.values, **diff}
            _check_finite(row, st.n)
            csv.write(row)
            max_eps = [max(max_eps[0], diff["eps_1"]), max(max_eps[1], diff["eps_2"])]
    return {"csv": "compare.csv", "max_eps": max_eps, "scheme": spec.label(),
            "reference": ref.label()}


def fit_order(taus, errors) -> float:
    """Least-squares slope of log(error) against log(tau)."""
    x, y = np.log(np.asarray(taus)), np.log(np.asarray(errors))
    if not np.all(np.isfinite(y)):
        raise NumericalFailure(f"cannot fit an order to errors {list(errors)}")
    return float(np.polyfit(x, y, 1)[0])


def _final_state(spec, y0, K, metric, tau, N, solver):
    state = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StabilityWarning)
        for rec in run(spec, y0, K, metric, TimeGrid(tau, N), solver):
            state = rec.state
    return state.y


def convergence_errors(spec: SchemeSpec, taus, T: float, target: str = "dense",
                       cfg: RunConfig | None = None, solver: CGSolver | None = None):
    """Errors at time T in the metric norm for each tau, and the reference description."""
    solver = solver or CGSolver(tol=1e-13, max_iter=10000)
    steps = [int(round(T / t)) for t in taus]
    if target == "dense":
        K, metric, y0 = dense_system()
        exact = dense_exact(T)
        ref_desc = "matrix exponential"
    else:
        problem = build_problem(cfg)
        K, metric, y0 = problem.K, problem.metric, problem.u0
        fine = min(taus) / 8
        exact = _final_state(spec, y0, K, metric, fine, int(round(T / fine)), solver).data
        ref_desc = f"same scheme at tau={fine:.6g}"
    Mmat = metric.to_sparse()
    errors = []
    for tau, N in zip(taus, steps):
        d = _final_state(spec, y0, K, metric, tau, N, solver).data - exact
        errors.append(math.sqrt(max(float(d @ (Mmat @ d)), 0.0)))
    return errors, ref_desc


def cmd_convergence(cfg: RunConfig, out_dir: str | Path) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    taus = list(cfg.conv_taus)
    solver = CGSolver(tol=min(cfg.solver_tol, 1e-12), max_iter=cfg.solver_max_iter)
    errors, ref_desc = convergence_errors(cfg.scheme, taus, cfg.conv_T, cfg.conv_target, cfg, solver)
    report = {
        "scheme": cfg.scheme.label(),
        "target": cfg.conv_target,
        "reference": ref_desc,
        "T": cfg.conv_T,
        "taus": taus,
        "errors": errors,
        "order": fit_order(taus, errors),
        "formal_order": cfg.scheme.order,
    }
    write_json(out / "convergence.json", report)
    return report


def _inequality(res: stab.InequalityResult) -> dict:
    return {"holds": res.holds, "margin": res.margin, "method": res.method,
            "converged": res.converged}


DENSE_CHECK_MAX_M = 12


def cmd_stability(cfg: RunConfig, out_dir: str | Path) -> dict:
    """gamma estimate, operator-inequality margins and a monotonicity probe."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    spec = cfg.scheme
    tight = CGSolver(tol=min(cfg.solver_tol, 1e-12), max_iter=max(cfg.solver_max_iter, 20000))
    K, metric = problem.K, problem.metric

    g = stab.estimate_gamma(K, nullspace=problem.nullspace)
    report: dict = {
        "scheme": spec.label(),
        "tau": cfg.tau,
        "gamma": {"value": g.gamma, "converged": g.converged, "iterations": g.iterations},
        "sigma_warning": sigma_warning(spec, K.p, g.gamma if g.converged else None),
    }

    if cfg.m <= DENSE_CHECK_MAX_M:
        checks = {}
        if spec.three_level:
            (B, zero), (R, quarter) = stab.three_level_operators(spec, K, metric, cfg.tau, tight)
            checks["B_nonnegative"] = _inequality(stab.check_operator_inequality(B, zero, metric))
            checks["R_above_quarter_A"] = _inequality(
                stab.check_operator_inequality(R, quarter, metric))
        else:
            pair = stab.two_level_operators(spec, K, metric, cfg.tau, tight)
            if pair is not None:
                checks["B_above_half_tau_A"] = _inequality(
                    stab.check_operator_inequality(pair[0], pair[1], metric))
        report["inequalities"] = checks or {"skipped": f"no canonical-form check for {spec.kind.value}"}
    else:
        report["inequalities"] = {"skipped": f"dense checks need m <= {DENSE_CHECK_MAX_M}"}

    series: dict[str, list] = {col: [] for col in NORM_COLUMNS.values()}
    series["energy"] = []
    mons = _monitors(spec, problem, cfg, tight)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StabilityWarning)
        for rec in run(spec, problem.u0, K, metric, TimeGrid(cfg.tau, cfg.probe_steps), tight, mons):
            for key, val in rec.values.items():
                if not math.isfinite(val):
                    raise NumericalFailure(f"non-finite {key} at step {rec.state.n}")
                series[key].append(val)

    guaranteed = stab.guaranteed_quantities(spec)
    name_of = {NormKind.A_INVERSE.value: "norm_Ainv", NormKind.IDENTITY.value: "norm_I",
               NormKind.A.value: "norm_A", "energy": "energy"}
    probe = {}
    for key, vals in series.items():
        if not vals:
            continue
        ratio = stab.max_step_ratio(vals, floor=1e-14 * max(vals))
        probe[key] = {"max_step_ratio": ratio,
                      "non_increasing": ratio <= 1 + MONOTONE_RTOL,
                      "guaranteed": key in {name_of[q] for q in guaranteed}}
    report["probe"] = {"steps": cfg.probe_steps, "quantities": probe,
                       "growth_detected": any(not v["non_increasing"] for v in probe.values())}
    write_json(out / "stability.json", report)
    return report
