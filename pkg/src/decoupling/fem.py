"""P1 finite elements for the two-component cross-diffusion test problem.

Unit square, uniform m x m lattice, each cell cut along the diagonal from
its lower-left to its upper-right corner.  Nodes are numbered row-major,
``k = j * (m + 1) + i`` for the node at (i/m, j/m).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .blockalg import BlockOperator, BlockVector, Metric
from .linsolve import CGSolver

INTERFACE = 0.5


@dataclass(frozen=True)
class Mesh2D:
    m: int
    nodes: np.ndarray = field(repr=False)      # (n_nodes, 2)
    triangles: np.ndarray = field(repr=False)  # (n_tri, 3), counter-clockwise

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.m

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)


def triangulate_unit_square(m: int) -> Mesh2D:
    if int(m) != m or m < 2:
        raise ValueError(f"m must be an integer >= 2, got {m}")
    m = int(m)
    if m % 2:
        raise ValueError(
            f"m must be even so that the coefficient jump at x2 = 0.5 "
            f"lies on element edges; got m = {m}"
        )
    ticks = np.linspace(0.0, 1.0, m + 1)
    xx, yy = np.meshgrid(ticks, ticks)  # row-major: x varies fastest
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    i, j = np.meshgrid(np.arange(m), np.arange(m))
    n0 = (j * (m + 1) + i).ravel()
    n1 = n0 + 1
    n2 = n0 + m + 2
    n3 = n0 + m + 1
    lower = np.column_stack([n0, n1, n2])
    upper = np.column_stack([n0, n2, n3])
    triangles = np.empty((2 * m * m, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return Mesh2D(m, nodes, triangles)


def _gradients(mesh: Mesh2D) -> tuple[np.ndarray, np.ndarray]:
    """Element areas and P1 basis gradients, shape (n_tri, 3, 2)."""
    p = mesh.nodes[mesh.triangles]
    area = mesh.signed_areas()
    # grad phi_i = rot90(p_k - p_j) / (2 area) for (i, j, k) cyclic
    grads = np.empty((len(area), 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        edge = p[:, k] - p[:, j]
        grads[:, i, 0] = -edge[:, 1]
        grads[:, i, 1] = edge[:, 0]
    grads /= (2.0 * area)[:, None, None]
    return area, grads


def _scatter(mesh: Mesh2D, local: np.ndarray) -> sp.csr_matrix:
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_nodes
    # coo -> csr sums duplicates in a fixed order
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_mass(mesh: Mesh2D, lumped: bool = False) -> sp.csr_matrix:
    area = mesh.signed_areas()
    if lumped:
        diag = np.zeros(mesh.n_nodes)
        np.add.at(diag, mesh.triangles.ravel(), np.repeat(area / 3.0, 3))
        return sp.diags(diag, format="csr")
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = area[:, None, None] * ref[None, :, :]
    return _scatter(mesh, local)


def assemble_stiffness(mesh: Mesh2D, d) -> sp.csr_matrix:
    """Stiffness matrix of int d grad u . grad v with d constant per element."""
    area, grads = _gradients(mesh)
    d = np.broadcast_to(np.asarray(d, dtype=float), area.shape)
    local = (d * area)[:, None, None] * np.einsum("tik,tjk->tij", grads, grads)
    return _scatter(mesh, local)


def load_vector(mesh: Mesh2D, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
    """int f phi_i by the three-edge-midpoint rule on every triangle."""
    p = mesh.nodes[mesh.triangles]
    area = mesh.signed_areas()
    mids = [(p[:, 1] + p[:, 2]) / 2, (p[:, 2] + p[:, 0]) / 2, (p[:, 0] + p[:, 1]) / 2]
    fm = np.column_stack([f(q[:, 0], q[:, 1]) for q in mids])  # fm[:, i] opposite vertex i
    # phi_i is 1/2 at the two midpoints adjacent to vertex i, 0 at the opposite one
    local = np.empty_like(fm)
    for i in range(3):
        local[:, i] = (fm[:, (i + 1) % 3] + fm[:, (i + 2) % 3]) * area / 6.0
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.triangles.ravel(), local.ravel())
    return out


@dataclass(frozen=True)
class CoefficientField:
    """Piecewise-constant (d11, d12, d22) above and below x2 = 0.5; d21 = d12."""

    upper: tuple[float, float, float] = (5.0, -2.0, 1.0)
    lower: tuple[float, float, float] = (1.0, 2.0, 5.0)

    def element_values(self, mesh: Mesh2D) -> dict[tuple[int, int], np.ndarray]:
        is_upper = mesh.centroids()[:, 1] > INTERFACE
        up = np.asarray(self.upper, dtype=float)
        lo = np.asarray(self.lower, dtype=float)
        vals = np.where(is_upper[:, None], up[None, :], lo[None, :])
        return {(0, 0): vals[:, 0], (0, 1): vals[:, 1], (1, 0): vals[:, 1], (1, 1): vals[:, 2]}


@dataclass(frozen=True)
class SubdomainCheck:
    name: str
    passed: bool
    margin: float
    d11: float
    d22: float


def ellipticity_check(coeffs: CoefficientField) -> list[SubdomainCheck]:
    """Per-subdomain test of d11 > 0, d22 > 0, 4 d11 d22 > (d12 + d21)^2."""
    out = []
    for name, (d11, d12, d22) in (("upper", coeffs.upper), ("lower", coeffs.lower)):
        margin = 4.0 * d11 * d22 - (2.0 * d12) ** 2
        out.append(SubdomainCheck(name, d11 > 0 and d22 > 0 and margin > 0, margin, d11, d22))
    return out


def default_initial_data() -> tuple[Callable, Callable]:
    def w1(x1, x2):
        return 0.5 + 0.25 * (np.cos(2 * np.pi * x1) + np.cos(2 * np.pi * x2))

    def w2(x1, x2):
        return 16.0 * x1 ** 2 * (1.0 - x1) ** 2

    return w1, w2


@dataclass
class AssembledProblem:
    mesh: Mesh2D
    metric: Metric
    K: BlockOperator
    u0: BlockVector

    @property
    def nullspace(self) -> list[BlockVector]:
        """Constants in each component span the kernel of the Neumann operator."""
        n = self.mesh.n_nodes
        e1 = BlockVector([np.ones(n), np.zeros(n)])
        e2 = BlockVector([np.zeros(n), np.ones(n)])
        return [e1, e2]


def assemble_problem(
    mesh: Mesh2D,
    coeffs: CoefficientField | None = None,
    w0: Sequence[Callable] | None = None,
    lumped_mass: bool = False,
    transfer: str = "projection",
    solver: CGSolver | None = None,
) -> AssembledProblem:
    """Mass metric, the four stiffness blocks and initial data for the test problem.

    ``transfer`` is ``"projection"`` (L2 projection M u0 = load) or
    ``"interpolation"`` (nodal values).
    """
    coeffs = coeffs or CoefficientField()
    failed = [c for c in ellipticity_check(coeffs) if not c.passed]
    if failed:
        detail = "; ".join(
            f"{c.name}: d11={c.d11}, d22={c.d22}, 4*d11*d22-(d12+d21)^2={c.margin:g}"
            for c in failed
        )
        raise ValueError(f"coefficients violate the ellipticity condition ({detail})")

    M = assemble_mass(mesh, lumped=lumped_mass)
    d = coeffs.element_values(mesh)
    K11 = assemble_stiffness(mesh, d[(0, 0)])
    K12 = assemble_stiffness(mesh, d[(0, 1)])
    K22 = assemble_stiffness(mesh, d[(1, 1)])
    n = mesh.n_nodes
    K = BlockOperator(
        (n, n),
        {(0, 0): K11, (0, 1): K12, (1, 0): K12.T.tocsr(), (1, 1): K22},
        symmetric=True,
    )
    metric = Metric([M, M], check=False)

    w0 = w0 or default_initial_data()
    if transfer == "projection":
        solver = solver or CGSolver(tol=1e-13, max_iter=5000)
        comps = []
        for f in w0:
            x, _ = solver.solve(M, load_vector(mesh, f), strict=True)
            comps.append(x)
    elif transfer == "interpolation":
        comps = [np.asarray(f(mesh.nodes[:, 0], mesh.nodes[:, 1]), dtype=float) for f in w0]
    else:
        raise ValueError(f"unknown transfer {transfer!r}")
    return AssembledProblem(mesh, metric, K, BlockVector(comps))
