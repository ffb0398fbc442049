"""Block vectors and block operator matrices on a direct sum of spaces.

Components are indexed from 0.  A block operator stores its p x p grid of
sparse blocks as a dict keyed by ``(alpha, beta)``; a missing key is a zero
block.  Every metric is block diagonal, so row and column selections commute
with it.
"""
from __future__ import annotations

import enum
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp


class StructureError(ValueError):
    """Raised on incompatible block dimensions or indices."""


class BlockVector:
    """Element of H_1 + ... + H_p stored as one contiguous array.

    ``u[alpha]`` returns a writable view of component ``alpha``.
    """

    __slots__ = ("data", "sizes", "_offsets")

    def __init__(self, components: Iterable[np.ndarray]):
        parts = [np.asarray(c, dtype=float).ravel() for c in components]
        if not parts:
            raise StructureError("a block vector needs at least one component")
        self.sizes = tuple(len(c) for c in parts)
        self._offsets = np.concatenate(([0], np.cumsum(self.sizes)))
        self.data = np.concatenate(parts)

    @classmethod
    def from_flat(cls, data: np.ndarray, sizes: Sequence[int]) -> "BlockVector":
        data = np.asarray(data, dtype=float)
        if data.ndim != 1 or data.size != sum(sizes):
            raise StructureError(
                f"flat array of length {data.size} does not match sizes {tuple(sizes)}"
            )
        out = cls.__new__(cls)
        out.sizes = tuple(int(s) for s in sizes)
        out._offsets = np.concatenate(([0], np.cumsum(out.sizes)))
        out.data = data.copy()
        return out

    @classmethod
    def zeros(cls, sizes: Sequence[int]) -> "BlockVector":
        return cls.from_flat(np.zeros(sum(sizes)), sizes)

    @property
    def p(self) -> int:
        return len(self.sizes)

    def __len__(self) -> int:
        return self.p

    def __getitem__(self, alpha: int) -> np.ndarray:
        if not 0 <= alpha < self.p:
            raise StructureError(f"component index {alpha} out of range for p={self.p}")
        return self.data[self._offsets[alpha]:self._offsets[alpha + 1]]

    def __setitem__(self, alpha: int, value) -> None:
        self[alpha][:] = value

    def components(self) -> list[np.ndarray]:
        return [self[a] for a in range(self.p)]

    def copy(self) -> "BlockVector":
        return BlockVector.from_flat(self.data, self.sizes)

    def _check(self, other: "BlockVector") -> None:
        if not isinstance(other, BlockVector):
            raise TypeError(f"expected BlockVector, got {type(other).__name__}")
        if other.sizes != self.sizes:
            raise StructureError(f"shape mismatch: {self.sizes} vs {other.sizes}")

    def __add__(self, other: "BlockVector") -> "BlockVector":
        self._check(other)
        return BlockVector.from_flat(self.data + other.data, self.sizes)

    def __sub__(self, other: "BlockVector") -> "BlockVector":
        self._check(other)
        return BlockVector.from_flat(self.data - other.data, self.sizes)

    def __mul__(self, c: float) -> "BlockVector":
        return BlockVector.from_flat(float(c) * self.data, self.sizes)

    __rmul__ = __mul__

    def __truediv__(self, c: float) -> "BlockVector":
        return BlockVector.from_flat(self.data / float(c), self.sizes)

    def __neg__(self) -> "BlockVector":
        return BlockVector.from_flat(-self.data, self.sizes)

    def axpy(self, a: float, x: "BlockVector") -> "BlockVector":
        """In-place ``self += a * x``; returns self."""
        self._check(x)
        self.data += a * x.data
        return self

    def __repr__(self) -> str:
        return f"BlockVector(sizes={self.sizes})"


def _as_sparse(block) -> sp.csr_matrix:
    return sp.csr_matrix(block, dtype=float)


class BlockOperator:
    """p x p operator matrix with sparse blocks; block (a, b) maps H_b to H_a.

    ``symmetric`` is a declaration, not a detected property: the caller
    asserts A_ab == A_ba^T (assembly builds one as the transpose of the other).
    """

    def __init__(
        self,
        sizes: Sequence[int],
        blocks: Mapping[tuple[int, int], object],
        symmetric: bool = False,
    ):
        self.sizes = tuple(int(s) for s in sizes)
        self.symmetric = bool(symmetric)
        p = len(self.sizes)
        self._blocks: dict[tuple[int, int], sp.csr_matrix] = {}
        for (a, b), block in blocks.items():
            if block is None:
                continue
            if not (0 <= a < p and 0 <= b < p):
                raise StructureError(f"block index ({a}, {b}) out of range for p={p}")
            mat = _as_sparse(block)
            if mat.shape != (self.sizes[a], self.sizes[b]):
                raise StructureError(
                    f"block ({a}, {b}) has shape {mat.shape}, "
                    f"expected {(self.sizes[a], self.sizes[b])}"
                )
            self._blocks[(a, b)] = mat

    @property
    def p(self) -> int:
        return len(self.sizes)

    @property
    def shape(self) -> tuple[int, int]:
        n = sum(self.sizes)
        return (n, n)

    def block(self, a: int, b: int) -> sp.csr_matrix | None:
        return self._blocks.get((a, b))

    def keys(self) -> list[tuple[int, int]]:
        return sorted(self._blocks)

    def has_block(self, a: int, b: int) -> bool:
        return (a, b) in self._blocks

    def apply(self, u: BlockVector) -> BlockVector:
        return block_apply(self, u)

    def row_apply(self, alpha: int, u: BlockVector) -> np.ndarray:
        """Component ``alpha`` of the product, i.e. sum_b A_{alpha b} u_b."""
        out = np.zeros(self.sizes[alpha])
        for b in range(self.p):
            blk = self._blocks.get((alpha, b))
            if blk is not None:
                out += blk @ u[b]
        return out

    def transpose(self) -> "BlockOperator":
        return BlockOperator(
            self.sizes,
            {(b, a): blk.T.tocsr() for (a, b), blk in self._blocks.items()},
            symmetric=self.symmetric,
        )

    def scaled(self, c: float) -> "BlockOperator":
        return BlockOperator(
            self.sizes, {k: c * v for k, v in self._blocks.items()}, self.symmetric
        )

    def __add__(self, other: "BlockOperator") -> "BlockOperator":
        if other.sizes != self.sizes:
            raise StructureError(f"shape mismatch: {self.sizes} vs {other.sizes}")
        blocks = dict(self._blocks)
        for k, v in other._blocks.items():
            blocks[k] = blocks[k] + v if k in blocks else v
        return BlockOperator(self.sizes, blocks, self.symmetric and other.symmetric)

    def to_sparse(self) -> sp.csr_matrix:
        grid = [[self._blocks.get((a, b)) for b in range(self.p)] for a in range(self.p)]
        # bmat needs at least one block per row and column to infer sizes
        for a in range(self.p):
            if grid[a][a] is None:
                grid[a][a] = sp.csr_matrix((self.sizes[a], self.sizes[a]))
        return sp.bmat(grid, format="csr")

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def __repr__(self) -> str:
        return f"BlockOperator(sizes={self.sizes}, blocks={self.keys()}, symmetric={self.symmetric})"


class Metric:
    """Block-diagonal SPD Gram matrices defining (u, v) = sum_a u_a^T M_a v_a."""

    def __init__(self, matrices: Sequence[object], check: bool = True):
        self.matrices = [_as_sparse(m) for m in matrices]
        self.sizes = tuple(m.shape[0] for m in self.matrices)
        for a, m in enumerate(self.matrices):
            if m.shape[0] != m.shape[1]:
                raise StructureError(f"metric block {a} is not square: {m.shape}")
        if check:
            self.check_spd()

    @classmethod
    def identity(cls, sizes: Sequence[int]) -> "Metric":
        return cls([sp.identity(n, format="csr") for n in sizes], check=False)

    @property
    def p(self) -> int:
        return len(self.sizes)

    def check_spd(self, probes: int = 4, seed: int = 0) -> None:
        rng = np.random.default_rng(seed)
        for a, m in enumerate(self.matrices):
            if abs(m - m.T).max() > 1e-12 * max(abs(m).max(), 1.0):
                raise ValueError(f"metric block {a} is not symmetric")
            if np.any(m.diagonal() <= 0):
                raise ValueError(f"metric block {a} has a non-positive diagonal entry")
            for _ in range(probes):
                x = rng.standard_normal(m.shape[0])
                if x @ (m @ x) <= 0:
                    raise ValueError(f"metric block {a} is not positive definite")

    def apply(self, u: BlockVector) -> BlockVector:
        return BlockVector([self.matrices[a] @ u[a] for a in range(self.p)])

    def as_operator(self) -> BlockOperator:
        return BlockOperator(
            self.sizes, {(a, a): m for a, m in enumerate(self.matrices)}, symmetric=True
        )

    def to_sparse(self) -> sp.csr_matrix:
        return sp.block_diag(self.matrices, format="csr")


class NormKind(enum.Enum):
    A_INVERSE = "A_inverse"
    IDENTITY = "Identity"
    A = "A"


def block_apply(A: BlockOperator, u: BlockVector) -> BlockVector:
    """v_a = sum_b A_ab u_b, summed in ascending b."""
    if u.sizes != A.sizes:
        raise StructureError(f"operator sizes {A.sizes} do not match vector sizes {u.sizes}")
    return BlockVector([A.row_apply(a, u) for a in range(A.p)])


def inner(u: BlockVector, v: BlockVector, metric: Metric | None = None) -> float:
    if u.sizes != v.sizes:
        raise StructureError(f"shape mismatch: {u.sizes} vs {v.sizes}")
    if metric is None:
        return float(u.data @ v.data)
    if metric.sizes != u.sizes:
        raise StructureError(f"metric sizes {metric.sizes} do not match {u.sizes}")
    return float(sum(u[a] @ (metric.matrices[a] @ v[a]) for a in range(u.p)))


def project_out(u: BlockVector, nullspace: Sequence[BlockVector], metric: Metric | None) -> BlockVector:
    """Remove the metric-orthogonal projection of ``u`` onto ``nullspace``."""
    if not nullspace:
        return u.copy()
    basis = np.array([n.data for n in nullspace]).T
    gram_cols = np.array([(metric.apply(n).data if metric else n.data) for n in nullspace]).T
    coef = np.linalg.solve(basis.T @ gram_cols, gram_cols.T @ u.data)
    return BlockVector.from_flat(u.data - basis @ coef, u.sizes)


def norm_in(
    u: BlockVector,
    A: BlockOperator,
    metric: Metric | None,
    kind: NormKind,
    solver=None,
    nullspace: Sequence[BlockVector] = (),
) -> float:
    """Norm of ``u`` in H_D for D = A^{-1}, I or A.

    ``A`` is given in bilinear-form (stiffness) representation, so that
    (A u, v) = u^T K v.  For ``A_INVERSE`` the Riesz representative of u is
    found from K z = M u by CG and the value max_z 2 z^T M u - z^T K z is
    returned, which is quadratic in the solver error.  If ``nullspace`` is
    given (K singular), u is first projected onto its metric-orthogonal
    complement, giving the norm of the pseudo-inverse.
    """
    kind = NormKind(kind)
    if kind is NormKind.IDENTITY:
        return float(np.sqrt(max(inner(u, u, metric), 0.0)))
    if kind is NormKind.A:
        return float(np.sqrt(max(u.data @ block_apply(A, u).data, 0.0)))

    from .linsolve import CGSolver, SolverError

    solver = solver or CGSolver(tol=1e-10)
    w = project_out(u, nullspace, metric) if nullspace else u
    b = metric.apply(w) if metric is not None else w.copy()
    if not np.any(b.data):
        return 0.0
    z, report = solver.solve(A, b)
    if not report.converged:
        raise SolverError(
            f"A^-1 norm solve did not converge: residual {report.final_residual:.3e}",
            report,
        )
    value = 2.0 * (z.data @ b.data) - z.data @ block_apply(A, z).data
    return float(np.sqrt(max(value, 0.0)))


def extract_diagonal(A: BlockOperator) -> BlockOperator:
    return BlockOperator(
        A.sizes,
        {(a, a): A.block(a, a) for a in range(A.p) if A.has_block(a, a)},
        symmetric=True,
    )


def _require_symmetric(A: BlockOperator) -> None:
    if not A.symmetric:
        raise StructureError("operation requires a block-symmetric operator (A_ab = A_ba^T)")


def triangular_parts(A: BlockOperator) -> tuple[BlockOperator, BlockOperator, BlockOperator]:
    """Return (L, D, L*) with L the strictly lower blocks and L* its block transpose."""
    _require_symmetric(A)
    lower = {(a, b): A.block(a, b) for (a, b) in A.keys() if a > b}
    L = BlockOperator(A.sizes, lower)
    return L, extract_diagonal(A), L.transpose()


def alternating_triangular_split(A: BlockOperator) -> tuple[BlockOperator, BlockOperator]:
    """A = A1 + A2 with A1 = L + D/2 and A2 = D/2 + L* = A1*."""
    L, D, Lt = triangular_parts(A)
    half = D.scaled(0.5)
    return L + half, half + Lt


def row_split(A: BlockOperator, alpha: int) -> BlockOperator:
    """Keep block-row ``alpha`` only (R_alpha A)."""
    if not 0 <= alpha < A.p:
        raise StructureError(f"row index {alpha} out of range for p={A.p}")
    return BlockOperator(A.sizes, {(a, b): A.block(a, b) for (a, b) in A.keys() if a == alpha})


def column_split(A: BlockOperator, alpha: int) -> BlockOperator:
    """Keep block-column ``alpha`` only (A R_alpha)."""
    if not 0 <= alpha < A.p:
        raise StructureError(f"column index {alpha} out of range for p={A.p}")
    return BlockOperator(A.sizes, {(a, b): A.block(a, b) for (a, b) in A.keys() if b == alpha})
