"""Discrete exterior calculus operators on a simplicial complex.

Sign convention: deleting vertex ``i`` (0-based) from a k-simplex contributes
``(-1)**i``. The exterior derivative is indexed so that ``d^k`` maps
k-cochains to (k+1)-cochains, i.e. ``d^k = boundary(k+1).T``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

import numpy as np
import scipy.sparse as sps

from .complex import Cochain, SimplicialComplex
from .errors import BlockShapeError, DegreeError, DimensionError, FormatError

__all__ = [
    "SparseOperator",
    "boundary_matrix",
    "coboundary_matrix",
    "hodge_laplacian",
    "graph_laplacian",
    "adjacency_matrix",
    "identity_operator",
    "apply",
    "exact_rank",
    "betti_numbers",
    "block_operator",
    "write_coo",
    "read_coo",
]

Tag = tuple  # (complex uid, degree or "mixed")


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Linear map between cochain spaces of one complex.

    ``matrix`` is kept in canonical CSR form: no duplicate coordinates and no
    stored zeros.
    """

    matrix: sps.csr_matrix
    domain: Tag
    codomain: Tag
    name: str = ""

    def __post_init__(self):
        M = sps.csr_matrix(self.matrix, dtype=float, copy=True)
        M.sum_duplicates()
        M.eliminate_zeros()
        M.sort_indices()
        object.__setattr__(self, "matrix", M)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        """Coordinate triples in row-major order."""
        M = self.matrix
        out = []
        for i in range(M.shape[0]):
            for p in range(M.indptr[i], M.indptr[i + 1]):
                out.append((i, int(M.indices[p]), float(M.data[p])))
        return out

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    @property
    def T(self) -> "SparseOperator":
        name = f"{self.name}^T" if self.name else ""
        return SparseOperator(self.matrix.T, self.codomain, self.domain, name)

    def __matmul__(self, other: "SparseOperator") -> "SparseOperator":
        if not isinstance(other, SparseOperator):
            return NotImplemented
        if self.domain != other.codomain:
            raise DimensionError(f"cannot compose {self.domain} <- {other.codomain}")
        return SparseOperator(self.matrix @ other.matrix, other.domain, self.codomain)

    def __add__(self, other: "SparseOperator") -> "SparseOperator":
        if self.domain != other.domain or self.codomain != other.codomain:
            raise DimensionError("operators act between different spaces")
        return SparseOperator(self.matrix + other.matrix, self.domain, self.codomain)

    def __neg__(self) -> "SparseOperator":
        return SparseOperator(-self.matrix, self.domain, self.codomain, self.name)

    def __mul__(self, alpha: float) -> "SparseOperator":
        return SparseOperator(alpha * self.matrix, self.domain, self.codomain)

    __rmul__ = __mul__

    def __repr__(self):
        label = self.name or "SparseOperator"
        return f"<{label} {self.rows}x{self.cols} nnz={self.nnz} {self.domain[1]}->{self.codomain[1]}>"


def _tag(K: SimplicialComplex, k) -> Tag:
    return (K.uid, k)


def _check_degree(K: SimplicialComplex, k: int, lo: int, hi: int, what: str):
    if not isinstance(k, (int, np.integer)) or not lo <= k <= hi:
        raise DegreeError(f"{what} degree {k} outside [{lo}, {hi}] for a {K.dim}-complex")


def _boundary(K: SimplicialComplex, k: int) -> SparseOperator:
    # no range check; k == dim + 1 gives the empty n_dim x 0 map
    rows, cols, vals = [], [], []
    faces = K.index_of
    for j, s in enumerate(K.simplices(k)):
        for i in range(len(s)):
            rows.append(faces[s[:i] + s[i + 1:]])
            cols.append(j)
            vals.append(-1.0 if i % 2 else 1.0)
    M = sps.csr_matrix((vals, (rows, cols)), shape=(K.n(k - 1), K.n(k)))
    return SparseOperator(M, _tag(K, k), _tag(K, k - 1), f"boundary{k}")


def boundary_matrix(K: SimplicialComplex, k: int) -> SparseOperator:
    """Signed incidence matrix of k-simplices against their (k-1)-faces.

    ``k == K.dim + 1`` is accepted and returns the map from the trivial space
    (shape ``n_dim x 0``).
    """
    _check_degree(K, k, 1, K.dim + 1, "boundary")
    return _boundary(K, k)


def coboundary_matrix(K: SimplicialComplex, k: int) -> SparseOperator:
    """Discrete exterior derivative d^k as the transpose of boundary k+1.

    For ``k == K.dim`` this is the zero map into the trivial space.
    """
    _check_degree(K, k, 0, K.dim, "coboundary")
    B = _boundary(K, k + 1)
    return SparseOperator(B.matrix.T, _tag(K, k), _tag(K, k + 1), f"d{k}")


def hodge_laplacian(K: SimplicialComplex, k: int) -> SparseOperator:
    _check_degree(K, k, 0, K.dim, "Hodge Laplacian")
    n = K.n(k)
    L = sps.csr_matrix((n, n))
    if k >= 1:
        B = _boundary(K, k).matrix
        L = L + B.T @ B
    if k < K.dim:
        B = _boundary(K, k + 1).matrix
        L = L + B @ B.T
    return SparseOperator(L, _tag(K, k), _tag(K, k), f"L{k}")


def adjacency_matrix(K: SimplicialComplex) -> SparseOperator:
    """Vertex adjacency of the 1-skeleton."""
    n = K.n(0)
    rows, cols = [], []
    for u, v in K.simplices(1):
        i, j = K.index_of[(u,)], K.index_of[(v,)]
        rows += [i, j]
        cols += [j, i]
    A = sps.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    return SparseOperator(A, _tag(K, 0), _tag(K, 0), "A")


def graph_laplacian(K: SimplicialComplex, paper_sign: bool = False) -> SparseOperator:
    """Combinatorial Laplacian of the 1-skeleton.

    Returns ``D - A`` by default, which coincides with the 0-th Hodge
    Laplacian. ``paper_sign=True`` returns ``A - D``.
    """
    A = adjacency_matrix(K).matrix
    D = sps.diags(np.asarray(A.sum(axis=1)).ravel())
    L = A - D if paper_sign else D - A
    return SparseOperator(L, _tag(K, 0), _tag(K, 0), "graph_laplacian")


def identity_operator(K: SimplicialComplex, k) -> SparseOperator:
    n = len(K) if k == "mixed" else K.n(k)
    return SparseOperator(sps.identity(n, format="csr"), _tag(K, k), _tag(K, k), "I")


def apply(A: SparseOperator, f: Cochain) -> Cochain:
    """Apply an operator to every channel of a cochain."""
    if (f.complex.uid, f.degree) != A.domain:
        raise DimensionError(
            f"operator acts on degree {A.domain[1]} cochains, got degree {f.degree}"
        )
    if f.values.shape[0] != A.cols:
        raise DimensionError(f"operator has {A.cols} columns, cochain has {f.values.shape[0]} rows")
    return Cochain(f.complex, A.codomain[1], A.matrix @ f.values)


# --- exact rank and Betti numbers ---------------------------------------------

def exact_rank(M) -> int:
    """Rank over the rationals by sparse Gaussian elimination.

    Entries must be integers (or exact rationals). Rows are eliminated with
    ``fractions.Fraction`` so no rounding occurs.
    """
    M = sps.csr_matrix(M)
    rows = []
    for i in range(M.shape[0]):
        r = {}
        for p in range(M.indptr[i], M.indptr[i + 1]):
            v = M.data[p]
            if v != 0:
                if v != int(v):
                    raise ValueError("exact_rank needs integer entries")
                r[int(M.indices[p])] = Fraction(int(v))
        if r:
            rows.append(r)
    # bucket rows by pivot column; reduce each incoming row against the bucket
    pivots: dict[int, dict] = {}
    rank = 0
    for r in rows:
        while r:
            col = min(r)
            if col not in pivots:
                pivots[col] = r
                rank += 1
                break
            p = pivots[col]
            factor = r[col] / p[col]
            for c, v in p.items():
                nv = r.get(c, 0) - factor * v
                if nv:
                    r[c] = nv
                else:
                    r.pop(c, None)
    return rank


def betti_numbers(K: SimplicialComplex) -> list[int]:
    ranks = [0] + [exact_rank(_boundary(K, k).matrix) for k in range(1, K.dim + 1)] + [0]
    return [K.n(k) - ranks[k] - ranks[k + 1] for k in range(K.dim + 1)]


# --- block operators on the full cochain space -----------------------------------

def block_operator(K: SimplicialComplex, spec: Mapping[tuple[int, int], SparseOperator]) -> SparseOperator:
    """Assemble an operator on the direct sum of all cochain spaces.

    ``spec`` maps ``(target degree j, source degree i)`` to an operator from
    i-cochains to j-cochains. Degree blocks are laid out in order 0, 1, 2, ...
    and unspecified blocks are zero.
    """
    d = K.dim
    grid = [[None] * (d + 1) for _ in range(d + 1)]
    for (j, i), op in spec.items():
        if not (0 <= i <= d and 0 <= j <= d):
            raise BlockShapeError(f"block ({j}, {i}) outside degrees 0..{d}")
        M = op.matrix if isinstance(op, SparseOperator) else sps.csr_matrix(op)
        if M.shape != (K.n(j), K.n(i)):
            raise BlockShapeError(
                f"block ({j}, {i}) has shape {M.shape}, expected {(K.n(j), K.n(i))}"
            )
        if isinstance(op, SparseOperator) and (op.domain[1], op.codomain[1]) != (i, j):
            raise BlockShapeError(
                f"block ({j}, {i}) holds an operator {op.domain[1]} -> {op.codomain[1]}"
            )
        grid[j][i] = M
    for k in range(d + 1):
        # bmat needs one explicit block per row and column to fix the sizes
        if grid[k][k] is None:
            grid[k][k] = sps.csr_matrix((K.n(k), K.n(k)))
    total = sps.bmat(grid, format="csr") if d >= 0 else sps.csr_matrix((0, 0))
    return SparseOperator(total, _tag(K, "mixed"), _tag(K, "mixed"), "block")


# --- coordinate text format ---------------------------------------------------

def write_coo(A: SparseOperator, path):
    """Write ``rows cols nnz`` then one ``row col value`` line per entry."""
    lines = [f"{A.rows} {A.cols} {A.nnz}"]
    lines += [f"{i} {j} {v:.17g}" for i, j, v in A.entries]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_coo(path) -> sps.csr_matrix:
    try:
        with open(path) as fh:
            head = fh.readline().split()
            r, c, nnz = (int(x) for x in head)
            data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    except (OSError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if data.shape[0] != nnz:
        raise FormatError(f"{path}: header says {nnz} entries, found {data.shape[0]}")
    return sps.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(r, c))
