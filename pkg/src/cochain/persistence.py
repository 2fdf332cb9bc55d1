"""Vietoris-Rips persistent homology over GF(2) and distances between diagrams.

Diagrams are reported for homology degrees ``0 .. max_dim - 1`` (degree 0
only when ``max_dim`` is 0): classes in degree ``max_dim`` cannot die in a
filtration truncated at ``max_dim``-simplices, so they are not meaningful.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .complex import SimplicialComplex, build_complex
from .errors import InfiniteMismatchError, UnsupportedDimension

__all__ = [
    "Filtration",
    "PersistencePairing",
    "PersistenceDiagram",
    "PersistenceStructure",
    "vietoris_rips",
    "compute_persistence",
    "persistent_homology",
    "diagram_distance",
    "bottleneck_distance",
    "match_diagrams",
    "critical_edges",
    "write_diagram_csv",
    "read_diagram_csv",
]


@dataclass(frozen=True)
class Filtration:
    """Simplices in filtration order with their entry values.

    Order is by value, then dimension, then lexicographic vertex tuple, so
    every face precedes its cofaces.
    """

    simplices: tuple[tuple[int, ...], ...]
    values: np.ndarray
    max_dim: int
    n_points: int
    index_of: dict = field(repr=False, compare=False)

    def __len__(self):
        return len(self.simplices)

    @property
    def complex(self) -> SimplicialComplex:
        return build_complex(self.simplices)

    def dim(self, i: int) -> int:
        return len(self.simplices[i]) - 1

    def boundary(self, i: int) -> list[int]:
        s = self.simplices[i]
        if len(s) == 1:
            return []
        return [self.index_of[f] for f in combinations(s, len(s) - 1)]

    def homology_degrees(self) -> range:
        return range(max(1, self.max_dim))


def vietoris_rips(dX, max_dim: int = 2, max_radius: float = math.inf) -> Filtration:
    """Vietoris-Rips filtration of a distance matrix up to ``max_dim``-simplices."""
    if not 0 <= max_dim <= 2:
        raise UnsupportedDimension(f"max_dim must be 0, 1 or 2, got {max_dim}")
    D = np.asarray(dX, dtype=float)
    n = D.shape[0]
    entries = [((i,), 0.0) for i in range(n)]
    if max_dim >= 1 and n >= 2:
        iu, ju = np.triu_indices(n, 1)
        keep = D[iu, ju] <= max_radius
        entries += [((int(i), int(j)), float(D[i, j])) for i, j in zip(iu[keep], ju[keep])]
    if max_dim >= 2 and n >= 3:
        tri = np.array(list(combinations(range(n), 3)), dtype=int)
        a, b, c = tri.T
        vals = np.maximum(np.maximum(D[a, b], D[a, c]), D[b, c])
        keep = vals <= max_radius
        entries += [(tuple(int(v) for v in t), float(x)) for t, x in zip(tri[keep], vals[keep])]
    entries.sort(key=lambda e: (e[1], len(e[0]), e[0]))
    simplices = tuple(e[0] for e in entries)
    values = np.array([e[1] for e in entries], dtype=float)
    return Filtration(simplices, values, max_dim, n, {s: i for i, s in enumerate(simplices)})


@dataclass(frozen=True)
class PersistencePairing:
    """Per homology degree, (birth index, death index or None) into the filtration order.

    Zero-persistence pairs are kept here.
    """

    pairs: dict[int, list[tuple[int, int | None]]]

    def __getitem__(self, k):
        return self.pairs.get(k, [])


@dataclass(frozen=True)
class PersistenceDiagram:
    """Per homology degree, an ``m x 2`` array of (birth, death) with ``inf`` deaths.

    ``sources[k][r]`` is the pairing that produced row ``r`` of degree ``k``.
    """

    points: dict[int, np.ndarray]
    sources: dict[int, list[tuple[int, int | None]]] = field(default_factory=dict)

    def __getitem__(self, k) -> np.ndarray:
        return self.points.get(k, np.zeros((0, 2)))

    @property
    def degrees(self):
        return sorted(self.points)


@dataclass(frozen=True)
class PersistenceStructure:
    pairings: PersistencePairing
    diagrams: PersistenceDiagram
    filtration: Filtration


def _reduce(filt: Filtration):
    """Standard column reduction over GF(2); returns ``{birth index: death index}``."""
    low_to_col: dict[int, int] = {}
    columns: dict[int, set] = {}
    death_of: dict[int, int] = {}
    for j in range(len(filt)):
        col = set(filt.boundary(j))
        while col:
            low = max(col)
            other = low_to_col.get(low)
            if other is None:
                break
            col ^= columns[other]
        if col:
            low = max(col)
            low_to_col[low] = j
            columns[j] = col
            death_of[low] = j
    return death_of


def compute_persistence(filt: Filtration) -> PersistenceStructure:
    death_of = _reduce(filt)
    killers = set(death_of.values())
    degrees = filt.homology_degrees()
    pairs = {k: [] for k in degrees}
    for i in range(len(filt)):
        if i in killers:
            continue
        k = filt.dim(i)
        if k in pairs:
            pairs[k].append((i, death_of.get(i)))
    points, sources = {}, {}
    for k, plist in pairs.items():
        rows, src = [], []
        for b, d in plist:
            birth = filt.values[b]
            death = math.inf if d is None else filt.values[d]
            if death > birth:
                rows.append((birth, death))
                src.append((b, d))
        points[k] = np.array(rows, dtype=float).reshape(-1, 2)
        sources[k] = src
    return PersistenceStructure(PersistencePairing(pairs), PersistenceDiagram(points, sources), filt)


def persistent_homology(dX, max_dim: int = 2, max_radius: float = math.inf) -> PersistenceStructure:
    return compute_persistence(vietoris_rips(dX, max_dim, max_radius))


def _max_edge(filt: Filtration, simplex: tuple[int, ...]):
    if len(simplex) < 2:
        return None
    # the edge entering last is the one whose length gives the simplex value
    edges = list(combinations(simplex, 2))
    return max(edges, key=lambda e: filt.index_of[e])


def critical_edges(ps: PersistenceStructure, filt: Filtration | None = None) -> dict[int, list]:
    """For each diagram point, the (birth edge, death edge) vertex pairs.

    An entry is ``None`` for vertex births and for infinite deaths.
    """
    filt = ps.filtration if filt is None else filt
    out = {}
    for k, src in ps.diagrams.sources.items():
        out[k] = [
            (_max_edge(filt, filt.simplices[b]),
             None if d is None else _max_edge(filt, filt.simplices[d]))
            for b, d in src
        ]
    return out


# --- diagram distances -----------------------------------------------------------

def _points(D, degree) -> np.ndarray:
    if isinstance(D, PersistenceStructure):
        D = D.diagrams
    if isinstance(D, PersistenceDiagram):
        return D[degree]
    return np.asarray(D, dtype=float).reshape(-1, 2)


def _split_finite(P):
    fin = np.isfinite(P[:, 1])
    return np.flatnonzero(fin), np.flatnonzero(~fin)


def _essential_match(A, B, ia, ib):
    if len(ia) != len(ib):
        raise InfiniteMismatchError(
            f"diagrams have {len(ia)} and {len(ib)} points of infinite persistence"
        )
    oa = ia[np.argsort(A[ia, 0], kind="stable")]
    ob = ib[np.argsort(B[ib, 0], kind="stable")]
    return list(zip(oa.tolist(), ob.tolist())), np.abs(A[oa, 0] - B[ob, 0])


def _augmented_cost(A, B):
    """(m+n)x(m+n) L-infinity cost with diagonal slots for both diagrams."""
    m, n = len(A), len(B)
    N = m + n
    C = np.zeros((N, N))
    if m and n:
        C[:m, :n] = np.maximum(np.abs(A[:, None, 0] - B[None, :, 0]), np.abs(A[:, None, 1] - B[None, :, 1]))
    pa = (A[:, 1] - A[:, 0]) / 2 if m else np.zeros(0)
    pb = (B[:, 1] - B[:, 0]) / 2 if n else np.zeros(0)
    # rows m.. and columns n.. are diagonal slots; diagonal-to-diagonal is free
    C[:m, n:] = pa[:, None]
    C[m:, :n] = pb[None, :]
    return C


def _bottleneck_assignment(C):
    vals = np.unique(C)
    lo, hi = 0, len(vals) - 1
    N = C.shape[0]
    best = None
    while lo <= hi:
        mid = (lo + hi) // 2
        match = maximum_bipartite_matching(csr_matrix(C <= vals[mid]), perm_type="column")
        if np.all(match >= 0):
            best = match
            hi = mid - 1
        else:
            lo = mid + 1
    return np.arange(N), best


@dataclass
class Matching:
    """Result of matching two diagrams of one degree.

    ``plan`` weights each entry of the augmented cost matrix (a permutation
    for the exact matching, a scaled transport plan for Sinkhorn).
    """

    value: float
    cost: np.ndarray
    plan: np.ndarray
    essential: list
    essential_cost: np.ndarray
    q: float
    finite_a: np.ndarray
    finite_b: np.ndarray


def match_diagrams(A, B, method: str = "matching_oracle", q: float = 1.0,
                   eps: float | None = None, n_iter: int = 200) -> Matching:
    A = np.asarray(A, dtype=float).reshape(-1, 2)
    B = np.asarray(B, dtype=float).reshape(-1, 2)
    fa, ia = _split_finite(A)
    fb, ib = _split_finite(B)
    ess, ess_cost = _essential_match(A, B, ia, ib)
    Af, Bf = A[fa], B[fb]
    m, n = len(Af), len(Bf)
    C = _augmented_cost(Af, Bf)
    N = m + n
    if q == math.inf:
        if method != "matching_oracle":
            raise ValueError("the q = inf (bottleneck) distance is only computed exactly")
        plan = np.zeros((N, N))
        if N:
            r, c = _bottleneck_assignment(C)
            plan[r, c] = 1.0
        finite_part = float(np.max(C[plan > 0])) if N else 0.0
        value = max(finite_part, float(ess_cost.max()) if len(ess_cost) else 0.0)
        return Matching(value, C, plan, ess, ess_cost, q, fa, fb)
    Cq = C ** q
    plan = np.zeros((N, N))
    if N and method == "matching_oracle":
        r, c = linear_sum_assignment(Cq)
        plan[r, c] = 1.0
    elif N and method == "sinkhorn":
        plan = N * _sinkhorn_plan(Af, Bf, Cq, q, eps, n_iter)
    elif method not in ("matching_oracle", "sinkhorn"):
        raise ValueError(f"unknown diagram distance method {method!r}")
    total = float(np.sum(plan[plan > 0] * Cq[plan > 0])) + float(np.sum(ess_cost ** q))
    return Matching(total ** (1.0 / q), C, plan, ess, ess_cost, q, fa, fb)


def _lse(M, axis):
    mx = M.max(axis=axis, keepdims=True)
    return (mx + np.log(np.exp(M - mx).sum(axis=axis, keepdims=True))).squeeze(axis)


def _sinkhorn_plan(A, B, Cq, q, eps, n_iter):
    """Entropic transport plan with uniform marginals (log-domain iterations)."""
    N = Cq.shape[0]
    pers = np.concatenate([A[:, 1] - A[:, 0], B[:, 1] - B[:, 0]])
    scale = float(pers.max()) ** q if pers.size else 0.0
    if scale == 0.0:
        return np.eye(N) / N
    eps = 0.01 * scale if eps is None else eps
    loga = np.full(N, -np.log(N))
    f = np.zeros(N)
    g = np.zeros(N)
    for _ in range(n_iter):
        f = eps * (loga - _lse((g[None, :] - Cq) / eps, axis=1))
        g = eps * (loga - _lse((f[:, None] - Cq) / eps, axis=0))
    return np.exp((f[:, None] + g[None, :] - Cq) / eps)


def diagram_distance(Da, Db, degree: int = 0, method: str = "matching_oracle", q: float = 1.0,
                     eps: float | None = None, n_iter: int = 200) -> float:
    """Partial-matching distance between the degree-``degree`` parts of two diagrams.

    Points may be matched to each other (L-infinity ground cost) or to the
    diagonal (cost persistence / 2). Costs are aggregated as an l_q norm;
    ``q = inf`` gives the bottleneck distance. ``method="sinkhorn"`` uses an
    entropic relaxation with regularization ``eps`` (default 1% of the
    largest persistence, raised to the power q); ``"matching_oracle"`` solves
    the assignment exactly. Infinite points are matched in order of birth
    and must be equally many.
    """
    return match_diagrams(_points(Da, degree), _points(Db, degree), method, q, eps, n_iter).value


def bottleneck_distance(Da, Db, degree: int = 0) -> float:
    return diagram_distance(Da, Db, degree, "matching_oracle", math.inf)


# --- CSV ----------------------------------------------------------------------

def write_diagram_csv(D: PersistenceDiagram, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["degree", "birth", "death"])
        for k in D.degrees:
            for b, d in D[k]:
                w.writerow([k, f"{b:.17g}", "inf" if math.isinf(d) else f"{d:.17g}"])


def read_diagram_csv(path) -> PersistenceDiagram:
    rows: dict[int, list] = {}
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != ["degree", "birth", "death"]:
            raise ValueError(f"{path}: expected header degree,birth,death")
        for k, b, d in r:
            rows.setdefault(int(k), []).append((float(b), float(d)))
    return PersistenceDiagram({k: np.array(v).reshape(-1, 2) for k, v in rows.items()})
