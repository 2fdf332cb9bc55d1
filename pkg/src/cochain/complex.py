"""Oriented finite simplicial complexes and the cochains living on them.

A simplex is stored as a strictly increasing tuple of vertex ids; that vertex
order is its orientation. Within each dimension simplices are kept in
lexicographic order, and position in that list is the simplex's basis index.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, FormatError, InvalidSimplex

__all__ = [
    "SimplicialComplex",
    "Cochain",
    "Chain",
    "build_complex",
    "skeleton_counts",
    "euler_characteristic",
    "cochain_new",
    "chain_new",
    "concat_cochains",
    "split_cochain",
    "load_complex_json",
    "dump_complex_json",
    "read_off",
]

Simplex = tuple[int, ...]


def _normalize(s: Iterable) -> Simplex:
    verts = list(s)
    if len(verts) == 0:
        raise InvalidSimplex("empty simplex")
    out = []
    for v in verts:
        if isinstance(v, (bool, np.bool_)) or not isinstance(v, (int, np.integer)):
            raise InvalidSimplex(f"vertex id {v!r} is not an integer")
        if v < 0:
            raise InvalidSimplex(f"vertex id {v} is negative")
        out.append(int(v))
    if len(set(out)) != len(out):
        raise InvalidSimplex(f"repeated vertex in simplex {tuple(verts)}")
    return tuple(sorted(out))


@dataclass(frozen=True, eq=False)
class SimplicialComplex:
    """Closed, oriented, finite simplicial complex.

    Use :func:`build_complex` rather than the constructor; it computes the
    closure and the canonical ordering.
    """

    simplices_by_dim: tuple[tuple[Simplex, ...], ...]
    index_of: dict = field(repr=False)
    uid: str = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.simplices_by_dim) - 1

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.simplices_by_dim)

    @property
    def vertex_ids(self) -> np.ndarray:
        """Original vertex id of each row of a 0-cochain (the dense reindexing)."""
        return np.array([s[0] for s in self.simplices_by_dim[0]], dtype=int)

    def n(self, k: int) -> int:
        """Number of k-simplices; zero outside 0..dim."""
        if 0 <= k <= self.dim:
            return len(self.simplices_by_dim[k])
        return 0

    def simplices(self, k: int) -> tuple[Simplex, ...]:
        if 0 <= k <= self.dim:
            return self.simplices_by_dim[k]
        return ()

    def index(self, s: Iterable[int]) -> int:
        return self.index_of[tuple(sorted(s))]

    def __contains__(self, s) -> bool:
        return tuple(sorted(s)) in self.index_of

    def __iter__(self):
        for level in self.simplices_by_dim:
            yield from level

    def __len__(self) -> int:
        return sum(self.shape)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SimplicialComplex):
            return NotImplemented
        return self.simplices_by_dim == other.simplices_by_dim

    def __hash__(self) -> int:
        return hash(self.uid)

    def maximal_simplices(self) -> list[Simplex]:
        """Simplices that are not a face of any other simplex."""
        covered = set()
        for k in range(1, self.dim + 1):
            for s in self.simplices_by_dim[k]:
                covered.update(combinations(s, k))
        return [s for s in self if s not in covered]


def build_complex(maximal_simplices: Iterable[Sequence[int]]) -> SimplicialComplex:
    """Closure of a collection of simplices.

    >>> build_complex([(0, 1, 2)]).shape
    (3, 3, 1)
    """
    tops = {_normalize(s) for s in maximal_simplices}
    if not tops:
        raise InvalidSimplex("a complex needs at least one simplex")
    top_dim = max(len(s) for s in tops) - 1
    levels: list[set] = [set() for _ in range(top_dim + 1)]
    for s in tops:
        for k in range(len(s)):
            levels[k].update(combinations(s, k + 1))
    ordered = tuple(tuple(sorted(level)) for level in levels)
    index_of = {s: i for level in ordered for i, s in enumerate(level)}
    digest = hashlib.sha1(repr(ordered).encode()).hexdigest()[:16]
    return SimplicialComplex(ordered, index_of, digest)


def skeleton_counts(K: SimplicialComplex) -> list[int]:
    return list(K.shape)


def euler_characteristic(K: SimplicialComplex) -> int:
    return sum((-1) ** k * n for k, n in enumerate(K.shape))


@dataclass(frozen=True, eq=False)
class Cochain:
    """Real values on the k-simplices of a complex, one row per simplex.

    ``degree`` is an integer, or ``"mixed"`` for a cochain on the whole
    complex (rows of all degrees stacked in order k = 0, 1, 2, ...).
    """

    complex: SimplicialComplex
    degree: int | str
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[1] < 1:
            raise DimensionError(f"cochain values must be a matrix, got shape {values.shape}")
        expected = _rows_for(self.complex, self.degree)
        if values.shape[0] != expected:
            raise DimensionError(
                f"degree {self.degree} cochain needs {expected} rows, got {values.shape[0]}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]

    def with_values(self, values) -> "Cochain":
        return Cochain(self.complex, self.degree, values)

    def __add__(self, other: "Cochain") -> "Cochain":
        _check_compatible(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "Cochain") -> "Cochain":
        _check_compatible(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, alpha: float) -> "Cochain":
        return self.with_values(alpha * self.values)

    __rmul__ = __mul__


class Chain(Cochain):
    """Single-channel formal sum of k-simplices."""

    def __post_init__(self):
        super().__post_init__()
        if self.values.shape[1] != 1:
            raise DimensionError("a chain has exactly one channel")


def _rows_for(K: SimplicialComplex, degree) -> int:
    if degree == "mixed":
        return len(K)
    if not isinstance(degree, (int, np.integer)) or not 0 <= degree <= K.dim:
        raise DimensionError(f"complex of dimension {K.dim} has no {degree}-simplices")
    return K.n(int(degree))


def _check_compatible(a: Cochain, b: Cochain):
    if a.complex is not b.complex and a.complex != b.complex:
        raise DimensionError("cochains live on different complexes")
    if a.degree != b.degree or a.values.shape != b.values.shape:
        raise DimensionError("cochains differ in degree or shape")


def cochain_new(K: SimplicialComplex, k, values) -> Cochain:
    return Cochain(K, k, values)


def chain_new(K: SimplicialComplex, k: int, values) -> Chain:
    return Chain(K, k, values)


def degree_offsets(K: SimplicialComplex) -> np.ndarray:
    """Row offset of each degree block inside a mixed cochain."""
    return np.concatenate([[0], np.cumsum(K.shape)])


def concat_cochains(K: SimplicialComplex, parts: dict[int, Cochain | np.ndarray], channels: int | None = None) -> Cochain:
    """Stack per-degree cochains into one cochain on the whole complex.

    Missing degrees are filled with zeros.
    """
    if channels is None:
        channels = next((np.atleast_2d(np.asarray(getattr(p, "values", p))).shape[-1] for p in parts.values()), 1)
    blocks = []
    for k in range(K.dim + 1):
        if k in parts:
            v = parts[k]
            v = v.values if isinstance(v, Cochain) else np.asarray(v, dtype=float).reshape(K.n(k), -1)
            if v.shape != (K.n(k), channels):
                raise DimensionError(f"degree {k} part has shape {v.shape}, expected {(K.n(k), channels)}")
            blocks.append(v)
        else:
            blocks.append(np.zeros((K.n(k), channels)))
    return Cochain(K, "mixed", np.vstack(blocks))


def split_cochain(f: Cochain) -> dict[int, Cochain]:
    if f.degree != "mixed":
        return {int(f.degree): f}
    off = degree_offsets(f.complex)
    return {k: Cochain(f.complex, k, f.values[off[k]:off[k + 1]]) for k in range(f.complex.dim + 1)}


# --- file formats -----------------------------------------------------------

def load_complex_json(path) -> SimplicialComplex:
    try:
        doc = json.loads(Path(path).read_text())
        simplices = doc["maximal_simplices"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: not a complex JSON file ({exc})") from exc
    if not isinstance(simplices, list):
        raise FormatError(f"{path}: maximal_simplices must be a list")
    try:
        return build_complex(simplices)
    except (InvalidSimplex, TypeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


def dump_complex_json(K: SimplicialComplex, path):
    doc = {"maximal_simplices": [list(s) for s in K.maximal_simplices()]}
    Path(path).write_text(json.dumps(doc) + "\n")


def read_off(path) -> tuple[SimplicialComplex, np.ndarray]:
    """Read a triangle mesh in OFF format.

    Returns the complex generated by the faces (plus any vertex not used by a
    face) and the vertex coordinate array, row i holding vertex id i.
    """
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise FormatError(str(exc)) from exc
    tokens = [ln.split("#", 1)[0].split() for ln in lines]
    tokens = [t for t in tokens if t]
    if not tokens or tokens[0][0] != "OFF":
        raise FormatError(f"{path}: missing OFF header")
    rest = tokens[0][1:]
    rows = tokens[1:]
    if not rest:
        if not rows:
            raise FormatError(f"{path}: missing counts line")
        rest, rows = rows[0], rows[1:]
    try:
        nv, nf = int(rest[0]), int(rest[1])
        coords = np.array([[float(x) for x in r[:3]] for r in rows[:nv]], dtype=float)
        faces = []
        for r in rows[nv:nv + nf]:
            m = int(r[0])
            if m != 3:
                raise FormatError(f"{path}: only triangle faces are supported, got {m}-gon")
            faces.append(tuple(int(x) for x in r[1:4]))
    except (IndexError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: malformed OFF body ({exc})") from exc
    if coords.shape[0] != nv or len(faces) != nf:
        raise FormatError(f"{path}: truncated OFF file")
    used = {v for f in faces for v in f}
    tops = faces + [(v,) for v in range(nv) if v not in used]
    try:
        K = build_complex(tops)
    except InvalidSimplex as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return K, coords
