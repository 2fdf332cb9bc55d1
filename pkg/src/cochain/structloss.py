"""Losses measuring how well a map of a point cloud preserves its structure.

Three structures are supported: the metric (all pairwise distances), a
probabilistic similarity matrix (t-SNE style affinities compared by KL
divergence) and Vietoris-Rips persistence diagrams. Each loss comes with an
analytic gradient with respect to the embedded points, and :func:`embed`
minimizes any of them with :func:`cochain.optim.gradient_descent`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BandwidthError, DimensionError
from .optim import Objective, TrainConfig, gradient_descent
from .persistence import (
    PersistenceStructure,
    critical_edges,
    match_diagrams,
    persistent_homology,
)

__all__ = [
    "PointCloud",
    "distance_matrix",
    "check_distance_matrix",
    "check_affinity_matrix",
    "mds_loss",
    "mds_gradient",
    "conditional_affinities",
    "tsne_affinities",
    "low_dim_affinities",
    "kl_loss",
    "tsne_gradient",
    "ph_loss",
    "ph_gradient",
    "EmbeddingResult",
    "embed",
    "read_point_cloud",
]

Q_FLOOR = 1e-12


def PointCloud(points) -> np.ndarray:
    """Validate and return an ``n x d`` float array of finite points."""
    X = np.array(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1:
        raise DimensionError(f"a point cloud is an n x d matrix with n >= 1, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("point cloud has non-finite entries")
    return X


def read_point_cloud(path) -> np.ndarray:
    """Headerless CSV, one point per row."""
    X = np.loadtxt(path, delimiter=",", ndmin=2)
    return PointCloud(X)


def distance_matrix(X, metric: str = "euclidean") -> np.ndarray:
    if metric != "euclidean":
        raise ValueError(f"unsupported metric {metric!r}")
    X = PointCloud(X)
    diff = X[:, None, :] - X[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def check_distance_matrix(D, atol: float = 1e-9, triangle_samples: int | None = 20000, seed: int = 0):
    """Raise ValueError unless ``D`` is a valid (pseudo)metric matrix.

    The triangle inequality is checked on all triples for small ``n`` and on a
    random sample of ``triangle_samples`` triples otherwise.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("distance matrix must be square")
    if not np.allclose(D, D.T, atol=atol) or np.any(np.abs(np.diag(D)) > atol) or np.any(D < -atol):
        raise ValueError("distance matrix must be symmetric, non-negative, with zero diagonal")
    n = D.shape[0]
    if n ** 3 <= (triangle_samples or 0) or triangle_samples is None:
        viol = D[:, None, :] > D[:, :, None] + D[None, :, :] + atol
        bad = np.any(viol)
    else:
        rng = np.random.default_rng(seed)
        i, j, k = rng.integers(0, n, size=(3, triangle_samples))
        bad = np.any(D[i, k] > D[i, j] + D[j, k] + atol)
    if bad:
        raise ValueError("distance matrix violates the triangle inequality")
    return D


def check_affinity_matrix(P, atol: float = 1e-12):
    P = np.asarray(P, dtype=float)
    ok = (P.ndim == 2 and P.shape[0] == P.shape[1] and np.allclose(P, P.T, atol=atol)
          and np.all(P >= 0) and np.all(np.diag(P) == 0) and abs(P.sum() - 1) <= 1e3 * atol)
    if not ok:
        raise ValueError("affinity matrix must be symmetric, non-negative, zero-diagonal and sum to 1")
    return P


# --- metric structure ----------------------------------------------------------------

_MDS_LOSSES = {
    "squared": (lambda r: r * r, lambda r: 2 * r),
    "absolute": (np.abs, np.sign),
}


def _mds_kernel(l):
    try:
        return _MDS_LOSSES[l]
    except KeyError:
        raise ValueError(f"unknown MDS loss {l!r}; choose 'squared' or 'absolute'") from None


def mds_loss(dX, dY, l: str = "squared", ordered: bool = True) -> float:
    """Sum of ``l(dY - dX)`` over all ordered pairs of points.

    Each unordered pair is counted twice; ``ordered=False`` counts it once.
    """
    dX = np.asarray(dX, dtype=float)
    dY = np.asarray(dY, dtype=float)
    if dX.shape != dY.shape:
        raise DimensionError(f"distance matrices differ in shape: {dX.shape} vs {dY.shape}")
    f, _ = _mds_kernel(l)
    total = float(np.sum(f(dY - dX)))
    return total if ordered else total / 2


def mds_gradient(dX, Y, l: str = "squared", ordered: bool = True) -> np.ndarray:
    """Gradient of :func:`mds_loss` with respect to the embedded points ``Y``.

    Pairs of coincident points contribute nothing (the distance has no
    gradient there).
    """
    Y = PointCloud(Y)
    dX = np.asarray(dX, dtype=float)
    if dX.shape != (len(Y), len(Y)):
        raise DimensionError("dX does not match the number of embedded points")
    _, df = _mds_kernel(l)
    diff = Y[:, None, :] - Y[None, :, :]
    dY = np.sqrt(np.sum(diff * diff, axis=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(dY > 0, df(dY - dX) / dY, 0.0)
    np.fill_diagonal(coef, 0.0)
    # (i, j) and (j, i) both depend on y_i
    G = 2.0 * np.einsum("ij,ijk->ik", coef, diff)
    return G if ordered else G / 2


# --- probabilistic structure ---------------------------------------------------------

def _row_conditional(d2, beta):
    w = np.exp(-beta * (d2 - d2.min()))
    p = w / w.sum()
    nz = p > 0
    H = -np.sum(p[nz] * np.log(p[nz]))
    return p, H


def conditional_affinities(X, perplexity: float = 30.0, tol: float = 1e-5, max_iter: int = 100):
    """Row-stochastic Gaussian conditionals ``p(j | i)`` matched to a perplexity.

    Each row's precision is found by bisection so that its Shannon entropy
    (natural log) equals ``log(perplexity)``. Rows whose target exceeds the
    largest attainable entropy ``log(n - 1)``, or whose neighbours are all
    equidistant, get uniform conditionals.

    Returns ``(P_cond, betas)``.
    """
    X = PointCloud(X)
    n = len(X)
    if n < 2:
        raise DimensionError("affinities need at least two points")
    if perplexity <= 0:
        raise ValueError("perplexity must be positive")
    D2 = distance_matrix(X) ** 2
    target = math.log(perplexity)
    Pc = np.zeros((n, n))
    betas = np.zeros(n)
    for i in range(n):
        d2 = np.delete(D2[i], i)
        # equidistant up to rounding: every bandwidth gives the same entropy
        if target >= math.log(n - 1) or np.ptp(d2) <= 1e-12 * d2.max():
            p = np.full(n - 1, 1.0 / (n - 1))
            beta = 0.0
        else:
            spread = np.median(d2 - d2.min())
            beta = 1.0 / spread if spread > 0 else 1.0
            lo, hi = 0.0, math.inf
            for _ in range(max_iter):
                p, H = _row_conditional(d2, beta)
                if abs(H - target) < tol:
                    break
                if H > target:
                    lo = beta
                    beta = beta * 2 if math.isinf(hi) else (lo + hi) / 2
                else:
                    hi = beta
                    beta = (lo + hi) / 2
            else:
                raise BandwidthError(f"perplexity bisection for point {i} did not converge in {max_iter} steps")
        Pc[i, np.arange(n) != i] = p
        betas[i] = beta
    return Pc, betas


def tsne_affinities(X, perplexity: float = 30.0, tol: float = 1e-5, max_iter: int = 100) -> np.ndarray:
    """Symmetrized affinities ``(p(j|i) + p(i|j)) / 2n``; entries sum to one."""
    Pc, _ = conditional_affinities(X, perplexity, tol, max_iter)
    n = len(Pc)
    return (Pc + Pc.T) / (2 * n)


def _low_dim_weights(Y, kernel):
    diff = Y[:, None, :] - Y[None, :, :]
    d2 = np.sum(diff * diff, axis=-1)
    if kernel == "student_t":
        W = 1.0 / (1.0 + d2)
    elif kernel == "gaussian":
        W = np.exp(-d2)
    else:
        raise ValueError(f"unknown kernel {kernel!r}; choose 'student_t' or 'gaussian'")
    np.fill_diagonal(W, 0.0)
    return W, diff


def low_dim_affinities(Y, kernel: str = "student_t") -> np.ndarray:
    Y = PointCloud(Y)
    if len(Y) < 2:
        raise DimensionError("affinities need at least two points")
    W, _ = _low_dim_weights(Y, kernel)
    return W / W.sum()


def kl_loss(P, Q) -> float:
    """``KL(P || Q)`` with ``0 log 0 = 0``.

    ``Q`` is floored at 1e-12, or at ``P`` where ``P`` is smaller still, so
    ``KL(P || P)`` is exactly zero.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape:
        raise DimensionError("P and Q differ in shape")
    mask = P > 0
    p = P[mask]
    return float(np.sum(p * np.log(p / np.maximum(Q[mask], np.minimum(p, Q_FLOOR)))))


def tsne_gradient(P, Y, kernel: str = "student_t") -> np.ndarray:
    """Gradient of ``KL(P || Q(Y))`` with respect to ``Y``."""
    Y = PointCloud(Y)
    W, diff = _low_dim_weights(Y, kernel)
    Q = W / W.sum()
    M = (np.asarray(P) - Q)
    if kernel == "student_t":
        M = M * W
    return 4.0 * np.einsum("ij,ijk->ik", M, diff)


# --- homological structure -----------------------------------------------------------

def _ph_max_dim(dims) -> int:
    dims = set(dims)
    if not dims <= {0, 1}:
        raise ValueError(f"homology degrees must be a subset of {{0, 1}}, got {sorted(dims)}")
    return 2 if 1 in dims else 1


def _ph_value_and_grad(psX: PersistenceStructure, Y, dims, distance, q, weights, eps, want_grad):
    Y = PointCloud(Y)
    dims = sorted(set(dims))
    if not dims:
        return 0.0, np.zeros_like(Y)
    psY = persistent_homology(distance_matrix(Y), _ph_max_dim(dims))
    edges = critical_edges(psY)
    total = 0.0
    G = np.zeros_like(Y)
    for k in dims:
        wk = 1.0 if weights is None else float(weights.get(k, 1.0))
        A, B = psX.diagrams[k], psY.diagrams[k]
        m = match_diagrams(A, B, distance, q, eps)
        total += wk * m.value
        if not want_grad or m.value == 0.0:
            continue
        # d value / d S with S the sum of q-th powers
        S = m.value ** q
        scale = wk * S ** (1.0 / q - 1.0) if q != 1 else wk
        gb = np.zeros(len(B))
        gd = np.zeros(len(B))
        Af, Bf = A[m.finite_a], B[m.finite_b]
        na, nb = len(Af), len(Bf)
        Cq1 = m.cost ** (q - 1) if q != 1 else np.ones_like(m.cost)
        Wt = m.plan * Cq1
        if na and nb:
            db = Bf[None, :, 0] - Af[:, None, 0]
            dd = Bf[None, :, 1] - Af[:, None, 1]
            birth_wins = np.abs(db) > np.abs(dd)
            w = Wt[:na, :nb]
            gb[m.finite_b] += np.sum(w * birth_wins * np.sign(db), axis=0)
            gd[m.finite_b] += np.sum(w * ~birth_wins * np.sign(dd), axis=0)
        if nb:
            # B points sent to the diagonal cost (death - birth) / 2
            w = Wt[na:, :nb].sum(axis=0)
            gd[m.finite_b] += 0.5 * w
            gb[m.finite_b] -= 0.5 * w
        for (ia, ib), c in zip(m.essential, m.essential_cost):
            if c > 0:
                gb[ib] += c ** (q - 1) * np.sign(B[ib, 0] - A[ia, 0])
        for r, (be, de) in enumerate(edges[k]):
            for e, g in ((be, gb[r]), (de, gd[r])):
                if e is None or g == 0.0:
                    continue
                u, v = e
                diff = Y[u] - Y[v]
                nrm = np.linalg.norm(diff)
                if nrm > 0:
                    G[u] += scale * g * diff / nrm
                    G[v] -= scale * g * diff / nrm
    return total, G


def ph_loss(X, Y, dims=(0, 1), distance: str = "sinkhorn", q: float = 1.0,
            weights: dict | None = None, eps: float | None = None) -> float:
    """Distance between the Vietoris-Rips diagrams of ``X`` and ``Y``, summed over degrees.

    ``weights`` optionally scales each degree's term.
    """
    dims = set(dims)
    if not dims:
        return 0.0
    psX = X if isinstance(X, PersistenceStructure) else persistent_homology(distance_matrix(X), _ph_max_dim(dims))
    return _ph_value_and_grad(psX, Y, dims, distance, q, weights, eps, False)[0]


def ph_gradient(X, Y, dims=(0, 1), distance: str = "sinkhorn", q: float = 1.0,
                weights: dict | None = None, eps: float | None = None) -> np.ndarray:
    """Gradient of :func:`ph_loss` with respect to ``Y``.

    Each diagram coordinate of ``Y`` is the length of one critical edge, so
    the gradient reaches only the endpoints of those edges. The matching (or
    Sinkhorn plan) is held fixed while differentiating: exact for
    ``distance="matching_oracle"`` away from pairing switches, a first-order
    approximation for Sinkhorn.
    """
    dims = set(dims)
    if not dims:
        return np.zeros_like(PointCloud(Y))
    psX = X if isinstance(X, PersistenceStructure) else persistent_homology(distance_matrix(X), _ph_max_dim(dims))
    return _ph_value_and_grad(psX, Y, dims, distance, q, weights, eps, True)[1]


# --- embedding driver ---------------------------------------------------------------

@dataclass
class EmbeddingResult:
    Y: np.ndarray
    loss_history: list[float]
    method: str
    config: dict = field(default_factory=dict)

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1]

    def write(self, prefix):
        """Write ``<prefix>.csv``, ``<prefix>_loss.csv`` and ``<prefix>.json``; return the paths."""
        prefix = Path(prefix)
        emb = prefix.parent / (prefix.name + ".csv")
        loss = prefix.parent / (prefix.name + "_loss.csv")
        meta = prefix.parent / (prefix.name + ".json")
        with open(emb, "w") as fh:
            for row in self.Y:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
        write_loss_csv(self.loss_history, loss)
        doc = {"method": self.method, "seed": self.config.get("seed"), "final_loss": float(self.final_loss),
               "iterations": len(self.loss_history) - 1, "config": self.config}
        meta.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return [emb, loss, meta]


def write_loss_csv(history, path):
    with open(path, "w") as fh:
        fh.write("iter,loss\n")
        for i, v in enumerate(history):
            fh.write(f"{i},{v:.17g}\n")


def _initial_embedding(X, dim, seed):
    D = distance_matrix(X)
    half = 0.5 * float(D.max()) if D.size else 1.0
    half = half or 1.0
    rng = np.random.default_rng(seed)
    return rng.uniform(-half / 2, half / 2, size=(len(X), dim))


def embed(X, method: str, dim: int, cfg: TrainConfig, init=None, *, mds_l: str = "squared",
          perplexity: float | None = None, kernel: str = "student_t", ph_dims=(0, 1),
          ph_distance: str = "sinkhorn") -> EmbeddingResult:
    """Embed a point cloud in ``dim`` dimensions by minimizing a structure loss.

    ``method`` is ``"mds"``, ``"tsne"`` or ``"ph"``. Starting points are
    drawn uniformly from a centred box whose side is half the data diameter,
    seeded by ``cfg.seed``, unless ``init`` is given.
    """
    X = PointCloud(X)
    if int(dim) != dim or dim < 1:
        raise ValueError(f"target dimension must be a positive integer, got {dim}")
    Y0 = _initial_embedding(X, dim, cfg.seed) if init is None else PointCloud(init)
    if Y0.shape != (len(X), dim):
        raise DimensionError(f"init has shape {Y0.shape}, expected {(len(X), dim)}")
    options = {}
    if method == "mds":
        dX = distance_matrix(X)
        obj = Objective(lambda Y: mds_loss(dX, distance_matrix(Y), mds_l),
                        lambda Y: mds_gradient(dX, Y, mds_l))
        options = {"loss": mds_l}
    elif method == "tsne":
        if perplexity is None:
            perplexity = min(30.0, max(2.0, (len(X) - 1) / 3))
        P = tsne_affinities(X, perplexity)
        obj = Objective(lambda Y: kl_loss(P, low_dim_affinities(Y, kernel)),
                        lambda Y: tsne_gradient(P, Y, kernel))
        options = {"perplexity": perplexity, "kernel": kernel}
    elif method == "ph":
        dims = sorted(set(ph_dims))
        psX = persistent_homology(distance_matrix(X), _ph_max_dim(dims))
        cache = {}

        def value_and_grad(Y):
            key = Y.tobytes()
            if key not in cache:
                cache.clear()
                cache[key] = _ph_value_and_grad(psX, Y, dims, ph_distance, 1.0, None, None, True)
            return cache[key]

        obj = Objective(lambda Y: value_and_grad(Y)[0], lambda Y: value_and_grad(Y)[1])
        options = {"dims": dims, "distance": ph_distance}
    else:
        raise ValueError(f"unknown embedding method {method!r}")
    Y, history = gradient_descent(obj, Y0, cfg)
    config = {**cfg.to_dict(), **options, "dim": int(dim)}
    return EmbeddingResult(Y, history, method, config)
