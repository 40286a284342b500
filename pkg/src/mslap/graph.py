"""Nearest-neighbour graphs, Hermite-modulated weights and multiscale Laplacians."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import accel
from .linalg import SparseMatrix, add, sparse_matpow

BRUTE_FORCE_MAX_N = 20000
METRICS = ("euclidean", "cosine")
LAPLACIAN_KINDS = ("unnormalized", "symmetric")


def as_features(x, min_rows: int = 2) -> np.ndarray:
    """Validate and return an ``(n, d)`` float64 feature matrix."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {x.shape}")
    if x.shape[0] < min_rows:
        raise ValueError(f"need at least {min_rows} samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("features contain non-finite values")
    return x


@dataclass(frozen=True)
class ScaleParams:
    """One term of the multiscale Laplacian: ``c * L_t ** p`` with kernel scale sigma."""

    t: int = 0
    c: float = 1.0
    p: int = 1
    sigma: float = 1.0

    def __post_init__(self):
        if int(self.t) != self.t or self.t < 0:
            raise ValueError(f"Hermite order must be a non-negative integer, got {self.t}")
        if not self.c > 0:
            raise ValueError(f"scale coefficient must be positive, got {self.c}")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"scale power must be an integer >= 1, got {self.p}")
        if not self.sigma > 0:
            raise ValueError(f"kernel scale must be positive, got {self.sigma}")
        object.__setattr__(self, "t", int(self.t))
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "sigma", float(self.sigma))


@dataclass(frozen=True)
class Neighbors:
    """``n_n`` nearest neighbours per vertex, sorted by distance then index."""

    indices: np.ndarray  # (n, n_n) int64
    distances: np.ndarray  # (n, n_n) float64
    metric: str = "euclidean"

    @property
    def n(self) -> int:
        return self.indices.shape[0]

    @property
    def n_n(self) -> int:
        return self.indices.shape[1]


@dataclass(frozen=True)
class MultiscaleGraph:
    n: int
    scales: tuple
    weights: tuple
    neighbor_count: int
    neighbors: Neighbors | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.scales:
            raise ValueError("a multiscale graph needs at least one scale")
        if len(self.scales) != len(self.weights):
            raise ValueError("one weight matrix per scale required")


# ---------------------------------------------------------------------------
# k nearest neighbours


@accel.njit(parallel=True)
def _knn_numba(x, n_n, cosine):
    n, d = x.shape
    idx = np.empty((n, n_n), dtype=np.int64)
    dist = np.empty((n, n_n), dtype=np.float64)
    for i in accel.prange(n):
        # insertion into a sorted buffer; scanning j upwards keeps index order on ties
        bi = np.full(n_n, -1, dtype=np.int64)
        bd = np.full(n_n, np.inf)
        for j in range(n):
            if j == i:
                continue
            s = 0.0
            if cosine:
                for k in range(d):
                    s += x[i, k] * x[j, k]
                s = max(1.0 - s, 0.0)
            else:
                for k in range(d):
                    diff = x[i, k] - x[j, k]
                    s += diff * diff
                s = np.sqrt(s)
            if s >= bd[n_n - 1]:
                continue
            q = n_n - 1
            while q > 0 and bd[q - 1] > s:
                bd[q] = bd[q - 1]
                bi[q] = bi[q - 1]
                q -= 1
            bd[q] = s
            bi[q] = j
        idx[i] = bi
        dist[i] = bd
    return idx, dist


def _knn_numpy(x, n_n, cosine):
    n, d = x.shape
    idx = np.empty((n, n_n), dtype=np.int64)
    dist = np.empty((n, n_n))
    chunk = max(1, (1 << 23) // max(1, n * d))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        if cosine:
            rows = np.maximum(1.0 - x[lo:hi] @ x.T, 0.0)
        else:
            diff = x[lo:hi, None, :] - x[None, :, :]
            rows = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        rows[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        order = np.argsort(rows, axis=1, kind="stable")[:, :n_n]
        idx[lo:hi] = order
        dist[lo:hi] = np.take_along_axis(rows, order, axis=1)
    return idx, dist


def _knn_kdtree(x, n_n):
    from scipy.spatial import cKDTree

    tree = cKDTree(x)
    dist, idx = tree.query(x, k=n_n + 1)
    # drop self; duplicates may place self anywhere among zero-distance hits
    out_i = np.empty((x.shape[0], n_n), dtype=np.int64)
    out_d = np.empty((x.shape[0], n_n))
    for i in range(x.shape[0]):
        keep = idx[i] != i
        ii, dd = idx[i][keep][:n_n], dist[i][keep][:n_n]
        order = np.lexsort((ii, dd))
        out_i[i], out_d[i] = ii[order], dd[order]
    return out_i, out_d


def knn_search(x, n_n: int, metric: str = "euclidean") -> Neighbors:
    """Exact ``n_n`` nearest distinct neighbours of every row of ``x``.

    Ties in distance are broken by ascending vertex index.  The cosine metric
    uses ``1 - cos(angle)`` and rejects zero-norm rows.
    """
    x = as_features(x)
    n = x.shape[0]
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    if int(n_n) != n_n or not 1 <= n_n < n:
        raise ValueError(f"neighbour count must satisfy 1 <= n_n < n = {n}, got {n_n}")
    cosine = metric == "cosine"
    if cosine:
        norms = np.linalg.norm(x, axis=1)
        if np.any(norms == 0):
            raise ValueError(f"zero-norm row {int(np.argmin(norms))} under cosine metric")
        x = x / norms[:, None]
    if not cosine and n > BRUTE_FORCE_MAX_N:
        idx, dist = _knn_kdtree(x, int(n_n))
    else:
        kernel = _knn_numba if accel.enabled() else _knn_numpy
        idx, dist = kernel(x, int(n_n), cosine)
    return Neighbors(idx, dist, metric)


@accel.njit(parallel=True)
def _cross_dist_numba(a, b):
    out = np.empty((a.shape[0], b.shape[0]))
    for i in accel.prange(a.shape[0]):
        for j in range(b.shape[0]):
            s = 0.0
            for k in range(a.shape[1]):
                diff = a[i, k] - b[j, k]
                s += diff * diff
            out[i, j] = np.sqrt(s)
    return out


def _cross_dist_numpy(a, b):
    out = np.empty((a.shape[0], b.shape[0]))
    chunk = max(1, (1 << 23) // max(1, b.shape[0] * a.shape[1]))
    for lo in range(0, a.shape[0], chunk):
        diff = a[lo:lo + chunk, None, :] - b[None, :, :]
        out[lo:lo + chunk] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def pairwise_distances(a, b=None) -> np.ndarray:
    """Exact Euclidean distances between the rows of ``a`` and ``b``."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = a if b is None else np.ascontiguousarray(b, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"feature dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    kernel = _cross_dist_numba if accel.enabled() else _cross_dist_numpy
    return kernel(a, b)


# ---------------------------------------------------------------------------
# weights


def hermite(x, t: int):
    """Physicists' Hermite polynomial ``H_t`` via the three-term recurrence."""
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.ones_like(x)
    if t == 0:
        return h_prev
    h = 2.0 * x
    for k in range(1, t):
        h_prev, h = h, 2.0 * x * h - 2.0 * k * h_prev
    return h


def hermite_weight(dist, t: int, sigma: float):
    """``H_t(dist / sigma) * exp(-dist**2 / sigma**2) / sqrt(sigma)``."""
    dist = np.asarray(dist, dtype=np.float64)
    r = dist / sigma
    w = hermite(r, t) * np.exp(-r * r) / np.sqrt(sigma)
    return w if w.ndim else float(w)


def _edge_list(neighbors: Neighbors):
    """Unique undirected edges ``(a, b, dist)`` with ``a < b``."""
    n, n_n = neighbors.indices.shape
    src = np.repeat(np.arange(n), n_n)
    dst = neighbors.indices.ravel()
    d = neighbors.distances.ravel()
    a, b = np.minimum(src, dst), np.maximum(src, dst)
    order = np.lexsort((b, a))
    a, b, d = a[order], b[order], d[order]
    keep = np.ones(len(a), dtype=bool)
    keep[1:] = (a[1:] != a[:-1]) | (b[1:] != b[:-1])
    return a[keep], b[keep], d[keep]


def build_weight_matrix(x, neighbors: Neighbors, scale: ScaleParams) -> SparseMatrix:
    """Symmetric weight matrix on the union of the neighbour relations.

    An edge ``(i, j)`` exists when either endpoint lists the other as a
    neighbour.  Each undirected edge is weighted once and mirrored, so
    ``W[i, j]`` and ``W[j, i]`` are bitwise equal.  Weights that underflow to
    zero are still stored so every scale shares one sparsity pattern.
    """
    x = as_features(x)
    n = x.shape[0]
    if neighbors.n != n:
        raise ValueError(f"neighbour lists cover {neighbors.n} vertices, features have {n}")
    idx = neighbors.indices
    if idx.min() < 0 or idx.max() >= n or np.any(idx == np.arange(n)[:, None]):
        raise ValueError("inconsistent neighbour structure (self-loop or out-of-range index)")
    a, b, d = _edge_list(neighbors)
    w = np.asarray(hermite_weight(d, scale.t, scale.sigma), dtype=np.float64)
    rows = np.concatenate([a, b])
    cols = np.concatenate([b, a])
    return SparseMatrix.from_coo(rows, cols, np.concatenate([w, w]), (n, n), sum_duplicates=False)


def build_multiscale_graph(x, scales, n_n: int, metric: str = "euclidean") -> MultiscaleGraph:
    """Build every ``W_t`` on one shared neighbour structure."""
    x = as_features(x)
    scales = tuple(scales)
    nb = knn_search(x, n_n, metric)
    weights = tuple(build_weight_matrix(x, nb, s) for s in scales)
    return MultiscaleGraph(x.shape[0], scales, weights, int(n_n), nb)


# ---------------------------------------------------------------------------
# Laplacians


def laplacian(w: SparseMatrix, kind: str = "unnormalized") -> SparseMatrix:
    """Graph Laplacian of a symmetric weight matrix.

    ``unnormalized`` gives ``D - W``; ``symmetric`` gives
    ``I - D^{-1/2} W D^{-1/2}``.  Isolated vertices (zero degree) get an
    all-zero row in the first case and an identity row in the second.  The
    symmetric form is undefined for negative degrees, which Hermite orders
    >= 2 can produce, and raises.
    """
    if kind not in LAPLACIAN_KINDS:
        raise ValueError(f"unknown Laplacian kind {kind!r}; expected one of {LAPLACIAN_KINDS}")
    if not w.is_square:
        raise ValueError("weight matrix must be square")
    n = w.shape[0]
    rid = w.row_ids()
    on = rid == w.indices
    self_w = np.zeros(n)
    self_w[rid[on]] = w.data[on]
    deg = np.bincount(rid, weights=w.data, minlength=n)
    r, c, vals = rid[~on], w.indices[~on], w.data[~on]
    diag_idx = np.arange(n)
    if kind == "unnormalized":
        diag = deg - self_w
        off = -vals
    else:
        if np.any(deg < 0):
            bad = int(np.flatnonzero(deg < 0)[0])
            raise ValueError(
                f"vertex {bad} has negative degree {deg[bad]:.3e}; the symmetric Laplacian is "
                "undefined (use kind='unnormalized' for Hermite orders >= 2)"
            )
        isolated = deg == 0
        safe = np.where(isolated, 1.0, deg)
        off = -vals / np.sqrt(safe[r] * safe[c])
        diag = np.where(isolated, 1.0, 1.0 - self_w / safe)
    return SparseMatrix.from_coo(
        np.concatenate([r, diag_idx]),
        np.concatenate([c, diag_idx]),
        np.concatenate([off, diag]),
        (n, n),
    )


def multiscale_laplacian(g: MultiscaleGraph, kind: str = "unnormalized") -> SparseMatrix:
    """``sum_t c_t * laplacian(W_t) ** p_t``."""
    out = None
    for scale, w in zip(g.scales, g.weights):
        term = sparse_matpow(laplacian(w, kind), scale.p)
        if out is None:
            out = term if scale.c == 1.0 else term.scale(scale.c)
        else:
            out = add(out, term, 1.0, scale.c)
    return out


def multiscale_weights(g: MultiscaleGraph) -> SparseMatrix:
    """``sum_t c_t * W_t ** p_t`` on the kNN graph."""
    out = None
    for scale, w in zip(g.scales, g.weights):
        term = sparse_matpow(w, scale.p)
        out = term.scale(scale.c) if out is None else add(out, term, 1.0, scale.c)
    return out
