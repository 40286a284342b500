"""Smallest eigenpairs of (multiscale) graph Laplacians.

Two routes are provided:

* :func:`lanczos_smallest` works on a sparse kNN Laplacian.
* :func:`nystrom` approximates the spectrum of the symmetric normalised
  Laplacian of the *fully connected* multiscale graph from an ``N x s`` slab
  of kernel weights, never forming the full matrix.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .graph import ScaleParams, as_features, hermite_weight, pairwise_distances
from .linalg import SparseMatrix, dense_sym_eig, spmv


class ConvergenceError(RuntimeError):
    """Raised when Lanczos runs out of restarts.

    The best available pairs and their residual norms are attached as
    ``result``.
    """

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


class NystromError(RuntimeError):
    pass


@dataclass
class EigenPairs:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.eigenvectors.shape[1] != len(self.eigenvalues):
            raise ValueError("one eigenvector column per eigenvalue required")

    @property
    def n_e(self) -> int:
        return len(self.eigenvalues)

    @property
    def n(self) -> int:
        return self.eigenvectors.shape[0]


def _fix_signs(v: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each column made positive
    pivot = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[pivot, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def _orthogonalize(v, basis):
    # classical Gram-Schmidt, applied twice
    for _ in range(2):
        v = v - basis @ (basis.T @ v)
    return v


def lanczos_smallest(
    lap: SparseMatrix,
    n_e: int,
    tol: float = 1e-10,
    max_iter: int = 500,
    seed: int = 0,
    basis_size: int | None = None,
) -> EigenPairs:
    """The ``n_e`` algebraically smallest eigenpairs of a sparse symmetric matrix.

    Single-vector Lanczos with full reorthogonalisation.  Once the basis holds
    ``basis_size`` vectors (default ``max(4 * n_e, 20)``, capped at the matrix
    size) the Rayleigh-Ritz problem is solved and the method is thick
    restarted from the best Ritz vectors plus the current residual direction.

    Parameters
    ----------
    lap : SparseMatrix
        Symmetric matrix.
    n_e : int
        Number of eigenpairs wanted.
    tol : float
        Every returned pair satisfies ``||L v - lam v|| <= tol * max(1, |lam|)``.
    max_iter : int
        Maximum number of restart cycles.
    seed : int
        Seed for the starting vector (and any vectors injected after breakdown).
    """
    n = lap.shape[0]
    if not lap.is_square:
        raise ValueError("Lanczos needs a square matrix")
    if int(n_e) != n_e or not 1 <= n_e <= n:
        raise ValueError(f"need 1 <= n_e <= {n}, got {n_e}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    scale = float(np.max(np.abs(lap.data))) if lap.nnz else 1.0
    if not lap.is_symmetric(tol=1e-10 * max(scale, 1.0)):
        raise ValueError("Lanczos needs a symmetric matrix")
    n_e = int(n_e)
    m = min(n, basis_size or max(4 * n_e, 20))
    m = max(m, min(n, n_e + 1))
    keep = min(m - 1, n_e + max(1, (m - n_e) // 2))
    rng = np.random.default_rng(seed)

    q_basis = np.zeros((n, m))
    a_basis = np.zeros((n, m))
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    k = 0
    breakdown = 1e-12 * max(scale, 1.0)
    cycles = 0
    while True:
        while k < m:
            q_basis[:, k] = q
            a_basis[:, k] = spmv(lap, q)
            k += 1
            if k == m:
                break
            r = _orthogonalize(a_basis[:, k - 1], q_basis[:, :k])
            beta = np.linalg.norm(r)
            if beta <= breakdown:
                # invariant subspace found: continue from a fresh direction
                r = _orthogonalize(rng.standard_normal(n), q_basis[:, :k])
                beta = np.linalg.norm(r)
            q = r / beta
        cycles += 1
        h = q_basis.T @ a_basis
        h = 0.5 * (h + h.T)
        theta, y = np.linalg.eigh(h)
        z = q_basis @ y[:, :n_e]
        res = np.linalg.norm(a_basis @ y[:, :n_e] - z * theta[:n_e], axis=0)
        ok = res <= tol * np.maximum(1.0, np.abs(theta[:n_e]))
        if ok.all() or m == n or cycles >= max_iter:
            pairs = EigenPairs(
                theta[:n_e].copy(),
                _fix_signs(z),
                res,
                {"solver": "lanczos", "cycles": cycles, "basis_size": m, "seed": seed},
            )
            if ok.all() or m == n:
                return pairs
            raise ConvergenceError(
                f"Lanczos did not converge in {max_iter} cycles; "
                f"max residual {res.max():.3e} (tol {tol:.1e})",
                pairs,
            )
        r = _orthogonalize(a_basis[:, m - 1], q_basis)
        yk = y[:, :keep]
        q_basis[:, :keep] = q_basis @ yk
        a_basis[:, :keep] = a_basis @ yk
        q_basis[:, keep:] = 0.0
        a_basis[:, keep:] = 0.0
        k = keep
        r = _orthogonalize(r, q_basis[:, :k])
        beta = np.linalg.norm(r)
        if beta <= breakdown:
            r = _orthogonalize(rng.standard_normal(n), q_basis[:, :k])
            beta = np.linalg.norm(r)
        q = r / beta


# ---------------------------------------------------------------------------
# Nystrom extension


def nystrom_factor(columns, sample, rcond: float = 1e-10):
    """Low-rank eigen-factor of a symmetric matrix known only through columns.

    Given ``columns = W[:, sample]`` the completed matrix is
    ``C A^+ C^T`` with ``A = W[sample][:, sample]``.  It is returned as
    ``U diag(lam) U^T`` with orthonormal ``U`` (one-shot orthogonalisation).
    Negative eigenvalues of the sample block are clamped to zero; the number
    clamped is returned so callers can report it.

    Returns
    -------
    u : ndarray, shape (N, r)
    lam : ndarray, shape (r,)
    n_clamped : int
    """
    c = np.asarray(columns, dtype=np.float64)
    a = c[np.asarray(sample)]
    a = 0.5 * (a + a.T)
    evals, evecs = dense_sym_eig(a)
    top = float(np.max(np.abs(evals))) if len(evals) else 0.0
    if top == 0.0:
        raise NystromError("sample block is identically zero")
    n_clamped = int(np.sum(evals < -rcond * top))
    keep = evals > rcond * top
    if not keep.any():
        raise NystromError("sample block has no positive eigenvalues; retry with another seed")
    f = c @ (evecs[:, keep] / np.sqrt(evals[keep]))
    g = f.T @ f
    gvals, gvecs = dense_sym_eig(0.5 * (g + g.T))
    keep_g = gvals > rcond * float(np.max(gvals))
    u = f @ (gvecs[:, keep_g] / np.sqrt(gvals[keep_g]))
    order = np.argsort(-gvals[keep_g], kind="stable")
    return u[:, order], gvals[keep_g][order], n_clamped


def nystrom(
    x,
    scales,
    n_e: int,
    seed: int = 0,
    sample_size: int | None = None,
) -> EigenPairs:
    """Approximate smallest eigenpairs of the fully connected symmetric Laplacian.

    The graph has weights ``W = sum_t c_t W_t ** p_t`` where ``W_t`` is the
    Hermite-modulated Gaussian kernel on *all* pairs (self-similarity
    included).  Only the ``N x s`` slab of kernel values against ``s``
    uniformly sampled landmark points is evaluated.  Powers are applied in
    each scale's low-rank eigenbasis.  Eigenvalues of
    ``D^{-1/2} W D^{-1/2}`` map to Laplacian eigenvalues through ``1 - lam``.
    If the completed matrix has rank below ``n_e`` the remaining columns are
    filled with an orthonormal complement at eigenvalue 1.
    """
    x = as_features(x)
    n = x.shape[0]
    s = int(sample_size or n_e)
    if int(n_e) != n_e or not 1 <= n_e <= n:
        raise ValueError(f"need 1 <= n_e <= {n}, got {n_e}")
    if not n_e <= s <= n:
        raise ValueError(f"sample size must lie in [n_e, N] = [{n_e}, {n}], got {s}")
    scales = [sc if isinstance(sc, ScaleParams) else ScaleParams(**sc) for sc in scales]
    rng = np.random.default_rng(seed)
    sample = np.sort(rng.choice(n, size=s, replace=False))
    dist = pairwise_distances(x, x[sample])

    bases, spectra = [], []
    clamped = 0
    for sc in scales:
        cols = hermite_weight(dist, sc.t, sc.sigma)
        u, lam, nc = nystrom_factor(cols, sample)
        clamped += nc
        bases.append(u)
        spectra.append(sc.c * lam ** sc.p)
    if clamped:
        warnings.warn(f"Nystrom: clamped {clamped} negative sample-block eigenvalue(s) to zero")
    z = np.hstack(bases)
    spec = np.concatenate(spectra)
    deg = z @ (spec * z.sum(axis=0))
    if np.any(deg <= 0):
        raise NystromError(
            f"{int(np.sum(deg <= 0))} non-positive approximate degree(s); "
            "D^{-1/2} is undefined (retry with another seed or a larger sample)"
        )
    zd = z / np.sqrt(deg)[:, None]
    q, r = np.linalg.qr(zd)
    mid = (r * spec) @ r.T
    theta, v = dense_sym_eig(0.5 * (mid + mid.T))
    order = np.argsort(-theta, kind="stable")[:n_e]
    vals = 1.0 - theta[order]
    vecs = q @ v[:, order]
    if len(vals) < n_e:
        extra = n_e - len(vals)
        fill = _orthogonalize(rng.standard_normal((n, extra)), vecs)
        fill, _ = np.linalg.qr(fill)
        fill = _orthogonalize(fill, vecs)
        fill, _ = np.linalg.qr(fill)
        vecs = np.hstack([vecs, fill])
        vals = np.concatenate([vals, np.ones(extra)])
    order = np.argsort(vals, kind="stable")
    return EigenPairs(
        vals[order],
        _fix_signs(vecs[:, order]),
        None,
        {"solver": "nystrom", "sample_size": s, "seed": seed, "clamped": clamped},
    )
