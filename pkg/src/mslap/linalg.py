"""Compressed-sparse-row matrices and the small amount of symmetric linear
algebra the rest of the package needs.

Dense matrices are plain ``numpy.ndarray`` objects.  Sparse matrices use the
:class:`SparseMatrix` CSR container defined here; every kernel that loops over
rows has a numba and a numpy implementation (see :mod:`mslap.accel`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import accel


class DimensionError(ValueError):
    pass


class AsymmetricMatrixError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Immutable CSR matrix.

    Column indices are strictly increasing within each row and no stored value
    is non-finite.  Explicitly stored zeros are allowed (they keep sparsity
    patterns aligned across related matrices).
    """

    shape: tuple[int, int]
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        rows, cols = self.shape
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if indptr.shape != (rows + 1,) or indptr[0] != 0 or indptr[-1] != len(indices):
            raise ValueError("malformed row offsets")
        if len(indices) != len(data):
            raise ValueError("indices and data length differ")
        if np.any(np.diff(indptr) < 0):
            raise ValueError("row offsets must be non-decreasing")
        if len(indices):
            if indices.min() < 0 or indices.max() >= cols:
                raise ValueError("column index out of range")
            step = np.diff(indices)
            row_start = np.zeros(len(indices), dtype=bool)
            row_start[indptr[1:-1][indptr[1:-1] < len(indices)]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise ValueError("column indices must be strictly increasing within a row")
        if not np.all(np.isfinite(data)):
            raise ValueError("non-finite stored value")
        for arr in (indptr, indices, data):
            arr.setflags(write=False)
        object.__setattr__(self, "shape", (int(rows), int(cols)))
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "data", data)

    @property
    def nnz(self) -> int:
        return len(self.data)

    @property
    def is_square(self) -> bool:
        return self.shape[0] == self.shape[1]

    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))

    @classmethod
    def from_coo(cls, rows, cols, vals, shape, sum_duplicates=True) -> "SparseMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        n_rows, _ = shape
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows):
            new = np.ones(len(rows), dtype=bool)
            new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            if not new.all():
                if not sum_duplicates:
                    raise ValueError("duplicate entries")
                starts = np.flatnonzero(new)
                vals = np.add.reduceat(vals, starts)
                rows, cols = rows[starts], cols[starts]
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_rows), out=indptr[1:])
        return cls(shape, indptr, cols, vals)

    @classmethod
    def from_dense(cls, a, keep_zeros=False) -> "SparseMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2:
            raise DimensionError("expected a 2-D array")
        mask = np.ones_like(a, dtype=bool) if keep_zeros else a != 0
        r, c = np.nonzero(mask)
        return cls.from_coo(r, c, a[r, c], a.shape)

    @classmethod
    def identity(cls, n: int, scale: float = 1.0) -> "SparseMatrix":
        return cls((n, n), np.arange(n + 1), np.arange(n), np.full(n, float(scale)))

    @classmethod
    def diags(cls, d) -> "SparseMatrix":
        d = np.asarray(d, dtype=np.float64)
        n = len(d)
        return cls((n, n), np.arange(n + 1), np.arange(n), d)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_ids(), self.indices] = self.data
        return out

    def to_scipy(self):
        from scipy import sparse

        return sparse.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_coo(self.indices, self.row_ids(), self.data, self.shape[::-1])

    @property
    def T(self) -> "SparseMatrix":
        return self.transpose()

    def diagonal(self) -> np.ndarray:
        n = min(self.shape)
        out = np.zeros(n)
        r = self.row_ids()
        on = (r == self.indices) & (r < n)
        out[r[on]] = self.data[on]
        return out

    def scale(self, alpha: float) -> "SparseMatrix":
        return SparseMatrix(self.shape, self.indptr, self.indices, self.data * alpha)

    def is_symmetric(self, tol: float = 0.0) -> bool:
        if not self.is_square:
            return False
        t = self.transpose()
        if np.array_equal(t.indptr, self.indptr) and np.array_equal(t.indices, self.indices):
            return bool(np.all(np.abs(t.data - self.data) <= tol))
        diff = add(self, t, 1.0, -1.0)
        return bool(np.all(np.abs(diff.data) <= tol))

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            return spgemm(self, other)
        other = np.asarray(other, dtype=np.float64)
        if other.ndim == 1:
            return spmv(self, other)
        return np.column_stack([spmv(self, col) for col in other.T]) if other.shape[1] else np.zeros((self.shape[0], 0))


# ---------------------------------------------------------------------------
# spmv


@accel.njit
def _spmv_numba(indptr, indices, data, x, out):
    for i in range(len(indptr) - 1):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += data[p] * x[indices[p]]
        out[i] = acc
    return out


def _spmv_numpy(indptr, indices, data, x, out):
    rows = np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))
    out[:] = np.bincount(rows, weights=data * x[indices], minlength=len(out))
    return out


def spmv(a: SparseMatrix, x) -> np.ndarray:
    """Return ``a @ x`` for a 1-D vector ``x``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1 or a.shape[1] != len(x):
        raise DimensionError(f"cannot multiply {a.shape} matrix by vector of length {x.shape}")
    out = np.empty(a.shape[0])
    kernel = _spmv_numba if accel.enabled() else _spmv_numpy
    return kernel(a.indptr, a.indices, a.data, x, out)


# ---------------------------------------------------------------------------
# sparse-sparse product (Gustavson, fill-in retained)


@accel.njit
def _spgemm_numba(n_rows, n_cols, ap, ai, ax, bp, bi, bx):
    marker = np.full(n_cols, -1, dtype=np.int64)
    counts = np.zeros(n_rows + 1, dtype=np.int64)
    for i in range(n_rows):
        c = 0
        for pa in range(ap[i], ap[i + 1]):
            k = ai[pa]
            for pb in range(bp[k], bp[k + 1]):
                j = bi[pb]
                if marker[j] != i:
                    marker[j] = i
                    c += 1
        counts[i + 1] = counts[i] + c
    nnz = counts[n_rows]
    ci = np.empty(nnz, dtype=np.int64)
    cx = np.empty(nnz, dtype=np.float64)
    acc = np.zeros(n_cols)
    marker[:] = -1
    for i in range(n_rows):
        start = counts[i]
        c = start
        for pa in range(ap[i], ap[i + 1]):
            k = ai[pa]
            av = ax[pa]
            for pb in range(bp[k], bp[k + 1]):
                j = bi[pb]
                if marker[j] != i:
                    marker[j] = i
                    ci[c] = j
                    c += 1
                acc[j] += av * bx[pb]
        row = np.sort(ci[start:c])
        for q in range(start, c):
            j = row[q - start]
            ci[q] = j
            cx[q] = acc[j]
            acc[j] = 0.0
    return counts, ci, cx


def _spgemm_numpy(n_rows, n_cols, ap, ai, ax, bp, bi, bx):
    a_rows = np.repeat(np.arange(n_rows), np.diff(ap))
    lens = bp[ai + 1] - bp[ai]
    total = int(lens.sum())
    if total == 0:
        return np.zeros(n_rows + 1, dtype=np.int64), np.zeros(0, np.int64), np.zeros(0)
    rows = np.repeat(a_rows, lens)
    avals = np.repeat(ax, lens)
    # positions into b for every expanded product term
    seg_start = np.repeat(bp[ai], lens)
    offsets = np.arange(total) - np.repeat(np.cumsum(lens) - lens, lens)
    pos = seg_start + offsets
    m = SparseMatrix.from_coo(rows, bi[pos], avals * bx[pos], (n_rows, n_cols))
    return m.indptr, m.indices, m.data


def spgemm(a: SparseMatrix, b: SparseMatrix) -> SparseMatrix:
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    kernel = _spgemm_numba if accel.enabled() else _spgemm_numpy
    indptr, indices, data = kernel(a.shape[0], b.shape[1], a.indptr, a.indices, a.data,
                                   b.indptr, b.indices, b.data)
    return SparseMatrix((a.shape[0], b.shape[1]), indptr, indices, data)


def add(a: SparseMatrix, b: SparseMatrix, alpha: float = 1.0, beta: float = 1.0) -> SparseMatrix:
    """Return ``alpha * a + beta * b`` over the union of both patterns."""
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    rows = np.concatenate([a.row_ids(), b.row_ids()])
    cols = np.concatenate([a.indices, b.indices])
    vals = np.concatenate([alpha * a.data, beta * b.data])
    return SparseMatrix.from_coo(rows, cols, vals, a.shape)


def sparse_matpow(a: SparseMatrix, p: int) -> SparseMatrix:
    """Integer matrix power by repeated sparse products.

    Intended for the small powers (1 to 3) used in multiscale Laplacians; all
    fill-in is kept.  For symmetric ``a`` the result is re-symmetrised by
    averaging with its transpose so that transposed entries agree bitwise.
    """
    if not a.is_square:
        raise DimensionError("matrix power needs a square matrix")
    if int(p) != p or p < 1:
        raise ValueError(f"power must be a positive integer, got {p}")
    out = a
    for _ in range(int(p) - 1):
        out = spgemm(out, a)
    if p > 1 and a.is_symmetric():
        t = out.transpose()
        if np.array_equal(t.indices, out.indices) and np.array_equal(t.indptr, out.indptr):
            out = SparseMatrix(out.shape, out.indptr, out.indices, 0.5 * (out.data + t.data))
    return out


# ---------------------------------------------------------------------------
# dense symmetric eigensolver (cyclic Jacobi)

JACOBI_MAX_N = 128


@accel.njit
def _jacobi_numba(a, tol, max_sweeps):
    n = a.shape[0]
    v = np.eye(n)
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += a[i, j] * a[i, j]
    sweeps = 0
    for sweeps in range(max_sweeps + 1):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += a[i, j] * a[i, j]
        if 2.0 * off <= tol * tol * scale or sweeps == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta == 0.0:
                        t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return np.diag(a).copy(), v, sweeps


def _jacobi_numpy(a, tol, max_sweeps):
    n = a.shape[0]
    v = np.eye(n)
    scale = float(np.sum(a * a))
    iu = np.triu_indices(n, 1)
    sweeps = 0
    for sweeps in range(max_sweeps + 1):
        off = float(np.sum(a[iu] ** 2))
        if 2.0 * off <= tol * tol * scale or sweeps == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v, sweeps


def check_symmetric(a: np.ndarray, tol: float = 1e-10) -> None:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    gap = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if gap > tol * max(1.0, float(np.max(np.abs(a))) if a.size else 1.0):
        raise AsymmetricMatrixError(f"matrix is not symmetric (max |A - A^T| = {gap:.3e})")


def dense_sym_eig(a, method: str = "auto", tol: float = 1e-15, max_sweeps: int = 100):
    """Eigen-decomposition of a dense symmetric matrix.

    Parameters
    ----------
    a : array_like, shape (n, n)
        Symmetric to 1e-10 (relative to its largest entry).
    method : {"auto", "jacobi", "lapack"}
        ``jacobi`` runs cyclic Jacobi rotations; ``lapack`` defers to
        ``numpy.linalg.eigh``.  ``auto`` uses Jacobi up to ``JACOBI_MAX_N``
        rows, LAPACK above that.

    Returns
    -------
    w : ndarray, shape (n,)
        Eigenvalues in ascending order.
    v : ndarray, shape (n, n)
        Orthonormal eigenvectors, column ``k`` pairs with ``w[k]``.
    """
    a = np.array(a, dtype=np.float64)
    check_symmetric(a)
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    if method == "auto":
        method = "jacobi" if n <= JACOBI_MAX_N else "lapack"
    if method == "lapack":
        return np.linalg.eigh(a)
    if method != "jacobi":
        raise ValueError(f"unknown eigensolver method {method!r}")
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    kernel = _jacobi_numba if accel.enabled() else _jacobi_numpy
    w, v, _ = kernel(a, tol, max_sweeps)
    order = np.argsort(w, kind="stable")
    return w[order], np.ascontiguousarray(v[:, order])
