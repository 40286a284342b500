"""Multiscale MBO classifier.

Each iteration diffuses the label distribution ``U`` with the truncated
spectral solve of ``(I + dt L) V = U - dt mu (U - U_labeled)``, projects
every row onto the probability simplex and snaps it to the nearest simplex
vertex.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import accel
from .eigen import EigenPairs


@dataclass(frozen=True)
class FidelitySpec:
    """Which vertices are labeled, their classes, and the fidelity strength."""

    labeled_mask: np.ndarray
    labels: np.ndarray  # class per vertex; only read where labeled_mask is True
    mu: float = 1.0

    def __post_init__(self):
        mask = np.asarray(self.labeled_mask, dtype=bool)
        labels = np.asarray(self.labels, dtype=np.int64)
        if mask.shape != labels.shape:
            raise ValueError("labeled_mask and labels must have the same length")
        if self.mu < 0:
            raise ValueError(f"mu must be non-negative, got {self.mu}")
        if np.any(labels[mask] < 0):
            raise ValueError("negative class index on a labeled vertex")
        object.__setattr__(self, "labeled_mask", mask)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_indices(cls, n, idx, classes, mu=1.0):
        mask = np.zeros(n, dtype=bool)
        labels = np.full(n, -1, dtype=np.int64)
        idx = np.asarray(idx, dtype=np.int64)
        mask[idx] = True
        labels[idx] = classes
        return cls(mask, np.where(mask, labels, 0), mu)

    @property
    def n(self) -> int:
        return len(self.labeled_mask)

    def u_labeled(self, k: int) -> np.ndarray:
        out = np.zeros((self.n, k))
        rows = np.flatnonzero(self.labeled_mask)
        out[rows, self.labels[rows]] = 1.0
        return out

    def mu_vector(self) -> np.ndarray:
        return np.where(self.labeled_mask, float(self.mu), 0.0)


@dataclass(frozen=True)
class MmboConfig:
    dt: float = 0.1
    n_e: int = 50
    eta: float = 1e-7
    n_t: int = 300
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.n_t < 1:
            raise ValueError(f"n_t must be >= 1, got {self.n_t}")


@dataclass
class MmboResult:
    u: np.ndarray  # final one-hot assignment
    classes: np.ndarray
    iterations: int
    converged: bool
    projected: np.ndarray  # last projected (pre-displacement) distribution


# ---------------------------------------------------------------------------
# simplex projection and displacement


@accel.njit
def _project_row(v, out, buf):
    k = len(v)
    # descending insertion sort into buf; k is the class count, so small
    for j in range(k):
        x = v[j]
        q = j
        while q > 0 and buf[q - 1] < x:
            buf[q] = buf[q - 1]
            q -= 1
        buf[q] = x
    css = 0.0
    theta = 0.0
    for j in range(k):
        css += buf[j]
        t = (css - 1.0) / (j + 1)
        if buf[j] - t > 0:
            theta = t
    for j in range(k):
        out[j] = max(v[j] - theta, 0.0)


@accel.njit
def _project_rows_numba(v):
    out = np.empty_like(v)
    buf = np.empty(v.shape[1])
    for i in range(v.shape[0]):
        _project_row(v[i], out[i], buf)
    return out


def _project_rows_numpy(v):
    k = v.shape[1]
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, k + 1)
    cond = u - css / ind > 0
    rho = k - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(len(v)), rho - 1] / rho
    return np.maximum(v - theta[:, None], 0.0)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto ``{z >= 0, sum(z) = 1}``.

    Accepts one vector or a 2-D array (projected row by row).  Sort-based
    thresholding, ``O(K log K)`` per row.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0 or v.shape[-1] == 0:
        raise ValueError("cannot project an empty vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite entries")
    rows = np.ascontiguousarray(np.atleast_2d(v))
    kernel = _project_rows_numba if accel.enabled() else _project_rows_numpy
    out = kernel(rows)
    return out[0] if v.ndim == 1 else out


def displace(v) -> int | np.ndarray:
    """Index of the nearest simplex vertex, i.e. the argmax (lowest index on ties)."""
    v = np.asarray(v)
    return int(np.argmax(v)) if v.ndim == 1 else np.argmax(v, axis=1)


@accel.njit
def _project_displace_numba(v, onehot, classes):
    k = v.shape[1]
    out = np.empty(k)
    buf = np.empty(k)
    for i in range(v.shape[0]):
        _project_row(v[i], out, buf)
        best = 0
        for j in range(1, k):
            if out[j] > out[best]:
                best = j
        v[i, :] = out
        for j in range(k):
            onehot[i, j] = 0.0
        onehot[i, best] = 1.0
        classes[i] = best


def _project_displace(v):
    """Project rows in place of a copy; return (projected, one-hot, classes)."""
    n, k = v.shape
    if accel.enabled():
        proj = np.ascontiguousarray(v)
        onehot = np.empty((n, k))
        classes = np.empty(n, dtype=np.int64)
        _project_displace_numba(proj, onehot, classes)
        return proj, onehot, classes
    proj = _project_rows_numpy(v)
    classes = np.argmax(proj, axis=1)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), classes] = 1.0
    return proj, onehot, classes


# ---------------------------------------------------------------------------
# iteration


def _check_fid(fid: FidelitySpec, k: int):
    if k < 1:
        raise ValueError(f"class count must be >= 1, got {k}")
    bad = fid.labeled_mask & (fid.labels >= k)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"label {fid.labels[i]} at vertex {i} is out of range for k={k}")


def initialize(fid: FidelitySpec, k: int, n: int | None = None, seed: int = 0) -> np.ndarray:
    """Random simplex rows for unlabeled vertices, simplex vertices for labeled ones."""
    n = fid.n if n is None else n
    if n != fid.n:
        raise ValueError(f"fidelity covers {fid.n} vertices, expected {n}")
    _check_fid(fid, k)
    rng = np.random.default_rng(seed)
    u = project_simplex(rng.random((n, k)))
    rows = np.flatnonzero(fid.labeled_mask)
    u[rows] = 0.0
    u[rows, fid.labels[rows]] = 1.0
    return u


def diffusion_step(u, eig: EigenPairs, fid: FidelitySpec, dt: float) -> np.ndarray:
    """``X (I + dt Lambda)^{-1} X^T (U - dt mu (U - U_labeled))``."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape[0] != eig.n or fid.n != eig.n:
        raise ValueError(
            f"dimension mismatch: U has {u.shape[0]} rows, eigenvectors {eig.n}, fidelity {fid.n}"
        )
    if dt < 0:
        raise ValueError("dt must be non-negative")
    x = eig.eigenvectors
    c = u - dt * fid.mu_vector()[:, None] * (u - fid.u_labeled(u.shape[1]))
    return x @ ((x.T @ c) / (1.0 + dt * eig.eigenvalues)[:, None])


def stop_ratio(u_new, u_old) -> float:
    num = np.max(np.sum((u_new - u_old) ** 2, axis=1))
    den = np.max(np.sum(u_new ** 2, axis=1))
    return float(num / den) if den > 0 else float("inf")


def run(eig: EigenPairs, fid: FidelitySpec, k: int, cfg: MmboConfig) -> MmboResult:
    """Iterate diffusion, projection and displacement until the update stalls.

    Stops when ``max_i |u_i^{n+1} - u_i^n|^2 / max_i |u_i^{n+1}|^2 < eta`` or
    after ``cfg.n_t`` iterations (``converged`` is then False).
    """
    if fid.n != eig.n:
        raise ValueError(f"fidelity covers {fid.n} vertices, eigenvectors {eig.n}")
    u = initialize(fid, k, eig.n, cfg.seed)
    x = eig.eigenvectors
    b = np.ascontiguousarray(x.T / (1.0 + cfg.dt * eig.eigenvalues)[:, None])
    dt_mu = cfg.dt * fid.mu_vector()[:, None]
    u_lab = fid.u_labeled(k)
    forcing = dt_mu * u_lab
    keep = 1.0 - dt_mu
    proj = u
    converged = False
    it = 0
    while it < cfg.n_t:
        it += 1
        c = keep * u + forcing
        proj, u_new, classes = _project_displace(x @ (b @ c))
        ratio = stop_ratio(u_new, u)
        u = u_new
        if ratio < cfg.eta:
            converged = True
            break
    classes = np.argmax(u, axis=1)
    return MmboResult(u, classes, it, converged, proj)
