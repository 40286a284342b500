"""Multikernel manifold learning: warped-kernel SVM.

The base RBF kernel ``M`` is deformed by a graph operator ``P`` (by default
``gamma_I / gamma_A`` times the multiscale Laplacian) into

    M~(a, b) = M(a, b) - M_a^T (I + P M)^{-1} P M_b

and a soft-margin SVM is trained on ``M~`` restricted to the labeled points.
Multiclass problems are handled one-vs-rest.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import accel
from .graph import as_features, pairwise_distances
from .linalg import SparseMatrix, dense_sym_eig

log = logging.getLogger(__name__)

P_OPERATORS = ("laplacian", "weights")
_TAU = 1e-12


@dataclass(frozen=True)
class BaseKernelConfig:
    sigma_m: float = 1.0
    family: str = "gaussian-rbf"

    def __post_init__(self):
        if self.family != "gaussian-rbf":
            raise ValueError(f"unsupported base kernel {self.family!r}")
        if not self.sigma_m > 0:
            raise ValueError(f"sigma_m must be positive, got {self.sigma_m}")


def gram(x, k: BaseKernelConfig, z=None) -> np.ndarray:
    """``exp(-|x_i - z_j|^2 / sigma_m^2)``; ``z`` defaults to ``x``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    d = pairwise_distances(x, z)
    out = np.exp(-(d * d) / (k.sigma_m ** 2))
    if z is None:
        out = 0.5 * (out + out.T)
        np.fill_diagonal(out, 1.0)
    return out


def deformation_matrix(m, l_multi, gamma_a: float, gamma_i: float) -> np.ndarray:
    """``G = (I + P M)^{-1} P`` with ``P = (gamma_i / gamma_a) * l_multi``.

    Solved with a dense LU factorisation; the result is symmetrised (it is
    symmetric in exact arithmetic for symmetric ``P`` and ``M``).
    """
    if not gamma_a > 0:
        raise ValueError(f"gamma_a must be positive, got {gamma_a}")
    if gamma_i < 0:
        raise ValueError(f"gamma_i must be non-negative, got {gamma_i}")
    m = np.asarray(m, dtype=np.float64)
    n = m.shape[0]
    p = l_multi.to_dense() if isinstance(l_multi, SparseMatrix) else np.asarray(l_multi, dtype=np.float64)
    if p.shape != m.shape:
        raise ValueError(f"operator shape {p.shape} does not match Gram shape {m.shape}")
    if gamma_i == 0:
        return np.zeros((n, n))
    p = (gamma_i / gamma_a) * p
    lhs = np.eye(n) + p @ m
    try:
        g = np.linalg.solve(lhs, p)
    except np.linalg.LinAlgError as exc:
        raise ValueError("I + P M is singular") from exc
    if not np.all(np.isfinite(g)):
        raise ValueError("I + P M is numerically singular")
    return 0.5 * (g + g.T)


@dataclass
class WarpedKernelModel:
    points: np.ndarray
    kernel: BaseKernelConfig
    gram: np.ndarray
    deformation: np.ndarray
    gamma_a: float = 1.0
    gamma_i: float = 0.0
    _warped: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def build(cls, x, kernel: BaseKernelConfig, operator, gamma_a: float, gamma_i: float):
        x = as_features(x)
        m = gram(x, kernel)
        g = deformation_matrix(m, operator, gamma_a, gamma_i)
        return cls(x, kernel, m, g, gamma_a, gamma_i)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def warped_gram(self) -> np.ndarray:
        """``M - M G M`` over the training points, exactly symmetric."""
        if self._warped is None:
            if self.gamma_i == 0:
                w = self.gram.copy()
            else:
                w = self.gram - self.gram @ self.deformation @ self.gram
                w = 0.5 * (w + w.T)
            self._warped = w
        return self._warped

    def base_rows(self, q) -> np.ndarray:
        q = np.atleast_2d(np.asarray(q, dtype=np.float64))
        if q.shape[1] != self.points.shape[1]:
            raise ValueError(f"query dimension {q.shape[1]} != training dimension {self.points.shape[1]}")
        return gram(q, self.kernel, self.points)

    def warped_cross(self, a, b) -> np.ndarray:
        """Warped kernel between query sets ``a`` (rows) and ``b`` (columns)."""
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        b = np.atleast_2d(np.asarray(b, dtype=np.float64))
        ma, mb = self.base_rows(a), self.base_rows(b)
        base = gram(a, self.kernel, b)
        if self.gamma_i == 0:
            return base
        return base - ma @ self.deformation @ mb.T


def warped_eval(model: WarpedKernelModel, a, b) -> float:
    """Warped kernel value for two feature vectors."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    return float(model.warped_cross(a[None, :], b[None, :])[0, 0])


# ---------------------------------------------------------------------------
# SMO


@accel.njit
def _smo_numba(k, y, c, tol, max_iter):
    n = len(y)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    it = 0
    m_up = 0.0
    m_low = 0.0
    while True:
        i = -1
        j = -1
        m_up = -np.inf
        m_low = np.inf
        for t in range(n):
            f = -y[t] * grad[t]
            if (y[t] > 0 and alpha[t] < c) or (y[t] < 0 and alpha[t] > 0):
                if f > m_up:
                    m_up = f
                    i = t
            if (y[t] < 0 and alpha[t] < c) or (y[t] > 0 and alpha[t] > 0):
                if f < m_low:
                    m_low = f
                    j = t
        if i < 0 or j < 0 or m_up - m_low < tol or it >= max_iter:
            break
        it += 1
        ai_old = alpha[i]
        aj_old = alpha[j]
        kij = k[i, j]
        if y[i] != y[j]:
            quad = k[i, i] + k[j, j] + 2.0 * kij * y[i] * y[j]
            if quad <= 0:
                quad = 1e-12
            delta = (-grad[i] - grad[j]) / quad
            diff = ai_old - aj_old
            ai = ai_old + delta
            aj = aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj = 0.0
                    ai = diff
            else:
                if ai < 0:
                    ai = 0.0
                    aj = -diff
            if diff > 0:
                if ai > c:
                    ai = c
                    aj = c - diff
            else:
                if aj > c:
                    aj = c
                    ai = c + diff
        else:
            quad = k[i, i] + k[j, j] - 2.0 * kij * y[i] * y[j]
            if quad <= 0:
                quad = 1e-12
            delta = (grad[i] - grad[j]) / quad
            s = ai_old + aj_old
            ai = ai_old - delta
            aj = aj_old + delta
            if s > c:
                if ai > c:
                    ai = c
                    aj = s - c
            else:
                if aj < 0:
                    aj = 0.0
                    ai = s
            if s > c:
                if aj > c:
                    aj = c
                    ai = s - c
            else:
                if ai < 0:
                    ai = 0.0
                    aj = s
        dai = ai - ai_old
        daj = aj - aj_old
        alpha[i] = ai
        alpha[j] = aj
        for t in range(n):
            grad[t] += y[t] * (y[i] * k[t, i] * dai + y[j] * k[t, j] * daj)
    return alpha, grad, it, m_up, m_low


def _smo_numpy(k, y, c, tol, max_iter):
    n = len(y)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    it = 0
    pos, neg = y > 0, y < 0
    while True:
        f = -y * grad
        up = (pos & (alpha < c)) | (neg & (alpha > 0))
        low = (neg & (alpha < c)) | (pos & (alpha > 0))
        if not up.any() or not low.any():
            m_up, m_low = -np.inf, np.inf
            break
        fu = np.where(up, f, -np.inf)
        fl = np.where(low, f, np.inf)
        i, j = int(np.argmax(fu)), int(np.argmin(fl))
        m_up, m_low = fu[i], fl[j]
        if m_up - m_low < tol or it >= max_iter:
            break
        it += 1
        ai_old, aj_old = alpha[i], alpha[j]
        qij = y[i] * y[j] * k[i, j]
        if y[i] != y[j]:
            quad = k[i, i] + k[j, j] + 2.0 * qij
            delta = (-grad[i] - grad[j]) / (quad if quad > 0 else _TAU)
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > c:
                    ai, aj = c, c - diff
            elif aj > c:
                aj, ai = c, c + diff
        else:
            quad = k[i, i] + k[j, j] - 2.0 * qij
            delta = (grad[i] - grad[j]) / (quad if quad > 0 else _TAU)
            s = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if s > c:
                if ai > c:
                    ai, aj = c, s - c
            elif aj < 0:
                aj, ai = 0.0, s
            if s > c:
                if aj > c:
                    aj, ai = c, s - c
            elif ai < 0:
                ai, aj = 0.0, s
        dai, daj = ai - ai_old, aj - aj_old
        alpha[i], alpha[j] = ai, aj
        grad += y * (y[i] * k[:, i] * dai + y[j] * k[:, j] * daj)
    return alpha, grad, it, m_up, m_low


def smo(k, y, c: float, tol: float = 1e-3, max_iter: int = 1_000_000):
    """Solve the soft-margin SVM dual on a precomputed kernel.

    Maximal-violating-pair working set selection.  Returns ``(alpha, bias,
    gap, iterations)``, where ``gap = m(alpha) - M(alpha)`` is the KKT
    violation used as the stopping test.
    """
    k = np.ascontiguousarray(k, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    kernel = _smo_numba if accel.enabled() else _smo_numpy
    alpha, grad, it, m_up, m_low = kernel(k, y, float(c), float(tol), int(max_iter))
    if it >= max_iter:
        warnings.warn(f"SMO stopped at the iteration cap ({max_iter}) with gap {m_up - m_low:.3e}")
    f = -y * grad
    free = (alpha > 0) & (alpha < c)
    if free.any():
        bias = float(np.mean(f[free]))
    elif np.isfinite(m_up) and np.isfinite(m_low):
        bias = 0.5 * (m_up + m_low)
    else:
        bias = float(m_up if np.isfinite(m_up) else m_low)
    gap = float(m_up - m_low) if np.isfinite(m_up) and np.isfinite(m_low) else 0.0
    return alpha, bias, gap, it


def kkt_violation(k, y, alpha, bias, c) -> float:
    """Largest complementary-slackness residual of a dual SVM solution."""
    f = k @ (alpha * y) + bias
    r = y * f - 1.0
    at_zero = alpha <= 0
    at_c = alpha >= c
    free = ~at_zero & ~at_c
    v = np.zeros_like(r)
    v[at_zero] = np.maximum(0.0, -r[at_zero])
    v[at_c] = np.maximum(0.0, r[at_c])
    v[free] = np.abs(r[free])
    return float(v.max()) if len(v) else 0.0


@dataclass
class SvmModel:
    labeled: np.ndarray  # indices of labeled training points
    alphas: np.ndarray  # (problems, n_labeled)
    targets: np.ndarray  # (problems, n_labeled), +-1
    biases: np.ndarray
    c: float
    k_classes: int
    kkt: np.ndarray
    shift: float = 0.0

    @property
    def support(self) -> list:
        return [self.labeled[a > 0] for a in self.alphas]

    def scores_from_rows(self, rows) -> np.ndarray:
        """Class scores given warped-kernel rows against the labeled points."""
        rows = np.atleast_2d(rows)
        if self.k_classes == 1:
            return np.ones((rows.shape[0], 1))
        # one matrix-vector product per binary problem, as a plain SVM would score
        return np.column_stack([rows @ (a * y) + b for a, y, b in zip(self.alphas, self.targets, self.biases)])


def train(model: WarpedKernelModel, labeled, labels, c: float, k_classes: int, tol: float = 1e-3,
          max_iter: int = 1_000_000) -> SvmModel:
    """One-vs-rest soft-margin SVMs on the warped Gram of the labeled points."""
    labeled = np.asarray(labeled, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(labeled) != len(labels):
        raise ValueError("one label per labeled index required")
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    if np.any(labels < 0) or np.any(labels >= k_classes):
        raise ValueError(f"labels must lie in [0, {k_classes})")
    missing = sorted(set(range(k_classes)) - set(labels.tolist()))
    if missing:
        raise ValueError(f"class(es) {missing} have no labeled point")
    kl = model.warped_gram()[np.ix_(labeled, labeled)].copy()
    shift = 0.0
    if len(labeled) > 1 and model.gamma_i > 0:
        lam_min = float(dense_sym_eig(kl)[0][0])
        if lam_min < -1e-8 * max(1.0, float(np.abs(kl).max())):
            shift = abs(lam_min) + 1e-10
            warnings.warn(f"warped Gram is indefinite (min eigenvalue {lam_min:.3e}); shifting by {shift:.3e}")
            kl[np.diag_indices_from(kl)] += shift
    if k_classes == 1:
        z = np.zeros((1, len(labeled)))
        return SvmModel(labeled, z, np.ones_like(z), np.zeros(1), c, 1, np.zeros(1), shift)
    problems = range(k_classes)
    alphas, targets, biases, kkts = [], [], [], []
    for cls in problems:
        y = np.where(labels == cls, 1.0, -1.0)
        a, b, gap, it = smo(kl, y, c, tol, max_iter)
        log.debug("class %d: %d SMO steps, gap %.2e", cls, it, gap)
        alphas.append(a)
        targets.append(y)
        biases.append(b)
        kkts.append(kkt_violation(kl, y, a, b, c))
    return SvmModel(labeled, np.array(alphas), np.array(targets), np.array(biases), float(c),
                    k_classes, np.array(kkts), shift)


def transductive_scores(svm: SvmModel, model: WarpedKernelModel) -> np.ndarray:
    """Scores for every training point, using stored warped-Gram rows."""
    return svm.scores_from_rows(model.warped_gram()[:, svm.labeled])


def predict(svm: SvmModel, model: WarpedKernelModel, x):
    """Class index and score vector for one feature vector (or a batch)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = model.warped_cross(np.atleast_2d(x), model.points[svm.labeled])
    scores = svm.scores_from_rows(rows)
    classes = np.argmax(scores, axis=1)
    if single:
        return int(classes[0]), scores[0]
    return classes, scores
