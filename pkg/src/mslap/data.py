"""Dataset loading, synthetic generation and label splits."""
from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .graph import as_features


class ParseError(ValueError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = str(path)
        self.line = line


class RaggedRowError(ParseError):
    pass


class NonNumericError(ParseError):
    pass


class MissingLabelColumnError(ParseError):
    pass


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    k: int | None = None
    label_map: dict = field(default_factory=dict)  # original label -> class index

    def __post_init__(self):
        self.features = as_features(self.features, min_rows=0)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.labels) != self.features.shape[0]:
            raise ValueError(f"{len(self.labels)} labels for {self.features.shape[0]} rows")
        if self.k is None:
            self.k = int(self.labels.max()) + 1 if len(self.labels) else 0
        if np.any(self.labels < 0) or np.any(self.labels >= self.k):
            raise ValueError(f"labels must lie in [0, {self.k})")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


def _remap(raw):
    """Map raw label values to dense indices in sorted order."""
    uniq = sorted(set(raw))
    mapping = {u: i for i, u in enumerate(uniq)}
    return np.array([mapping[v] for v in raw], dtype=np.int64), mapping


def _as_label(v: float):
    return int(v) if float(v).is_integer() else float(v)


def _is_number(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def load_csv(path, label_column=-1, name: str | None = None) -> Dataset:
    """Read comma-separated numeric rows.

    A first line containing a non-numeric field is treated as a header.
    ``label_column`` is a column index (negative counts from the end) or a
    header name.  Labels are remapped to ``0..k-1`` in sorted order.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if r and any(t.strip() for t in r)]
    if not rows:
        raise ParseError(path, 0, "empty file")
    header = None
    if not all(_is_number(t) for t in rows[0][1]):
        header = [t.strip() for t in rows[0][1]]
        rows = rows[1:]
    if isinstance(label_column, str):
        if header is None or label_column not in header:
            raise MissingLabelColumnError(path, 1, f"label column {label_column!r} not found")
        col = header.index(label_column)
    else:
        col = int(label_column)
    width = len(header) if header is not None else len(rows[0][1]) if rows else 0
    if not -width <= col < width:
        raise MissingLabelColumnError(path, 1, f"label column {label_column} out of range for {width} columns")
    col %= width
    feats, raw = [], []
    for lineno, r in rows:
        if len(r) != width:
            raise RaggedRowError(path, lineno, f"expected {width} fields, found {len(r)}")
        vals = []
        for tok in r:
            try:
                vals.append(float(tok))
            except ValueError:
                raise NonNumericError(path, lineno, f"non-numeric field {tok.strip()!r}") from None
        raw.append(_as_label(vals[col]))
        feats.append(vals[:col] + vals[col + 1:])
    labels, mapping = _remap(raw)
    return Dataset(np.array(feats, dtype=np.float64), labels, name or path.stem, len(mapping), mapping)


def load_libsvm(path, name: str | None = None, n_features: int | None = None) -> Dataset:
    """Read ``label idx:val ...`` lines with 1-based feature indices."""
    path = Path(path)
    raw, entries = [], []
    width = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            toks = line.split()
            try:
                raw.append(_as_label(float(toks[0])))
            except ValueError:
                raise NonNumericError(path, lineno, f"non-numeric label {toks[0]!r}") from None
            row = {}
            for tok in toks[1:]:
                idx, sep, val = tok.partition(":")
                if not sep:
                    raise ParseError(path, lineno, f"malformed pair {tok!r}")
                try:
                    j, v = int(idx), float(val)
                except ValueError:
                    raise ParseError(path, lineno, f"malformed pair {tok!r}") from None
                if j < 1:
                    raise ParseError(path, lineno, f"feature index {j} invalid (indices are 1-based)")
                row[j - 1] = v
                width = max(width, j)
            entries.append(row)
    if not entries:
        raise ParseError(path, 0, "no data lines")
    width = max(width, n_features or 0, 1)
    x = np.zeros((len(entries), width))
    for i, row in enumerate(entries):
        for j, v in row.items():
            x[i, j] = v
    labels, mapping = _remap(raw)
    return Dataset(x, labels, name or path.stem, len(mapping), mapping)


def atomic_write(path, write):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(ds: Dataset, path, original_labels: bool = True) -> None:
    """Write features plus a trailing ``label`` column (header included)."""
    inverse = {v: k for k, v in ds.label_map.items()}

    def write(fh):
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(ds.d)] + ["label"])
        for row, lab in zip(ds.features, ds.labels):
            out = inverse.get(int(lab), int(lab)) if original_labels else int(lab)
            w.writerow([repr(float(v)) for v in row] + [out])

    atomic_write(path, write)


def write_libsvm(ds: Dataset, path) -> None:
    inverse = {v: k for k, v in ds.label_map.items()}

    def write(fh):
        for row, lab in zip(ds.features, ds.labels):
            pairs = " ".join(f"{j + 1}:{float(v)!r}" for j, v in enumerate(row) if v != 0)
            fh.write(f"{inverse.get(int(lab), int(lab))} {pairs}".rstrip() + "\n")

    atomic_write(path, write)


# ---------------------------------------------------------------------------
# synthetic data

G50C_BAYES_ERROR = 0.05


def g50c_separation(bayes_error: float = G50C_BAYES_ERROR) -> float:
    """Mean distance between two unit Gaussians with the given Bayes error."""
    return float(2.0 * norm.ppf(1.0 - bayes_error))


def generate_g50c(seed: int = 0, n_per_class: int = 275, dim: int = 50,
                  bayes_error: float = G50C_BAYES_ERROR) -> Dataset:
    """Two unit-covariance Gaussians in ``dim`` dimensions, means ``+-(delta/2) e_1``.

    ``delta`` is chosen so the Bayes error is ``bayes_error``.  Labels follow
    the original ``{-1, +1}`` convention in ``label_map``.
    """
    rng = np.random.default_rng(seed)
    half = 0.5 * g50c_separation(bayes_error)
    x = rng.standard_normal((2 * n_per_class, dim))
    y = np.repeat([0, 1], n_per_class)
    x[:, 0] += np.where(y == 0, -half, half)
    perm = rng.permutation(2 * n_per_class)
    return Dataset(x[perm], y[perm], "g50c", 2, {-1: 0, 1: 1})


def generate_blobs(n_per_class: int, k: int, dim: int = 2, spread: float = 5.0, seed: int = 0,
                   name: str = "blobs") -> Dataset:
    """Isotropic unit Gaussians with centres spaced ``spread`` apart along random directions."""
    rng = np.random.default_rng(seed)
    centres = rng.standard_normal((k, dim))
    centres *= spread / np.maximum(np.linalg.norm(centres, axis=1, keepdims=True), 1e-12)
    centres[0] = 0.0
    y = np.repeat(np.arange(k), n_per_class)
    x = centres[y] + rng.standard_normal((k * n_per_class, dim))
    perm = rng.permutation(len(y))
    return Dataset(x[perm], y[perm], name, k, {i: i for i in range(k)})


GENERATORS = {"g50c": generate_g50c}


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitSpec:
    n_labeled: int
    stratified: bool = True
    seed: int = 0


def _proportional(counts: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder allocation with at least one per class."""
    k = len(counts)
    alloc = np.ones(k, dtype=np.int64)
    rest = total - k
    if rest > 0:
        avail = counts - 1
        share = avail / avail.sum() * rest if avail.sum() else np.zeros(k)
        base = np.minimum(np.floor(share).astype(np.int64), avail)
        alloc += base
        left = rest - int(base.sum())
        frac = share - base
        for c in np.argsort(-frac, kind="stable"):
            if left == 0:
                break
            if alloc[c] < counts[c]:
                alloc[c] += 1
                left -= 1
        c = 0
        while left > 0:
            if alloc[c] < counts[c]:
                alloc[c] += 1
                left -= 1
            c = (c + 1) % k
    return alloc


def split_labeled(ds: Dataset, spec: SplitSpec):
    """Return sorted ``(labeled, unlabeled)`` index arrays."""
    n = ds.n
    if not 0 <= spec.n_labeled <= n:
        raise ValueError(f"n_labeled must lie in [0, {n}], got {spec.n_labeled}")
    rng = np.random.default_rng(spec.seed)
    if not spec.stratified:
        lab = np.sort(rng.permutation(n)[: spec.n_labeled])
    else:
        counts = np.bincount(ds.labels, minlength=ds.k)
        present = np.flatnonzero(counts)
        if spec.n_labeled < len(present):
            raise ValueError(
                f"stratified split needs at least one label per class: "
                f"n_labeled={spec.n_labeled} < k={len(present)}"
            )
        alloc = np.zeros(ds.k, dtype=np.int64)
        alloc[present] = _proportional(counts[present], spec.n_labeled)
        picks = []
        for c in range(ds.k):
            members = np.flatnonzero(ds.labels == c)
            picks.append(members[rng.permutation(len(members))[: alloc[c]]])
        lab = np.sort(np.concatenate(picks)) if picks else np.zeros(0, np.int64)
    mask = np.zeros(n, dtype=bool)
    mask[lab] = True
    return lab, np.flatnonzero(~mask)


def kfold(n: int, k_folds: int, seed: int = 0, stratify_labels=None):
    """Partition ``range(n)`` into ``k_folds`` (train, test) pairs.

    With ``stratify_labels`` each class is dealt round-robin over the folds,
    so per-class counts in any two test folds differ by at most one.
    """
    if k_folds < 2 or k_folds > n:
        raise ValueError(f"need 2 <= k_folds <= n = {n}, got {k_folds}")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(n, dtype=np.int64)
    if stratify_labels is None:
        perm = rng.permutation(n)
        fold_of[perm] = np.arange(n) % k_folds
    else:
        labels = np.asarray(stratify_labels, dtype=np.int64)
        if len(labels) != n:
            raise ValueError("stratify_labels must have length n")
        offset = 0
        for c in np.unique(labels):
            members = np.flatnonzero(labels == c)
            members = members[rng.permutation(len(members))]
            # rotate the starting fold so remainders spread across folds
            fold_of[members] = (np.arange(len(members)) + offset) % k_folds
            offset += len(members)
        sizes = np.bincount(fold_of, minlength=k_folds)
        if sizes.min() == 0:
            raise ValueError("stratified k-fold is infeasible: an empty test fold")
    out = []
    for f in range(k_folds):
        test = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        out.append((train, test))
    return out
