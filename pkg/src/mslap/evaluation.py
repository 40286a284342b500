"""Accuracy, precision/recall breakeven point and phase timing."""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np


def accuracy(predicted, truth, evaluate_on=None) -> float:
    """Fraction of ``evaluate_on`` indices (default: all) where prediction matches truth."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError(f"length mismatch: {predicted.shape} vs {truth.shape}")
    idx = np.arange(len(truth)) if evaluate_on is None else np.asarray(evaluate_on, dtype=np.int64)
    if len(idx) == 0:
        raise ValueError("empty evaluation set")
    return float(np.mean(predicted[idx] == truth[idx]))


def prbep(scores, truth) -> float:
    """Precision at rank P, where P is the number of positives.

    At that cut-off precision equals recall.  Samples are ranked by
    descending score; equal scores keep their input order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth).astype(bool)
    if scores.shape != truth.shape:
        raise ValueError(f"length mismatch: {scores.shape} vs {truth.shape}")
    n_pos = int(truth.sum())
    if n_pos == 0:
        raise ValueError("PRBEP needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    return float(truth[order[:n_pos]].sum() / n_pos)


def timed(fn, *args, **kwargs):
    """Run ``fn`` and return ``(result, wall_seconds)`` from a monotonic clock."""
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


class PhaseTimer:
    """Accumulates wall time per named phase."""

    def __init__(self):
        self.phases: dict[str, float] = {}

    def __call__(self, name: str):
        return _Phase(self, name)


class _Phase:
    def __init__(self, timer, name):
        self.timer, self.name = timer, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        dt = time.perf_counter() - self.t0
        self.timer.phases[self.name] = self.timer.phases.get(self.name, 0.0) + dt
        return False


@dataclass
class EvalReport:
    metric: str
    value: float
    n: int
    phase_timings: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"metric value {self.value} outside [0, 1]")
        if any(v < 0 for v in self.phase_timings.values()):
            raise ValueError("negative phase timing")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)
