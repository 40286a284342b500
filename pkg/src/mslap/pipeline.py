"""End-to-end experiments: data, graph, eigensolve or warped kernel, fit, evaluate.

The label-independent part of a run (graph, eigenpairs, warped kernel) is
built once by :func:`prepare` and shared by every split of the labels.
"""
from __future__ import annotations

import copy
import csv
import io
import itertools
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, accel, config, eigen, graph, mmbo, mml
from .data import GENERATORS, Dataset, SplitSpec, atomic_write, kfold, load_csv, load_libsvm, split_labeled
from .evaluation import EvalReport, PhaseTimer, accuracy, prbep


class PipelineError(RuntimeError):
    """An error raised inside one phase of an experiment."""

    def __init__(self, phase: str, exc: BaseException):
        super().__init__(f"[{phase}] {type(exc).__name__}: {exc}")
        self.phase = phase
        self.cause = exc


class _phase:
    # wraps exceptions with the phase name and times the block
    def __init__(self, timer: PhaseTimer | None, name: str, label: str | None = None):
        self.timer, self.name, self.label = timer, name, label or name
        self.inner = timer(name) if timer is not None else None

    def __enter__(self):
        if self.inner is not None:
            self.inner.__enter__()
        return self

    def __exit__(self, et, exc, tb):
        if self.inner is not None:
            self.inner.__exit__(et, exc, tb)
        if exc is not None and not isinstance(exc, PipelineError) and isinstance(exc, Exception):
            raise PipelineError(self.label, exc) from exc
        return False


def load_dataset(cfg: dict) -> Dataset:
    ds = cfg["dataset"]
    if ds["generator"] is not None:
        return GENERATORS[ds["generator"]](seed=cfg["seeds"]["data"], **ds["options"])
    if ds["format"] == "libsvm":
        return load_libsvm(ds["path"])
    return load_csv(ds["path"], ds["label_column"])


@dataclass
class Prepared:
    """Label-independent state of an experiment."""

    cfg: dict
    dataset: Dataset
    eig: eigen.EigenPairs | None = None
    kernel: mml.WarpedKernelModel | None = None
    timer: PhaseTimer = field(default_factory=PhaseTimer)
    info: dict = field(default_factory=dict)


def _scales(cfg):
    return [graph.ScaleParams(**sc) for sc in cfg["graph"]["scales"]]


def choose_eigensolver(cfg: dict, n: int) -> str:
    method = cfg["eigensolver"]["method"]
    if method == "auto":
        return "nystrom" if n > cfg["eigensolver"]["nystrom_above"] else "lanczos"
    return method


def prepare(cfg: dict, dataset: Dataset | None = None) -> Prepared:
    with _phase(None, "data"):
        ds = load_dataset(cfg) if dataset is None else dataset
    prep = Prepared(cfg, ds)
    g = cfg["graph"]
    if cfg["method"] == "mmbo":
        n_e = cfg["mmbo"]["n_e"]
        solver = choose_eigensolver(cfg, ds.n)
        with _phase(prep.timer, "graph_and_eigen", f"graph_and_eigen/{solver}"):
            if n_e > ds.n:
                raise ValueError(f"n_e={n_e} exceeds the number of samples {ds.n}")
            if solver == "nystrom":
                prep.eig = eigen.nystrom(ds.features, _scales(cfg), n_e, seed=cfg["seeds"]["init"],
                                         sample_size=cfg["eigensolver"]["sample_size"])
            else:
                mg = graph.build_multiscale_graph(ds.features, _scales(cfg), g["n_n"], g["metric"])
                lap = graph.multiscale_laplacian(mg, g["laplacian"])
                prep.eig = eigen.lanczos_smallest(lap, n_e, tol=cfg["eigensolver"]["tol"],
                                                  max_iter=cfg["eigensolver"]["max_iter"],
                                                  seed=cfg["seeds"]["init"])
        info = dict(prep.eig.info)
        if prep.eig.residuals is not None:
            info["max_residual"] = float(np.max(prep.eig.residuals))
        prep.info["eigensolver"] = info
    else:
        m = cfg["mml"]
        with _phase(prep.timer, "warped_kernel"):
            op = None
            if m["gamma_i"] > 0:
                mg = graph.build_multiscale_graph(ds.features, _scales(cfg), g["n_n"], g["metric"])
                op = (graph.multiscale_laplacian(mg, g["laplacian"]) if m["operator"] == "laplacian"
                      else graph.multiscale_weights(mg))
            else:
                op = np.zeros((ds.n, ds.n))
            prep.kernel = mml.WarpedKernelModel.build(ds.features, mml.BaseKernelConfig(m["sigma_m"]), op,
                                                      m["gamma_a"], m["gamma_i"])
    return prep


@dataclass
class Fit:
    classes: np.ndarray  # predicted class index for every sample
    scores: np.ndarray  # (n, k) per-class scores for every sample
    info: dict


def solve(prep: Prepared, labeled: np.ndarray, seed_init: int | None = None) -> Fit:
    """Fit on ``labeled`` indices and predict every sample."""
    cfg, ds = prep.cfg, prep.dataset
    seed_init = cfg["seeds"]["init"] if seed_init is None else seed_init
    labeled = np.asarray(labeled, dtype=np.int64)
    if cfg["method"] == "mmbo":
        p = cfg["mmbo"]
        with _phase(prep.timer, "iteration"):
            fid = mmbo.FidelitySpec.from_indices(ds.n, labeled, ds.labels[labeled], p["mu"])
            run_cfg = mmbo.MmboConfig(p["dt"], p["n_e"], p["eta"], p["n_t"], seed_init)
            res = mmbo.run(prep.eig, fid, ds.k, run_cfg)
        return Fit(res.classes, res.projected,
                   {"iterations": res.iterations, "converged": res.converged})
    m = cfg["mml"]
    c = m["c"] if m["c"] is not None else 1.0 / (2.0 * m["gamma_a"] * len(labeled))
    with _phase(prep.timer, "optimization"):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            svm = mml.train(prep.kernel, labeled, ds.labels[labeled], c, ds.k, m["tol"], m["max_iter"])
        scores = mml.transductive_scores(svm, prep.kernel)
    info = {"c": c, "kkt_max": float(np.max(svm.kkt)), "gram_shift": svm.shift,
            "n_support": [int(np.sum(a > 0)) for a in svm.alphas]}
    if caught:
        info["warnings"] = [str(w.message) for w in caught]
    return Fit(np.argmax(scores, axis=1), scores, info)


def _positive_class(cfg: dict, ds: Dataset) -> int:
    if ds.k != 2:
        raise ValueError(f"PRBEP needs a binary problem, dataset has {ds.k} classes")
    pos = cfg["positive_class"]
    if pos is None:
        return ds.k - 1
    for raw, idx in ds.label_map.items():
        if raw == pos or str(raw) == str(pos):
            return idx
    raise ValueError(f"positive_class {pos!r} is not a label of the dataset")


def score_metric(cfg: dict, ds: Dataset, classes, scores, idx) -> float:
    idx = np.asarray(idx, dtype=np.int64)
    if cfg["metric"] == "accuracy":
        return accuracy(classes, ds.labels, idx)
    pos = _positive_class(cfg, ds)
    return prbep(scores[idx, pos], ds.labels[idx] == pos)


def splits(cfg: dict, ds: Dataset):
    """``(labeled, evaluated)`` index pairs for the configured protocol."""
    sp = cfg["split"]
    if sp["kind"] == "labeled":
        return [split_labeled(ds, SplitSpec(sp["n_labeled"], sp["stratified"], cfg["seeds"]["split"]))]
    strat = ds.labels if sp["stratified"] else None
    return list(kfold(ds.n, sp["k_folds"], cfg["seeds"]["split"], strat))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


@dataclass
class Outcome:
    report: EvalReport
    predictions: list  # rows for the predictions file
    score_columns: list
    fits: list
    prep: Prepared


def run_experiment(cfg: dict, prep: Prepared | None = None) -> Outcome:
    """Run one configured experiment and build its report and predictions."""
    prep = prepare(cfg) if prep is None else prep
    prep.cfg = cfg
    ds = prep.dataset
    with _phase(None, "split"):
        parts = splits(cfg, ds)
    fits, evaluated = [], []
    classes = np.zeros(ds.n, dtype=np.int64)
    scores = np.zeros((ds.n, ds.k))
    for labeled, test in parts:
        fit = solve(prep, labeled)
        fits.append(fit)
        classes[test] = fit.classes[test]
        scores[test] = fit.scores[test]
        evaluated.append(test)
    idx = np.sort(np.concatenate(evaluated))
    if cfg["evaluate_on"] == "all" and cfg["split"]["kind"] == "labeled":
        # labeled points are scored by the same fit
        idx = np.arange(ds.n)
        classes, scores = fits[0].classes, fits[0].scores
    with _phase(None, "evaluate"):
        value = score_metric(cfg, ds, classes, scores, idx)
    extra = {
        "config": cfg,
        "seeds": dict(cfg["seeds"]),
        "dataset": {"name": ds.name, "n": ds.n, "d": ds.d, "k": ds.k},
        "n_labeled": [int(len(lab)) for lab, _ in parts],
        "fits": [f.info for f in fits],
        "version": __version__,
        "numba": accel.enabled(),
    }
    extra.update(prep.info)
    report = EvalReport(cfg["metric"], float(value), int(len(idx)),
                        {k: float(v) for k, v in sorted(prep.timer.phases.items())}, _jsonable(extra))
    inverse = {v: k for k, v in ds.label_map.items()}
    rows = [[int(i), inverse.get(int(ds.labels[i]), int(ds.labels[i])),
             inverse.get(int(classes[i]), int(classes[i]))] + [repr(float(s)) for s in scores[i]]
            for i in idx]
    cols = [f"score_{inverse.get(c, c)}" for c in range(ds.k)]
    return Outcome(report, rows, cols, fits, prep)


def run_repeated(cfg: dict, repeats: int) -> list:
    """Run with seed triples ``(data + i, split + i, init + i)`` for ``i < repeats``."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    out = []
    for i in range(repeats):
        c = copy.deepcopy(cfg)
        for key in ("data", "split", "init"):
            c["seeds"][key] = cfg["seeds"][key] + i
        out.append(run_experiment(config.resolve(c)))
    return out


def summary(outcomes: list) -> dict:
    vals = np.array([o.report.value for o in outcomes])
    return {
        "metric": outcomes[0].report.metric,
        "mean": float(vals.mean()),
        "std": float(vals.std()),
        "values": vals.tolist(),
        "seeds": [o.report.extra["seeds"] for o in outcomes],
    }


def report_json(report: EvalReport, timings: bool = True) -> str:
    d = report.to_dict()
    if not timings:
        d.pop("phase_timings")
    return json.dumps(d, indent=2, sort_keys=True) + "\n"


def predictions_csv(outcome: Outcome) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_index", "true_label", "predicted_label"] + outcome.score_columns)
    w.writerows(outcome.predictions)
    return buf.getvalue()


def write_outputs(outcome: Outcome, out_dir) -> dict:
    out_dir = Path(out_dir)
    paths = {"report": out_dir / "report.json", "predictions": out_dir / "predictions.csv"}
    atomic_write(paths["report"], lambda fh: fh.write(report_json(outcome.report)))
    atomic_write(paths["predictions"], lambda fh: fh.write(predictions_csv(outcome)))
    return paths


# ---------------------------------------------------------------------------
# sweeps


def _selection_score(cfg: dict, prep: Prepared, outcome: Outcome) -> float:
    """Labeled-set fit, or the metric on a held-out slice of the labeled points."""
    ds = prep.dataset
    parts = splits(cfg, ds)
    vals = []
    for (labeled, _), fit in zip(parts, outcome.fits):
        if cfg["sweep"]["selection"] == "labeled":
            vals.append(accuracy(fit.classes, ds.labels, labeled))
            continue
        rng = np.random.default_rng(cfg["seeds"]["split"])
        sub = Dataset(ds.features[labeled], ds.labels[labeled], ds.name, ds.k, ds.label_map)
        n_hold = max(1, int(round(cfg["sweep"]["holdout_fraction"] * len(labeled))))
        n_keep = len(labeled) - n_hold
        if n_keep < ds.k:
            raise ValueError("holdout leaves fewer labeled points than classes")
        keep, hold = split_labeled(sub, SplitSpec(n_keep, True, int(rng.integers(2**31))))
        inner = solve(prep, labeled[keep])
        vals.append(accuracy(inner.classes, ds.labels, labeled[hold]))
    return float(np.mean(vals))


def grid_points(grid: dict) -> list:
    if not grid:
        raise config.ConfigError("sweep.grid", "grid is empty")
    keys = sorted(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def sweep(cfg: dict) -> list:
    """Evaluate every point of the Cartesian grid in ``cfg['sweep']['grid']``.

    Returns one row per point: ``{"params", "selection_score", "best", "report"}``.
    The best row maximises the selection score; ties go to the earliest row.
    """
    rows = []
    cache = {}
    for point in grid_points(cfg["sweep"]["grid"]):
        run_cfg = copy.deepcopy(cfg)
        for key, val in point.items():
            config.set_path(run_cfg, key, val)
        run_cfg = config.resolve(run_cfg)
        # grid points that share a data source share the loaded dataset
        source = json.dumps([run_cfg["dataset"], run_cfg["seeds"]["data"]], sort_keys=True)
        prep = prepare(run_cfg, cache.get(source))
        cache[source] = prep.dataset
        outcome = run_experiment(run_cfg, prep)
        sel = _selection_score(run_cfg, prep, outcome)
        rows.append({"params": point, "selection_score": sel, "best": False, "report": outcome.report})
    best = int(np.argmax([r["selection_score"] for r in rows]))
    rows[best]["best"] = True
    return rows


def sweep_json(rows: list, timings: bool = True) -> str:
    out = []
    for r in rows:
        rep = r["report"].to_dict()
        if not timings:
            rep.pop("phase_timings")
        out.append({**r, "report": rep})
    return json.dumps(_jsonable(out), indent=2, sort_keys=True) + "\n"
