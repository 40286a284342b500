"""Experiment configuration: a JSON document with a fixed schema.

Every key has a default; :func:`resolve` fills them in, rejects unknown keys
and reports problems with a dotted field path (``mmbo.dt: must be > 0``).
"""
from __future__ import annotations

import copy
import inspect
import json
from pathlib import Path

from .data import GENERATORS
from .graph import LAPLACIAN_KINDS, METRICS, ScaleParams
from .mml import P_OPERATORS

METHODS = ("mmbo", "mml")
EIGENSOLVERS = ("auto", "lanczos", "nystrom")
SPLIT_KINDS = ("labeled", "kfold")
SELECTIONS = ("labeled", "holdout")
REPORT_METRICS = ("accuracy", "prbep")
SCALE_KEYS = ("t", "c", "p", "sigma")


class ConfigError(ValueError):
    def __init__(self, where: str, msg: str):
        super().__init__(f"{where}: {msg}" if where else msg)
        self.where = where
        self.msg = msg


# ---------------------------------------------------------------------------
# field checkers: (value, path) -> normalised value


def _choice(*options):
    def check(v, where):
        if v not in options:
            raise ConfigError(where, f"must be one of {list(options)}, got {v!r}")
        return v
    return check


def _number(lo=None, strict=True, integer=False, optional=False):
    def check(v, where):
        if v is None and optional:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(where, f"expected a number, got {v!r}")
        if integer:
            if int(v) != v:
                raise ConfigError(where, f"expected an integer, got {v!r}")
            v = int(v)
        else:
            v = float(v)
        if lo is not None and (v <= lo if strict else v < lo):
            raise ConfigError(where, f"must be {'>' if strict else '>='} {lo}, got {v!r}")
        return v
    return check


def _bool(v, where):
    if not isinstance(v, bool):
        raise ConfigError(where, f"expected true/false, got {v!r}")
    return v


def _opt_str(v, where):
    if v is not None and not isinstance(v, str):
        raise ConfigError(where, f"expected a string, got {v!r}")
    return v


def _label_column(v, where):
    if isinstance(v, str):
        return v
    return _number(integer=True)(v, where)


def _any_label(v, where):
    if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float, str))):
        raise ConfigError(where, f"expected a label value, got {v!r}")
    return v


def _generator(v, where):
    if v is not None and v not in GENERATORS:
        raise ConfigError(where, f"unknown generator {v!r}; known: {sorted(GENERATORS)}")
    return v


def _options(v, where):
    if not isinstance(v, dict):
        raise ConfigError(where, f"expected an object, got {v!r}")
    return dict(v)


def _scales(v, where):
    if not isinstance(v, list) or not v:
        raise ConfigError(where, "expected a non-empty list of scales")
    out = []
    for i, sc in enumerate(v):
        w = f"{where}.{i}"
        if not isinstance(sc, dict):
            raise ConfigError(w, f"expected an object, got {sc!r}")
        for key in sc:
            if key not in SCALE_KEYS:
                raise ConfigError(f"{w}.{key}", "unknown key")
        full = {"t": 0, "c": 1.0, "p": 1, "sigma": 1.0}
        full.update(sc)
        full["t"] = _number(0, strict=False, integer=True)(full["t"], f"{w}.t")
        full["c"] = _number(0)(full["c"], f"{w}.c")
        full["p"] = _number(1, strict=False, integer=True)(full["p"], f"{w}.p")
        full["sigma"] = _number(0)(full["sigma"], f"{w}.sigma")
        out.append(full)
    return out


def _grid(v, where):
    if not isinstance(v, dict):
        raise ConfigError(where, f"expected an object mapping field paths to value lists, got {v!r}")
    for key, vals in v.items():
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"{where}.{key}", "expected a non-empty list of values")
    return {k: list(vals) for k, vals in v.items()}


# default, checker
SCHEMA = {
    "method": ("mmbo", _choice(*METHODS)),
    "metric": ("accuracy", _choice(*REPORT_METRICS)),
    "positive_class": (None, _any_label),
    "evaluate_on": ("unlabeled", _choice("unlabeled", "all")),
    "seeds": {
        "data": (0, _number(0, strict=False, integer=True)),
        "split": (0, _number(0, strict=False, integer=True)),
        "init": (0, _number(0, strict=False, integer=True)),
    },
    "dataset": {
        "generator": (None, _generator),
        "options": ({}, _options),
        "path": (None, _opt_str),
        "format": ("csv", _choice("csv", "libsvm")),
        "label_column": (-1, _label_column),
    },
    "graph": {
        "n_n": (10, _number(1, strict=False, integer=True)),
        "metric": ("euclidean", _choice(*METRICS)),
        "laplacian": ("unnormalized", _choice(*LAPLACIAN_KINDS)),
        "scales": ([{"t": 0, "c": 1.0, "p": 1, "sigma": 1.0}], _scales),
        "max_scales": (3, _number(1, strict=False, integer=True)),
    },
    "eigensolver": {
        "method": ("auto", _choice(*EIGENSOLVERS)),
        "nystrom_above": (5000, _number(1, strict=False, integer=True)),
        "tol": (1e-10, _number(0)),
        "max_iter": (500, _number(1, strict=False, integer=True)),
        "sample_size": (None, _number(1, strict=False, integer=True, optional=True)),
    },
    "mmbo": {
        "dt": (0.1, _number(0)),
        "mu": (1.0, _number(0, strict=False)),
        "n_e": (50, _number(1, strict=False, integer=True)),
        "n_t": (300, _number(1, strict=False, integer=True)),
        "eta": (1e-7, _number(0)),
    },
    "mml": {
        "sigma_m": (1.0, _number(0)),
        "gamma_a": (1.0, _number(0)),
        "gamma_i": (0.01, _number(0, strict=False)),
        "c": (None, _number(0, optional=True)),
        "tol": (1e-3, _number(0)),
        "max_iter": (1_000_000, _number(1, strict=False, integer=True)),
        "operator": ("laplacian", _choice(*P_OPERATORS)),
    },
    "split": {
        "kind": ("labeled", _choice(*SPLIT_KINDS)),
        "n_labeled": (50, _number(1, strict=False, integer=True)),
        "stratified": (True, _bool),
        "k_folds": (5, _number(2, strict=False, integer=True)),
    },
    "sweep": {
        "grid": ({}, _grid),
        "selection": ("labeled", _choice(*SELECTIONS)),
        "holdout_fraction": (0.25, _number(0)),
    },
}


def defaults() -> dict:
    def walk(node):
        return {k: walk(v) if isinstance(v, dict) else copy.deepcopy(v[0]) for k, v in node.items()}
    return walk(SCHEMA)


def _resolve(node, raw, where):
    if not isinstance(raw, dict):
        raise ConfigError(where, f"expected an object, got {raw!r}")
    for key in raw:
        if key not in node:
            raise ConfigError(f"{where}.{key}" if where else key, "unknown key")
    out = {}
    for key, spec in node.items():
        path = f"{where}.{key}" if where else key
        if isinstance(spec, dict):
            out[key] = _resolve(spec, raw.get(key, {}), path)
        else:
            default, check = spec
            out[key] = check(copy.deepcopy(raw.get(key, default)), path)
    return out


def resolve(raw: dict) -> dict:
    """Validate ``raw`` and return the fully defaulted configuration."""
    cfg = _resolve(SCHEMA, raw, "")
    ds = cfg["dataset"]
    if (ds["generator"] is None) == (ds["path"] is None):
        raise ConfigError("dataset", "set exactly one of 'generator' or 'path'")
    if ds["generator"] is not None:
        params = inspect.signature(GENERATORS[ds["generator"]]).parameters
        for key in ds["options"]:
            if key not in params or key == "seed":
                raise ConfigError(f"dataset.options.{key}", f"not an option of generator {ds['generator']!r}")
    elif ds["options"]:
        raise ConfigError("dataset.options", "only valid with a generator")
    g = cfg["graph"]
    if len(g["scales"]) > g["max_scales"]:
        raise ConfigError("graph.scales", f"{len(g['scales'])} scales exceed max_scales={g['max_scales']}")
    for sc in g["scales"]:
        ScaleParams(**sc)
    if not cfg["sweep"]["holdout_fraction"] < 1:
        raise ConfigError("sweep.holdout_fraction", "must be < 1")
    return cfg


def load(path) -> dict:
    """Parse and resolve a JSON config file; relative dataset paths are taken from its folder."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    if isinstance(raw, dict):
        ds = raw.get("dataset")
        if isinstance(ds, dict) and isinstance(ds.get("path"), str) and not Path(ds["path"]).is_absolute():
            ds["path"] = str((path.parent / ds["path"]).resolve())
    try:
        return resolve(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc.where}" if exc.where else str(path), exc.msg) from None


def set_path(cfg: dict, dotted: str, value) -> None:
    """Assign ``value`` at a dotted path such as ``graph.scales.0.sigma``."""
    node = cfg
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node[int(part)] if isinstance(node, list) else node.get(part)
        if node is None:
            raise ConfigError(dotted, "no such field")
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    elif isinstance(node, dict):
        node[last] = value
    else:
        raise ConfigError(dotted, "no such field")


def override(cfg: dict, **flags) -> dict:
    """Return a re-validated copy with command-line values applied (``None`` means unset)."""
    out = copy.deepcopy(cfg)
    names = {"method": "method", "seed_data": "seeds.data", "seed_split": "seeds.split",
             "seed_init": "seeds.init"}
    for flag, value in flags.items():
        if value is not None:
            set_path(out, names[flag], value)
    return resolve(out)


def dumps(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True)
