"""Command-line entry point: ``mslap run|sweep|describe|gen-data``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import accel, config, pipeline
from .data import GENERATORS, ParseError, atomic_write, write_csv, write_libsvm

log = logging.getLogger("mslap")


def _common(p: argparse.ArgumentParser, with_out=True):
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--method", choices=config.METHODS, help="override the config's method")
    p.add_argument("--seed-data", type=int, help="seed for synthetic data generation")
    p.add_argument("--seed-split", type=int, help="seed for the labeled/unlabeled split")
    p.add_argument("--seed-init", type=int, help="seed for initialisation and eigensolver start")
    p.add_argument("--threads", type=int, help="numba worker threads")
    if with_out:
        p.add_argument("--out", help="output directory (report.json, predictions.csv / sweep.json)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mslap", description="Multiscale Laplacian learning experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment and print its report")
    _common(run)
    run.add_argument("--repeat", type=int, default=1,
                     help="average over this many consecutive seed triples")
    _common(sub.add_parser("sweep", help="evaluate a Cartesian hyperparameter grid"))
    _common(sub.add_parser("describe", help="print the validated config with all defaults"), with_out=False)

    gen = sub.add_parser("gen-data", help="write a synthetic dataset to CSV or LIBSVM")
    gen.add_argument("--generator", choices=sorted(GENERATORS), default="g50c")
    gen.add_argument("--seed-data", type=int, default=0)
    gen.add_argument("--format", choices=("csv", "libsvm"), default=None,
                     help="defaults to the output file extension (.csv or .libsvm)")
    gen.add_argument("--out", required=True, help="output file")
    return parser


def _load(args) -> dict:
    cfg = config.load(args.config)
    return config.override(cfg, method=args.method, seed_data=args.seed_data,
                           seed_split=args.seed_split, seed_init=args.seed_init)


def _cmd_describe(args) -> int:
    print(config.dumps(_load(args)))
    return 0


def _cmd_run(args) -> int:
    cfg = _load(args)
    if args.repeat > 1:
        outcomes = pipeline.run_repeated(cfg, args.repeat)
        text = json.dumps(pipeline.summary(outcomes), indent=2, sort_keys=True) + "\n"
        if args.out:
            for i, o in enumerate(outcomes):
                pipeline.write_outputs(o, Path(args.out) / f"run_{i}")
            atomic_write(Path(args.out) / "summary.json", lambda fh: fh.write(text))
        sys.stdout.write(text)
        return 0
    outcome = pipeline.run_experiment(cfg)
    if args.out:
        paths = pipeline.write_outputs(outcome, args.out)
        log.info("wrote %s and %s", paths["report"], paths["predictions"])
    sys.stdout.write(pipeline.report_json(outcome.report))
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    rows = pipeline.sweep(cfg)
    text = pipeline.sweep_json(rows)
    if args.out:
        path = Path(args.out) / "sweep.json"
        atomic_write(path, lambda fh: fh.write(text))
        log.info("wrote %s", path)
    for r in rows:
        mark = "*" if r["best"] else " "
        rep = r["report"]
        print(f"{mark} {r['params']}  selection={r['selection_score']:.4f}  {rep.metric}={rep.value:.4f}")
    return 0


def _cmd_gen_data(args) -> int:
    out = Path(args.out)
    fmt = args.format or ("libsvm" if out.suffix in (".libsvm", ".svm") else "csv")
    ds = GENERATORS[args.generator](seed=args.seed_data)
    (write_libsvm if fmt == "libsvm" else write_csv)(ds, out)
    print(f"wrote {ds.n} samples ({ds.d} features, {ds.k} classes) to {out}")
    return 0


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "describe": _cmd_describe, "gen-data": _cmd_gen_data}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None):
        accel.set_threads(args.threads)
    try:
        return COMMANDS[args.command](args)
    except config.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ParseError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except pipeline.PipelineError as exc:
        if isinstance(exc.cause, ParseError):
            print(f"data error: {exc.cause}", file=sys.stderr)
            return 2
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
