"""Command-line front end: ``gmmf run | reduce | metrics``."""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import export
from .config import METHODS, ConfigError, ExperimentConfig, load_document
from .errors import GmmFilterError
from .experiments import BUILTIN_EXPERIMENTS, builtin_config, run_experiment
from .metrics import format_table, metrics_report
from .mixture import GaussianMixture
from .reduction import ReductionConfig, reduce_with_report

EXIT_USAGE = 2
EXIT_BREAKDOWN = 3


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def _load_config(ref):
    if ref in BUILTIN_EXPERIMENTS:
        return builtin_config(ref)
    path = Path(ref)
    if not path.exists():
        known = ", ".join(sorted(BUILTIN_EXPERIMENTS))
        raise LookupError(f"unknown experiment {ref!r}; known experiments: {known}")
    return ExperimentConfig.from_dict(load_document(path), base_dir=path.parent)


def cmd_run(args):
    try:
        cfg = _load_config(args.config)
        data = cfg.to_dict()
        if args.seed is not None:
            data["seed"] = args.seed
        if args.steps is not None:
            data["steps"] = args.steps
        if args.methods is not None:
            data["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
        cfg = ExperimentConfig.from_dict(data)
    except LookupError as exc:
        _err(str(exc))
        return EXIT_USAGE
    except (ConfigError, ValueError, json.JSONDecodeError) as exc:
        _err(f"bad config: {exc}")
        return EXIT_USAGE
    out = Path(args.out or cfg.out)
    measurements = truth = None
    if args.measurements:
        try:
            truth, measurements = export.read_truth(args.measurements)
        except (OSError, ValueError, KeyError) as exc:
            _err(f"cannot read measurements: {exc}")
            return EXIT_USAGE
        if measurements is None:
            _err(f"{args.measurements}: no y_ columns")
            return EXIT_USAGE
    try:
        report = run_experiment(cfg, out, save_mixtures=args.save_mixtures,
                                measurements=measurements, truth=truth)
    except ConfigError as exc:
        _err(f"bad config: {exc}")
        return EXIT_USAGE
    except GmmFilterError as exc:
        _err(f"filter breakdown: {exc}")
        return EXIT_BREAKDOWN
    print(format_table(report))
    print(f"artifacts written to {out}")
    return 0


def cmd_reduce(args):
    try:
        with open(args.input, encoding="utf-8") as fh:
            mixture = GaussianMixture.from_dict(json.load(fh))
        cfg = ReductionConfig(args.min, args.max, args.threshold)
    except OSError as exc:
        _err(str(exc))
        return EXIT_USAGE
    except (ValueError, json.JSONDecodeError) as exc:
        _err(f"malformed mixture: {exc}")
        return 1
    if not mixture.is_normalized(1e-9):
        _err("mixture weights must sum to 1")
        return 1
    try:
        rep = reduce_with_report(mixture, cfg)
    except GmmFilterError as exc:
        _err(str(exc))
        return 1
    export.write_json(args.output, rep.mixture.to_dict())
    print(f"components: {rep.n_input} -> {rep.n_output}")
    print(f"final min bound: {rep.min_bound!r}")
    return 0


def cmd_metrics(args):
    try:
        states, _ = export.read_truth(args.truth)
    except (OSError, ValueError) as exc:
        _err(f"cannot read truth file: {exc}")
        return EXIT_USAGE
    if states is None:
        _err(f"{args.truth}: no x_ columns")
        return EXIT_USAGE
    traces = {}
    try:
        for path in args.traces:
            tr = export.read_trace(path)
            name = tr["method"]
            if name in traces:
                name = f"{name}:{Path(path).stem}"
            traces[name] = tr
    except (OSError, ValueError, KeyError) as exc:
        _err(f"cannot read trace: {exc}")
        return EXIT_USAGE
    try:
        report = metrics_report(states, traces)
    except ValueError as exc:
        _err(str(exc))
        return 1
    if args.out:
        export.write_json(args.out, report)
    print(format_table(report))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gmmf", description="Square-root Gaussian mixture filter experiments."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a builtin experiment or a config file")
    p.add_argument("config", help=f"experiment name ({', '.join(BUILTIN_EXPERIMENTS)}) or path")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--measurements", help="CSV with y_ columns (and optional x_ truth)")
    p.add_argument("--save-mixtures", action="store_true", help="also write full mixtures as JSON")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("reduce", help="reduce a mixture stored as JSON")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--min", type=int, default=1)
    p.add_argument("--max", type=int, default=100)
    p.add_argument("--threshold", type=float, default=0.01)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("metrics", help="RMSE and count statistics of trace files")
    p.add_argument("truth")
    p.add_argument("traces", nargs="+")
    p.add_argument("--out", help="write the report as JSON here")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        _err(str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
