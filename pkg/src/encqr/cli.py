"""Command-line entry point: ``run``, ``compare`` and ``gen``.

Exit status is 0 on success, 1 for configuration errors and 2 for errors
raised while the experiment runs. Reports go to ``--out``, else to
``$ENCQR_OUT_DIR``, else to ``./encqr-out``.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import yaml

from .data import SYNTHETIC_KINDS, gen_synthetic, write_csv_series
from .exceptions import ConfigError
from .experiment import METHODS, ExperimentConfig, compare, emit_comparison, emit_report, run_experiment

OUT_ENV = "ENCQR_OUT_DIR"


def _set_path(d, dotted, value):
    keys = dotted.split(".")
    node = d
    for key in keys[:-1]:
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise ConfigError(f"--set {dotted}: {key!r} is not a mapping")
        node = child
    node[keys[-1]] = value


def load_config(path=None, overrides=()):
    """Read a YAML config and apply ``key=value`` overrides (dotted keys).

    Override values are parsed as YAML, so ``alpha=0.05`` is a float and
    ``split.sizes=[3000,0,1200]`` a list.
    """
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    for item in overrides:
        key, sep, text = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError:
            value = text
        _set_path(raw, key.strip(), value)
    try:
        return ExperimentConfig.from_dict(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path or '<defaults>'}: {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"{path or '<defaults>'}: {exc}") from None


def _out_dir(args):
    return Path(args.out or os.environ.get(OUT_ENV) or "encqr-out")


def _summary(name, report):
    return f"{name:10s} picp={report.picp:.4f} pinaw={report.pinaw:.4f} cwc={report.cwc:.4f} n={report.n}"


def cmd_run(args):
    config = load_config(args.config, args.set)
    result = run_experiment(config)
    out = _out_dir(args)
    emit_report(result, out)
    print(_summary(config.method, result.report))
    if result.diagnostics.get("n_swapped"):
        print(f"note: {result.diagnostics['n_swapped']} steps had lower > upper and were swapped")
    print(f"wrote {out}")


def cmd_compare(args):
    config = load_config(args.config, args.set)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise ConfigError(f"--methods must be a comma list drawn from {METHODS}, got {args.methods!r}")
    results = compare(config, methods, n_jobs=args.jobs)
    out = _out_dir(args)
    table = emit_comparison(results, out)
    for m, res in results.items():
        print(_summary(m, res.report))
    print(f"wrote {table}")


def cmd_gen(args):
    if args.length < 10 * args.period:
        raise ConfigError(f"--length must be at least {10 * args.period}")
    series, _ = gen_synthetic(args.kind, args.length, seed=args.seed, period=args.period)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv_series(series, out, iso=args.iso)
    print(f"wrote {len(series)} rows to {out}")


def build_parser():
    parser = argparse.ArgumentParser(prog="encqr", description="Conformal prediction intervals for time series.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML experiment config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. --set regressor.params.n_trees=20")
        p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./encqr-out)")

    p = sub.add_parser("run", help="run one method and write its reports")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several methods on the same data")
    common(p)
    p.add_argument("--methods", default="encqr,enbpi,cqr,split_cp,raw_qr")
    p.add_argument("--jobs", type=int, default=1, help="methods run concurrently")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen", help="write a synthetic series to CSV")
    p.add_argument("--kind", choices=SYNTHETIC_KINDS, default="heteroscedastic_daily")
    p.add_argument("--out", required=True)
    p.add_argument("--length", type=int, default=4200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--period", type=int, default=24)
    p.add_argument("--iso", action="store_true", help="ISO-8601 timestamps instead of epoch seconds")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        where = f" (config {args.config})" if getattr(args, "config", None) else ""
        print(f"error{where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
