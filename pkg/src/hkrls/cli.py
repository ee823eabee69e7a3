"""Command-line entry point ``hkrls``.

Exit status is 0 when every requested method finished, 1 when at least one
method failed, and 2 for usage, configuration and input-file errors.
``HKLS_THREADS`` caps the BLAS/OpenMP thread pools.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import GridParseError, load_grid_csv
from .experiment import (ConfigError, DatasetSpec, ExperimentConfig, MethodSpec, SplitConfig,
                         list_presets, load_config, load_preset, run_experiment, write_outputs)
from .hierarchic import ModelFormatError, default_kernels, fit_general, load_model, predict_points, save_model
from .kernels import KernelError
from .metrics import cost_dominance_check, cost_estimate, reports_to_csv, reports_to_markdown

log = logging.getLogger("hkrls")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
_DEFAULT_PRESET = {"synth2d": "synth2d-full", "synth3d": "synth3d-scaled", "compare": "compare-small"}


class UsageError(Exception):
    pass


def _floats(text: str, what: str) -> list:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise UsageError(f"{what}: empty list")
    return vals


def _ints(text: str, what: str) -> list:
    vals = _floats(text, what)
    if any(v != int(v) for v in vals):
        raise UsageError(f"{what}: expected integers, got {text!r}")
    return [int(v) for v in vals]


def _experiment_flags(p: argparse.ArgumentParser, preset: bool = True):
    if preset:
        g = p.add_mutually_exclusive_group()
        g.add_argument("--preset", help="shipped preset name (see `hkrls presets`)")
        g.add_argument("--config", type=Path, help="experiment YAML file")
    p.add_argument("--seed", type=int, help="split and sample-order seed")
    p.add_argument("--fraction", type=float, help="training fraction per split axis")
    p.add_argument("--jitter", type=float, help="diagonal ridge for the batch solves")
    p.add_argument("--sigma-levels", help="H-KRLS bandwidths per axis, e.g. 1,0.3")
    p.add_argument("--methods", help="comma-separated method names replacing the configured list")
    p.add_argument("--repeat", type=int, help="timed runs per method (fastest is reported)")
    p.add_argument("--no-warmup", action="store_true", help="skip the discarded warmup fit")
    p.add_argument("--out", type=Path, help="directory for report.csv / report.md")
    p.add_argument("--residuals", action="store_true", help="also write residuals.csv to --out")
    p.add_argument("--format", choices=("csv", "md"), default="md", help="stdout table format")
    p.add_argument("--full", action="store_true", help="use the full-size grid of the preset")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hkrls", description="Hierarchic kernel least squares on grids.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    for name, text in (("synth2d", "2-D synthetic benchmark"), ("synth3d", "3-D synthetic benchmark"),
                       ("compare", "run a comparison preset or config")):
        _experiment_flags(sub.add_parser(name, help=text, description=text))

    g = sub.add_parser("grid-csv", help="benchmark on a gridded CSV file")
    g.add_argument("path", type=Path)
    g.add_argument("--split-axes", help="indices of the axes to split (default: all)")
    g.add_argument("--filter-variance", type=float, help="apply the 2-D Gaussian pre-filter")
    g.add_argument("--filter-size", type=int, default=6)
    g.add_argument("--coefficients", help="coefficient column for baseline defaults")
    _experiment_flags(g, preset=False)

    c = sub.add_parser("cost-table", help="grid cost model per axis-count configuration")
    c.add_argument("--m", action="append", required=True, metavar="M0,M1,...",
                   help="axis counts; repeat for more rows")
    c.add_argument("--check", action="store_true", help="also run the dominance sweep")
    c.add_argument("--format", choices=("csv", "md"), default="md")

    f = sub.add_parser("fit", help="fit H-KRLS to a gridded CSV and save the model")
    f.add_argument("data", type=Path)
    f.add_argument("-o", "--model", type=Path, required=True)
    f.add_argument("--sigma-levels")
    f.add_argument("--jitter", type=float)

    q = sub.add_parser("predict", help="evaluate a saved model")
    q.add_argument("model", type=Path)
    q.add_argument("--query", action="append", metavar="Z0,Z1,...", help="query point; repeatable")
    q.add_argument("--queries", type=Path, help="CSV file with one query point per line")

    sub.add_parser("presets", help="list shipped presets")
    return p


def _base_config(args) -> ExperimentConfig:
    if args.command == "grid-csv":
        split_flags = None
        if args.split_axes:
            idx = _ints(args.split_axes, "--split-axes")
            data = load_grid_csv(args.path)
            if any(i < 0 or i >= data.ndim for i in idx):
                raise UsageError(f"--split-axes: indices must lie in [0, {data.ndim - 1}]")
            split_flags = [k in idx for k in range(data.ndim)]
        filt = None
        if args.filter_variance is not None:
            filt = {"variance": args.filter_variance, "size": args.filter_size}
        ds = DatasetSpec(kind="grid-csv", path=str(args.path), filter=filt,
                         coefficients=args.coefficients)
        return ExperimentConfig(name=args.path.stem, dataset=ds, split=SplitConfig(axes=split_flags),
                                methods=[MethodSpec("hkrls")])
    if args.config is not None:
        return load_config(args.config)
    return load_preset(args.preset or _DEFAULT_PRESET[args.command])


def config_from_args(args) -> ExperimentConfig:
    cfg = _base_config(args)
    if args.full:
        cfg = cfg.full()
    if args.seed is not None:
        cfg.split.seed = args.seed
    if args.fraction is not None:
        cfg.split.fraction = args.fraction
        cfg.split.train_counts = None
    if args.jitter is not None:
        cfg.jitter = args.jitter
    if args.repeat is not None:
        cfg.repeat = args.repeat
    if args.no_warmup:
        cfg.warmup = False
    if args.methods is not None:
        names = [n.strip() for n in args.methods.split(",") if n.strip()]
        known = {m.name: m for m in cfg.methods}
        cfg.methods = [known.get(n, MethodSpec(n)) for n in names]
    if args.sigma_levels:
        sig = _floats(args.sigma_levels, "--sigma-levels")
        for m in cfg.methods:
            if m.name == "hkrls":
                m.params = {**m.params, "sigmas": sig}
    cfg.output = {}
    return cfg.validate()


def cmd_experiment(args) -> int:
    cfg = config_from_args(args)
    residuals = [] if args.residuals else None
    reports = run_experiment(cfg, residuals)
    if args.out is not None:
        for path in write_outputs(args.out, reports, residuals, _ndim(cfg)):
            log.info("wrote %s", path)
    sys.stdout.write(reports_to_csv(reports) if args.format == "csv" else reports_to_markdown(reports))
    failed = [r.method for r in reports if not r.ok]
    for name in failed:
        print(f"hkrls: method {name} failed: {next(r.status for r in reports if r.method == name)}",
              file=sys.stderr)
    return EXIT_FAILED if failed else EXIT_OK


def _ndim(cfg: ExperimentConfig) -> int:
    if cfg.ndim:
        return cfg.ndim
    return load_grid_csv(cfg.dataset.path).ndim


def cost_table(rows, fmt: str = "md") -> str:
    ests = [cost_estimate(m) for m in rows]
    if fmt == "csv":
        out = ["counts,hkrls_cost,krls_cost,ratio"]
        out += [f"{'x'.join(map(str, e.counts))},{e.hkrls_cost},{e.krls_cost},{e.ratio!r}" for e in ests]
    else:
        out = ["| Counts | H-KRLS cost | KRLS cost | Ratio |", "|---|---:|---:|---:|"]
        out += [f"| {'x'.join(map(str, e.counts))} | {e.hkrls_cost:,} | {e.krls_cost:,} | {e.ratio:.6g} |"
                for e in ests]
    return "\n".join(out) + "\n"


def cmd_cost_table(args) -> int:
    rows = []
    for text in args.m:
        m = _ints(text, "--m")
        if len(m) < 2:
            raise UsageError(f"--m {text}: need at least two axis counts")
        if any(v < 1 for v in m):
            raise UsageError(f"--m {text}: axis counts must be >= 1")
        rows.append(m)
    sys.stdout.write(cost_table(rows, args.format))
    if args.check:
        rep = cost_dominance_check()
        print(f"dominance: {rep.equal_checked} equal-count grids (exhaustive), "
              f"{rep.random_checked} random unequal grids (empirical), "
              f"{len(rep.violations)} violations")
        return EXIT_OK if rep.ok else EXIT_FAILED
    return EXIT_OK


def cmd_fit(args) -> int:
    data = load_grid_csv(args.data)
    sig = _floats(args.sigma_levels, "--sigma-levels") if args.sigma_levels else None
    try:
        kernels = default_kernels(data.ndim, sig)
    except ValueError as exc:
        raise UsageError(f"--sigma-levels: {exc}") from None
    model = fit_general(data, kernels, args.jitter)
    save_model(model, args.model)
    print(f"saved {data.ndim}-axis model ({'x'.join(map(str, model.counts))}) to {args.model}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model)
    queries = [_floats(q, "--query") for q in (args.query or [])]
    if args.queries is not None:
        try:
            arr = np.loadtxt(args.queries, delimiter=",", ndmin=2)
        except (OSError, ValueError) as exc:
            raise UsageError(f"--queries: {exc}") from None
        queries += arr.tolist()
    if not queries:
        raise UsageError("predict: give --query or --queries")
    for q in queries:
        if len(q) != model.ndim:
            raise UsageError(f"query {q} has {len(q)} coordinates; the model expects {model.ndim} "
                             f"(one per axis)")
    for v in predict_points(model, np.array(queries)):
        print(repr(float(v)))
    return EXIT_OK


def _thread_limit():
    raw = os.environ.get("HKLS_THREADS")
    if not raw:
        return contextlib.nullcontext()
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        raise UsageError(f"HKLS_THREADS must be a positive integer, got {raw!r}") from None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"synth2d": cmd_experiment, "synth3d": cmd_experiment, "compare": cmd_experiment,
                "grid-csv": cmd_experiment, "cost-table": cmd_cost_table, "fit": cmd_fit,
                "predict": cmd_predict}
    try:
        with _thread_limit():
            if args.command == "presets":
                print("\n".join(list_presets()))
                return EXIT_OK
            return handlers[args.command](args)
    except (UsageError, ConfigError, GridParseError, ModelFormatError, KernelError) as exc:
        print(f"hkrls: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"hkrls: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
