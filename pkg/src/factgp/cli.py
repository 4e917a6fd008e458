"""Command-line harness: ``bench run``, ``bench table`` and ``bench figure``.

Exit codes: 0 on success, 1 when any run or table cell failed, 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .bench import (
    METHODS,
    REFERENCE_TIMES,
    ExperimentConfig,
    band_coverage,
    export_fig_data,
    figure_runs,
    gen_toy,
    run_method,
    timing_table,
)
from .errors import ConfigError

log = logging.getLogger("factgp.cli")

# flag name -> ExperimentConfig field
_OVERRIDES = {
    "method": "method",
    "n": "n",
    "m": "m",
    "seed": "seed",
    "repeats": "repeats",
    "tol": "tol",
    "leaf_size": "leaf_size",
    "max_rank": "max_rank",
    "cg_tol": "cg_tol",
    "lengthscale": "lengthscale",
    "signal_variance": "signal_variance",
    "noise_variance": "noise_variance",
    "train": "train_hypers",
    "optimize_steps": "optimize_steps",
    "solver": "hcfgp_solver",
}

# per-subcommand defaults that differ from ExperimentConfig's
_COMMAND_DEFAULTS = {
    "run": {},
    "table": {"repeats": 100},
    "figure": {"train_hypers": True, "optimize_steps": 100},
}


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _method_list(text):
    methods = [t.strip() for t in text.split(",") if t.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise argparse.ArgumentTypeError(f"unknown methods {bad}; choose from {','.join(METHODS)}")
    return methods


def _add_common(p):
    p.add_argument("--config", type=Path, help="JSON file mirroring ExperimentConfig")
    p.add_argument("--n", type=int, help="training set size")
    p.add_argument("--m", type=int, help="inducing points (fitc/vfe) or grid size (ski)")
    p.add_argument("--seed", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--tol", type=float, help="HODLR compression tolerance")
    p.add_argument("--leaf-size", type=int)
    p.add_argument("--max-rank", type=int)
    p.add_argument("--cg-tol", type=float)
    p.add_argument("--solver", choices=("cholesky", "smw"), help="HCFGP factorization")
    p.add_argument("--lengthscale", type=float)
    p.add_argument("--signal-variance", type=float)
    p.add_argument("--noise-variance", type=float)
    p.add_argument("--train", action=argparse.BooleanOptionalAction, default=None,
                   help="learn hyperparameters on the exact NLML before fitting")
    p.add_argument("--optimize-steps", type=int, help="inducing-point optimization steps")
    p.add_argument("--out", type=Path, help="output directory (stdout when omitted)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="bench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="fit and predict with one method on toy data")
    run.add_argument("--method", choices=METHODS)
    _add_common(run)

    table = sub.add_parser("table", help="timing sweep over sizes and methods")
    table.add_argument("--sizes", type=_int_list, default=[100, 1000, 2500, 5000, 8000])
    table.add_argument("--methods", type=_method_list, default=list(METHODS))
    table.add_argument("--reference", action="store_true", help="also print the reference timings")
    _add_common(table)

    fig = sub.add_parser("figure", help="export predictive bands of every method on one dataset")
    fig.add_argument("--methods", type=_method_list, default=["fitc", "vfe", "ski", "hcfgp"])
    _add_common(fig)
    return parser


def load_config(args):
    """Defaults, then the config file, then explicit flags."""
    d = dict(_COMMAND_DEFAULTS[args.command])
    if args.config is not None:
        try:
            d.update(json.loads(args.config.read_text()))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from None
    for flag, name in _OVERRIDES.items():
        v = getattr(args, flag, None)
        if v is not None:
            d[name] = v
    return ExperimentConfig.from_dict(d)


def _emit(out_dir, name, text):
    if out_dir is None:
        sys.stdout.write(text)
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(text)
    log.info("wrote %s", out_dir / name)


def cmd_run(args, cfg):
    data, x_test, truth = gen_toy(cfg.n, cfg.seed)
    res = run_method(cfg, data, x_test, truth)
    stem = f"run_{cfg.method}_n{cfg.n}_seed{cfg.seed}"
    if args.format == "json":
        _emit(args.out, stem + ".json", res.to_json(truth) + "\n")
    else:
        _emit(args.out, stem + ".csv", res.to_csv(truth))
        if args.out is not None:
            _emit(args.out, stem + ".meta.json", json.dumps(res.metadata(), indent=2) + "\n")
    if res.failed:
        log.error("run failed: %s", res.error)
        return 1
    print(f"{cfg.method} n={cfg.n}: fit {res.fit_seconds:.4f}s predict {res.predict_seconds:.4f}s "
          f"rmse_vs_full={res.rmse_vs_full} nlml={res.nlml:.6g}", file=sys.stderr)
    return 0


def _reference_text():
    lines = ["reference timings (seconds, other hardware):"]
    for n, row in REFERENCE_TIMES.items():
        lines.append(f"  {n:>5}: " + "  ".join(f"{m}={t:.3f}" for m, t in row.items()))
    return "\n".join(lines) + "\n"


def cmd_table(args, cfg):
    tab = timing_table(args.sizes, args.methods, cfg.repeats, cfg.seed, base=cfg)
    if args.format == "json":
        payload = {"config": asdict(cfg), "sizes": tab.sizes, "methods": tab.methods,
                   "cells": {f"{s}:{m}": tab.cells[(s, m)] for s in tab.sizes for m in tab.methods}}
        _emit(args.out, "table.json", json.dumps(payload, indent=2) + "\n")
    else:
        _emit(args.out, "table.csv", tab.to_csv())
    text = tab.to_text() + (_reference_text() if args.reference else "")
    if args.out is not None:
        _emit(args.out, "table.txt", text)
    sys.stderr.write(text)
    return 1 if tab.any_failed else 0


def cmd_figure(args, cfg):
    data, truth, full, results = figure_runs(cfg, args.methods)
    ok = [r for r in results if not r.failed]
    meta = {"config": asdict(cfg), "full": full.metadata(),
            "methods": {r.method: r.metadata() for r in results}}
    if not full.failed:
        meta["band_coverage"] = {r.method: band_coverage(r, full) for r in ok}
    if args.format == "json":
        _emit(args.out, "figure.json", json.dumps(meta, indent=2) + "\n")
    else:
        if not full.failed:
            _emit(args.out, "figure.csv", export_fig_data(ok, full, truth, data))
        if args.out is not None:
            _emit(args.out, "figure.meta.json", json.dumps(meta, indent=2) + "\n")
    coverage = meta.get("band_coverage", {})
    for r in results:
        cov = coverage.get(r.method, float("nan"))
        status = r.error or f"rmse_vs_full={r.rmse_vs_full:.3g} coverage={cov:.3f}"
        print(f"{r.method}: {status}", file=sys.stderr)
    return 1 if full.failed or len(ok) < len(results) else 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    handler = {"run": cmd_run, "table": cmd_table, "figure": cmd_figure}[args.command]
    return handler(args, cfg)


if __name__ == "__main__":
    sys.exit(main())
