"""Command-line entry point.

Subcommands:
  run <config>     one experiment; writes the trace CSV, a config snapshot,
                   and summary figures into --out
  sweep <config>   one run per estimator with shared seed and data
  check            fast invariant/oracle suite; exit 0 iff all pass
  plot <csv...>    re-render figures from previously written trace CSVs

Exit codes: 0 success, 1 configuration error, 2 runtime divergence.
"""

from __future__ import annotations

import argparse
import os
import sys

from .checks import run_self_checks
from .core import ConfigError, Estimator, load_config_file, _parse_value
from .harness import (RunTrace, config_snapshot_text, emit_summary_plot,
                      read_trace_csv, run_experiment, sweep_config,
                      write_trace_csv)

_OVERRIDE_KEYS = [
    "model", "estimator", "optimizer", "scheduler", "beta", "drop_rate",
    "alpha0", "step_decay_rounding", "n0", "iterations", "seed",
    "dataset_path", "train_fraction", "sample_size_rule", "metric_every",
    "variance_repeats", "test_mc_samples", "prox_radius",
]


def _add_override_flags(parser: argparse.ArgumentParser) -> None:
    for key in _OVERRIDE_KEYS:
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key,
                            default=None, metavar="V",
                            help=f"override config key {key}")


def _collect_overrides(args: argparse.Namespace) -> dict:
    overrides = {}
    for key in _OVERRIDE_KEYS:
        raw = getattr(args, key, None)
        if raw is not None:
            overrides[key] = _parse_value(key, raw)
    return overrides


def _load(args: argparse.Namespace):
    if not os.path.exists(args.config):
        raise ConfigError([f"config file not found: {args.config}"])
    return load_config_file(args.config, _collect_overrides(args))


def _emit_run_outputs(trace: RunTrace, out_dir: str, stem: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    write_trace_csv(trace, csv_path)
    with open(os.path.join(out_dir, f"{stem}.cfg"), "w") as fh:
        fh.write(config_snapshot_text(trace.config))
    print(f"wrote {csv_path} ({len(trace.rows)} rows, "
          f"termination: {trace.termination}, "
          f"gradient evaluations: {trace.grad_evals})")


def _emit_figures(traces: list[RunTrace], out_dir: str) -> None:
    attrs = {"train_elbo": "train_elbo", "grad_var": "grad_variance_trace",
             "n_samples": "n_samples_used"}
    for metric, attr in attrs.items():
        if not any(getattr(r, attr) is not None
                   for t in traces for r in t.rows):
            continue
        path = os.path.join(out_dir, f"{metric}.svg")
        emit_summary_plot(traces, metric, path)
        print(f"wrote {path}")


def cli_main(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(
        prog="mlvi",
        description="Variational inference with multi-level Monte Carlo, "
                    "plain-MC, and randomized-QMC gradient estimators.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single experiment")
    p_run.add_argument("config")
    p_run.add_argument("--out", default="runs")
    _add_override_flags(p_run)

    p_sweep = sub.add_parser("sweep", help="run one trace per estimator")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--estimators", default="mc,rqmc,mlmc")
    p_sweep.add_argument("--out", default="runs")
    _add_override_flags(p_sweep)

    sub.add_parser("check", help="run the fast invariant/oracle suite")

    p_plot = sub.add_parser("plot", help="plot metric columns from trace CSVs")
    p_plot.add_argument("csvs", nargs="+")
    p_plot.add_argument("--metric", default="train_elbo")
    p_plot.add_argument("--out", default="plot.svg")

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0

    try:
        if args.command == "run":
            cfg = _load(args)
            trace = run_experiment(cfg)
            _emit_run_outputs(trace, args.out, f"run_{cfg.estimator.value}")
            _emit_figures([trace], args.out)
            return 2 if trace.termination == "diverged" else 0

        if args.command == "sweep":
            cfg = _load(args)
            names = [s.strip() for s in args.estimators.split(",") if s.strip()]
            estimators = [Estimator(n.lower()) for n in names]
            traces = []
            for est in estimators:
                run_cfg = sweep_config(cfg, est)
                trace = run_experiment(run_cfg)
                traces.append(trace)
                _emit_run_outputs(trace, args.out, f"sweep_{est.value}")
            _emit_figures(traces, args.out)
            return 2 if any(t.termination == "diverged" for t in traces) else 0

        if args.command == "check":
            return 0 if run_self_checks() else 1

        if args.command == "plot":
            labeled = []
            for path in args.csvs:
                if not os.path.exists(path):
                    raise ConfigError([f"trace file not found: {path}"])
                rows = read_trace_csv(path)
                label = rows[0].estimator_kind if rows else path
                labeled.append((label, rows))
            emit_summary_plot(labeled, args.metric, args.out)
            print(f"wrote {args.out}")
            return 0
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
