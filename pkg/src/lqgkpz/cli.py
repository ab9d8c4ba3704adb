"""Command-line entry point: one subcommand per experiment.

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(no plateau, failed classical gate, or non-convergence).
"""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import (EXPERIMENTS, ConfigError, ExperimentConfig,
                          NumericalFailure, emit_report, run_experiment)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--centers", type=int)
    p.add_argument("--backend", choices=["exact", "mc"])
    p.add_argument("--walkers", type=int)
    p.add_argument("--out", help="output directory for report files")
    p.add_argument("--threads", type=int)
    p.add_argument("--delta-trial", dest="delta_trial", type=float)
    p.add_argument("--t-max", dest="t_max_factor", type=float,
                   help="upper end of the time grid in units of spacing^2")
    p.add_argument("--skip-classical-gate", action="store_true", default=None)
    p.add_argument("--emit-timings", action="store_true", default=None)
    p.add_argument("--fractal", help='generator, e.g. "cantor_dust:base=3,keep=02,generations=5"')
    p.add_argument("--regime", choices=["bulk", "boundary"])
    p.add_argument("--s", type=int, help="resolvent order for the correlator")


def _parse_fractal(text: str) -> dict:
    name, _, rest = text.partition(":")
    spec: dict = {"name": name}
    if rest:
        for item in rest.split(","):
            key, _, val = item.partition("=")
            if key == "keep":
                spec["keep"] = [int(ch) for ch in val]
            elif key in ("base", "generations"):
                spec[key] = int(val)
            else:
                raise ConfigError(f"unknown fractal option {key!r}")
    return spec


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    base: dict = {"experiment": args.experiment}
    if args.config:
        with open(args.config) as fh:
            base.update(json.load(fh))
        base["experiment"] = args.experiment
    for key in ("seed", "gamma", "n", "samples", "centers", "backend", "walkers",
                "out", "threads", "delta_trial", "t_max_factor",
                "skip_classical_gate", "emit_timings", "regime", "s"):
        val = getattr(args, key, None)
        if val is not None:
            base[key] = val
    if getattr(args, "fractal", None):
        base["fractal"] = _parse_fractal(args.fractal)
    return ExperimentConfig.from_dict(base)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="lqgkpz",
        description="heat-kernel KPZ scaling experiments on a random conformal lattice")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        _add_common(sub.add_parser(name))
    args = parser.parse_args(argv)

    try:
        config = build_config(args)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_experiment(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3

    if config.out:
        try:
            files = emit_report(report, config.out)
        except OSError as exc:
            print(f"output error at {config.out}: {exc}", file=sys.stderr)
            return 2
        for f in files:
            print(f)
    pred = report.delta_predicted
    print(f"measured exponent: {report.delta_measured:.5f} "
          f"+/- {report.delta_stderr:.5f}"
          + (f"  (predicted {pred:.5f})" if pred is not None else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
