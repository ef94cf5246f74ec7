"""Command-line entry point.

    crsma run --config exp.toml [--sweep p_v_max=10:2:20] [--trials 100]
              [--out rows.csv] [--format csv|json]
    crsma validate --config exp.toml

Config files are TOML with dotted keys, for example::

    system.K = 6
    system.sigma2 = 0.1
    experiment.sweep = "p_v_max=10:2:18"
    experiment.schemes = ["crsma-susmg", "crsma-random"]
    experiment.trials = 100

Command-line flags override file values. Exit codes: 0 success, 1 bad
configuration, 2 every trial infeasible.
"""

from __future__ import annotations

import argparse
import logging
import sys

import tomli

from .config import ConfigError, SystemConfig
from .experiment import ExperimentPlan, emit, emit_summary, parse_sweep, run_plan

log = logging.getLogger("crsma")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2

EXPERIMENT_KEYS = {"sweep", "schemes", "trials", "order", "mode", "out", "format", "timing", "workers"}


def load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _system(section: dict) -> SystemConfig:
    known = set(SystemConfig.field_names())
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown system keys: {', '.join(sorted(unknown))}")
    kwargs = dict(section)
    if "delta_grid" in kwargs:
        kwargs["delta_grid"] = tuple(kwargs["delta_grid"])
    try:
        return SystemConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def build_plan(raw: dict, args: argparse.Namespace | None = None) -> ExperimentPlan:
    """Merge file contents and command-line overrides into a validated plan."""
    extra = set(raw) - {"system", "experiment"}
    if extra:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(extra))}")
    system = dict(raw.get("system", {}))
    exp = dict(raw.get("experiment", {}))
    unknown = set(exp) - EXPERIMENT_KEYS
    if unknown:
        raise ConfigError(f"unknown experiment keys: {', '.join(sorted(unknown))}")

    if args is not None:
        for item in args.set or ():
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            try:
                system[key.strip()] = tomli.loads(f"v = {value}")["v"]
            except tomli.TOMLDecodeError:
                system[key.strip()] = value
        for name in ("sweep", "trials", "out", "order", "mode", "workers"):
            value = getattr(args, name, None)
            if value is not None:
                exp[name] = value
        if getattr(args, "format", None):
            exp["format"] = args.format
        if getattr(args, "schemes", None):
            exp["schemes"] = args.schemes.split(",")
        if getattr(args, "no_timing", False):
            exp["timing"] = False

    base = _system(system)
    kwargs = {}
    if "sweep" in exp:
        kwargs["axis"], kwargs["values"] = parse_sweep(str(exp["sweep"]))
    else:
        kwargs["axis"], kwargs["values"] = "p_v_max", (base.p_v_max,)
    if "schemes" in exp:
        kwargs["schemes"] = tuple(exp["schemes"])
    for key, attr in (("trials", "trials"), ("order", "order"), ("mode", "mode"), ("out", "out"),
                      ("format", "fmt"), ("timing", "timing"), ("workers", "workers")):
        if key in exp:
            kwargs[attr] = exp[key]
    try:
        return ExperimentPlan(base=base, **kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crsma", description="Uplink C-RSMA simulator and optimizer")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--sweep", help="axis=lo:step:hi or axis=a,b,c")
    run.add_argument("--trials", type=int)
    run.add_argument("--out")
    run.add_argument("--format", choices=("csv", "json"))
    run.add_argument("--schemes", help="comma-separated scheme ids")
    run.add_argument("--order", help="decoding order label")
    run.add_argument("--mode", help="interference mode for reported rates")
    run.add_argument("--workers", type=int)
    run.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a system key")
    run.add_argument("--no-timing", action="store_true", help="write wall_ms as 0 for byte-stable output")

    val = sub.add_parser("validate", help="check a config file without running it")
    val.add_argument("--config", required=True)
    return p


def _print_summary(table) -> None:
    for s in table.summary():
        print(f"{s['sweep_axis']}={s['sweep_value']} {s['scheme']}: mean {s['mean']:.4f} "
              f"+/- {s['half_width']:.4f} (n={s['n']}, feasible {s['feasible_fraction']:.2f})")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        plan = build_plan(load_config(args.config), args if args.command == "run" else None)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"ok: {plan.axis} sweep over {len(plan.values)} value(s), {plan.trials} trial(s)")
        return EXIT_OK

    table = run_plan(plan)
    if plan.out:
        try:
            emit(table, plan.out, plan.fmt)
            emit_summary(table, plan.out + ".summary", plan.fmt)
        except OSError as exc:
            print(f"cannot write output: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    _print_summary(table)
    if not table.any_feasible:
        print("every trial was infeasible", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
