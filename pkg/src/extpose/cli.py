"""Command-line runner for the experiments.

Exit codes: 0 on success, 1 on a usage, validation or I/O error, 2 when
``--check`` is given and an acceptance check fails.
"""
import argparse
import configparser
import logging
import sys

from extpose.experiments import ExperimentConfig, run_experiment

log = logging.getLogger("extpose")

SUBCOMMANDS = {
    "propagate": "propagation",
    "cov-error": "cov_error",
    "nees": "nees",
    "bias": "bias_update",
    "coriolis": "coriolis",
    "smooth": "smoother_demo",
}

# [experiment] keys of a --config file and how to parse them
CONFIG_KEYS = {"seed": int, "samples": int, "alpha": float, "dt": float, "duration": float,
               "preint_length": float, "latitude": float}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="extpose-bench", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, experiment in SUBCOMMANDS.items():
        s = sub.add_parser(name, help=f"run the {experiment} experiment")
        s.add_argument("--seed", type=int, help="RNG seed (default 0)")
        s.add_argument("--samples", type=int, help="Monte-Carlo sample count (default 10000)")
        s.add_argument("--alpha", type=float, help="noise scale factor (default 1)")
        s.add_argument("--dt", type=float, help="IMU period in seconds")
        s.add_argument("--duration", type=float, help="run length in seconds (smooth)")
        s.add_argument("--preint-length", type=float, help="preintegration window in seconds")
        s.add_argument("--latitude", type=float, help="latitude in degrees (default 48.73)")
        s.add_argument("--out", help="CSV output path; a .summary.json is written next to it")
        s.add_argument("--config", help="INI file; [experiment] sets defaults, smoother sections feed `smooth`")
        s.add_argument("--check", action="store_true", help="exit 2 if an acceptance check fails")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def read_config(path) -> dict:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if not parser.read(path):
        raise FileNotFoundError(f"config file not found: {path}")
    if not parser.has_section("experiment"):
        return {}
    out = {}
    for key, value in parser.items("experiment"):
        if key not in CONFIG_KEYS:
            raise ValueError(f"unknown key {key!r} in [experiment]")
        out[key] = CONFIG_KEYS[key](value)
    return out


def make_config(args) -> ExperimentConfig:
    values = dict(seed=0, samples=10_000, alpha=1.0, latitude=48.73)
    if args.config:
        values.update(read_config(args.config))
    for key in CONFIG_KEYS:
        flag = getattr(args, key)
        if flag is not None:
            values[key] = flag
    extra = {"config": args.config} if args.command == "smooth" and args.config else {}
    return ExperimentConfig(
        experiment=SUBCOMMANDS[args.command],
        seed=values["seed"],
        mc_samples=values["samples"],
        alpha=values["alpha"],
        dt=values.get("dt"),
        duration=values.get("duration"),
        preint_length=values.get("preint_length"),
        latitude=values["latitude"],
        output_path=args.out,
        extra=extra,
    )


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = make_config(args)
        log.info("running %s (seed %d, %d samples)", cfg.experiment, cfg.seed, cfg.mc_samples)
        result = run_experiment(cfg)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not args.out:
        sys.stdout.write(result.csv_text())
    for name, ok in result.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}", file=sys.stderr)
    if args.check and not result.passed:
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
