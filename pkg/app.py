"""
Fuzzy Landau particle solver - Main Application

Usage:
    python app.py run --config data/scenarios/conservation.cfg --out output/conservation
    python app.py verify --config data/scenarios/verify.cfg
    python app.py functionals output/conservation [--config probes.cfg]
    python app.py oracle --config data/scenarios/oracle.cfg --out output/oracle

Flags:
    --config PATH   flat key = value file (defaults apply to missing keys)
    --out DIR       output directory for CSV files, snapshots and run.meta
    --seed U64      overrides the 'seed' key
    --threads N     overrides 'parallel.threads'
    --verbose       debug logging

Exit status: 0 on success, 1 on a failed check or runtime error, 2 on a usage error.
"""
import argparse
import logging
import sys

from src.commands import cmd_functionals, cmd_oracle, cmd_run, cmd_verify
from src.config import load_config
from src.errors import FuzzyLandauError, UsageError

logger = logging.getLogger("fuzzy_landau")


def _configure_logging(level: int):
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="Configuration file")
    common.add_argument("--out", type=str, default=None, help="Output directory")
    common.add_argument("--seed", type=int, default=None, help="Master seed (overrides config)")
    common.add_argument("--threads", type=int, default=None, help="Worker threads for pair sums")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(
        prog="app.py", description="Particle solver and verification harness for the fuzzy Landau equation",
        formatter_class=argparse.RawDescriptionHelpFormatter, epilog=__doc__,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="Integrate a scenario and write diagnostics")
    sub.add_parser("verify", parents=[common], help="Bracket, kernel and dissipation checks")
    functionals = sub.add_parser("functionals", parents=[common], help="Recompute functionals of a trajectory")
    functionals.add_argument("trajectory", help="Directory written by 'run'")
    sub.add_parser("oracle", parents=[common], help="Compare a Maxwell run to the moment reference")
    return parser


def dispatch(args: argparse.Namespace) -> int:
    if args.command == "functionals":
        return cmd_functionals(args.trajectory, config=args.config, out=args.out, threads=args.threads)
    cfg = load_config(args.config, overrides={"seed": args.seed, "parallel.threads": args.threads})
    if args.command == "run":
        return cmd_run(cfg, args.out or "output")
    if args.command == "verify":
        return cmd_verify(cfg, args.out)
    return cmd_oracle(cfg, args.out)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    if args.threads is not None and args.threads < 1:
        print("ERROR: --threads must be >= 1", file=sys.stderr)
        return 2
    _configure_logging(logging.DEBUG if args.verbose else logging.WARNING)

    try:
        return dispatch(args)
    except UsageError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 2
    except FuzzyLandauError as exc:
        logger.debug("command failed", exc_info=True)
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
