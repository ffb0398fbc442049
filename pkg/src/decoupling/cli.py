"""Command-line entry point: ``decoupling {run,compare,convergence,stability}``."""
from __future__ import annotations

import argparse
import logging
import sys
import warnings

from . import driver
from .config import ConfigError, load_config
from .linsolve import SolverError
from .schemes import StabilityWarning

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

COMMANDS = {
    "run": (driver.cmd_run, "integrate one scheme, write run.csv and VTK snapshots"),
    "compare": (driver.cmd_compare, "compare a scheme with a reference, write compare.csv"),
    "convergence": (driver.cmd_convergence, "fit the order in tau, write convergence.json"),
    "stability": (driver.cmd_stability, "gamma, operator inequalities and a probe run, "
                                        "write stability.json"),
}

log = logging.getLogger("decoupling")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="decoupling", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", default=None,
                       help="output directory (default: output.dir from the config)")
    return parser


def _summary(name: str, result: dict) -> str:
    if name == "run":
        return f"wrote {result['csv']} and {len(result['snapshots'])} snapshot(s)"
    if name == "compare":
        e1, e2 = result["max_eps"]
        return f"{result['scheme']} vs {result['reference']}: max eps_1={e1:.6g} eps_2={e2:.6g}"
    if name == "convergence":
        return f"{result['scheme']}: fitted order {result['order']:.4f}"
    g = result["gamma"]["value"]
    return f"gamma={g:.6g}, growth detected: {result['probe']['growth_detected']}"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    func, _ = COMMANDS[args.command]
    out = args.out or cfg.out_dir
    log.info("%s %s -> %s", args.command, cfg.scheme.label(), out)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", StabilityWarning)
            result = func(cfg, out)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    except (SolverError, FloatingPointError, driver.NumericalFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        # inputs that pass the schema but are rejected by the numerics setup
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(_summary(args.command, result))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
