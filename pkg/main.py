"""
Netgraph Entry Point
"""

import argparse
import logging
import os
import sys

from core import __version__
from core.errors import NetgraphError, SchemaError
from core.scenario import load_scenario
from core.scenario_worker import MODES, ScenarioWorker
from core.simulation_manager import SimulationManager

logger = logging.getLogger("netgraph")

SERIES_MODES = ("transport", "diffuse")


def _eps_list(text):
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise SchemaError(f"--eps expects comma-separated numbers, got {text!r}")
    if not values or any(v <= 0 for v in values):
        raise SchemaError(f"--eps values must be positive, got {text!r}")
    return values


def build_parser():
    parser = argparse.ArgumentParser(
        prog="netgraph",
        description="Transport and diffusion on metric graphs",
    )
    parser.add_argument("command", choices=MODES, help="What to run")
    parser.add_argument("scenario", help="Path to the scenario JSON file")
    parser.add_argument("--t-final", type=float, dest="t_final", help="Final time")
    parser.add_argument("--h", type=float, help="Transport time step (upper bound)")
    parser.add_argument("--dt", type=float, help="Diffusion time step")
    parser.add_argument("--cells", type=int, help="Interior grid nodes per edge")
    parser.add_argument("--scheme", choices=("be", "tr"), help="Diffusion time stepping")
    parser.add_argument("--record-every", type=int, dest="record_every", help="CSV snapshot interval in steps")
    parser.add_argument("--eps", help="Comma-separated eps values for aggregate")
    parser.add_argument("--mode", choices=("flow", "diffusion"), help="Aggregation mode")
    parser.add_argument("--out", help="Output file (CSV for transport/diffuse, JSON otherwise)")
    parser.add_argument("--seed", type=int, help="Seed for random initial data")
    parser.add_argument("--strict", action="store_true", default=None, help="Turn warnings into errors")
    parser.add_argument("--echo-config", action="store_true", dest="echo_config",
                        help="Include the canonical scenario in the report")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def _configure_logging(args):
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)


def summary_path(csv_path):
    """Summary JSON written next to a CSV series: out.csv -> out.summary.json"""
    stem, _ = os.path.splitext(csv_path)
    return f"{stem}.summary.json"


def run(args):
    """
    Execute one command

    Args:
        args: Parsed command-line namespace

    Returns:
        Exit code
    """
    scenario = load_scenario(args.scenario)
    worker = ScenarioWorker(scenario, args.command)
    worker.set_parameters(
        t_final=args.t_final,
        h=args.h,
        dt=args.dt,
        cells=args.cells,
        scheme=args.scheme,
        record_every=args.record_every,
        strict=args.strict,
    )
    worker.set_aggregation(mode=args.mode, eps=_eps_list(args.eps) if args.eps else None)
    worker.seed = args.seed
    worker.echo_config = args.echo_config

    manager = SimulationManager()
    manager.start_session(args.command, scenario)
    manager.add_result(worker.run())
    manager.end_session()

    out = args.out or scenario.output.get("csv" if args.command in SERIES_MODES else "summary")
    emit_report(manager, args.command, out)
    return 0


def emit_report(manager, command, out=None):
    """
    Write the artifacts of the last session

    Args:
        manager: SimulationManager holding the finished session
        command: Command that produced it
        out: CSV path for series commands, JSON path otherwise (optional)

    Returns:
        List of written file paths
    """
    written = []
    if out and command in SERIES_MODES:
        manager.export_to_csv(out)
        manager.export_to_json(summary_path(out))
        written = [out, summary_path(out)]
    elif out:
        manager.export_to_json(out)
        written = [out]
    if written:
        logger.info("Wrote %s", ", ".join(str(path) for path in written))

    sys.stdout.write(manager.to_json())
    return written


def main(argv=None):
    """Command-line entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args)
    try:
        return run(args)
    except NetgraphError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
