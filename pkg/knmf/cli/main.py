"""
knmf command line

Subcommands: synth, unmix, eval, probe, gradcheck, sweep.

Exit codes: 0 success, 2 usage or invalid input, 3 numeric failure,
4 I/O or file format failure. Logs go to stderr; command output (JSON or
CSV) goes to stdout.
"""

import argparse
import logging
import sys
from typing import Optional, Sequence

import structlog
from pydantic import ValidationError

from knmf import __version__
from knmf.cli import commands
from knmf.errors import KnmfError
from knmf.governance.telemetry import write_metrics
from knmf.settings import get_settings

logger = structlog.get_logger(__name__)

EXIT_USAGE = 2
EXIT_IO = 4


def configure_logging(level: str, json_logs: bool) -> None:
    """Route structlog through stdlib logging to stderr."""
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(message)s",
        force=True,
    )
    renderer = structlog.processors.JSONRenderer() if json_logs else structlog.dev.ConsoleRenderer(colors=False)
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            renderer,
        ],
        wrapper_class=structlog.stdlib.BoundLogger,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default=settings.log_level, help="Log level for stderr output")
    common.add_argument("--threads", type=int, default=settings.threads, help="Worker threads (1 = reference mode)")
    common.add_argument("--metrics-file", default=None, help="Write Prometheus metrics here on success")
    common.add_argument("--audit-file", default=None, help="Write the run ledger (JSON) here on success")

    parser = argparse.ArgumentParser(
        prog="knmf",
        description="Kernel NMF hyperspectral unmixing with input-space endmembers",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", parents=[common], help="Generate a synthetic scene")
    commands.add_synth_flags(synth)
    synth.set_defaults(handler=commands.cmd_synth)

    unmix = sub.add_parser("unmix", parents=[common], help="Factorize a cube")
    commands.add_solver_flags(unmix, settings)
    unmix.add_argument("--in", dest="input", required=True, help="Cube file (.hsi or .csv)")
    unmix.add_argument("--out", required=True, help="Output prefix")
    unmix.add_argument("--truth-e", default=None, help="Ground-truth endmember CSV for spectral angles")
    unmix.set_defaults(handler=commands.cmd_unmix)

    evaluate = sub.add_parser("eval", parents=[common], help="Score factors against a cube")
    commands.add_kernel_flags(evaluate)
    evaluate.add_argument("--in", dest="input", required=True, help="Cube file")
    evaluate.add_argument("--e", dest="endmembers", required=True, help="Endmember CSV")
    evaluate.add_argument("--a", dest="abundances", required=True, help="Abundance CSV")
    evaluate.add_argument("--truth-e", default=None, help="Ground-truth endmember CSV")
    evaluate.set_defaults(handler=commands.cmd_eval)

    probe = sub.add_parser("probe", parents=[common], help="Search for nonconvexity witnesses")
    commands.add_kernel_flags(probe)
    probe.add_argument("--budget", type=int, default=settings.probe_budget, help="Instances to examine")
    probe.add_argument("--seed", type=int, default=0)
    probe.set_defaults(handler=commands.cmd_probe)

    gradcheck = sub.add_parser("gradcheck", parents=[common], help="Finite-difference gradient suites")
    commands.add_kernel_flags(gradcheck, default=None)
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.add_argument("--step", type=float, default=1e-6)
    gradcheck.add_argument("--inject-bug", action="store_true", help="Corrupt one gradient (self-test)")
    gradcheck.set_defaults(handler=commands.cmd_gradcheck)

    sweep = sub.add_parser("sweep", parents=[common], help="Sweep one parameter over a list of values")
    commands.add_solver_flags(sweep, settings)
    sweep.add_argument("--in", dest="input", required=True, help="Cube file")
    sweep.add_argument("--param", required=True, choices=sorted(commands.SWEEP_PARAMETERS))
    sweep.add_argument("--values", required=True, type=commands.parse_values, help="Comma-separated values")
    sweep.add_argument("--out", default=None, help="CSV path (stdout when omitted)")
    sweep.set_defaults(handler=commands.cmd_sweep)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    configure_logging(args.log_level, get_settings().log_json)
    logger.info("command_started", command=args.command)

    try:
        code = args.handler(args)
    except ValidationError as exc:
        logger.error("invalid_configuration", command=args.command, errors=str(exc))
        return EXIT_USAGE
    except KnmfError as exc:
        logger.error("command_failed", command=args.command, **exc.to_dict())
        return exc.exit_code
    except OSError as exc:
        logger.error("io_failed", command=args.command, error=str(exc))
        return EXIT_IO

    if args.metrics_file:
        write_metrics(args.metrics_file)
    if args.audit_file:
        commands.AUDIT.export(args.audit_file)
    logger.info("command_completed", command=args.command, exit_code=code)
    return code


if __name__ == "__main__":
    sys.exit(main())
