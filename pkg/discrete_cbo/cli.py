"""
Command-line interface for discrete-cbo.

Every subcommand prints one JSON object on stdout and human status lines on
stderr. Exit status: 0 success, 1 module failure or failed verification,
2 configuration or usage error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from .artifacts import SCHEMA_VERSION, jsonable, write_json
from .config import ExperimentConfig, describe_keys, parse_config, parse_overrides
from .errors import CBOError, ConfigError, UsageError
from .executor import ReplicaExecutor
from .tasks import REPLAY_TOL, ReplayReport, run_task, verify_replay
from .ui import print_error, print_header, print_info, print_success, print_summary, print_warning

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

# (flag, config key, help)
CONFIG_FLAGS = (
    ("--objective", "objective", "builtin objective name or 'polynomial'"),
    ("--coefficients", "coefficients", "ascending polynomial coefficients, comma separated"),
    ("--dim", "dim", "problem dimension"),
    ("--law", "law", "uniform_box or uniform_ball"),
    ("--model", "model", "ModelA, ModelB, ModelC or GenericGaussian"),
    ("--lambda", "lambda", "drift rate"),
    ("--sigma", "sigma", "diffusion"),
    ("--h", "h", "step size"),
    ("--gamma", "gamma", "effective drift for GenericGaussian"),
    ("--zeta", "zeta", "noise level for GenericGaussian"),
    ("--beta", "beta", "inverse temperature"),
    ("--N", "N", "particles per ensemble"),
    ("--max-steps", "max_steps", "step limit per run"),
    ("--consensus-tol", "consensus_tol", "diameter stopping tolerance"),
    ("--samples", "samples", "Laplace Monte-Carlo samples"),
    ("--steps", "steps", "moment table length"),
    ("--epsilon", "epsilon", "certificate confidence in (0, 1)"),
    ("--delta", "delta", "support certificate tolerance"),
    ("--certificate", "certificate", "laplace, support or rectangle"),
    ("--betas", "betas", "beta values for laplace/certify tables"),
)

COMMANDS = {
    "run": "Run one CBO trajectory and write its trace",
    "stability": "Tabulate the stability region over a (lambda, h) grid",
    "moments": "Estimate pairwise moments and the L2 contraction factor",
    "laplace": "Estimate -(1/beta) log E exp(-beta L) and its asymptotics",
    "certify": "Check the error certificates and the empirical limit error",
    "sweep": "Run a task over a Cartesian grid of parameters",
}

SUMMARY_KEYS = {
    "run": ["consensus_reached", "steps", "objective_at_limit", "limit_point", "cauchy_witness"],
    "stability": ["model", "sigma", "grid_points", "stable_fraction"],
    "moments": ["replicas", "max_z", "theory_l2_factor"],
    "laplace": ["samples", "concentrated"],
    "certify": ["holds_any"],
    "sweep": ["failures"],
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", "-c", type=Path, help="flat key = value config file")
    parser.add_argument("--seed", help="unsigned 64-bit seed")
    parser.add_argument("--out", "-o", help="artifact directory")
    parser.add_argument("--replicas", help="independent replicas")
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )
    parser.add_argument("--workers", type=int, help="replica worker threads (results do not depend on it)")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug")
    for flag, key, text in CONFIG_FLAGS:
        parser.add_argument(flag, dest=f"cfg_{key}", metavar="VALUE", help=text)


def build_parser() -> argparse.ArgumentParser:
    from . import __version__

    parser = argparse.ArgumentParser(
        prog="discrete-cbo",
        description="Time-discrete consensus-based optimization: runs, stability and error certificates",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"""
Examples:
  discrete-cbo run --objective sphere_plus_one --dim 2 --model ModelC --beta 50 --seed 7
  discrete-cbo run --config exp.cfg --set record_noise=true --verify-replay
  discrete-cbo verify-replay --out cbo-output
  discrete-cbo sweep --config exp.cfg --set sweep_beta=10,50,250

Config keys:
{describe_keys()}
""",
    )
    parser.add_argument("--version", action="version", version=f"discrete-cbo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, text in COMMANDS.items():
        command = sub.add_parser(name, help=text, description=text)
        _add_common(command)
        if name == "run":
            command.add_argument("--record-noise", action="store_true", help="store eta_n in noise.csv")
            command.add_argument(
                "--verify-replay", action="store_true", help="replay the recorded run after writing it"
            )

    replay = sub.add_parser("verify-replay", help="Replay a recorded run from its artifacts")
    replay.add_argument("--out", "-o", required=True, help="artifact directory of a recorded run")
    replay.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Flags first, then --set, each overriding the config file."""
    overrides: Dict[str, Any] = {"task": args.command}
    for key in ("seed", "out", "replicas"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    for _, key, _ in CONFIG_FLAGS:
        value = getattr(args, f"cfg_{key}", None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "record_noise", False) or getattr(args, "verify_replay", False):
        overrides["record_noise"] = "true"
    overrides.update(parse_overrides(args.set))
    return overrides


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def emit(payload: Dict[str, Any]) -> None:
    data = dict(jsonable(payload))
    data["schema_version"] = SCHEMA_VERSION
    print(json.dumps(data, indent=2, sort_keys=True, allow_nan=False))


def report_error(error: Exception, out_dir: Optional[str] = None) -> int:
    """Print the machine-readable error record and return the exit status."""
    if isinstance(error, CBOError):
        record = error.to_dict()
        human = error.format()
        code = EXIT_USAGE if isinstance(error, (ConfigError, UsageError)) else EXIT_FAILURE
    else:
        record = {"error_type": "io", "message": str(error)}
        human = f"Error (io): {error}"
        code = EXIT_FAILURE
    record["success"] = False
    print_error(human)
    emit(record)
    if out_dir is not None and Path(out_dir).is_dir():
        try:
            write_json(Path(out_dir) / "error.json", record)
        except OSError as e:
            logger.warning(f"could not write error.json: {e}")
    return code


def _replay_status(report: ReplayReport) -> int:
    if report.passed:
        print_success(f"replay verified: max_abs_error = {report.max_abs_error:.3e}")
        return EXIT_OK
    print_error(f"replay mismatch: relative error {report.relative_error:.3e} exceeds {REPLAY_TOL:g}")
    return EXIT_FAILURE


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point for the CLI."""
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)

    if args.command == "verify-replay":
        try:
            report = verify_replay(Path(args.out))
        except (CBOError, OSError) as e:
            return report_error(e, args.out)
        emit({"success": report.passed, **report.to_dict()})
        return _replay_status(report)

    try:
        config: ExperimentConfig = parse_config(args.config, collect_overrides(args))
    except CBOError as e:
        return report_error(e)

    print_header(config.task, config.out)
    for note in config.warnings:
        print_warning(note)
    executor = ReplicaExecutor(args.workers)

    try:
        outcome = run_task(config, executor)
    except (CBOError, OSError) as e:
        return report_error(e, config.out)

    print_summary("Summary", outcome.summary, SUMMARY_KEYS.get(config.task, ()))
    for name in outcome.artifacts:
        print_info(str(Path(config.out) / name))

    if args.command == "run" and args.verify_replay:
        try:
            report = verify_replay(Path(config.out))
        except (CBOError, OSError) as e:
            return report_error(e, config.out)
        emit({**outcome.to_dict(), "success": report.passed, "replay": report.to_dict()})
        return _replay_status(report)

    emit(outcome.to_dict())
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
