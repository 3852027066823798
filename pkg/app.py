import argparse
import logging
import sys

from components.bounds_runner import run_bounds
from components.mesh_dump import run_mesh_dump
from components.solve_runner import count_failures, run_solve
from components.verify_runner import hard_failures, run_verify
from models.fem_core import SolverError
from utils.config_loader import SUITES, ConfigError, load_config
from utils.data_loader import write_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CHECK_FAILED = 2
EXIT_SOLVER_FAILED = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Flags mirroring RunConfig fields; values are parsed by the config loader
CONFIG_FLAGS = [
    ("--profile", "profile spec: flat(c), sine(a), saw(a) or file(path)"),
    ("--bc", "boundary model: dirichlet, impedance or transmission"),
    ("--k", "wavenumber, or a comma-separated sweep list"),
    ("--theta-deg", "incidence angle in degrees, or a sweep list"),
    ("--gamma", "complex incident amplitude, e.g. 1+0j"),
    ("--lambda", "impedance or transmission coefficient, or a sweep list"),
    ("--k-minus", "wavenumber below a penetrable profile, or a sweep list"),
    ("--R", "truncation height (auto)"),
    ("--f-minus", "lower reference line (auto)"),
    ("--f-plus", "upper reference line (auto)"),
    ("--lipschitz-L", "Lipschitz constant override (auto)"),
    ("--n-samples", "profile knots for closed-form profiles (auto)"),
    ("--mesh-h", "target mesh spacing"),
    ("--fe-order", "Lagrange order, 1 or 2"),
    ("--dtn-N", "DtN truncation order (auto)"),
    ("--refinements", "uniform refinements after the first mesh"),
    ("--seed", "seed of the randomized suites"),
    ("--workers", "worker processes"),
    ("--output", "output path"),
    ("--trials", "trials per randomized suite"),
    ("--oracle-perturbation", "relative perturbation of the oracles (negative control)"),
]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="grating-bench",
        description="Periodic grating diffraction: solves, stability bounds and verification suites",
    )
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    for flag, help_text in CONFIG_FLAGS:
        common.add_argument(flag, dest=flag.lstrip("-").replace("-", "_"), help=help_text)

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("solve", parents=[common], help="solve every parameter point and certify the norms")
    commands.add_parser("sweep", parents=[common], help="alias of solve")
    commands.add_parser("bounds", parents=[common], help="stability constants without solving")
    verify = commands.add_parser("verify", parents=[common], help="oracle, identity and inequality checks")
    verify.add_argument("suite", nargs="?", choices=SUITES, default=None)
    commands.add_parser("mesh-dump", parents=[common], help="write the mesh of the configured geometry")
    return parser


def config_from_args(args):
    overrides = {}
    for flag, _ in CONFIG_FLAGS:
        key = flag.lstrip("-").replace("-", "_")
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "suite", None):
        overrides["suite"] = args.suite
    return load_config(args.config, overrides)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)

    try:
        config = config_from_args(args)
    except ConfigError as e:
        logger.error("configuration error: %s", str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command in ("solve", "sweep"):
            frame = run_solve(config)
            write_report(frame, config.output)
            return EXIT_SOLVER_FAILED if count_failures(frame) else EXIT_OK
        elif args.command == "bounds":
            write_report(run_bounds(config), config.output)
            return EXIT_OK
        elif args.command == "verify":
            frame = run_verify(config)
            write_report(frame, config.output)
            failures = hard_failures(frame)
            if failures:
                print(f"{failures} verification checks failed", file=sys.stderr)
                return EXIT_CHECK_FAILED
            return EXIT_OK
        elif args.command == "mesh-dump":
            run_mesh_dump(config)
            return EXIT_OK
    except ValueError as e:
        logger.error("invalid input: %s", str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as e:
        logger.error("solver failure: %s", str(e))
        return EXIT_SOLVER_FAILED
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
