"""
Command-line entry point for the experiments.

Usage:
    python run_experiment.py converge --functional v4 --R 1 --n 10,30,100,300,1000
    python run_experiment.py density --set even --N 1000000 --format json --out reports/evens.json
    python run_experiment.py passage --n 10 --reps 10000 --dt 1e-4 --emit-times reports/times.csv
    python run_experiment.py selftest
"""

import os
import sys
import logging
import argparse
from typing import Any, Dict, List, Optional

# Add the parent directory to the path to import config and modules
sys.path.append(os.path.dirname(os.path.abspath(__file__)))
import config
from modules.errors_module import UsageError
from modules.harness_module import (COMMANDS, EXIT_USAGE, FORMATS, RunConfig, config_from_mapping,
                                    load_config, parse_scalar, run)

# Configure logging to output to both file and console
os.makedirs(os.path.join(os.path.dirname(os.path.abspath(__file__)), config.LOG_DIR), exist_ok=True)
logging.basicConfig(
    level=getattr(logging, config.LOG_LEVEL),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler(os.path.join(os.path.dirname(os.path.abspath(__file__)), config.LOG_DIR, 'experiments.log')),
        logging.StreamHandler()  # This will output to console
    ]
)
logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    epilog = "\n".join(f"  {name:<13} {spec.description}; parameters: "
                       f"{', '.join(f'--{key}' for key in spec.defaults) or 'none'}"
                       for name, spec in COMMANDS.items())
    parser = argparse.ArgumentParser(
        description="Functional mean values, Gaussian limits and companion experiments",
        epilog="commands:\n" + epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=sorted(COMMANDS), help="Experiment to run")
    parser.add_argument("--seed", type=int, default=None,
                        help=f"Root seed (default: GATEAUX_SEED or {config.DEFAULT_SEED})")
    parser.add_argument("--samples", type=int, default=None, help="Monte Carlo sample count")
    parser.add_argument("--out", default=None, help="Report path (default: reports/<command>.<format>)")
    parser.add_argument("--format", choices=FORMATS, default=None, help="Report format (default: csv)")
    parser.add_argument("--config", default=None, help="key = value file; flags override its values")
    parser.add_argument("--timings", action="store_true", help="Fill the seconds column")
    parser.add_argument("--workers", type=int, default=None, help="Threads running Monte Carlo chunks")
    parser.add_argument("--emit-times", dest="emit_times", default=None,
                        help="CSV file for per-replication passage times")
    return parser


def parse_command_flags(extra: List[str]) -> Dict[str, Any]:
    """
    Turn the remaining '--key value' (or '--key=value') pairs into parameters.

    Args:
        extra: Arguments argparse did not recognise

    Returns:
        Parameter map with scalar values
    """
    params = {}
    index = 0
    while index < len(extra):
        token = extra[index]
        if not token.startswith("--") or len(token) <= 2:
            raise UsageError(f"Unexpected argument '{token}'; command parameters are given as --key value")
        key, has_value, value = token[2:].partition("=")
        if not has_value:
            if index + 1 >= len(extra):
                raise UsageError(f"Missing value for --{key}")
            value = extra[index + 1]
            index += 2
        else:
            index += 1
        key = key.replace("-", "_")
        if key in params:
            raise UsageError(f"Parameter --{key} given twice")
        params[key] = parse_scalar(value)
    return params


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the command and print its rows."""
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)

    print("\n" + "=" * 80)
    print(f"RUNNING {args.command.upper()}")
    print("=" * 80)

    try:
        from_flags = config_from_mapping(parse_command_flags(extra), args.command, source="command line")
        from_flags = RunConfig(args.command, from_flags.params, args.seed, args.out, args.format,
                               args.samples, args.workers, args.timings, args.emit_times)
        base = load_config(args.config, args.command) if args.config else RunConfig(args.command)
        run_config = base.overridden_by(from_flags)
    except UsageError as e:
        print(f"Error: {str(e)}")
        logger.error(f"Usage error: {str(e)}")
        return EXIT_USAGE

    print(f"Seed: {run_config.resolved_seed}")
    if run_config.params:
        print(f"Parameters: {run_config.params}")

    result = run(args.command, run_config)

    if args.command == "selftest":
        for row in result.rows:
            print(f"{'PASS' if row.value == 1 else 'FAIL'}  {row.metric}")
    else:
        for row in result.rows:
            error = f" +/- {row.std_error:.3g}" if row.std_error else ""
            extra_keys = {k: v for k, v in row.params.items() if k in ("n", "checkpoint", "modes")}
            label = " ".join(f"{k}={v}" for k, v in extra_keys.items())
            print(f"{row.metric:<20} {label:<18} {row.value!r}{error}")

    print("\n" + "=" * 80)
    if result.error:
        print(f"FAILED (exit {result.status}): {result.error}")
    else:
        print(f"COMPLETED: report written to {result.path}")
    print("=" * 80)
    return result.status


if __name__ == "__main__":
    sys.exit(main())
