#!/usr/bin/env python3
"""
Main CLI entry point for slipflow.

Run 'python slipflow.py --help' for usage information.
"""
import os
import sys
import argparse
from rich.console import Console

# Add project root to path to allow imports
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from __version__ import __version__, __title__, __description__

console = Console()

COMMANDS = {
    "simulate": "Integrate the surface Navier-Stokes equations",
    "eigens": "Compute the Stokes spectrum, its kernel and the linearized spectrum",
    "korn": "Estimate the restricted Korn constant at two resolutions",
    "identities": "Run the calculus and Helmholtz identity battery",
    "project": "Helmholtz-project a field file",
}
THREAD_VARIABLES = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")
USAGE_EXIT = 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog="slipflow",
        description=__description__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"""
Examples:
  {sys.argv[0]} simulate --preset hemisphere-freeslip
  {sys.argv[0]} eigens --config runs/disk.toml --out runs/disk-spectrum
  {sys.argv[0]} korn --preset hemisphere-spindown --threads 4
  {sys.argv[0]} identities --preset disk-freeslip --force
  {sys.argv[0]} project --preset disk-freeslip --field initial.npz
  {sys.argv[0]} --version

For more help on a specific command:
  {sys.argv[0]} simulate --help
        """,
    )
    parser.add_argument("--version", action="version", version=f"{__title__} v{__version__}")

    subparsers = parser.add_subparsers(dest="command", help="Available commands", metavar="command")
    for name, summary in COMMANDS.items():
        sub = subparsers.add_parser(name, help=summary, description=summary)
        source = sub.add_mutually_exclusive_group(required=True)
        source.add_argument("--config", type=str, help="Path to a TOML config file")
        source.add_argument("--preset", type=str, help="Name of a built-in scenario")
        sub.add_argument("--out", type=str, help="Run directory (default: derived from the config hash)")
        sub.add_argument("--seed", type=int, help="Override run.seed")
        sub.add_argument("--threads", type=int, help="Worker threads for the linear algebra (0: all available)")
        sub.add_argument("--force", action="store_true", help="Overwrite an existing run directory")
        if name == "project":
            sub.add_argument("--field", type=str, help="Field file to project (overrides run.field_path)")
    return parser


def export_threads(args):
    """Pin BLAS / OpenMP threads before numpy is imported."""
    from config.loader import peek_threads

    threads = args.threads if args.threads is not None else peek_threads(args.config, args.preset)
    if threads < 0:
        return f"--threads must be nonnegative, got {threads}"
    if threads > 0:
        for name in THREAD_VARIABLES:
            os.environ[name] = str(threads)
    return None


def main(argv=None):
    """Main CLI entry point with subcommands."""
    parser = build_parser()
    args = parser.parse_args(argv)

    # If no command specified, show help
    if not args.command:
        parser.print_help()
        return 0

    from utils.error_utils import ConfigError, OutputExistsError, display_success_summary, exit_code_for, handle_cli_error

    problem = export_threads(args)
    if problem:
        handle_cli_error(problem, operation_type=args.command, exit_code=USAGE_EXIT)

    from config.loader import create_run_directory, default_run_directory, load_config

    overrides = {"run": {}}
    if args.seed is not None:
        overrides["run"]["seed"] = args.seed
    if args.threads is not None:
        overrides["run"]["threads"] = args.threads
    if getattr(args, "field", None):
        overrides["run"]["field_path"] = os.path.abspath(args.field)

    try:
        loaded = load_config(path=args.config, preset=args.preset, task=args.command, overrides=overrides)
        out_dir = args.out or default_run_directory(loaded)
        directory, _ = create_run_directory(loaded, out_dir, force=args.force)
    except (ConfigError, OutputExistsError) as e:
        handle_cli_error(str(e), operation_type=args.command, exit_code=USAGE_EXIT)
    console.print(f"Run directory: {directory}")

    # Import and execute the appropriate command
    if args.command == "simulate":
        from scripts.simulate import run_simulation

        result, metrics, duration = run_simulation(loaded, directory)
    elif args.command == "eigens":
        from scripts.eigens import compute_spectrum

        result, metrics, duration = compute_spectrum(loaded, directory)
    elif args.command == "korn":
        from scripts.korn import estimate_korn

        result, metrics, duration = estimate_korn(loaded, directory)
    elif args.command == "identities":
        from scripts.identities import run_identity_battery

        result, metrics, duration = run_identity_battery(loaded, directory)
    else:
        from scripts.project import project_field_file

        result, metrics, duration = project_field_file(loaded, directory)

    # Display results using consolidated success summary
    display_success_summary(result, duration, metrics, operation_type=args.command)
    return exit_code_for(result)


if __name__ == "__main__":
    sys.exit(main())
