"""
Error handling utilities for slipflow.

This module holds the exception hierarchy raised by the numerical modules
and the rich summary panels every CLI command ends with.
"""
import sys
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

console = Console()

SUMMARY_TITLES = {
    "simulate": "Simulation Summary",
    "eigens": "Spectrum Summary",
    "korn": "Korn Summary",
    "identities": "Identity Battery Summary",
    "project": "Projection Summary",
}


class SlipflowError(Exception):
    """Base class for errors raised by slipflow."""


class GeometryError(SlipflowError, ValueError):
    """Invalid geometry parameters."""


class FieldError(SlipflowError, ValueError):
    """Field with non-finite values or a shape that does not match its grid."""


class SolverFailure(SlipflowError):
    """Linear or eigen solver that did not reach its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ConfigError(SlipflowError):
    """Invalid configuration file or value."""

    def __init__(self, message, key=None, line=None, column=None):
        super().__init__(message)
        self.key = key
        self.line = line
        self.column = column


class SimulationError(SlipflowError):
    """Time integration aborted; carries the last diagnostics sample."""

    def __init__(self, message, last_sample=None):
        super().__init__(message)
        self.last_sample = last_sample


class KornError(SlipflowError):
    """Restricted Korn quotient is not positive."""


class OutputExistsError(SlipflowError):
    """Run directory already exists and overwriting was not requested."""


def summary_title(operation_type):
    """
    Map an operation type to its summary panel title.

    Args:
        operation_type (str): CLI subcommand name

    Returns:
        str: Panel title
    """
    return SUMMARY_TITLES.get(operation_type.lower(), "Run Summary")


def _summary_table(result, duration, metrics=None):
    table = Table(show_header=False, box=None)
    table.add_row("Result", result)
    table.add_row("Duration", f"{duration:.2f} seconds")
    for label, value in (metrics or {}).items():
        table.add_row(label, _format_metric(value))
    return table


def _format_metric(value):
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def handle_cli_error(message, operation_type="simulate", duration=0.0, result="Failed", exit_code=1):
    """
    Handle CLI errors with consistent formatting and exit behavior.

    Args:
        message (str): Error message to display
        operation_type (str): CLI subcommand the error belongs to
        duration (float): Duration of the operation before error
        result (str): Result status ("Failed", "Error", "Cancelled")
        exit_code (int): Exit code to use when calling sys.exit()
    """
    console.print()
    console.print(f"[bold red]{message}")

    console.print()
    console.print(Panel(_summary_table(result, duration), title=summary_title(operation_type), expand=False))

    sys.exit(exit_code)


def format_function_error(message, duration=0.0, result="Failed"):
    """
    Format error for function return (non-exit scenarios).

    Args:
        message (str): Error message to display
        duration (float): Duration of the operation before error
        result (str): Result status ("Failed", "Error", "Cancelled")

    Returns:
        tuple: (result, None, duration) matching the command return format
    """
    console.print(f"\n[bold red]{message}")
    return result, None, duration


def display_success_summary(result, duration, metrics=None, operation_type="simulate"):
    """
    Display the end-of-command summary panel.

    Args:
        result (str): Result status
        duration (float): Duration of the operation
        metrics (dict, optional): Extra rows, label to value
        operation_type (str): CLI subcommand name
    """
    console.print()
    console.print(Panel(_summary_table(result, duration, metrics), title=summary_title(operation_type), expand=False))


def exit_code_for(result):
    """
    Exit code for a command result string.

    Args:
        result (str): "Success", "Failed", "Error" or "Cancelled"

    Returns:
        int: 0 on success, 1 otherwise
    """
    return 0 if result == "Success" else 1
