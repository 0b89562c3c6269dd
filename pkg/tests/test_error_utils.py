"""
Test suite for error handling utilities.

This module tests the exception hierarchy and the summary panels every
command ends with.
"""
import pytest
import sys

# Add project root to path
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from utils.error_utils import (
    ConfigError,
    FieldError,
    GeometryError,
    KornError,
    OutputExistsError,
    SimulationError,
    SlipflowError,
    SolverFailure,
    display_success_summary,
    exit_code_for,
    format_function_error,
    handle_cli_error,
    summary_title,
)


class TestHandleCliError:
    """Test the handle_cli_error function."""

    def test_handle_cli_error_simulate_operation(self, capsys):
        """Test handle_cli_error with the simulate operation type."""
        with pytest.raises(SystemExit) as exc_info:
            handle_cli_error("Test error message", operation_type="simulate")

        assert exc_info.value.code == 1
        captured = capsys.readouterr()

        assert "Test error message" in captured.out
        assert "Simulation Summary" in captured.out
        assert "Result" in captured.out
        assert "Failed" in captured.out
        assert "Duration" in captured.out
        assert "0.00 seconds" in captured.out

    def test_handle_cli_error_eigens_operation(self, capsys):
        """Test handle_cli_error picks the spectrum panel title."""
        with pytest.raises(SystemExit) as exc_info:
            handle_cli_error("Test error message", operation_type="eigens")

        assert exc_info.value.code == 1
        captured = capsys.readouterr()
        assert "Spectrum Summary" in captured.out
        assert "Failed" in captured.out

    def test_handle_cli_error_usage_exit_code(self, capsys):
        """Test handle_cli_error with a usage exit code."""
        with pytest.raises(SystemExit) as exc_info:
            handle_cli_error("Unknown config key bc.alpah", operation_type="korn", duration=2.5, result="Error", exit_code=2)

        assert exc_info.value.code == 2
        captured = capsys.readouterr()
        assert "bc.alpah" in captured.out
        assert "Korn Summary" in captured.out
        assert "2.50 seconds" in captured.out

    def test_handle_cli_error_case_insensitive_operation(self, capsys):
        """Test handle_cli_error with case variations in operation type."""
        with pytest.raises(SystemExit):
            handle_cli_error("Test", operation_type="IDENTITIES")

        captured = capsys.readouterr()
        assert "Identity Battery Summary" in captured.out


class TestFormatFunctionError:
    """Test the format_function_error function."""

    def test_format_function_error_basic(self, capsys):
        """Test format_function_error returns the command tuple."""
        result, output, duration = format_function_error("Function error message")

        assert result == "Failed"
        assert output is None
        assert duration == 0.0
        assert "Function error message" in capsys.readouterr().out

    def test_format_function_error_custom_parameters(self):
        """Test format_function_error with custom parameters."""
        result, output, duration = format_function_error("Custom", duration=3.75, result="Error")
        assert (result, output, duration) == ("Error", None, 3.75)


class TestDisplaySuccessSummary:
    """Test the display_success_summary function."""

    def test_display_success_summary_without_metrics(self, capsys):
        """Test display_success_summary with only result and duration."""
        display_success_summary("Success", 2.5, operation_type="simulate")

        captured = capsys.readouterr()
        assert "Simulation Summary" in captured.out
        assert "Success" in captured.out
        assert "2.50 seconds" in captured.out

    def test_display_success_summary_with_metrics(self, capsys):
        """Test metric rows are formatted by type."""
        metrics = {"Steps": 120, "Decay rate": 0.123456789, "Energy monotone": True, "Decay fit": "ok"}
        display_success_summary("Success", 1.0, metrics, operation_type="simulate")

        captured = capsys.readouterr()
        assert "Steps" in captured.out and "120" in captured.out
        assert "0.123457" in captured.out
        assert "yes" in captured.out
        assert "ok" in captured.out

    def test_display_success_summary_unknown_operation(self, capsys):
        """Test the generic title for unknown operation types."""
        display_success_summary("Failed", 1.0, operation_type="unknown")
        assert "Run Summary" in capsys.readouterr().out

    def test_duration_formatting_precision(self, capsys):
        """Test that duration is always formatted to 2 decimal places."""
        for duration, expected in [(0, "0.00 seconds"), (1.234, "1.23 seconds"), (1.999, "2.00 seconds")]:
            display_success_summary("Success", duration, operation_type="korn")
            assert expected in capsys.readouterr().out


class TestExceptions:
    """Test the exception hierarchy."""

    def test_value_errors(self):
        """Geometry and field errors are also ValueErrors."""
        assert issubclass(GeometryError, ValueError)
        assert issubclass(FieldError, ValueError)
        for cls in (GeometryError, FieldError, SolverFailure, ConfigError, SimulationError, KornError, OutputExistsError):
            assert issubclass(cls, SlipflowError)

    def test_solver_failure_carries_residual(self):
        """SolverFailure keeps residual and iteration count."""
        error = SolverFailure("did not converge", residual=1e-3, iterations=50)
        assert error.residual == 1e-3
        assert error.iterations == 50
        assert "did not converge" in str(error)

    def test_config_error_position(self):
        """ConfigError keeps key and position."""
        error = ConfigError("bad value", key="bc.alpha", line=3, column=9)
        assert (error.key, error.line, error.column) == ("bc.alpha", 3, 9)

    def test_simulation_error_sample(self):
        """SimulationError carries the last diagnostics sample."""
        error = SimulationError("NaN", last_sample={"t": 0.5})
        assert error.last_sample["t"] == 0.5


class TestExitCodes:
    """Test the result to exit code mapping."""

    def test_exit_code_for(self):
        assert exit_code_for("Success") == 0
        for result in ("Failed", "Error", "Cancelled"):
            assert exit_code_for(result) == 1

    def test_summary_title(self):
        assert summary_title("simulate") == "Simulation Summary"
        assert summary_title("Eigens") == "Spectrum Summary"


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
