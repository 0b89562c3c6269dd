"""
Identity battery over the configured geometries.
"""
import os
import time

from rich.console import Console
from rich.table import Table

from utils.geometry_utils import GeometrySpec
from utils.identity_utils import convergence_checks, helmholtz_checks
from utils.io_utils import IDENTITY_COLUMNS, write_csv

console = Console()

STATUS_STYLES = {
    "exact": "[green]",
    "converged": "[green]",
    "within_tolerance": "[green]",
    "superconvergent": "[bold yellow]",
}


def _geometry_specs(task):
    base = task.geometry
    specs = []
    for kind in task.run["geometries"]:
        specs.append(
            GeometrySpec(
                kind=kind,
                n1=base.n1,
                n2=base.n2,
                radius=base.radius,
                theta_max=base.theta_max,
                height=base.height,
            )
        )
    return specs


def _report_table(checks):
    table = Table(title="Identity battery")
    table.add_column("Geometry")
    table.add_column("Identity")
    table.add_column("Residual", justify="right")
    table.add_column("Order", justify="right")
    table.add_column("Status")
    for check in checks:
        order = "" if check.order is None else f"{check.order:.2f}"
        status = STATUS_STYLES.get(check.status, "[bold red]") + check.status
        table.add_row(check.geometry, check.identity, f"{check.residuals[-1]:.3e}", order, status)
    return table


def run_identity_battery(loaded, directory):
    """
    Convergence identities at n/2, n, 2n and randomized Helmholtz checks at n.

    Writes identities.csv (geometry, identity, resolution, residual, order,
    status, passed) and prints a table of the finest-level results. Orders
    above the band are reported as superconvergent and fail the battery.

    Args:
        loaded (LoadedConfig): Resolved analysis task
        directory (str): Run directory holding the manifest

    Returns:
        tuple: (result, metrics, duration)
    """
    start_time = time.time()
    task = loaded.config
    solver, settings = task.solver, task.run
    checks = []
    try:
        console.print()
        for spec in _geometry_specs(task):
            with console.status(f"Refinement study on {spec.kind}", spinner="dots", spinner_style="white"):
                checks += convergence_checks(spec)
            console.print(f"Convergence identities evaluated on {spec.kind}")

            with console.status(f"Projecting {settings['samples']} random fields on {spec.kind}", spinner="dots", spinner_style="white"):
                checks += helmholtz_checks(
                    spec,
                    settings["samples"],
                    seed=settings["seed"],
                    method=solver["poisson_method"],
                    tol=solver["poisson_tol"],
                    compat_tol=solver["compat_tol"],
                )
            console.print(f"Helmholtz checks evaluated on {spec.kind}")

        rows = [row for check in checks for row in check.rows()]
        write_csv(os.path.join(directory, "identities.csv"), IDENTITY_COLUMNS, rows)
        console.print()
        console.print(_report_table(checks))

        failed = [f"{check.geometry}/{check.identity}" for check in checks if not check.passed]
        metrics = {
            "Checks": len(checks),
            "Passed": len(checks) - len(failed),
            "Output": directory,
        }
        if failed:
            metrics["Failed checks"] = ", ".join(failed)
        superconvergent = [f"{check.geometry}/{check.identity}" for check in checks if check.status == "superconvergent"]
        if superconvergent:
            metrics["Superconvergent checks"] = ", ".join(superconvergent)
        return ("Success" if not failed else "Failed"), metrics, time.time() - start_time
    except KeyboardInterrupt:
        console.print("\n[bold yellow]Identity battery cancelled by user.")
        return "Cancelled", None, time.time() - start_time
    except Exception as e:
        console.print(f"\n[bold red]Error running identity battery: {str(e)}")
        return "Error", None, time.time() - start_time
