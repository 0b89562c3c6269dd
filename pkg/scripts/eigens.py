"""
Stokes spectrum, equilibrium kernel and linearized stability report.
"""
import os
import time

import numpy as np
from rich.console import Console

from config.config import KERNEL_ANGLE_TOL, LINEARIZED_KERNEL_TOL, SMOOTHNESS_TOL, SPECTRUM_FLOOR
from utils.io_utils import LINEARIZED_COLUMNS, write_csv, write_eigen_csv, write_vtk
from utils.killing_utils import analytic_killing_basis, numeric_killing_basis, spectral_tail_fraction, subspace_angle
from utils.stokes_utils import assemble_linearized, build_operator, eigenpairs, linearized_eigenvalues

console = Console()


def _kernel_checks(op, eigen, kernel_tol):
    numeric = numeric_killing_basis(op, tol=kernel_tol, eigen=eigen)
    metrics = {"Kernel dimension": len(numeric)}
    passed = True
    if op.bc.mode == "navier":
        analytic = analytic_killing_basis(op.grid, op.bc.alpha)
        metrics["Expected kernel dimension"] = len(analytic)
        passed = len(numeric) == len(analytic)
        if len(numeric) and len(analytic):
            angle = subspace_angle(numeric, analytic)
            metrics["Kernel angle"] = angle
            passed = passed and angle <= KERNEL_ANGLE_TOL
    if len(numeric):
        tail = max(spectral_tail_fraction(field) for field in numeric.fields)
        metrics["Kernel tail fraction"] = tail
        passed = passed and tail <= SMOOTHNESS_TOL
    return numeric, passed, metrics


def _linearized_checks(op, basis, count, tol, seed, directory):
    z = basis.fields[0]
    linearized = assemble_linearized(op, z)
    result = linearized_eigenvalues(linearized, count, tol=tol, seed=seed)
    rows = [(i, value.real, value.imag, residual) for i, (value, residual) in enumerate(zip(result.values, result.residuals))]
    write_csv(os.path.join(directory, "linearized.csv"), LINEARIZED_COLUMNS, rows)

    grid = op.grid
    x = z.to_vector()
    kernel_residual = grid.norm(linearized.apply_vector(x)) / (op.scale * grid.norm(x))
    min_real = float(np.min(result.values.real))
    metrics = {"Linearized min Re": min_real, "Linearized kernel residual": kernel_residual}
    passed = min_real >= -LINEARIZED_KERNEL_TOL * op.scale and kernel_residual <= LINEARIZED_KERNEL_TOL
    return passed, metrics


def compute_spectrum(loaded, directory):
    """
    Smallest Stokes eigenpairs with kernel and stability checks.

    Writes eigenvalues.csv, eigenfields/eigen_XX.vtk, kernel/killing_XX.vtk
    and, when the equilibrium space is nontrivial, linearized.csv for the
    linearization about the first equilibrium field.

    Args:
        loaded (LoadedConfig): Resolved analysis task
        directory (str): Run directory holding the manifest

    Returns:
        tuple: (result, metrics, duration)
    """
    start_time = time.time()
    task = loaded.config
    solver, settings = task.solver, task.run
    try:
        console.print()
        with console.status("Building geometry and operator", spinner="dots", spinner_style="white"):
            op = build_operator(task.geometry, task.bc, task.mu)
        console.print(f"Operator assembled ({op.grid.n_dof} unknowns, {task.bc.label})")

        count = settings["eigen_count"]
        with console.status(f"Computing {count} eigenpairs", spinner="dots", spinner_style="white"):
            eigen = eigenpairs(op, count, tol=solver["eigen_tol"], seed=settings["seed"])
            write_eigen_csv(os.path.join(directory, "eigenvalues.csv"), eigen)
            for i, field in enumerate(eigen.eigenfields):
                write_vtk(os.path.join(directory, "eigenfields", f"eigen_{i:02d}.vtk"), field, title=f"eigenvalue {eigen.eigenvalues[i]:.10g}")
        console.print("Eigenpairs computed")

        values = eigen.eigenvalues
        floor = -SPECTRUM_FLOOR * max(float(np.max(np.abs(values))), op.scale)
        passed = bool(np.min(values) >= floor) and bool(np.all(eigen.residuals <= solver["eigen_tol"]))
        metrics = {
            "Boundary condition": task.bc.label,
            "Smallest eigenvalue": float(values[0]),
            "Largest eigenvalue": float(values[-1]),
            "Max residual": float(np.max(eigen.residuals)),
            "Iterations": eigen.iterations,
        }

        with console.status("Checking equilibrium kernel", spinner="dots", spinner_style="white"):
            basis, kernel_passed, kernel_metrics = _kernel_checks(op, eigen, solver["kernel_tol"])
            for i, field in enumerate(basis.fields):
                write_vtk(os.path.join(directory, "kernel", f"killing_{i:02d}.vtk"), field, title="equilibrium field")
        metrics.update(kernel_metrics)
        passed = passed and kernel_passed
        console.print("Kernel checked")

        if len(basis):
            with console.status("Computing linearized spectrum", spinner="dots", spinner_style="white"):
                stable, stability_metrics = _linearized_checks(op, basis, min(count, 6), 1e-8, settings["seed"], directory)
            metrics.update(stability_metrics)
            passed = passed and stable
            console.print("Linearized spectrum computed")

        metrics["Output"] = directory
        return ("Success" if passed else "Failed"), metrics, time.time() - start_time
    except KeyboardInterrupt:
        console.print("\n[bold yellow]Spectrum computation cancelled by user.")
        return "Cancelled", None, time.time() - start_time
    except Exception as e:
        console.print(f"\n[bold red]Error computing spectrum: {str(e)}")
        return "Error", None, time.time() - start_time
