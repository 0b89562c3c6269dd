"""
One-shot Helmholtz projection of a field file.
"""
import os
import time

from rich.console import Console

from utils.error_utils import format_function_error
from utils.geometry_utils import build_geometry
from utils.grid_utils import staggered_grid
from utils.helmholtz_utils import helmholtz_project
from utils.io_utils import PROJECTION_COLUMNS, load_field, save_field, write_csv, write_potential, write_vtk

console = Console()


def project_field_file(loaded, directory):
    """
    Project the field at run.field_path onto divergence-free tangent fields.

    Writes projected.npz, potential.npz, projected.vtk and projection.csv.

    Args:
        loaded (LoadedConfig): Resolved analysis task
        directory (str): Run directory holding the manifest

    Returns:
        tuple: (result, metrics, duration)
    """
    start_time = time.time()
    task = loaded.config
    solver = task.solver
    path = task.run["field_path"]
    if not path:
        return format_function_error("No field file given (set run.field_path or pass --field)", time.time() - start_time)
    try:
        console.print()
        with console.status(f"Reading {path}", spinner="dots", spinner_style="white"):
            grid = staggered_grid(build_geometry(task.geometry))
            field = load_field(path, grid)
        console.print("Field loaded")

        with console.status("Projecting", spinner="dots", spinner_style="white"):
            result = helmholtz_project(field, tol=solver["poisson_tol"], method=solver["poisson_method"], compat_tol=solver["compat_tol"])
        console.print("Projection done")

        with console.status("Writing outputs", spinner="dots", spinner_style="white"):
            x, px = field.to_vector(), result.projected.to_vector()
            row = (grid.norm(x), grid.norm(px), grid.norm(x - px), result.residual_div, result.residual_flux)
            write_csv(os.path.join(directory, "projection.csv"), PROJECTION_COLUMNS, [row])
            save_field(os.path.join(directory, "projected.npz"), result.projected)
            write_potential(os.path.join(directory, "potential.npz"), result.potential)
            write_vtk(os.path.join(directory, "projected.vtk"), result.projected, result.potential, title="projected field")
        console.print("Outputs written")

        metrics = {
            "Input norm": row[0],
            "Projected norm": row[1],
            "Removed gradient norm": row[2],
            "Divergence residual": result.residual_div,
            "Output": directory,
        }
        passed = result.residual_div <= solver["projection_tol"]
        return ("Success" if passed else "Failed"), metrics, time.time() - start_time
    except KeyboardInterrupt:
        console.print("\n[bold yellow]Projection cancelled by user.")
        return "Cancelled", None, time.time() - start_time
    except Exception as e:
        console.print(f"\n[bold red]Error projecting field: {str(e)}")
        return "Error", None, time.time() - start_time
