"""
Korn constant at two resolutions.
"""
import os
import time

import numpy as np
from rich.console import Console

from config.config import KORN_VARIATION
from utils.error_utils import KornError
from utils.io_utils import KORN_COLUMNS, write_csv
from utils.killing_utils import equilibrium_basis, korn_ritz_value
from utils.stokes_utils import build_operator

console = Console()


def estimate_korn(loaded, directory):
    """
    Restricted Korn constant at n and 2n and its variation between them.

    Writes korn.csv (resolution, ritz_value, constant).

    Args:
        loaded (LoadedConfig): Resolved analysis task
        directory (str): Run directory holding the manifest

    Returns:
        tuple: (result, metrics, duration)
    """
    start_time = time.time()
    task = loaded.config
    spec = task.geometry
    rows = []
    try:
        console.print()
        for level in (spec, spec.with_resolution(2 * spec.n1, 2 * spec.n2)):
            with console.status(f"Estimating Korn constant at {level.n1}x{level.n2}", spinner="dots", spinner_style="white"):
                op = build_operator(level, task.bc, task.mu)
                basis = equilibrium_basis(op, tol=task.solver["kernel_tol"], eigen_tol=task.solver["eigen_tol"])
                ritz = korn_ritz_value(op, basis, seed=task.run["seed"])
                if not ritz > 0.0:
                    raise KornError(f"Restricted Korn Ritz value {ritz:.3e} is not positive at {level.n1}x{level.n2}")
                rows.append((level.n1, ritz, 1.0 / np.sqrt(ritz)))
            console.print(f"Korn constant at {level.n1}x{level.n2}: {rows[-1][2]:.6g}")
        write_csv(os.path.join(directory, "korn.csv"), KORN_COLUMNS, rows)

        coarse, fine = rows[0][2], rows[1][2]
        variation = abs(fine - coarse) / coarse
        metrics = {
            "Boundary condition": task.bc.label,
            "Excluded fields": len(basis),
            f"Constant {rows[0][0]}": coarse,
            f"Constant {rows[1][0]}": fine,
            "Variation": variation,
            "Output": directory,
        }
        return ("Success" if variation < KORN_VARIATION else "Failed"), metrics, time.time() - start_time
    except KeyboardInterrupt:
        console.print("\n[bold yellow]Korn estimate cancelled by user.")
        return "Cancelled", None, time.time() - start_time
    except KornError as e:
        console.print(f"\n[bold red]{str(e)}")
        if rows:
            write_csv(os.path.join(directory, "korn.csv"), KORN_COLUMNS, rows)
        return "Failed", {"Output": directory}, time.time() - start_time
    except Exception as e:
        console.print(f"\n[bold red]Error estimating Korn constant: {str(e)}")
        return "Error", None, time.time() - start_time
