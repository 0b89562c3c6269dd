"""
Time integration of a surface Navier-Stokes configuration.

Writes diagnostics.csv, geometry.csv, snapshots/ and final_field.npz into the
run directory and checks the run against the energy and conservation laws.
"""
import math
import os
import time

import numpy as np
from rich.console import Console

from config.config import CONSERVATION_TOL, ENERGY_SLACK
from utils.dynamics_utils import (
    energy_is_monotone,
    fit_decay_rate,
    initial_state,
    run,
    verify_energy_identity,
    verify_killing_conservation,
)
from utils.error_utils import SimulationError
from utils.io_utils import save_field, write_geometry_csv

console = Console()


def summarize_run(result, config):
    """
    Summary metrics and pass/fail verdict of a finished run.

    A run passes when its energy never grows, the equilibrium components
    stay within the drift allowance, the energy-identity residual is within
    `energy_identity_tol` and every sampled divergence residual is within
    `projection_tol` relative to max(‖u₀‖, 1).

    Returns:
        tuple: (passed, metrics dict)
    """
    series = result.diagnostics
    state = result.state
    fit = fit_decay_rate(series, config.fit_window)
    drift = verify_killing_conservation(series, result.basis)
    monotone = energy_is_monotone(series, slack=ENERGY_SLACK)
    allowed_drift = CONSERVATION_TOL * max(result.initial_norm, 1.0) * max(state.t, 1.0)
    divergence = float(np.max(series.column("div_residual")))
    solenoidal = divergence <= config.projection_tol * max(result.initial_norm, 1.0)
    metrics = {
        "Boundary condition": config.bc.label,
        "Steps": state.step_index,
        "Final time": state.t,
        "Final energy": series.column("energy")[-1],
        "Equilibrium fields": len(result.basis),
        "Distance to equilibrium": series.column("dist_to_equilibrium")[-1],
        "Decay fit": fit.status,
        "Energy monotone": monotone,
        "Killing drift": drift,
        "Max divergence residual": divergence,
    }
    if fit.status == "ok":
        metrics["Decay rate"] = fit.beta
        metrics["Fit r2"] = fit.r_squared
    identity_ok = True
    if len(series) >= 4:
        residual = verify_energy_identity(series)
        metrics["Energy identity residual"] = residual
        identity_ok = residual <= config.energy_identity_tol
    return monotone and drift <= allowed_drift and solenoidal and identity_ok, metrics


def run_simulation(loaded, directory):
    """
    Integrate a loaded simulation config into a prepared run directory.

    Args:
        loaded (LoadedConfig): Resolved configuration
        directory (str): Run directory holding the manifest

    Returns:
        tuple: (result, metrics, duration)
    """
    start_time = time.time()
    config = loaded.config
    try:
        console.print()
        with console.status("Building geometry and operator", spinner="dots", spinner_style="white"):
            op = config.operator
            write_geometry_csv(os.path.join(directory, "geometry.csv"), op.geom)
        console.print(f"Operator assembled ({op.grid.n_dof} unknowns, {config.bc.label})")

        with console.status("Computing equilibrium basis", spinner="dots", spinner_style="white"):
            basis = config.equilibria(op)
        console.print(f"Equilibrium basis ready ({len(basis)} fields, {basis.source})")

        with console.status("Preparing initial condition", spinner="dots", spinner_style="white"):
            state = initial_state(config, op, basis)
        console.print(f"Initial condition ready ({config.initial.kind})")

        steps = math.ceil(config.t_end / config.dt)
        with console.status(f"Integrating to t={config.t_end:g} (about {steps} steps)", spinner="dots", spinner_style="white"):
            result = run(config, out_dir=directory, state=state, basis=basis)
            save_field(os.path.join(directory, "final_field.npz"), result.state.u)
        console.print("Integration finished")

        with console.status("Checking diagnostics", spinner="dots", spinner_style="white"):
            passed, metrics = summarize_run(result, config)
        console.print("Diagnostics checked")

        metrics["Output"] = directory
        return ("Success" if passed else "Failed"), metrics, time.time() - start_time
    except KeyboardInterrupt:
        console.print("\n[bold yellow]Simulation cancelled by user.")
        return "Cancelled", None, time.time() - start_time
    except SimulationError as e:
        console.print(f"\n[bold red]Simulation aborted: {str(e)}")
        metrics = {"Output": directory}
        if e.last_sample:
            metrics["Last sample time"] = e.last_sample["t"]
            metrics["Last energy"] = e.last_sample["energy"]
        return "Failed", metrics, time.time() - start_time
    except Exception as e:
        console.print(f"\n[bold red]Error running simulation: {str(e)}")
        return "Error", None, time.time() - start_time
