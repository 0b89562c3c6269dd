"""
Time integration of the projected surface Navier-Stokes equations.

One step of the IMEX projection scheme:

  F*      = (1 + ω/2) Fⁿ − (ω/2) Fⁿ⁻¹,   Fⁿ = −(u ⋆ ∇)uⁿ,   ω = Δtⁿ / Δtⁿ⁻¹
  (2/Δt + A) uⁿ⁺¹ = (2/Δt − A) uⁿ + 2 P F*

followed by a clean-up projection. The first step uses F* = Fⁿ.
"""
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from rich.console import Console

from config.config import (
    CFL,
    COMPAT_TOL,
    DEFAULT_AMPLITUDE,
    DEFAULT_DT,
    DEFAULT_MU,
    DEFAULT_SEED,
    DEFAULT_T_END,
    DEGENERATE_NORM,
    EIGEN_TOL,
    ENERGY_IDENTITY_TOL,
    ENERGY_SLACK,
    FIT_WINDOW,
    KERNEL_TOL,
    OUTPUT_EVERY,
    POISSON_METHOD,
    POISSON_TOL,
    PROJECTION_TOL,
    RANDOM_MODES,
    RESOLVENT_METHOD,
    RESOLVENT_TOL,
    SNAPSHOT_EVERY,
    STOP_THRESHOLD,
)
from utils.error_utils import FieldError, SimulationError, SolverFailure
from utils.geometry_utils import GeometrySpec
from utils.grid_utils import FaceField, rotation_field
from utils.helmholtz_utils import helmholtz_projector
from utils.io_utils import load_field, write_diagnostics_csv, write_vtk
from utils.killing_utils import equilibrium_basis, killing_components, project_killing
from utils.stokes_utils import BoundaryCondition, build_operator, eigenpairs, solve_resolvent
from utils.tensor_utils import ScalarField

console = Console()

INITIAL_KINDS = ("random", "zero", "rotation", "eigenfield", "file")
MAX_HALVINGS = 30


@dataclass(frozen=True)
class InitialCondition:
    """
    Initial velocity.

    random: seeded smooth field, projected, optionally stripped of its
    equilibrium component, scaled to `amplitude`, plus `killing_weight`
    times the first unit equilibrium field. rotation: `amplitude` times the
    unit rotation field. eigenfield: normalized sum of the Stokes eigenfields
    at the 0-based `eigen_indices`, scaled to `amplitude`. file: `.npz`
    field at `path`, projected.
    """
    kind: str = "random"
    seed: int = DEFAULT_SEED
    amplitude: float = DEFAULT_AMPLITUDE
    killing_weight: float = 0.0
    remove_killing: bool = False
    eigen_indices: tuple = (1,)
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in INITIAL_KINDS:
            raise ValueError(f"Unknown initial condition '{self.kind}' (expected one of {', '.join(INITIAL_KINDS)})")
        if not math.isfinite(self.amplitude) or self.amplitude < 0.0:
            raise ValueError(f"amplitude must be finite and nonnegative, got {self.amplitude}")
        if self.kind == "file" and not self.path:
            raise ValueError("A file initial condition needs a path")
        indices = tuple(int(i) for i in self.eigen_indices)
        if self.kind == "eigenfield" and (not indices or min(indices) < 0):
            raise ValueError(f"eigen_indices must be nonnegative, got {self.eigen_indices}")
        object.__setattr__(self, "eigen_indices", indices)


@dataclass(frozen=True)
class SimulationConfig:
    geometry: GeometrySpec
    bc: BoundaryCondition
    mu: float = DEFAULT_MU
    dt: float = DEFAULT_DT
    t_end: float = DEFAULT_T_END
    initial: InitialCondition = field(default_factory=InitialCondition)
    advection: bool = True
    cfl: float = CFL
    output_every: int = OUTPUT_EVERY
    snapshot_every: int = SNAPSHOT_EVERY
    stop_threshold: float = STOP_THRESHOLD
    poisson_tol: float = POISSON_TOL
    poisson_method: str = POISSON_METHOD
    resolvent_tol: float = RESOLVENT_TOL
    resolvent_method: str = RESOLVENT_METHOD
    projection_tol: float = PROJECTION_TOL
    compat_tol: float = COMPAT_TOL
    eigen_tol: float = EIGEN_TOL
    kernel_tol: float = KERNEL_TOL
    energy_identity_tol: float = ENERGY_IDENTITY_TOL
    fit_window: float = FIT_WINDOW

    def __post_init__(self):
        for name in ("mu", "dt", "t_end", "cfl", "projection_tol", "compat_tol", "eigen_tol", "kernel_tol", "energy_identity_tol"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0.0:
                raise ValueError(f"{name} must be positive and finite, got {value}")
        if self.output_every < 1:
            raise ValueError(f"output_every must be at least 1, got {self.output_every}")
        if self.snapshot_every < 0:
            raise ValueError(f"snapshot_every must be nonnegative, got {self.snapshot_every}")
        if not 0.0 < self.fit_window <= 1.0:
            raise ValueError(f"fit_window must lie in (0, 1], got {self.fit_window}")

    @property
    def operator(self):
        return build_operator(self.geometry, self.bc, self.mu)

    @property
    def projector(self):
        return helmholtz_projector(self.operator.grid, method=self.poisson_method, tol=self.poisson_tol, compat_tol=self.compat_tol)

    def equilibria(self, op=None):
        return equilibrium_basis(op or self.operator, tol=self.kernel_tol, eigen_tol=self.eigen_tol)


@dataclass(frozen=True, eq=False)
class SimulationState:
    t: float
    u: FaceField
    pressure_potential: ScalarField
    previous_forcing: Optional[np.ndarray] = None
    previous_dt: Optional[float] = None
    step_index: int = 0


@dataclass
class Diagnostics:
    """Time series of the per-sample diagnostics."""
    killing_count: int = 0
    samples: list = field(default_factory=list)

    def __len__(self):
        return len(self.samples)

    def append(self, sample):
        self.samples.append(sample)

    def columns(self):
        names = ["t", "energy", "dissipation", "boundary_dissipation", "div_residual"]
        names += [f"killing_{i}" for i in range(self.killing_count)]
        return names + ["dist_to_equilibrium"]

    def to_rows(self):
        rows = []
        for sample in self.samples:
            row = [sample[name] for name in ("t", "energy", "dissipation", "boundary_dissipation", "div_residual")]
            rows.append(row + list(sample["killing"]) + [sample["dist_to_equilibrium"]])
        return rows

    def column(self, name):
        if name.startswith("killing_"):
            index = int(name.split("_")[1])
            return np.array([sample["killing"][index] for sample in self.samples])
        return np.array([sample[name] for sample in self.samples])

    def last_sample(self):
        return self.samples[-1] if self.samples else None


@dataclass(frozen=True, eq=False)
class DecayFit:
    beta: Optional[float]
    r_squared: Optional[float]
    status: str
    samples: int = 0


@dataclass(eq=False)
class RunResult:
    state: SimulationState
    diagnostics: Diagnostics
    snapshots: list
    basis: object
    target: FaceField
    initial_norm: float


def random_field(grid, rng, modes=RANDOM_MODES):
    """Seeded smooth field (not divergence-free) from a few low sine-cosine modes."""
    coefficients = rng.standard_normal((2, modes, modes + 1))
    phases = rng.uniform(0.0, 2.0 * np.pi, (2, modes, modes + 1))
    profile = grid.geom.profile
    length = profile.s1 - profile.s0

    def sample(component, s, phi):
        s_hat = (s - profile.s0) / length
        total = np.zeros(np.broadcast(s, phi).shape)
        for k in range(1, modes + 1):
            for m in range(modes + 1):
                weight = coefficients[component, k - 1, m] / (k * (m + 1))
                total += weight * np.sin(k * np.pi * s_hat) * np.cos(m * phi + phases[component, k - 1, m])
        return total

    # unit-frame amplitudes, so u² carries a 1/f
    return FaceField.sample(grid, lambda s, phi: (sample(0, s, phi), sample(1, s, phi) / profile.f(s)))


def initial_field(config, op=None, basis=None):
    """
    Build the projected initial velocity of a configuration.

    Returns:
        FaceField: Divergence-free, tangent initial field
    """
    op = op or config.operator
    grid = op.grid
    basis = basis if basis is not None else config.equilibria(op)
    projector = helmholtz_projector(grid, method=config.poisson_method, tol=config.poisson_tol, compat_tol=config.compat_tol)
    initial = config.initial

    if initial.kind == "zero":
        return FaceField.zeros(grid)
    if initial.kind == "rotation":
        rotation = rotation_field(grid)
        return rotation * (initial.amplitude / grid.norm(rotation.to_vector()))
    if initial.kind == "eigenfield":
        eigen = eigenpairs(op, max(initial.eigen_indices) + 1, tol=1e-10, seed=initial.seed)
        x = sum(eigen.eigenfields[i].to_vector() for i in initial.eigen_indices)
        return FaceField.from_vector(grid, initial.amplitude * x / grid.norm(x))
    if initial.kind == "file":
        loaded = load_field(initial.path, grid)
        return FaceField.from_vector(grid, projector(projector(loaded.to_vector())))

    # second pass removes the residual of the first potential solve
    x = projector(projector(random_field(grid, np.random.default_rng(initial.seed)).to_vector()))
    field_ = FaceField.from_vector(grid, x)
    if initial.remove_killing:
        field_ = project_killing(basis, field_)[1]
    norm = grid.norm(field_.to_vector())
    if norm > 0.0:
        field_ = field_ * (initial.amplitude / norm)
    if initial.killing_weight:
        if len(basis):
            field_ = field_ + basis.fields[0] * initial.killing_weight
        else:
            console.log("[bold yellow]killing_weight ignored: the equilibrium space is trivial")
    return field_


def initial_state(config, op=None, basis=None):
    op = op or config.operator
    u0 = initial_field(config, op, basis)
    return SimulationState(t=0.0, u=u0, pressure_potential=ScalarField.zeros(op.geom))


def stable_dt(state, config, dt):
    """Largest dt / 2^k not above the CFL bound cfl / max(|u¹|/Δs + |u²|/Δφ)."""
    rate = state.u.grid.cfl_rate(state.u)
    if rate <= 0.0:
        return dt
    bound = config.cfl / rate
    halvings = 0
    while dt > bound and halvings < MAX_HALVINGS:
        dt *= 0.5
        halvings += 1
    if halvings:
        console.log(f"[bold yellow]CFL bound {bound:.3e}: step reduced to {dt:.3e}")
    return dt


def step(state, config, dt=None):
    """
    Advance one IMEX projection step.

    Args:
        state (SimulationState): Current state
        config (SimulationConfig): Run configuration
        dt (float, optional): Requested step; defaults to config.dt and is
            halved until it satisfies the CFL bound

    Returns:
        SimulationState: State at t + dt

    Raises:
        SimulationError: If the new velocity is not finite
        SolverFailure: If the resolvent or potential solve misses its tolerance
    """
    op = config.operator
    grid = op.grid
    projector = config.projector
    dt = stable_dt(state, config, config.dt if dt is None else dt)
    x = state.u.to_vector()

    forcing = -grid.advection(x) if config.advection else np.zeros_like(x)
    if state.previous_forcing is None or state.previous_dt is None:
        extrapolated = forcing
    else:
        omega = dt / state.previous_dt
        extrapolated = (1.0 + 0.5 * omega) * forcing - 0.5 * omega * state.previous_forcing
    projected_forcing, potential = projector.project_vector(extrapolated)

    lam = 2.0 / dt
    rhs = lam * x - op.apply_vector(x) + 2.0 * projected_forcing
    try:
        candidate = solve_resolvent(op, lam, rhs, tol=config.resolvent_tol, method=config.resolvent_method).to_vector()
    except FieldError as e:
        raise SimulationError(f"Velocity became non-finite at t={state.t + dt:.6g}: {e}") from e
    x_new = projector(candidate)

    return SimulationState(
        t=state.t + dt,
        u=FaceField.from_vector(grid, x_new),
        pressure_potential=ScalarField(potential.reshape(grid.geom.shape), grid.geom),
        previous_forcing=forcing,
        previous_dt=dt,
        step_index=state.step_index + 1,
    )


def sample_diagnostics(state, op, basis, target):
    """
    Diagnostics of one state.

    `dissipation + boundary_dissipation` always equals a(u, u): for Navier
    slip 2μ‖D_u‖² and αμ‖u‖²_Σ, for perfect slip the interior and curvature
    parts of the perfect slip form.
    """
    grid = op.grid
    x = state.u.to_vector()
    total = op.form(x, x)
    if op.bc.mode == "navier":
        boundary = op.bc.alpha * op.mu * grid.boundary_energy(x)
    else:
        trace = grid.trace_u2 @ x
        boundary = op.mu * float(np.dot(grid.trace_weight * grid.trace_kappa * trace, trace))
    return {
        "t": float(state.t),
        "energy": 0.5 * grid.inner(x, x),
        "dissipation": total - boundary,
        "boundary_dissipation": boundary,
        "div_residual": grid.scalar_norm(grid.divergence(x)),
        "killing": killing_components(basis, state.u),
        "dist_to_equilibrium": grid.norm(x - target.to_vector()),
    }


def run(config, out_dir=None, state=None, basis=None):
    """
    Integrate a configuration to t_end.

    Stops early once the distance to the equilibrium P_E u₀ falls below
    `stop_threshold`. With an output directory the diagnostics CSV and the
    VTK snapshots are written there; the CSV is also flushed when the run
    aborts.

    Returns:
        RunResult: Final state, diagnostics, snapshot paths and the
            equilibrium data the distances refer to

    Raises:
        SimulationError: On any abort during integration, carrying the
            last recorded sample
    """
    op = config.operator
    basis = basis if basis is not None else config.equilibria(op)
    state = state or initial_state(config, op, basis)
    target = project_killing(basis, state.u)[0]
    initial_norm = op.grid.norm(state.u.to_vector())

    diagnostics = Diagnostics(killing_count=len(basis))
    diagnostics.append(sample_diagnostics(state, op, basis, target))
    snapshots = []
    if out_dir and config.snapshot_every:
        snapshots.append(_snapshot(out_dir, state))

    horizon = config.t_end * (1.0 - 1e-12)
    try:
        while state.t < horizon:
            dt = min(config.dt, config.t_end - state.t)
            state = step(state, config, dt)
            finished = state.t >= horizon
            if finished or state.step_index % config.output_every == 0:
                diagnostics.append(sample_diagnostics(state, op, basis, target))
            if out_dir and config.snapshot_every and (finished or state.step_index % config.snapshot_every == 0):
                snapshots.append(_snapshot(out_dir, state))
            if config.stop_threshold > 0.0 and diagnostics.last_sample()["dist_to_equilibrium"] < config.stop_threshold:
                if diagnostics.last_sample()["t"] != state.t:
                    diagnostics.append(sample_diagnostics(state, op, basis, target))
                break
    except (SimulationError, SolverFailure, FieldError) as e:
        if out_dir:
            write_diagnostics_csv(os.path.join(out_dir, "diagnostics.csv"), diagnostics)
        raise SimulationError(str(e), last_sample=diagnostics.last_sample()) from e

    if out_dir:
        write_diagnostics_csv(os.path.join(out_dir, "diagnostics.csv"), diagnostics)
    return RunResult(state, diagnostics, snapshots, basis, target, initial_norm)


def _snapshot(out_dir, state):
    path = os.path.join(out_dir, "snapshots", f"step_{state.step_index:06d}.vtk")
    return write_vtk(path, state.u, state.pressure_potential, title=f"slipflow t={state.t:.6g}")


def fit_decay_rate(series, window=FIT_WINDOW):
    """
    Exponential decay rate of the distance to equilibrium.

    Least-squares fit of log ‖u − P_E u₀‖ over the trailing `window`
    fraction of the samples; values below 1e-10 of the series maximum are
    treated as round-off and left out.

    Returns:
        DecayFit: β with fit quality r², status "ok"; or status
            "degenerate" (nothing to decay) / "insufficient" (too few points)
    """
    t = series.column("t")
    dist = series.column("dist_to_equilibrium")
    if len(dist) == 0 or np.max(dist) <= DEGENERATE_NORM:
        return DecayFit(beta=None, r_squared=None, status="degenerate")
    start = len(dist) - max(int(math.ceil(window * len(dist))), 1)
    t, dist = t[start:], dist[start:]
    keep = dist > 1e-10 * np.max(series.column("dist_to_equilibrium"))
    t, dist = t[keep], dist[keep]
    if len(t) < 3:
        return DecayFit(beta=None, r_squared=None, status="insufficient", samples=len(t))
    log_dist = np.log(dist)
    slope, intercept = np.polyfit(t, log_dist, 1)
    fitted = slope * t + intercept
    spread = float(np.sum((log_dist - np.mean(log_dist)) ** 2))
    r_squared = 1.0 - float(np.sum((log_dist - fitted) ** 2)) / spread if spread > 0.0 else 1.0
    return DecayFit(beta=float(-slope), r_squared=r_squared, status="ok", samples=len(t))


def verify_energy_identity(series, skip=2):
    """
    Relative residual of d/dt ‖u‖² = −2 a(u, u) along a run.

    With E = ½‖u‖² the check is |dE/dt + dissipation + boundary| from
    centered differences at the interior samples after the first `skip`,
    relative to the largest dissipation in the series.

    Returns:
        float: Largest relative residual (0.0 when nothing dissipates)
    """
    t = series.column("t")
    energy = series.column("energy")
    rate = series.column("dissipation") + series.column("boundary_dissipation")
    first = max(1, skip)
    if len(t) < first + 2:
        raise ValueError(f"Energy identity needs at least {first + 2} samples, got {len(t)}")
    derivative = (energy[first + 1 :] - energy[first - 1 : -2]) / (t[first + 1 :] - t[first - 1 : -2])
    residual = np.abs(derivative + rate[first:-1])
    scale = float(np.max(np.abs(rate)))
    if scale == 0.0:
        return float(np.max(residual))
    return float(np.max(residual) / scale)


def energy_is_monotone(series, slack=ENERGY_SLACK):
    """True when the energy never grows by more than slack·E₀ between samples."""
    energy = series.column("energy")
    return bool(np.all(np.diff(energy) <= slack * max(energy[0], np.finfo(float).tiny)))


def verify_killing_conservation(series, basis=None):
    """
    Largest drift |(u(t) | z_i)_M − (u₀ | z_i)_M| over the run.

    Raises:
        ValueError: If the basis does not match the recorded components
    """
    if basis is not None and len(basis) != series.killing_count:
        raise ValueError(f"Series records {series.killing_count} equilibrium components, basis has {len(basis)}")
    if not series.killing_count or not len(series):
        return 0.0
    drift = 0.0
    for i in range(series.killing_count):
        values = series.column(f"killing_{i}")
        drift = max(drift, float(np.max(np.abs(values - values[0]))))
    return drift
