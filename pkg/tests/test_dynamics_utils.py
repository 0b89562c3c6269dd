"""
Test suite for the time integrator and the run diagnostics.
"""
import dataclasses
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from scripts.simulate import summarize_run
from utils.dynamics_utils import (
    Diagnostics,
    InitialCondition,
    SimulationConfig,
    energy_is_monotone,
    fit_decay_rate,
    initial_field,
    initial_state,
    random_field,
    run,
    stable_dt,
    step,
    verify_energy_identity,
    verify_killing_conservation,
)
from utils.error_utils import SimulationError, SolverFailure
from utils.geometry_utils import GeometrySpec
from utils.grid_utils import FaceField, staggered_grid
from utils.killing_utils import analytic_killing_basis, project_killing
from utils.stokes_utils import BoundaryCondition

DISK = GeometrySpec(kind="disk", n1=10, n2=12)


def config(alpha=1.0, **kwargs):
    settings = dict(
        geometry=DISK,
        bc=BoundaryCondition(alpha=alpha),
        dt=0.01,
        t_end=0.05,
        initial=InitialCondition(amplitude=0.2),
        poisson_method="direct",
    )
    settings.update(kwargs)
    return SimulationConfig(**settings)


def synthetic_series(t, dist, energy=None, dissipation=None, killing=()):
    series = Diagnostics(killing_count=len(killing))
    energy = np.zeros_like(t) if energy is None else energy
    dissipation = np.zeros_like(t) if dissipation is None else dissipation
    for i, time in enumerate(t):
        series.append(
            {
                "t": float(time),
                "energy": float(energy[i]),
                "dissipation": float(dissipation[i]),
                "boundary_dissipation": 0.0,
                "div_residual": 0.0,
                "killing": np.array([values[i] for values in killing]),
                "dist_to_equilibrium": float(dist[i]),
            }
        )
    return series


def non_finite_resolvent(op, lam, f, **kwargs):
    return FaceField.from_vector(op.grid, np.full(op.grid.n_dof, np.nan))


def failing_resolvent(op, lam, f, **kwargs):
    raise SolverFailure("MINRES stopped with status 1 (residual 1.000e+00)", residual=1.0)


class TestConfiguration:
    """Test validation of run settings."""

    def test_unknown_initial_kind(self):
        with pytest.raises(ValueError, match="Unknown initial condition"):
            InitialCondition(kind="vortex")

    def test_negative_amplitude(self):
        with pytest.raises(ValueError, match="amplitude"):
            InitialCondition(amplitude=-1.0)

    def test_file_needs_path(self):
        with pytest.raises(ValueError, match="path"):
            InitialCondition(kind="file")

    def test_nonpositive_step(self):
        with pytest.raises(ValueError, match="dt"):
            config(dt=0.0)

    def test_fit_window_range(self):
        with pytest.raises(ValueError, match="fit_window"):
            config(fit_window=1.5)


class TestInitialFields:
    """Test initial velocity construction."""

    def test_random_field_is_seeded(self):
        grid = staggered_grid(config().operator.geom)
        first = random_field(grid, np.random.default_rng(3)).to_vector()
        second = random_field(grid, np.random.default_rng(3)).to_vector()
        assert np.array_equal(first, second)

    def test_random_initial_field(self):
        cfg = config(initial=InitialCondition(amplitude=2.0))
        u0 = initial_field(cfg)
        grid = u0.grid
        x = u0.to_vector()
        assert grid.norm(x) == pytest.approx(2.0, rel=1e-10)
        assert grid.scalar_norm(grid.divergence(x)) < 1e-8 * grid.norm(x)

    def test_rotation_initial_field(self):
        cfg = config(alpha=0.0, initial=InitialCondition(kind="rotation", amplitude=0.5))
        u0 = initial_field(cfg)
        assert u0.grid.norm(u0.to_vector()) == pytest.approx(0.5)

    def test_removed_equilibrium_component(self):
        cfg = config(alpha=0.0, initial=InitialCondition(remove_killing=True, killing_weight=0.3))
        op = cfg.operator
        basis = analytic_killing_basis(op.grid, 0.0)
        u0 = initial_field(cfg, op, basis)
        component = op.grid.inner(u0.to_vector(), basis.fields[0].to_vector())
        assert component == pytest.approx(0.3, rel=1e-10)

    def test_zero_initial_field(self):
        state = initial_state(config(initial=InitialCondition(kind="zero")))
        assert not np.any(state.u.to_vector())
        assert state.t == 0.0


class TestStepping:
    """Test the IMEX projection step."""

    def test_stokes_energy_decays(self):
        cfg = config(advection=False)
        state = initial_state(cfg)
        grid = state.u.grid
        energies = [grid.norm(state.u.to_vector())]
        for _ in range(3):
            state = step(state, cfg)
            energies.append(grid.norm(state.u.to_vector()))
        assert all(b < a for a, b in zip(energies, energies[1:]))
        assert state.step_index == 3
        assert state.t == pytest.approx(0.03)

    def test_step_stays_solenoidal(self):
        cfg = config()
        state = step(step(initial_state(cfg), cfg), cfg)
        grid = state.u.grid
        x = state.u.to_vector()
        assert grid.scalar_norm(grid.divergence(x)) < 1e-8 * grid.norm(x)
        assert state.previous_dt == pytest.approx(0.01)

    def test_cfl_halves_step(self):
        cfg = config(alpha=0.0, initial=InitialCondition(kind="rotation", amplitude=50.0))
        state = initial_state(cfg)
        dt = stable_dt(state, cfg, 1.0)
        assert dt < 1.0
        assert dt <= cfg.cfl / state.u.grid.cfl_rate(state.u)

    def test_non_finite_velocity_aborts(self, monkeypatch):
        import utils.dynamics_utils as dynamics

        cfg = config()
        state = initial_state(cfg)
        monkeypatch.setattr(dynamics, "solve_resolvent", non_finite_resolvent)
        with pytest.raises(SimulationError, match="non-finite"):
            step(state, cfg)


class TestRun:
    """Test full runs and their diagnostics."""

    def test_run_writes_diagnostics(self, tmp_path):
        cfg = config(snapshot_every=2)
        result = run(cfg, out_dir=str(tmp_path))
        assert len(result.diagnostics) == 6
        assert (tmp_path / "diagnostics.csv").exists()
        assert len(result.snapshots) == 4
        assert energy_is_monotone(result.diagnostics)

    def test_free_slip_conserves_rotation(self):
        cfg = config(alpha=0.0, initial=InitialCondition(killing_weight=0.5))
        result = run(cfg)
        assert result.diagnostics.killing_count == 1
        assert verify_killing_conservation(result.diagnostics, result.basis) < 1e-8

    def test_stop_threshold(self):
        cfg = config(initial=InitialCondition(kind="zero"), stop_threshold=1e-6, t_end=1.0)
        result = run(cfg)
        assert result.state.step_index == 1

    def test_energy_identity_along_stokes_run(self):
        cfg = config(advection=False, dt=0.002, t_end=0.02)
        result = run(cfg)
        assert verify_energy_identity(result.diagnostics) < 0.1

    @pytest.mark.parametrize("resolvent", [non_finite_resolvent, failing_resolvent])
    def test_abort_flushes_diagnostics(self, tmp_path, monkeypatch, resolvent):
        import utils.dynamics_utils as dynamics

        monkeypatch.setattr(dynamics, "solve_resolvent", resolvent)
        with pytest.raises(SimulationError) as exc_info:
            run(config(), out_dir=str(tmp_path))
        assert (tmp_path / "diagnostics.csv").exists()
        assert exc_info.value.last_sample["t"] == 0.0

    def test_energy_identity_is_second_order_in_time(self):
        initial = InitialCondition(kind="eigenfield", eigen_indices=(0, 1), amplitude=2e-3)

        def residual(dt, skip):
            # same first sample time t = 0.02 at both steps
            result = run(config(dt=dt, t_end=0.1, initial=initial))
            return verify_energy_identity(result.diagnostics, skip=skip)

        ratio = residual(0.01, 2) / residual(0.005, 4)
        assert 3.0 <= ratio <= 5.0

    def test_free_slip_converges_to_equilibrium(self):
        cfg = config(
            alpha=0.0,
            dt=0.02,
            t_end=20.0,
            stop_threshold=1e-6,
            initial=InitialCondition(amplitude=0.2, remove_killing=True, killing_weight=0.3),
        )
        op = cfg.operator
        basis = cfg.equilibria(op)
        state = initial_state(cfg, op, basis)
        expected = project_killing(basis, state.u)[0].to_vector()
        result = run(cfg, state=state, basis=basis)
        grid = op.grid
        assert result.state.t < cfg.t_end
        assert grid.norm(result.state.u.to_vector() - expected) <= 1e-3 * grid.norm(state.u.to_vector())
        fit = fit_decay_rate(result.diagnostics, cfg.fit_window)
        assert fit.status == "ok"
        assert fit.beta > 0.0
        assert fit.r_squared >= 0.99

    def test_friction_decays_to_rest(self):
        result = run(config(alpha=1.0, dt=0.02, t_end=2.0))
        fit = fit_decay_rate(result.diagnostics)
        assert fit.status == "ok"
        assert fit.beta > 0.0
        energy = result.diagnostics.column("energy")
        assert energy[-1] < 1e-2 * energy[0]

    def test_kernel_tolerance_changes_equilibria(self):
        perfect = config(bc=BoundaryCondition(mode="perfect"))
        loose = dataclasses.replace(perfect, kernel_tol=2.0)
        assert len(perfect.equilibria()) < 3
        assert len(loose.equilibria()) == 3


class TestRunVerdict:
    """Test the pass/fail verdict of a finished run."""

    def stokes_result(self):
        cfg = config(advection=False, dt=0.002, t_end=0.02)
        return cfg, run(cfg)

    def test_clean_run_passes(self):
        cfg, result = self.stokes_result()
        passed, metrics = summarize_run(result, cfg)
        assert passed
        assert metrics["Energy identity residual"] <= cfg.energy_identity_tol
        assert metrics["Max divergence residual"] <= cfg.projection_tol

    def test_energy_identity_threshold(self):
        cfg, result = self.stokes_result()
        passed, _ = summarize_run(result, dataclasses.replace(cfg, energy_identity_tol=1e-12))
        assert not passed

    def test_divergence_threshold(self):
        cfg, result = self.stokes_result()
        result.diagnostics.samples[-1]["div_residual"] = 1.0
        passed, metrics = summarize_run(result, cfg)
        assert not passed
        assert metrics["Max divergence residual"] == 1.0


class TestDiagnostics:
    """Test fits and checks on synthetic time series."""

    def test_decay_rate(self):
        t = np.linspace(0.0, 2.0, 41)
        fit = fit_decay_rate(synthetic_series(t, 3.0 * np.exp(-1.5 * t)), window=0.5)
        assert fit.status == "ok"
        assert fit.beta == pytest.approx(1.5, rel=1e-8)
        assert fit.r_squared == pytest.approx(1.0)

    def test_degenerate_decay(self):
        t = np.linspace(0.0, 1.0, 5)
        assert fit_decay_rate(synthetic_series(t, np.zeros_like(t))).status == "degenerate"

    def test_insufficient_samples(self):
        t = np.array([0.0, 0.1, 0.2, 0.3])
        fit = fit_decay_rate(synthetic_series(t, np.exp(-t)), window=0.5)
        assert fit.status == "insufficient"
        assert fit.beta is None

    def test_energy_identity(self):
        t = np.linspace(0.0, 1.0, 1001)
        series = synthetic_series(t, t, energy=0.5 * np.exp(-2.0 * t), dissipation=np.exp(-2.0 * t))
        assert verify_energy_identity(series) < 1e-5

    def test_energy_identity_needs_samples(self):
        t = np.array([0.0, 0.1, 0.2])
        with pytest.raises(ValueError, match="samples"):
            verify_energy_identity(synthetic_series(t, t))

    def test_monotone_energy(self):
        t = np.linspace(0.0, 1.0, 5)
        assert energy_is_monotone(synthetic_series(t, t, energy=np.exp(-t)))
        assert not energy_is_monotone(synthetic_series(t, t, energy=np.exp(t)))

    def test_killing_drift(self):
        t = np.linspace(0.0, 1.0, 4)
        series = synthetic_series(t, t, killing=(np.array([1.0, 1.0, 1.1, 0.95]),))
        assert verify_killing_conservation(series) == pytest.approx(0.1)
        basis = analytic_killing_basis(staggered_grid(config().operator.geom), 1.0)
        with pytest.raises(ValueError, match="basis"):
            verify_killing_conservation(series, basis)

    def test_columns(self):
        series = synthetic_series(np.array([0.0]), np.array([1.0]), killing=(np.array([0.2]),))
        assert series.columns() == [
            "t",
            "energy",
            "dissipation",
            "boundary_dissipation",
            "div_residual",
            "killing_0",
            "dist_to_equilibrium",
        ]
        assert series.to_rows()[0][5] == 0.2


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
