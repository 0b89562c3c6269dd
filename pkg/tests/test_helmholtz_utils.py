"""
Test suite for the Neumann Poisson solver and the Helmholtz projection.
"""
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from utils.dynamics_utils import random_field
from utils.error_utils import FieldError
from utils.geometry_utils import GeometrySpec, build_geometry
from utils.grid_utils import FaceField, rotation_field, staggered_grid
from utils.helmholtz_utils import (
    HelmholtzProjector,
    NeumannPoissonProblem,
    helmholtz_project,
    helmholtz_projector,
    solve_neumann_poisson,
)
from utils.identity_utils import neumann_poisson_residual
from utils.tensor_utils import ScalarField, VectorField


@pytest.fixture(params=["disk", "cap", "cylinder"])
def grid(request):
    return staggered_grid(build_geometry(GeometrySpec(kind=request.param, n1=12, n2=12)))


def sample(grid, seed):
    return random_field(grid, np.random.default_rng(seed))


class TestProjector:
    """Test algebraic properties of the projection."""

    @pytest.mark.parametrize("method", ["direct", "cg"])
    def test_output_is_solenoidal(self, grid, method):
        result = helmholtz_project(sample(grid, 0), tol=1e-12, method=method)
        assert result.residual_div < 1e-8
        assert result.residual_flux == 0.0
        assert abs(grid.scalar_mean(result.potential.values)) < 1e-10

    def test_idempotent(self, grid):
        projector = helmholtz_projector(grid, method="direct", tol=1e-12)
        px = projector(sample(grid, 1).to_vector())
        assert grid.norm(projector(px) - px) < 1e-10 * grid.norm(px)

    def test_annihilates_gradients(self, grid):
        projector = helmholtz_projector(grid, method="direct", tol=1e-12)
        gradient = grid.grad @ np.random.default_rng(2).standard_normal(grid.n_cells)
        assert grid.norm(projector(gradient)) < 1e-8 * grid.norm(gradient)

    def test_symmetric(self, grid):
        projector = helmholtz_projector(grid, method="direct", tol=1e-12)
        x, y = sample(grid, 3).to_vector(), sample(grid, 4).to_vector()
        lhs, rhs = grid.inner(projector(x), y), grid.inner(x, projector(y))
        assert abs(lhs - rhs) < 1e-10 * grid.norm(x) * grid.norm(y)

    def test_keeps_rotation(self, grid):
        z = rotation_field(grid).to_vector()
        projector = helmholtz_projector(grid, method="direct", tol=1e-12)
        assert np.allclose(projector(z), z, atol=1e-10)

    def test_cell_field_input(self, grid):
        u = VectorField.from_function(grid.geom, lambda s, phi: (0.0 * s, np.cos(phi)))
        result = helmholtz_project(u, tol=1e-12, method="direct")
        assert isinstance(result.projected, FaceField)
        assert result.cell_field.components.shape == (2,) + grid.geom.shape

    def test_unknown_method(self, grid):
        with pytest.raises(ValueError, match="Unknown Poisson method"):
            HelmholtzProjector(grid, method="multigrid")

    def test_compatibility_slack(self, grid):
        offset = np.ones(grid.n_cells)
        strict = HelmholtzProjector(grid, method="direct", compat_tol=1e-8)
        loose = HelmholtzProjector(grid, method="direct", compat_tol=2.0)
        strict.potential(offset)
        loose.potential(offset)
        assert strict.corrections == 1
        assert loose.corrections == 0
        x = sample(grid, 5).to_vector()
        strict.project_vector(x)
        assert strict.corrections == 1

    def test_rejects_scalars(self, grid):
        with pytest.raises(FieldError, match="Cannot project"):
            helmholtz_project(ScalarField.zeros(grid.geom))


class TestNeumannPoisson:
    """Test the Neumann problem against closed-form solutions."""

    def test_flux_count_must_match(self):
        geom = build_geometry(GeometrySpec(kind="cylinder", n1=8, n2=8))
        with pytest.raises(FieldError, match="boundary circles"):
            NeumannPoissonProblem(rhs=ScalarField.zeros(geom), flux=(np.zeros(8),))

    def test_compatibility_defect(self):
        geom = build_geometry(GeometrySpec(kind="disk", n1=8, n2=8))
        one = ScalarField.from_function(geom, lambda s, phi: 1.0 + 0.0 * s)
        problem = NeumannPoissonProblem(rhs=one, flux=(np.full(8, 0.5),))
        assert problem.compatibility_defect() == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("kind", ["disk", "cap", "cylinder"])
    def test_oracle_converges(self, kind):
        spec = GeometrySpec(kind=kind, n1=16, n2=16)
        coarse = neumann_poisson_residual(build_geometry(spec))
        fine = neumann_poisson_residual(build_geometry(spec.with_resolution(32)))
        assert coarse < 0.05
        assert fine < coarse

    def test_zero_data(self):
        geom = build_geometry(GeometrySpec(kind="cap", n1=8, n2=8))
        problem = NeumannPoissonProblem(rhs=ScalarField.zeros(geom), flux=(np.zeros(8),))
        solution = solve_neumann_poisson(problem)
        assert np.allclose(solution.values, 0.0)

    def test_incompatible_data_is_corrected(self):
        geom = build_geometry(GeometrySpec(kind="disk", n1=8, n2=8))
        one = ScalarField.from_function(geom, lambda s, phi: 1.0 + 0.0 * s)
        problem = NeumannPoissonProblem(rhs=one, flux=(np.zeros(8),))
        solution = solve_neumann_poisson(problem, method="direct")
        assert np.allclose(solution.values, 0.0, atol=1e-10)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
