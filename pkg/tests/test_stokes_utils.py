"""
Test suite for the weak Stokes operator, its resolvent and its spectrum.
"""
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from utils.geometry_utils import GeometrySpec, build_geometry
from utils.grid_utils import rotation_field
from utils.stokes_utils import (
    BoundaryCondition,
    StokesOperator,
    assemble_linearized,
    assemble_stokes,
    build_operator,
    eigenpairs,
    linearized_eigenvalues,
    solve_resolvent,
)

DISK = GeometrySpec(kind="disk", n1=10, n2=12)
CAP = GeometrySpec(kind="cap", n1=10, n2=12, theta_max=1.2)
HEMISPHERE = GeometrySpec(kind="cap", n1=10, n2=12, theta_max=np.pi / 2)


def stream_sample(op, seed):
    grid = op.grid
    return grid.stream @ np.random.default_rng(seed).standard_normal(grid.n_stream)


class TestBoundaryCondition:
    """Test boundary condition validation."""

    def test_unknown_mode(self):
        with pytest.raises(ValueError, match="Unknown boundary condition"):
            BoundaryCondition(mode="noslip")

    def test_negative_alpha(self):
        with pytest.raises(ValueError, match="nonnegative"):
            BoundaryCondition(alpha=-1.0)

    def test_nan_alpha(self):
        with pytest.raises(ValueError, match="finite"):
            BoundaryCondition(alpha=float("nan"))

    def test_labels(self):
        assert BoundaryCondition(mode="perfect").label == "perfect slip"
        assert "alpha=0.5" in BoundaryCondition(alpha=0.5).label


class TestStiffness:
    """Test the bilinear forms."""

    def test_viscosity_must_be_positive(self):
        with pytest.raises(ValueError, match="Viscosity"):
            StokesOperator(build_geometry(DISK), BoundaryCondition(), 0.0)

    @pytest.mark.parametrize("bc", [BoundaryCondition(alpha=0.0), BoundaryCondition(alpha=2.0), BoundaryCondition(mode="perfect")])
    def test_symmetric(self, bc):
        op = assemble_stokes(build_geometry(CAP), bc, 1.0)
        difference = op.stiffness - op.stiffness.T
        assert abs(difference).max() < 1e-12

    def test_navier_form_is_nonnegative(self):
        op = build_operator(CAP, BoundaryCondition(alpha=1.0), 1.0)
        for seed in range(3):
            x = stream_sample(op, seed)
            assert op.form(x, x) > 0.0

    def test_rotation_is_free_without_friction(self):
        op = build_operator(DISK, BoundaryCondition(alpha=0.0), 1.0)
        z = rotation_field(op.grid)
        assert abs(op.form(z, z)) < 1e-12
        assert op.grid.norm(op.apply(z).to_vector()) < 1e-10

    def test_friction_charges_rotation(self):
        mu, alpha = 0.5, 2.0
        op = build_operator(DISK, BoundaryCondition(alpha=alpha), mu)
        z = rotation_field(op.grid)
        assert op.form(z, z) == pytest.approx(alpha * mu * op.boundary_energy(z), rel=1e-10)
        assert op.form(z, z) > 0.0

    def test_assemble(self):
        op = build_operator(DISK, BoundaryCondition(), 1.0)
        stiffness, mass = op.assemble()
        assert stiffness.shape == (op.n_dof, op.n_dof)
        assert np.allclose(mass.diagonal(), op.grid.mass)


class TestResolvent:
    """Test the resolvent solve on the divergence-free subspace."""

    @pytest.mark.parametrize("bc", [BoundaryCondition(alpha=0.0), BoundaryCondition(alpha=1.0), BoundaryCondition(mode="perfect")])
    def test_direct_residual(self, bc):
        op = build_operator(CAP, bc, 1.0)
        grid = op.grid
        f = np.random.default_rng(7).standard_normal(grid.n_dof)
        lam = 10.0
        u = solve_resolvent(op, lam, f).to_vector()
        assert grid.scalar_norm(grid.divergence(u)) < 1e-10 * grid.norm(u)
        residual = lam * u + op.apply_vector(u) - op.projector(f)
        assert grid.norm(residual) < 1e-8 * grid.norm(op.projector(f))

    def test_iterative_matches_direct(self):
        op = build_operator(DISK, BoundaryCondition(alpha=1.0), 1.0)
        f = stream_sample(op, 8)
        direct = solve_resolvent(op, 5.0, f, method="direct").to_vector()
        iterative = solve_resolvent(op, 5.0, f, method="cg", tol=1e-11).to_vector()
        assert op.grid.norm(direct - iterative) < 1e-6 * op.grid.norm(direct)

    def test_rejects_nonpositive_lambda(self):
        op = build_operator(DISK, BoundaryCondition(), 1.0)
        with pytest.raises(ValueError, match="positive"):
            solve_resolvent(op, 0.0, np.zeros(op.n_dof))

    def test_unknown_method(self):
        op = build_operator(DISK, BoundaryCondition(), 1.0)
        with pytest.raises(ValueError, match="Unknown resolvent method"):
            solve_resolvent(op, 1.0, np.zeros(op.n_dof), method="gmres")


class TestEigenpairs:
    """Test the smallest Stokes eigenpairs."""

    @pytest.mark.parametrize("spec", [DISK, HEMISPHERE], ids=["disk", "hemisphere"])
    def test_free_slip_kernel(self, spec):
        op = build_operator(spec, BoundaryCondition(alpha=0.0), 1.0)
        eigen = eigenpairs(op, 4)
        values = eigen.eigenvalues
        assert np.all(np.diff(values) >= 0.0)
        assert abs(values[0]) <= 1e-6 * values[1]
        assert values[1] > 1e-3
        assert np.all(eigen.residuals <= 1e-8)

    def test_friction_removes_kernel(self):
        op = build_operator(DISK, BoundaryCondition(alpha=1.0), 1.0)
        eigen = eigenpairs(op, 3)
        assert eigen.eigenvalues[0] > 1e-3

    def test_eigenfields_are_orthonormal(self):
        op = build_operator(CAP, BoundaryCondition(alpha=0.5), 1.0)
        eigen = eigenpairs(op, 3)
        vectors = eigen.vectors
        gram = vectors.T @ (op.grid.mass[:, None] * vectors)
        assert np.allclose(gram, np.eye(3), atol=1e-8)

    def test_too_many_pairs(self):
        op = build_operator(DISK, BoundaryCondition(), 1.0)
        with pytest.raises(ValueError, match="requested"):
            eigenpairs(op, op.grid.n_stream)


class TestLinearized:
    """Test the linearization about a rotation."""

    def test_rotation_stays_in_kernel(self):
        op = build_operator(DISK, BoundaryCondition(alpha=0.0), 1.0)
        z = rotation_field(op.grid)
        linearized = assemble_linearized(op, z)
        assert linearized.defect < 1e-10
        assert op.grid.norm(linearized.apply_vector(z.to_vector())) < 1e-8 * op.grid.norm(z.to_vector())

    def test_spectrum_is_stable(self):
        op = build_operator(DISK, BoundaryCondition(alpha=0.0), 1.0)
        linearized = assemble_linearized(op, rotation_field(op.grid, 0.5))
        result = linearized_eigenvalues(linearized, 3)
        assert np.all(result.values.real >= -1e-6 * op.scale)
        assert np.all(result.residuals <= 1e-8)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
