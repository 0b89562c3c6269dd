"""
Test suite for the discrete intrinsic calculus on the cell-centered grid.
"""
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from utils.error_utils import FieldError
from utils.geometry_utils import GeometrySpec, build_geometry
from utils.tensor_utils import (
    ScalarField,
    TensorField11,
    VectorField,
    covariant_gradient,
    deformation,
    divergence_vec,
    grad_scalar,
    inner_product_M,
    inner_product_Sigma,
    interior_mask,
    l2_norm,
    laplace_beltrami,
    navier_boundary_residual,
    partial_phi,
)


@pytest.fixture
def disk():
    return build_geometry(GeometrySpec(kind="disk", n1=12, n2=16))


@pytest.fixture
def cap():
    return build_geometry(GeometrySpec(kind="cap", n1=12, n2=16, theta_max=1.2))


def rotation(geom):
    return VectorField.from_function(geom, lambda s, phi: (0.0 * s, 1.0 + 0.0 * s))


class TestFieldTypes:
    """Test construction checks of the field types."""

    def test_wrong_shape(self, disk):
        with pytest.raises(FieldError, match="shape"):
            ScalarField(np.zeros((3, 3)), disk)

    def test_non_finite(self, disk):
        values = np.zeros(disk.shape)
        values[2, 3] = np.nan
        with pytest.raises(FieldError, match="non-finite"):
            ScalarField(values, disk)

    def test_arithmetic(self, disk):
        a = ScalarField.from_function(disk, lambda s, phi: s)
        b = ScalarField.from_function(disk, lambda s, phi: 2.0 * s)
        assert np.allclose((a + b).values, 3.0 * disk.coords[0])
        assert np.allclose((2.0 * a - b).values, 0.0)
        assert np.allclose((-a).values, -disk.coords[0])

    def test_pairing_type_mismatch(self, disk):
        with pytest.raises(FieldError, match="Cannot pair"):
            inner_product_M(ScalarField.zeros(disk), VectorField.zeros(disk))


class TestDerivatives:
    """Test derivative stencils against closed forms."""

    def test_partial_phi(self, disk):
        values = np.sin(disk.coords[1])
        error = np.max(np.abs(partial_phi(values, disk) - np.cos(disk.coords[1])))
        assert error < 5e-2

    def test_gradient_of_radius_squared(self, disk):
        phi = ScalarField.from_function(disk, lambda s, p: s ** 2)
        gradient = grad_scalar(phi)
        assert np.allclose(gradient.components[0], 2.0 * disk.coords[0], atol=1e-12)
        assert np.allclose(gradient.components[1], 0.0, atol=1e-12)

    def test_laplacian_of_radius_squared(self, disk):
        phi = ScalarField.from_function(disk, lambda s, p: s ** 2)
        assert np.allclose(laplace_beltrami(phi).values, 4.0, atol=1e-10)

    def test_divergence_of_rotation(self, cap):
        assert np.allclose(divergence_vec(rotation(cap)).values, 0.0, atol=1e-12)


class TestDeformation:
    """Test deformation tensors and boundary residuals."""

    def test_rotation_is_killing(self, disk, cap):
        for geom in (disk, cap):
            mixed, contravariant = deformation(rotation(geom))
            assert l2_norm(mixed) < 1e-12
            assert np.allclose(contravariant.components, 0.0, atol=1e-12)

    def test_gradient_of_rotation_is_skew(self, cap):
        grad = covariant_gradient(rotation(cap))
        assert isinstance(grad, TensorField11)
        f = np.sin(cap.coords[0])
        assert np.allclose(grad.components[0, 1], -f * np.cos(cap.coords[0]))

    def test_radial_field_is_not_killing(self, disk):
        u = VectorField.from_function(disk, lambda s, phi: (s, 0.0 * s))
        mixed, _ = deformation(u)
        assert l2_norm(mixed) > 0.1

    def test_navier_residual_of_rotation(self, disk):
        free = navier_boundary_residual(rotation(disk), alpha=0.0)
        assert np.allclose(free[0], 0.0, atol=1e-12)
        frictional = navier_boundary_residual(rotation(disk), alpha=1.0)
        assert np.allclose(frictional[0][1], 1.0)


class TestPairings:
    """Test L² pairings and masks."""

    def test_area_from_pairing(self, disk):
        one = ScalarField.from_function(disk, lambda s, phi: 1.0 + 0.0 * s)
        assert inner_product_M(one, one) == pytest.approx(np.pi, rel=1e-12)

    def test_boundary_pairing(self, disk):
        one = ScalarField.from_function(disk, lambda s, phi: 1.0 + 0.0 * s)
        assert inner_product_Sigma(one, one) == pytest.approx(2.0 * np.pi, rel=1e-12)

    def test_interior_mask(self, disk):
        mask = interior_mask(disk, margin=0.25)
        s = disk.coords[0]
        assert np.all((s[mask] >= 0.25) & (s[mask] <= 0.75))
        assert mask.any() and not mask.all()


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
