"""
Discrete intrinsic calculus on the cell-centered chart grid.

Fields carry contravariant chart components with the component axes first,
followed by the (n1, n2) grid axes. Derivatives in s are second-order central
differences, one-sided second-order at non-periodic edges; across a pole the
stencil reads the antipodal value with the parity of the quantity being
differenced. Derivatives in φ are periodic central differences.
"""
from dataclasses import dataclass

import numpy as np

from config.config import IDENTITY_MARGIN
from utils.error_utils import FieldError
from utils.geometry_utils import ChartGeometry


def _check(array, shape, label):
    array = np.asarray(array, dtype=float)
    if array.shape != shape:
        raise FieldError(f"{label} has shape {array.shape}, expected {shape}")
    if not np.all(np.isfinite(array)):
        raise FieldError(f"{label} contains non-finite values")
    return array


class _FieldArithmetic:
    """Linear-space operations shared by the field types."""

    _rank_shape = ()

    def _array(self):
        raise NotImplementedError

    def _new(self, array):
        return type(self)(array, self.geom)

    def __add__(self, other):
        return self._new(self._array() + other._array())

    def __sub__(self, other):
        return self._new(self._array() - other._array())

    def __mul__(self, scalar):
        return self._new(self._array() * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return self._new(-self._array())


@dataclass(frozen=True, eq=False)
class ScalarField(_FieldArithmetic):
    values: np.ndarray
    geom: ChartGeometry

    def __post_init__(self):
        object.__setattr__(self, "values", _check(self.values, self.geom.shape, "scalar field"))

    def _array(self):
        return self.values

    @classmethod
    def from_function(cls, geom, fn):
        """Sample fn(s, φ) at the cell centers."""
        values = np.asarray(fn(geom.coords[0], geom.coords[1]), dtype=float)
        return cls(np.broadcast_to(values, geom.shape).copy(), geom)

    @classmethod
    def zeros(cls, geom):
        return cls(np.zeros(geom.shape), geom)


@dataclass(frozen=True, eq=False)
class VectorField(_FieldArithmetic):
    components: np.ndarray
    geom: ChartGeometry

    def __post_init__(self):
        object.__setattr__(self, "components", _check(self.components, (2,) + self.geom.shape, "vector field"))

    def _array(self):
        return self.components

    @classmethod
    def from_function(cls, geom, fn):
        """Sample fn(s, φ) -> (u¹, u²) at the cell centers."""
        u1, u2 = fn(geom.coords[0], geom.coords[1])
        shape = geom.shape
        return cls(np.array([np.broadcast_to(u1, shape), np.broadcast_to(u2, shape)], dtype=float), geom)

    @classmethod
    def zeros(cls, geom):
        return cls(np.zeros((2,) + geom.shape), geom)


@dataclass(frozen=True, eq=False)
class TensorField11(_FieldArithmetic):
    """Mixed tensor, components[i, j] = T^i_j."""
    components: np.ndarray
    geom: ChartGeometry

    def __post_init__(self):
        object.__setattr__(self, "components", _check(self.components, (2, 2) + self.geom.shape, "(1,1)-tensor field"))

    def _array(self):
        return self.components


@dataclass(frozen=True, eq=False)
class TensorField20(_FieldArithmetic):
    """Contravariant tensor, components[i, j] = S^ij."""
    components: np.ndarray
    geom: ChartGeometry

    def __post_init__(self):
        object.__setattr__(self, "components", _check(self.components, (2, 2) + self.geom.shape, "(2,0)-tensor field"))

    def _array(self):
        return self.components


def _parity(s_slots):
    # chart components flip sign once per s-slot when crossing the pole
    return -1.0 if s_slots % 2 else 1.0


def partial_s(values, geom, parity=1.0):
    """
    ∂_s of grid values.

    Args:
        values (ndarray): Array of shape (n1, n2)
        geom (ChartGeometry): Geometry the values live on
        parity (float): Sign picked up by the quantity across the pole

    Returns:
        ndarray: Derivative at the cell centers
    """
    ds = geom.ds
    out = np.empty_like(values, dtype=float)
    out[1:-1] = (values[2:] - values[:-2]) / (2.0 * ds)
    if geom.has_pole:
        ghost = parity * np.roll(values[0], -(geom.n2 // 2))
        out[0] = (values[1] - ghost) / (2.0 * ds)
    else:
        out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * ds)
    out[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * ds)
    return out


def partial_phi(values, geom):
    """Periodic central ∂_φ of grid values of shape (n1, n2)."""
    return (np.roll(values, -1, axis=-1) - np.roll(values, 1, axis=-1)) / (2.0 * geom.dphi)


def covariant_gradient(u):
    """
    Covariant gradient u^i_{|j} = ∂_j u^i + Γ^i_jk u^k.

    Args:
        u (VectorField): Velocity field

    Returns:
        TensorField11: components[i, j] = u^i_{|j}
    """
    geom = u.geom
    comps = u.components
    grad = np.empty((2, 2) + geom.shape)
    for i in range(2):
        grad[i, 0] = partial_s(comps[i], geom, parity=_parity(i == 0))
        grad[i, 1] = partial_phi(comps[i], geom)
    grad += np.einsum("ijk...,k...->ij...", geom.christoffel, comps)
    return TensorField11(grad, geom)


def lower_raise(tensor):
    """(∇u)^T in mixed form: g^{ik} g_{jm} T^m_k."""
    geom = tensor.geom
    return np.einsum("ik...,jm...,mk...->ij...", geom.g_inv, geom.g, tensor.components)


def deformation(u):
    """
    Deformation tensors of a velocity field.

    Returns:
        tuple: (D_u as TensorField11, D(u) as TensorField20)
    """
    geom = u.geom
    grad = covariant_gradient(u)
    mixed = 0.5 * (grad.components + lower_raise(grad))
    raised = np.einsum("jk...,ik...->ij...", geom.g_inv, grad.components)
    contravariant = 0.5 * (raised + np.swapaxes(raised, 0, 1))
    return TensorField11(mixed, geom), TensorField20(contravariant, geom)


def sharp(tensor):
    """Raise the second slot of a (1,1)-tensor: S^ij = g^jk T^i_k."""
    geom = tensor.geom
    return TensorField20(np.einsum("jk...,ik...->ij...", geom.g_inv, tensor.components), geom)


def divergence_vec(u):
    """Conservative divergence (1/√g) ∂_i(√g u^i)."""
    geom = u.geom
    root = geom.sqrt_det_g
    flux_s = partial_s(root * u.components[0], geom, parity=1.0)
    flux_phi = partial_phi(root * u.components[1], geom)
    return ScalarField((flux_s + flux_phi) / root, geom)


def divergence_tensor(tensor):
    """
    (div S)^i = S^ij_{|j}, conservative in the contracted slot.

    Uses S^ij_{|j} = (1/√g) ∂_j(√g S^ij) + Γ^i_jk S^kj.
    """
    geom = tensor.geom
    root = geom.sqrt_det_g
    comps = tensor.components
    out = np.empty((2,) + geom.shape)
    for i in range(2):
        # √g counts as one s-slot
        flux_s = partial_s(root * comps[i, 0], geom, parity=_parity((i == 0) + 2))
        flux_phi = partial_phi(root * comps[i, 1], geom)
        out[i] = (flux_s + flux_phi) / root
    out += np.einsum("ijk...,kj...->i...", geom.christoffel, comps)
    return VectorField(out, geom)


def bochner_laplacian(u):
    """Δ_M u realized as div((∇u)^♯)."""
    return divergence_tensor(sharp(covariant_gradient(u)))


def ricci_apply(u):
    """(Ric♯ u)^i = g^ik Ric_kj u^j."""
    geom = u.geom
    return VectorField(np.einsum("ik...,kj...,j...->i...", geom.g_inv, geom.ricci, u.components), geom)


def grad_scalar(phi):
    """(grad φ)^i = g^ij ∂_j φ."""
    geom = phi.geom
    partials = np.array([partial_s(phi.values, geom, parity=1.0), partial_phi(phi.values, geom)])
    return VectorField(np.einsum("ij...,j...->i...", geom.g_inv, partials), geom)


def laplace_beltrami(phi):
    """Δ_B φ = div grad φ."""
    return divergence_vec(grad_scalar(phi))


def advective_term(u):
    """∇_u u = u^j u^i_{|j}."""
    grad = covariant_gradient(u)
    return VectorField(np.einsum("ij...,j...->i...", grad.components, u.components), u.geom)


def conservative_advective_term(u):
    """div(u ⊗ u); equals ∇_u u on divergence-free fields."""
    return divergence_tensor(outer(u, u))


def outer(u, v):
    """(u ⊗ v)^ij = u^i v^j."""
    return TensorField20(np.einsum("i...,j...->ij...", u.components, v.components), u.geom)


def _weights(geom, mask):
    weights = geom.volume_weights
    return weights if mask is None else np.where(mask, weights, 0.0)


def inner_product_M(a, b, mask=None):
    """
    L²(M) pairing of two fields of the same type.

    Args:
        a, b: ScalarField, VectorField, TensorField11 or TensorField20
        mask (ndarray, optional): Boolean cell mask restricting the integral

    Returns:
        float: Quadrature of the pointwise g-pairing against √g
    """
    if type(a) is not type(b):
        raise FieldError(f"Cannot pair {type(a).__name__} with {type(b).__name__}")
    geom = a.geom
    if isinstance(a, ScalarField):
        density = a.values * b.values
    elif isinstance(a, VectorField):
        density = np.einsum("ij...,i...,j...->...", geom.g, a.components, b.components)
    elif isinstance(a, TensorField11):
        density = np.einsum("ik...,jl...,ij...,kl...->...", geom.g, geom.g_inv, a.components, b.components)
    else:
        density = np.einsum("ik...,jl...,ij...,kl...->...", geom.g, geom.g, a.components, b.components)
    return float(np.sum(density * _weights(geom, mask)))


def pairing_flat(tensor, gradient):
    """(S_♭ | ∇v)_M = ∫ g_ik S^ij v^k_{|j}."""
    geom = tensor.geom
    density = np.einsum("ik...,ij...,kj...->...", geom.g, tensor.components, gradient.components)
    return float(np.sum(density * geom.volume_weights))


def l2_norm(field, mask=None):
    return float(np.sqrt(max(inner_product_M(field, field, mask), 0.0)))


def h1_seminorm(u):
    """‖∇u‖_{L²(M)}."""
    grad = covariant_gradient(u)
    return l2_norm(grad)


def trace(values, segment):
    """Second-order extrapolation of cell values onto a boundary circle (axis -2 is s)."""
    values = np.asarray(values)
    if segment.side > 0:
        return 1.5 * values[..., -1, :] - 0.5 * values[..., -2, :]
    return 1.5 * values[..., 0, :] - 0.5 * values[..., 1, :]


def inner_product_Sigma(a, b):
    """L²(Σ) pairing of two scalar or two vector fields via extrapolated traces."""
    geom = a.geom
    total = 0.0
    for segment in geom.boundary:
        if isinstance(a, ScalarField):
            density = trace(a.values, segment) * trace(b.values, segment)
        else:
            density = np.einsum("ij...,i...,j...->...", segment.g, trace(a.components, segment), trace(b.components, segment))
        total += float(np.sum(density * segment.weights))
    return total


def flux_pairing(u, phi):
    """(u·ν, φ)_Σ = ∫_Σ (u|ν)_g φ dσ_g."""
    total = 0.0
    for segment in u.geom.boundary:
        normal_trace = np.einsum("ij...,i...,j...->...", segment.g, trace(u.components, segment), segment.normal)
        total += float(np.sum(normal_trace * trace(phi.values, segment) * segment.weights))
    return total


def tensor_flux_pairing(tensor, v):
    """(S_♭ν, v)_Σ = ∫_Σ g_ik S^ij ν_j v^k dσ_g."""
    total = 0.0
    for segment in tensor.geom.boundary:
        normal_low = np.einsum("jl...,l...->j...", segment.g, segment.normal)
        density = np.einsum(
            "ik...,ij...,j...,k...->...",
            segment.g,
            trace(tensor.components, segment),
            normal_low,
            trace(v.components, segment),
        )
        total += float(np.sum(density * segment.weights))
    return total


def navier_boundary_residual(u, alpha):
    """
    Navier slip residual αu + P_Σ((∇u + [∇u]^T)ν) on every boundary circle.

    Returns:
        list: One (2, n2) array of contravariant components per segment
    """
    mixed, _ = deformation(u)
    residuals = []
    for segment in u.geom.boundary:
        u_b = trace(u.components, segment)
        stress = 2.0 * np.einsum("ij...,j...->i...", trace(mixed.components, segment), segment.normal)
        residual = alpha * u_b + stress
        normal_part = np.einsum("ij...,i...,j...->...", segment.g, residual, segment.normal)
        residuals.append(residual - normal_part * segment.normal)
    return residuals


def interior_mask(geom, margin=IDENTITY_MARGIN):
    """Cells at least margin·(s1 − s0) away from both ends of the chart."""
    profile = geom.profile
    length = profile.s1 - profile.s0
    s = geom.coords[0]
    return (s >= profile.s0 + margin * length) & (s <= profile.s1 - margin * length)
