"""
Property battery for the discrete calculus and the Helmholtz projection.

Convergence identities are evaluated on smooth test fields built from ambient
polynomials of the embedded surface, at three resolutions; each yields a
residual per resolution and a measured order. The test fields carry a power
of the warping function f, so their chart components stay smooth across a
pole.
"""
import math
from dataclasses import dataclass

import numpy as np

from config.config import COMPAT_TOL, EXACT_RESIDUAL, HELMHOLTZ_CHECK_TOL, IDENTITY_ORDER_BAND, MIN_RESOLUTION
from utils.error_utils import GeometryError
from utils.geometry_utils import (
    analytic_area,
    analytic_boundary_length,
    boundary_length,
    build_geometry,
    chart_area,
    embedding,
    metric_compatibility_residual,
)
from utils.grid_utils import FaceField, staggered_grid
from utils.helmholtz_utils import NeumannPoissonProblem, helmholtz_project, helmholtz_projector, solve_neumann_poisson
from utils.tensor_utils import (
    ScalarField,
    VectorField,
    advective_term,
    bochner_laplacian,
    conservative_advective_term,
    covariant_gradient,
    deformation,
    divergence_tensor,
    divergence_vec,
    flux_pairing,
    grad_scalar,
    inner_product_M,
    interior_mask,
    l2_norm,
    laplace_beltrami,
    outer,
    pairing_flat,
    ricci_apply,
    sharp,
    tensor_flux_pairing,
)


# coefficients of c0 + c1 x + c2 y + c3 z + c4 xy + c5 z²
SCALAR = (1.0, 0.6, -0.2, 0.5, 0.3, -0.25)
STREAM = (1.0, 0.5, -0.3, 0.2, 0.4, 0.2)
FIRST = ((1.0, 0.3, 0.0, 0.2, 0.0, 0.1), (0.5, 0.0, -0.4, 0.0, 0.3, 0.2))
SECOND = ((0.4, -0.2, 0.5, 0.0, 0.1, 0.0), (-0.3, 0.2, 0.0, 0.6, 0.0, -0.1))

CONVERGENCE_IDENTITIES = (
    "green_divergence",
    "green_deformation",
    "green_gradient",
    "green_outer",
    "deformation_identity",
    "commutator",
    "advection_forms",
    "metric_compatibility",
    "area",
    "boundary_length",
    "neumann_poisson",
    "helmholtz_gradient",
)
PASSING_STATUSES = ("exact", "converged", "within_tolerance")
HELMHOLTZ_CHECKS = ("helmholtz_idempotency", "helmholtz_annihilation", "helmholtz_symmetry", "helmholtz_divergence")


@dataclass(frozen=True)
class IdentityCheck:
    """Residuals of one identity on one geometry; `orders` has one entry per refinement."""
    geometry: str
    identity: str
    resolutions: tuple
    residuals: tuple
    orders: tuple
    status: str

    @property
    def passed(self):
        return self.status in PASSING_STATUSES

    @property
    def order(self):
        return self.orders[-1] if self.orders else None

    def rows(self):
        """CSV rows (geometry, identity, resolution, residual, order, status, passed)."""
        orders = (None,) + tuple(self.orders) if len(self.orders) < len(self.residuals) else tuple(self.orders)
        return [
            (self.geometry, self.identity, n, residual, "" if order is None else order, self.status, self.passed)
            for n, residual, order in zip(self.resolutions, self.residuals, orders)
        ]


def resolution_ladder(spec):
    """
    The GeometrySpec at half, full and double resolution.

    Raises:
        GeometryError: If the half resolution falls below the minimum
    """
    if spec.n1 // 2 < MIN_RESOLUTION or spec.n2 // 2 < MIN_RESOLUTION:
        raise GeometryError(f"Identity battery needs n1, n2 >= {2 * MIN_RESOLUTION}, got {spec.n1}x{spec.n2}")
    half_n2 = spec.n2 // 2 + (spec.n2 // 2) % 2
    return [spec.with_resolution(spec.n1 // 2, half_n2), spec, spec.with_resolution(2 * spec.n1, 2 * spec.n2)]


def measured_orders(resolutions, residuals):
    """log(r_coarse / r_fine) / log(n_fine / n_coarse) per refinement (None when a residual is zero)."""
    orders = []
    for (n_c, r_c), (n_f, r_f) in zip(zip(resolutions, residuals), zip(resolutions[1:], residuals[1:])):
        if r_c > 0.0 and r_f > 0.0:
            orders.append(math.log(r_c / r_f) / math.log(n_f / n_c))
        else:
            orders.append(None)
    return tuple(orders)


def convergence_status(residuals, orders, exact=EXACT_RESIDUAL, band=IDENTITY_ORDER_BAND):
    """
    Classify a refinement study by its finest residual and last order.

    Returns:
        str: "exact" (finest residual at round-off), "converged" (order
            inside the band), "superconvergent" (order above the band) or
            "failed" (order below the band or unmeasurable)
    """
    if residuals[-1] <= exact:
        return "exact"
    last = orders[-1] if orders else None
    if last is None or last < band[0]:
        return "failed"
    if last > band[1]:
        return "superconvergent"
    return "converged"


def convergence_passed(residuals, orders, exact=EXACT_RESIDUAL, band=IDENTITY_ORDER_BAND):
    """True for exact rows and orders inside the band."""
    return convergence_status(residuals, orders, exact, band) in PASSING_STATUSES


def _poly(c, x, y, z):
    value = c[0] + c[1] * x + c[2] * y + c[3] * z + c[4] * x * y + c[5] * z * z
    grad = np.array([c[1] + c[4] * y + 0.0 * x, c[2] + c[4] * x + 0.0 * y, c[3] + 2.0 * c[5] * z])
    return value, grad


def _dot(grad, tangent):
    return np.einsum("i...,i...->...", grad, tangent)


def scalar_test_function(geom, c=SCALAR):
    """fn(s, φ) = f⁴ Q(X)."""

    def fn(s, phi):
        position, _, _ = embedding(geom, s, phi)
        value, _ = _poly(c, *position)
        return geom.profile.f(s) ** 4 * value

    return fn


def gradient_test_function(geom, c=SCALAR):
    """Chart components of grad(f⁴ Q(X)): (∂_s, ∂_φ / f²)."""
    profile = geom.profile

    def fn(s, phi):
        position, d_s, d_phi = embedding(geom, s, phi)
        value, grad = _poly(c, *position)
        f, df = profile.f(s), profile.df(s)
        return 4.0 * f ** 3 * df * value + f ** 4 * _dot(grad, d_s), f ** 2 * _dot(grad, d_phi)

    return fn


def vector_test_function(geom, pair=FIRST):
    """(u¹, u²) = (f⁵ A(X), f⁴ B(X))."""
    profile = geom.profile

    def fn(s, phi):
        position, _, _ = embedding(geom, s, phi)
        a, _ = _poly(pair[0], *position)
        b, _ = _poly(pair[1], *position)
        f = profile.f(s)
        return f ** 5 * a, f ** 4 * b

    return fn


def solenoidal_test_function(geom, c=STREAM):
    """Divergence-free field of the stream function ψ = f⁶ P(X): u¹ = −ψ_φ / f, u² = ψ_s / f."""
    profile = geom.profile

    def fn(s, phi):
        position, d_s, d_phi = embedding(geom, s, phi)
        value, grad = _poly(c, *position)
        f, df = profile.f(s), profile.df(s)
        return -f ** 5 * _dot(grad, d_phi), 6.0 * f ** 4 * df * value + f ** 5 * _dot(grad, d_s)

    return fn


def _relative(difference, *terms):
    scale = sum(abs(term) for term in terms)
    return abs(difference) / scale if scale > 0.0 else abs(difference)


def green_divergence_residual(geom):
    """(div u, φ)_M = (u·ν, φ)_Σ − (u | grad φ)_M."""
    u = VectorField.from_function(geom, vector_test_function(geom))
    phi = ScalarField.from_function(geom, scalar_test_function(geom))
    lhs = inner_product_M(divergence_vec(u), phi)
    flux = flux_pairing(u, phi)
    volume = inner_product_M(u, grad_scalar(phi))
    return _relative(lhs - flux + volume, lhs, flux, volume)


def _green_tensor_residual(tensor, v):
    lhs = inner_product_M(divergence_tensor(tensor), v)
    flux = tensor_flux_pairing(tensor, v)
    volume = pairing_flat(tensor, covariant_gradient(v))
    return _relative(lhs - flux + volume, lhs, flux, volume)


def green_tensor_residual(geom, kind):
    """
    (div S, v)_M = (S_♭ν, v)_Σ − (S_♭ | ∇v)_M for S = 2D(u), (∇u)^♯ or u ⊗ u.

    Args:
        kind (str): "deformation", "gradient" or "outer"
    """
    u = VectorField.from_function(geom, vector_test_function(geom, FIRST))
    v = VectorField.from_function(geom, vector_test_function(geom, SECOND))
    if kind == "deformation":
        tensor = deformation(u)[1] * 2.0
    elif kind == "gradient":
        tensor = sharp(covariant_gradient(u))
    elif kind == "outer":
        tensor = outer(u, u)
    else:
        raise ValueError(f"Unknown Green tensor '{kind}'")
    return _green_tensor_residual(tensor, v)


def _masked_relative(lhs, rhs, mask):
    scale = l2_norm(rhs, mask)
    difference = l2_norm(lhs - rhs, mask)
    return difference / scale if scale > 0.0 else difference


def deformation_identity_residual(geom):
    """2 div D(u) = Δ_M u + Ric♯u for divergence-free u, away from poles and edges."""
    u = VectorField.from_function(geom, solenoidal_test_function(geom))
    lhs = divergence_tensor(deformation(u)[1]) * 2.0
    rhs = bochner_laplacian(u) + ricci_apply(u)
    return _masked_relative(lhs, rhs, interior_mask(geom))


def commutator_residual(geom):
    """Δ_M grad φ = grad Δ_B φ + Ric♯ grad φ, away from poles and edges."""
    phi = ScalarField.from_function(geom, scalar_test_function(geom))
    gradient = grad_scalar(phi)
    lhs = bochner_laplacian(gradient)
    rhs = grad_scalar(laplace_beltrami(phi)) + ricci_apply(gradient)
    return _masked_relative(lhs, rhs, interior_mask(geom))


def advection_forms_residual(geom):
    """∇_u u = div(u ⊗ u) for divergence-free u, away from poles and edges."""
    u = VectorField.from_function(geom, solenoidal_test_function(geom))
    return _masked_relative(conservative_advective_term(u), advective_term(u), interior_mask(geom))


def neumann_oracle(geom):
    """
    Closed-form Neumann problem of a preset surface.

    disk: φ = r⁴/4, Δφ = 4r², ∂_νφ = R³; cap: φ = cos θ, Δφ = −2 cos θ,
    ∂_νφ = −sin θ_max; cylinder: φ = cos(πz/H), Δφ = −(π/H)² φ, ∂_νφ = 0.

    Returns:
        tuple: (NeumannPoissonProblem, exact solution as a ScalarField)
    """
    profile = geom.profile
    s = geom.coords[0]
    n2 = geom.n2
    if profile.name == "disk":
        exact = s ** 4 / 4.0
        rhs = 4.0 * s ** 2
        flux = (np.full(n2, profile.s1 ** 3),)
    elif profile.name == "cap":
        exact = np.cos(s)
        rhs = -2.0 * np.cos(s)
        flux = (np.full(n2, -math.sin(profile.s1)),)
    elif profile.name == "cylinder":
        k = math.pi / (profile.s1 - profile.s0)
        exact = np.cos(k * (s - profile.s0))
        rhs = -k * k * exact
        flux = (np.zeros(n2), np.zeros(n2))
    else:
        raise GeometryError(f"No Neumann oracle for chart '{profile.name}'")
    problem = NeumannPoissonProblem(rhs=ScalarField(rhs, geom), flux=flux)
    return problem, ScalarField(exact, geom)


def neumann_poisson_residual(geom, tol=1e-12, method="direct"):
    """Relative L² error of the zero-mean Neumann solution against its oracle."""
    problem, exact = neumann_oracle(geom)
    grid = staggered_grid(geom)
    # closed-form data is compatible only up to quadrature error
    solution = solve_neumann_poisson(problem, tol=tol, method=method, compat_tol=1e-2)
    reference = exact.values.ravel() - grid.scalar_mean(exact.values)
    error = grid.scalar_norm(solution.values.ravel() - reference)
    return error / grid.scalar_norm(reference)


def helmholtz_gradient_residual(geom, tol=1e-12, method="direct"):
    """‖P_H(grad φ)‖ / ‖grad φ‖ for a sampled analytic gradient."""
    grid = staggered_grid(geom)
    x = FaceField.sample(grid, gradient_test_function(geom)).to_vector()
    projected = helmholtz_projector(grid, method=method, tol=tol)(x)
    return grid.norm(projected) / grid.norm(x)


def identity_residual(identity, geom, method="direct", tol=1e-12):
    """Residual of a named convergence identity on one geometry."""
    spec = geom.spec
    if identity == "green_divergence":
        return green_divergence_residual(geom)
    if identity.startswith("green_"):
        return green_tensor_residual(geom, identity.split("_", 1)[1])
    if identity == "deformation_identity":
        return deformation_identity_residual(geom)
    if identity == "commutator":
        return commutator_residual(geom)
    if identity == "advection_forms":
        return advection_forms_residual(geom)
    if identity == "metric_compatibility":
        return metric_compatibility_residual(geom)
    if identity == "area":
        exact = analytic_area(spec)
        return abs(chart_area(geom) - exact) / exact
    if identity == "boundary_length":
        exact = analytic_boundary_length(spec)
        return abs(boundary_length(geom) - exact) / exact
    if identity == "neumann_poisson":
        return neumann_poisson_residual(geom, tol=tol, method=method)
    if identity == "helmholtz_gradient":
        return helmholtz_gradient_residual(geom, tol=tol, method=method)
    raise ValueError(f"Unknown identity '{identity}'")


def convergence_checks(spec, identities=CONVERGENCE_IDENTITIES, method="direct", tol=1e-12):
    """
    Evaluate identities at half, full and double resolution.

    Returns:
        list: One IdentityCheck per identity
    """
    ladder = resolution_ladder(spec)
    geometries = [build_geometry(level) for level in ladder]
    resolutions = tuple(level.n1 for level in ladder)
    checks = []
    for identity in identities:
        residuals = tuple(float(identity_residual(identity, geom, method=method, tol=tol)) for geom in geometries)
        orders = measured_orders(resolutions, residuals)
        checks.append(
            IdentityCheck(
                geometry=spec.kind,
                identity=identity,
                resolutions=resolutions,
                residuals=residuals,
                orders=orders,
                status=convergence_status(residuals, orders),
            )
        )
    return checks


def helmholtz_checks(spec, samples, seed=0, method="cg", tol=1e-10, threshold=HELMHOLTZ_CHECK_TOL, compat_tol=COMPAT_TOL):
    """
    Algebraic projection checks over randomized fields at one resolution.

    Each check reports the largest residual over `samples` random fields:
    idempotency ‖P(Px) − Px‖/‖x‖, annihilation ‖P grad φ‖/‖grad φ‖,
    symmetry |(Px, y)_M − (x, Py)_M|/(‖x‖‖y‖) and the relative divergence
    of the output.

    Returns:
        list: One IdentityCheck per check
    """
    from utils.dynamics_utils import random_field

    geom = build_geometry(spec)
    grid = staggered_grid(geom)
    projector = helmholtz_projector(grid, method=method, tol=tol, compat_tol=compat_tol)
    rng = np.random.default_rng(seed)
    worst = dict.fromkeys(HELMHOLTZ_CHECKS, 0.0)
    for _ in range(int(samples)):
        x = random_field(grid, rng).to_vector()
        y = random_field(grid, rng).to_vector()
        px, py = projector(x), projector(y)
        gradient = grid.grad @ rng.standard_normal(grid.n_cells)

        results = {
            "helmholtz_idempotency": grid.norm(projector(px) - px) / grid.norm(x),
            "helmholtz_annihilation": grid.norm(projector(gradient)) / grid.norm(gradient),
            "helmholtz_symmetry": abs(grid.inner(px, y) - grid.inner(x, py)) / (grid.norm(x) * grid.norm(y)),
            "helmholtz_divergence": helmholtz_project(FaceField.from_vector(grid, x), tol=tol, method=method, compat_tol=compat_tol).residual_div,
        }
        for name, value in results.items():
            worst[name] = max(worst[name], float(value))
    return [
        IdentityCheck(
            geometry=spec.kind,
            identity=name,
            resolutions=(spec.n1,),
            residuals=(worst[name],),
            orders=(),
            status="within_tolerance" if worst[name] <= threshold else "failed",
        )
        for name in HELMHOLTZ_CHECKS
    ]
