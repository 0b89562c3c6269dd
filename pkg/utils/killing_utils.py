"""
Equilibrium (Killing) fields, projection onto them and Korn constants.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import linalg
from rich.console import Console

from config.config import EIGEN_MAX_ITER, EIGEN_TOL, KERNEL_TOL
from utils.error_utils import KornError, SolverFailure
from utils.grid_utils import FaceField, StaggeredGrid, rotation_field, staggered_grid
from utils.solver_utils import subspace_iteration
from utils.stokes_utils import eigenpairs

console = Console()

SOURCES = ("analytic", "numeric")
ANGLE_WARNING = 1e-4


@dataclass(frozen=True, eq=False)
class KillingBasis:
    """
    L²(M)-orthonormal basis of the equilibrium space.

    `defect` is the largest ‖D_z‖ over the basis; it is 0.0 for an empty one.
    """
    fields: tuple
    source: str
    defect: float
    grid: StaggeredGrid

    def __len__(self):
        return len(self.fields)

    @property
    def vectors(self):
        if not self.fields:
            return np.zeros((self.grid.n_dof, 0))
        return np.column_stack([field.to_vector() for field in self.fields])

    def gram(self):
        vectors = self.vectors
        return vectors.T @ (self.grid.mass[:, None] * vectors)


def _grid_of(geom_or_grid):
    if isinstance(geom_or_grid, StaggeredGrid):
        return geom_or_grid
    return staggered_grid(geom_or_grid)


def _defect(grid, fields):
    if not fields:
        return 0.0
    return float(max(np.sqrt(grid.deformation_energy(field.to_vector())) for field in fields))


def analytic_killing_basis(geom_or_grid, alpha):
    """
    Rotation-field basis of E_α on the surfaces of revolution.

    Args:
        geom_or_grid (ChartGeometry or StaggeredGrid): Surface
        alpha (float): Navier friction coefficient

    Returns:
        KillingBasis: Empty for α > 0, the normalized rotation ∂_φ otherwise
    """
    grid = _grid_of(geom_or_grid)
    if alpha > 0.0:
        return KillingBasis(fields=(), source="analytic", defect=0.0, grid=grid)
    rotation = rotation_field(grid)
    field = rotation * (1.0 / grid.norm(rotation.to_vector()))
    return KillingBasis(fields=(field,), source="analytic", defect=_defect(grid, [field]), grid=grid)


def subspace_angle(first, second):
    """
    Largest principal angle between two bases in the L²(M) geometry.

    Returns:
        float: Angle in radians; π/2 when exactly one basis is empty
    """
    grid = first.grid
    if not len(first) and not len(second):
        return 0.0
    if not len(first) or not len(second):
        return float(np.pi / 2)
    root = np.sqrt(grid.mass)[:, None]
    return float(np.max(linalg.subspace_angles(root * first.vectors, root * second.vectors)))


def numeric_killing_basis(op, tol=KERNEL_TOL, count=4, eigen=None, eigen_tol=EIGEN_TOL):
    """
    Kernel of the Stokes operator from its smallest eigenpairs.

    Eigenpairs with eigenvalue ≤ tol·λ_next form the basis, where λ_next is
    the first eigenvalue above the kernel.

    Args:
        op (StokesOperator): Operator
        tol (float): Relative kernel threshold
        count (int): Eigenpairs computed when `eigen` is not given
        eigen (EigenResult, optional): Precomputed eigenpairs
        eigen_tol (float): Residual target of the eigenpairs computed here

    Returns:
        KillingBasis: Numeric kernel basis, re-orthonormalized
    """
    grid = op.grid
    eigen = eigen or eigenpairs(op, count, tol=eigen_tol)
    values = eigen.eigenvalues
    size = 0
    for i in range(len(values) - 1):
        if abs(values[i]) <= tol * values[i + 1]:
            size = i + 1
    if size == len(values) - 1 and len(values) > 1:
        console.log(f"[bold yellow]Kernel fills {size} of {len(values)} computed eigenpairs; request more eigenpairs")
    if not size:
        return KillingBasis(fields=(), source="numeric", defect=0.0, grid=grid)

    block = eigen.vectors[:, :size]
    root = np.sqrt(grid.mass)[:, None]
    orthonormal, _ = linalg.qr(root * block, mode="economic")
    fields = tuple(FaceField.from_vector(grid, column) for column in (orthonormal / root).T)
    basis = KillingBasis(fields=fields, source="numeric", defect=_defect(grid, fields), grid=grid)

    if op.bc.mode == "navier":
        reference = analytic_killing_basis(grid, op.bc.alpha)
        if len(reference) == len(basis):
            angle = subspace_angle(basis, reference)
            if angle > ANGLE_WARNING:
                console.log(f"[bold yellow]Numeric kernel deviates from the rotation field by {angle:.3e} rad")
    return basis


def equilibrium_basis(op, tol=KERNEL_TOL, eigen_tol=EIGEN_TOL):
    """
    Basis of the equilibria of an operator.

    Navier slip uses the analytic rotation basis, perfect slip the numeric
    kernel of the operator with kernel threshold `tol` and eigenpair
    residual target `eigen_tol`.
    """
    if op.bc.mode == "navier":
        return analytic_killing_basis(op.grid, op.bc.alpha)
    return numeric_killing_basis(op, tol=tol, eigen_tol=eigen_tol)


def project_killing(basis, u):
    """
    Split u into its E_α component and the L²(M)-orthogonal remainder.

    Args:
        basis (KillingBasis): Orthonormal basis
        u (FaceField): Field to split

    Returns:
        tuple: (u_parallel, u_perp) as FaceFields
    """
    grid = basis.grid
    x = u.to_vector()
    parallel = np.zeros_like(x)
    for field in basis.fields:
        z = field.to_vector()
        parallel += grid.inner(x, z) * z
    return FaceField.from_vector(grid, parallel), FaceField.from_vector(grid, x - parallel)


def killing_components(basis, u):
    """(u | z_i)_M for every basis field."""
    x = u.to_vector()
    return np.array([basis.grid.inner(x, field.to_vector()) for field in basis.fields])


def spectral_tail_fraction(field):
    """
    Share of the φ-Fourier energy carried by the highest third of the modes.

    Args:
        field (FaceField): Field to inspect

    Returns:
        float: Fraction in [0, 1]; 0.0 for the zero field
    """
    grid = field.grid
    rows = [
        np.sqrt(grid.f_f[1:-1])[:, None] * field.u1[1:-1],
        np.sqrt(grid.G_c * grid.f_c)[:, None] * field.u2,
    ]
    spectrum = sum(np.sum(np.abs(np.fft.rfft(row, axis=1)) ** 2, axis=0) for row in rows)
    total = float(np.sum(spectrum))
    if total == 0.0:
        return 0.0
    cutoff = int(np.ceil(2.0 * (len(spectrum) - 1) / 3.0))
    return float(np.sum(spectrum[cutoff + 1 :]) / total)


def _korn_matrices(op):
    grid = op.grid
    alpha = op.bc.alpha if op.bc.mode == "navier" else 0.0
    trace = grid.trace_u2
    numerator = grid.strain.T @ sp.diags(grid.strain_weight) @ grid.strain
    numerator = numerator + 0.5 * alpha * (trace.T @ sp.diags(grid.trace_weight) @ trace)
    denominator = sp.diags(grid.mass) + grid.gradient.T @ sp.diags(grid.gradient_weight) @ grid.gradient
    stream = grid.stream
    return (stream.T @ numerator @ stream).tocsc(), (stream.T @ denominator @ stream).tocsc()


def korn_ritz_value(op, basis, tol=1e-10, max_iter=EIGEN_MAX_ITER, seed=0):
    """
    Smallest restricted Ritz value of (‖D_u‖² + (α/2)‖u‖²_Σ) / (‖u‖² + ‖∇u‖²).

    The quotient runs over discretely divergence-free tangent fields that are
    L²(M)-orthogonal to the basis; the constraint is imposed through a
    bordered sparse LU in stream space.

    Returns:
        float: Smallest Ritz value of the constrained pencil
    """
    grid = op.grid
    numerator, denominator = _korn_matrices(op)
    dimension = grid.n_stream
    if len(basis):
        constraints = grid.stream.T @ (grid.mass[:, None] * basis.vectors)
        bordered = sp.bmat([[numerator, sp.csc_matrix(constraints)], [sp.csc_matrix(constraints.T), None]]).tocsc()
        extra = constraints.shape[1]
    else:
        bordered, extra = numerator, 0
    try:
        factor = spla.splu(bordered.tocsc())
    except RuntimeError as e:
        raise KornError(f"Restricted Korn operator is singular: {e}") from e

    def solve(block):
        padded = np.vstack([block, np.zeros((extra, block.shape[1]))])
        return factor.solve(padded)[:dimension]

    try:
        result = subspace_iteration(
            solve=solve,
            apply_a=lambda block: numerator @ block,
            apply_b=lambda block: denominator @ block,
            dimension=dimension,
            k=1,
            block_size=4,
            tol=tol,
            max_iter=max_iter,
            rng=np.random.default_rng(seed),
        )
    except SolverFailure as e:
        raise KornError(f"Restricted Korn iteration failed: {e}") from e
    return float(result.values[0])


def korn_constant(op, basis, tol=1e-10):
    """
    Korn constant C with ‖u‖_{H¹} ≤ C ‖D_u‖ on the complement of E_α.

    Args:
        op (StokesOperator): Operator fixing geometry and friction
        basis (KillingBasis): Fields excluded from the quotient

    Returns:
        float: C = 1/√ρ for the smallest restricted Ritz value ρ

    Raises:
        KornError: If ρ is not positive
    """
    value = korn_ritz_value(op, basis, tol=tol)
    if not value > tol:
        raise KornError(f"Restricted Korn Ritz value {value:.3e} is not positive")
    return float(1.0 / np.sqrt(value))
