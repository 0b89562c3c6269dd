"""
Neumann Poisson solver and the surface Helmholtz projection on the staggered grid.

The discrete projection subtracts the mass-weighted gradient of a potential
from the interior velocity dofs; boundary faces carry the Neumann data and
are set to zero in the projected field. With the gradient defined as the
negative adjoint of the divergence, the projection is M-orthogonal and
idempotent up to the Poisson solve tolerance.
"""
import functools
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla
from rich.console import Console

from config.config import COMPAT_TOL, POISSON_MAX_ITER, POISSON_METHOD, POISSON_TOL
from utils.error_utils import FieldError, SolverFailure
from utils.grid_utils import FaceField, cell_to_face, face_to_cell, staggered_grid
from utils.solver_utils import conjugate_gradient
from utils.tensor_utils import ScalarField, VectorField

console = Console()

METHODS = ("cg", "direct")


@dataclass(frozen=True, eq=False)
class NeumannPoissonProblem:
    """
    Δ_B φ = f in M, ∂_ν φ = h on Σ.

    `flux` holds one array of n2 outward normal derivatives per boundary
    circle, in the order of `geom.boundary`.
    """
    rhs: ScalarField
    flux: tuple

    def __post_init__(self):
        segments = self.rhs.geom.boundary
        if len(self.flux) != len(segments):
            raise FieldError(f"Expected flux data for {len(segments)} boundary circles, got {len(self.flux)}")
        flux = []
        for values in self.flux:
            values = np.broadcast_to(np.asarray(values, dtype=float), (self.rhs.geom.n2,)).copy()
            if not np.all(np.isfinite(values)):
                raise FieldError("Boundary flux contains non-finite values")
            flux.append(values)
        object.__setattr__(self, "flux", tuple(flux))

    @property
    def geom(self):
        return self.rhs.geom

    def compatibility_defect(self):
        """∫_M f dμ − ∫_Σ h dσ."""
        weights = self.geom.volume_weights
        interior = float(np.sum(self.rhs.values * weights))
        boundary = float(sum(np.sum(h * segment.weights) for h, segment in zip(self.flux, self.geom.boundary)))
        return interior - boundary


@dataclass(frozen=True, eq=False)
class HelmholtzResult:
    projected: FaceField
    potential: ScalarField
    residual_div: float
    residual_flux: float

    @property
    def cell_field(self):
        """Projected field averaged to the cell-centered grid."""
        return face_to_cell(self.projected)


class HelmholtzProjector:
    """
    Potential solver and projection for one staggered grid.

    Args:
        grid (StaggeredGrid): Grid whose poisson matrix is solved
        method (str): "cg" (Jacobi PCG with constant deflation) or "direct"
            (sparse LU with one pinned cell)
        tol (float): Relative residual target of the potential solve
        max_iter (int): PCG iteration cap
        compat_tol (float): Relative solvability slack of a right-hand side;
            larger defects are removed by the mean correction and counted
            in `corrections`
    """

    def __init__(self, grid, method=POISSON_METHOD, tol=POISSON_TOL, max_iter=POISSON_MAX_ITER, compat_tol=COMPAT_TOL):
        if method not in METHODS:
            raise ValueError(f"Unknown Poisson method '{method}' (expected one of {', '.join(METHODS)})")
        self.grid = grid
        self.method = method
        self.tol = tol
        self.max_iter = max_iter
        self.compat_tol = compat_tol
        self.corrections = 0
        self.matrix = grid.poisson
        self._inverse_diagonal = 1.0 / self.matrix.diagonal()
        self._lu = spla.splu(self.matrix[1:, 1:].tocsc()) if method == "direct" else None

    def _zero_mean(self, values):
        return values - self.grid.scalar_mean(values)

    def potential(self, cell_rhs):
        """
        Zero-mean φ with Δ_h φ = r for a compatible cell right-hand side r.

        Returns:
            tuple: (φ as a flat array, relative residual, iterations)
        """
        rhs = -self.grid.cell_mass * np.ravel(cell_rhs)
        defect = float(np.sum(rhs))
        if abs(defect) > self.compat_tol * float(np.sum(np.abs(rhs))):
            self.corrections += 1
            console.log(f"[bold yellow]Poisson right-hand side violates solvability by {defect:.3e}; mean removed")
        rhs = rhs - np.mean(rhs)
        if not np.any(rhs):
            return np.zeros_like(rhs), 0.0, 0
        if self._lu is not None:
            phi = np.concatenate([[0.0], self._lu.solve(rhs[1:])])
            iterations = 1
            residual = float(np.linalg.norm(self.matrix @ phi - rhs) / np.linalg.norm(rhs))
            if not np.isfinite(residual) or residual > max(self.tol, 1e-8):
                raise SolverFailure(f"Pinned Poisson factorization is inaccurate (residual {residual:.3e})", residual=residual)
        else:
            phi, residual, iterations = conjugate_gradient(
                lambda x: self.matrix @ x,
                rhs,
                tol=self.tol,
                max_iter=self.max_iter,
                precondition=lambda r: self._inverse_diagonal * r,
                project=lambda v: v - np.mean(v),
            )
        return self._zero_mean(phi), residual, iterations

    def project_vector(self, x):
        """
        Project interior dofs onto the discretely divergence-free subspace.

        Returns:
            tuple: (projected dofs, potential as a flat array)
        """
        phi, _, _ = self.potential(self.grid.divergence(x))
        return x - self.grid.grad @ phi, phi

    def __call__(self, x):
        return self.project_vector(x)[0]


@functools.lru_cache(maxsize=32)
def helmholtz_projector(grid, method=POISSON_METHOD, tol=POISSON_TOL, compat_tol=COMPAT_TOL):
    """Cached HelmholtzProjector of a grid."""
    return HelmholtzProjector(grid, method=method, tol=tol, compat_tol=compat_tol)


def solve_neumann_poisson(problem, tol=POISSON_TOL, method=POISSON_METHOD, compat_tol=COMPAT_TOL):
    """
    Solve the Neumann Poisson problem in the zero-mean gauge.

    The boundary flux enters the right-hand side of the cells adjacent to
    each boundary circle. A right-hand side that violates the solvability
    condition by more than the compatibility slack is corrected by its
    mean and the correction is logged.

    Args:
        problem (NeumannPoissonProblem): Right-hand side and flux data
        tol (float): Relative residual target
        method (str): "cg" or "direct"
        compat_tol (float): Relative solvability slack before a correction is logged

    Returns:
        ScalarField: Zero-mean potential at the cell centers

    Raises:
        SolverFailure: If the solver misses the tolerance
    """
    geom = problem.geom
    grid = staggered_grid(geom)
    rhs = problem.rhs.values.copy()
    for values, segment in zip(problem.flux, geom.boundary):
        row = -1 if segment.side > 0 else 0
        rhs[row] -= grid.f_f[segment.face] * values / (grid.f_c[row] * grid.ds)

    defect = problem.compatibility_defect()
    slack = compat_tol * (grid.scalar_norm(problem.rhs.values) + float(np.linalg.norm(np.concatenate(problem.flux))))
    if abs(defect) > slack:
        console.log(f"[bold yellow]Neumann data violates solvability by {defect:.3e}; subtracting {defect / np.sum(grid.cell_mass):.3e} from the right-hand side")
    rhs = rhs - grid.scalar_mean(rhs)

    projector = helmholtz_projector(grid, method=method, tol=tol, compat_tol=compat_tol)
    phi, _, _ = projector.potential(rhs)
    return ScalarField(phi.reshape(geom.shape), geom)


def _as_face_field(u):
    if isinstance(u, FaceField):
        return u
    if isinstance(u, VectorField):
        return cell_to_face(u)
    raise FieldError(f"Cannot project a {type(u).__name__}")


def helmholtz_project(u, tol=POISSON_TOL, method=POISSON_METHOD, compat_tol=COMPAT_TOL):
    """
    Surface Helmholtz projection P_H u = u − grad ψ_u.

    Args:
        u (FaceField or VectorField): Field to project; cell-centered fields
            are moved to the staggered grid first
        tol (float): Relative residual target of the potential solve
        method (str): Poisson method, "cg" or "direct"
        compat_tol (float): Relative solvability slack of the potential solve

    Returns:
        HelmholtzResult: Projected field, zero-mean potential and residuals
    """
    field = _as_face_field(u)
    grid = field.grid
    projector = helmholtz_projector(grid, method=method, tol=tol, compat_tol=compat_tol)
    x = field.to_vector()
    projected, phi = projector.project_vector(x)
    result = FaceField.from_vector(grid, projected)

    scale = np.sqrt(grid.inner(x, x) + grid.gradient_energy(x))
    divergence = grid.scalar_norm(grid.divergence(projected))
    residual_div = divergence / scale if scale > 0.0 else divergence
    rims = [result.u1[-1]] if grid.has_pole else [result.u1[0], result.u1[-1]]
    residual_flux = float(max(np.max(np.abs(rim)) for rim in rims))
    return HelmholtzResult(
        projected=result,
        potential=ScalarField(phi.reshape(grid.geom.shape), grid.geom),
        residual_div=float(residual_div),
        residual_flux=residual_flux,
    )
