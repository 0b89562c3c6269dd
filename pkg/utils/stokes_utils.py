"""
Weak surface Stokes operator with Navier or perfect slip boundary conditions.

The operator is represented by its symmetric stiffness matrix K on the
staggered velocity dofs:

  Navier slip    K = 2μ SᵀW S + αμ TᵀW_Σ T
  perfect slip   K = μ ∇ᵀW ∇ − μ Ric_M + μ TᵀW_Σ κ T

with S the discrete deformation, ∇ the discrete covariant gradient and T the
tangential boundary trace. The projected operator is A = P M⁻¹ K. Resolvent
and eigen problems are solved on the divergence-free subspace through the
stream-function parametrization u = C ψ.
"""
import functools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from rich.console import Console

from config.config import (
    ASSEMBLY_LIMIT,
    EIGEN_MAX_ITER,
    EIGEN_SHIFT_FACTOR,
    EIGEN_TOL,
    LINEARIZATION_DEFECT_TOL,
    RESOLVENT_MAX_ITER,
    RESOLVENT_METHOD,
    RESOLVENT_TOL,
)
from utils.error_utils import FieldError, SolverFailure
from utils.geometry_utils import build_geometry
from utils.grid_utils import FaceField, cell_to_face, staggered_grid
from utils.helmholtz_utils import helmholtz_projector
from utils.solver_utils import conjugate_gradient, orthogonal_iteration, subspace_iteration
from utils.tensor_utils import VectorField

console = Console()

MODES = ("navier", "perfect")


@dataclass(frozen=True)
class BoundaryCondition:
    """Navier slip with friction α ≥ 0, or perfect slip (α unused)."""
    mode: str = "navier"
    alpha: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"Unknown boundary condition '{self.mode}' (expected one of {', '.join(MODES)})")
        alpha = float(self.alpha)
        if not math.isfinite(alpha):
            raise ValueError(f"alpha must be finite, got {self.alpha}")
        if alpha < 0.0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        object.__setattr__(self, "alpha", alpha)

    @property
    def label(self):
        if self.mode == "perfect":
            return "perfect slip"
        return f"Navier slip (alpha={self.alpha:g})"


def _dofs(field, grid):
    if isinstance(field, FaceField):
        return field.to_vector()
    if isinstance(field, VectorField):
        return cell_to_face(field, grid).to_vector()
    array = np.asarray(field, dtype=float)
    if array.shape != (grid.n_dof,):
        raise FieldError(f"dof vector has shape {array.shape}, expected ({grid.n_dof},)")
    return array


class StokesOperator:
    """
    Projected Stokes operator on one geometry.

    Args:
        geom (ChartGeometry): Chart geometry
        bc (BoundaryCondition): Boundary condition
        mu (float): Surface viscosity μ_s > 0
    """

    def __init__(self, geom, bc, mu):
        if not mu > 0.0:
            raise ValueError(f"Viscosity must be positive, got {mu}")
        self.geom = geom
        self.grid = staggered_grid(geom)
        self.bc = bc
        self.mu = float(mu)
        self.projector = helmholtz_projector(self.grid, method="direct")
        self.stiffness = self._stiffness()
        grid = self.grid
        self.area = float(np.sum(grid.cell_mass))
        self.scale = self.mu / self.area

        stream = grid.stream
        self.stream_stiffness = (stream.T @ self.stiffness @ stream).tocsc()
        self.stream_mass = (stream.T @ sp.diags(grid.mass) @ stream).tocsc()
        self._factors = {}

    def _stiffness(self):
        grid, mu = self.grid, self.mu
        trace = grid.trace_u2
        if self.bc.mode == "navier":
            strain = grid.strain.T @ sp.diags(grid.strain_weight) @ grid.strain
            friction = trace.T @ sp.diags(grid.trace_weight) @ trace
            matrix = 2.0 * mu * strain + self.bc.alpha * mu * friction
        else:
            gradient = grid.gradient.T @ sp.diags(grid.gradient_weight) @ grid.gradient
            curvature = trace.T @ sp.diags(grid.trace_weight * grid.trace_kappa) @ trace
            matrix = mu * gradient - mu * sp.diags(grid.ricci_mass) + mu * curvature
        return sp.csr_matrix(0.5 * (matrix + matrix.T))

    @property
    def n_dof(self):
        return self.grid.n_dof

    # evaluation ------------------------------------------------------------

    def apply_vector(self, x):
        """P M⁻¹ K x on dof vectors."""
        return self.projector(self.stiffness @ x / self.grid.mass)

    def apply(self, u):
        """Projected operator applied to a field; returns a FaceField."""
        return FaceField.from_vector(self.grid, self.apply_vector(_dofs(u, self.grid)))

    def form(self, u, v):
        """Bilinear form a(u, v)."""
        return float(np.dot(_dofs(u, self.grid), self.stiffness @ _dofs(v, self.grid)))

    def mass(self, u, v):
        """L²(M) pairing (u | v)_M."""
        return self.grid.inner(_dofs(u, self.grid), _dofs(v, self.grid))

    def deformation_energy(self, u):
        return self.grid.deformation_energy(_dofs(u, self.grid))

    def gradient_energy(self, u):
        return self.grid.gradient_energy(_dofs(u, self.grid))

    def boundary_energy(self, u):
        return self.grid.boundary_energy(_dofs(u, self.grid))

    def assemble(self):
        """
        Sparse stiffness matrix and diagonal mass of the operator.

        Raises:
            ValueError: Above the assembly limit
        """
        if self.n_dof > ASSEMBLY_LIMIT:
            raise ValueError(f"{self.n_dof} unknowns exceed the assembly limit of {ASSEMBLY_LIMIT}")
        return self.stiffness.copy(), sp.diags(self.grid.mass).tocsr()

    # stream space ------------------------------------------------------------

    def factor(self, lam):
        """Cached sparse LU of λM_ψ + K_ψ."""
        key = float(lam)
        if key not in self._factors:
            if len(self._factors) >= 8:
                self._factors.pop(next(iter(self._factors)))
            matrix = (key * self.stream_mass + self.stream_stiffness).tocsc()
            try:
                self._factors[key] = spla.splu(matrix)
            except RuntimeError as e:
                raise SolverFailure(f"Stream-space factorization failed at lambda={key:g}: {e}") from e
        return self._factors[key]

    def to_stream_load(self, x):
        """Cᵀ M x."""
        return self.grid.stream.T @ (self.grid.mass * x)

    def from_stream(self, y):
        return self.grid.stream @ y


@functools.lru_cache(maxsize=16)
def build_operator(spec, bc, mu):
    """Cached StokesOperator of a geometry spec."""
    return StokesOperator(build_geometry(spec), bc, mu)


def assemble_stokes(geom, bc, mu):
    """
    Build the Stokes operator of a geometry.

    Args:
        geom (ChartGeometry): Chart geometry
        bc (BoundaryCondition): Navier slip or perfect slip
        mu (float): Surface viscosity μ_s > 0

    Returns:
        StokesOperator: Operator with apply, form and mass evaluators
    """
    return StokesOperator(geom, bc, mu)


def _resolvent_direct(op, lam, x, tol):
    load = op.to_stream_load(x)
    if not np.any(load):
        return np.zeros(op.n_dof), 0.0
    y = op.factor(lam).solve(load)
    residual = float(np.linalg.norm(lam * (op.stream_mass @ y) + op.stream_stiffness @ y - load) / np.linalg.norm(load))
    if not np.isfinite(residual) or residual > max(tol, 1e-8):
        raise SolverFailure(f"Resolvent solve is inaccurate (residual {residual:.3e})", residual=residual, iterations=1)
    return op.from_stream(y), residual


def _resolvent_iterative(op, lam, x, tol, max_iter):
    grid = op.grid
    root = np.sqrt(grid.mass)

    def restrict(w):
        return root * op.projector(w / root)

    def apply(w):
        inner = restrict(w)
        outer = lam * inner + op.stiffness @ (inner / root) / root
        return restrict(outer) + (w - inner)

    rhs = restrict(root * x)
    if not np.any(rhs):
        return np.zeros(op.n_dof), 0.0
    if op.bc.mode == "navier":
        w, residual, _ = conjugate_gradient(apply, rhs, tol=tol, max_iter=max_iter, project=restrict)
    else:
        linear = spla.LinearOperator((op.n_dof, op.n_dof), matvec=apply, dtype=float)
        w, info = spla.minres(linear, rhs, rtol=tol, maxiter=max_iter)
        residual = float(np.linalg.norm(apply(w) - rhs) / np.linalg.norm(rhs))
        if info != 0 and residual > tol:
            raise SolverFailure(f"MINRES stopped with status {info} (residual {residual:.3e})", residual=residual, iterations=max_iter)
    return op.projector(w / root), residual


def solve_resolvent(op, lam, f, tol=RESOLVENT_TOL, method=RESOLVENT_METHOD, max_iter=RESOLVENT_MAX_ITER):
    """
    Solve (λ + A) u = f on the divergence-free subspace.

    Args:
        op (StokesOperator): Operator
        lam (float): Resolvent parameter λ > 0
        f (FaceField, VectorField or ndarray): Right-hand side; its
            gradient part is ignored
        tol (float): Relative residual target in the M-norm
        method (str): "direct" (stream-space LU) or "cg" (projected CG for
            Navier slip, MINRES for perfect slip)
        max_iter (int): Iteration cap of the iterative methods

    Returns:
        FaceField: Divergence-free, tangent solution

    Raises:
        SolverFailure: If the residual target is missed
    """
    if not lam > 0.0:
        raise ValueError(f"Resolvent parameter must be positive, got {lam}")
    x = _dofs(f, op.grid)
    if method == "direct":
        u, _ = _resolvent_direct(op, lam, x, tol)
    elif method == "cg":
        u, _ = _resolvent_iterative(op, lam, x, tol, max_iter)
    else:
        raise ValueError(f"Unknown resolvent method '{method}' (expected direct or cg)")
    return FaceField.from_vector(op.grid, u)


@dataclass(frozen=True, eq=False)
class EigenResult:
    eigenvalues: np.ndarray
    eigenfields: tuple
    residuals: np.ndarray
    iterations: int = 0

    @property
    def vectors(self):
        """Eigenfields as dof columns."""
        return np.column_stack([field.to_vector() for field in self.eigenfields])


def eigenpairs(op, k, tol=EIGEN_TOL, shift=None, max_iter=EIGEN_MAX_ITER, seed=0):
    """
    Smallest eigenpairs of the projected Stokes operator.

    Shift-invert block subspace iteration on the stream-space pencil
    (K_ψ, M_ψ); the shifted solves are the resolvent factorizations.

    Args:
        op (StokesOperator): Operator
        k (int): Number of eigenpairs
        tol (float): Relative residual target ‖A v − λ v‖_M / max(|λ|, μ/area)
        shift (float, optional): σ > 0 of the shifted solve; defaults to a
            small multiple of μ/area
        max_iter (int): Iteration cap
        seed (int): Seed of the random starting block

    Returns:
        EigenResult: Ascending eigenvalues with M-orthonormal eigenfields
    """
    grid = op.grid
    k = int(k)
    if k < 1:
        raise ValueError(f"At least one eigenpair must be requested, got {k}")
    dimension = grid.n_stream
    if k > dimension - 2:
        raise ValueError(f"{k} eigenpairs requested but the divergence-free space has dimension {dimension}")
    shift = EIGEN_SHIFT_FACTOR * op.scale if shift is None else float(shift)
    block_size = min(k + max(4, k // 2), dimension - 1)
    factor = op.factor(shift)

    def residual_fn(values, vectors):
        out = np.empty(len(values))
        for i, (value, y) in enumerate(zip(values, vectors.T)):
            x = op.from_stream(y)
            r = op.apply_vector(x) - value * x
            out[i] = grid.norm(r) / (max(abs(value), op.scale) * max(grid.norm(x), np.finfo(float).tiny))
        return out

    result = subspace_iteration(
        solve=factor.solve,
        apply_a=lambda block: op.stream_stiffness @ block,
        apply_b=lambda block: op.stream_mass @ block,
        dimension=dimension,
        k=k,
        block_size=block_size,
        tol=tol,
        max_iter=max_iter,
        rng=np.random.default_rng(seed),
        residual_fn=residual_fn,
    )
    fields = tuple(FaceField.from_vector(grid, op.from_stream(y)) for y in result.vectors.T)
    return EigenResult(
        eigenvalues=np.asarray(result.values, dtype=float),
        eigenfields=fields,
        residuals=np.asarray(result.residuals, dtype=float),
        iterations=result.iterations,
    )


class LinearizedOperator:
    """
    Linearization A₀ u = A u + P(∇_u u_* + ∇_{u_*} u) about a field u_*.

    Args:
        op (StokesOperator): Stokes operator
        u_star (FaceField): Linearization point
    """

    def __init__(self, op, u_star):
        self.op = op
        grid = op.grid
        self.u_star = u_star
        x_star = _dofs(u_star, grid)
        self.defect = float(np.sqrt(grid.deformation_energy(x_star)))
        self.jacobian = grid.advection_jacobian(x_star)
        stream = grid.stream
        self.stream_matrix = (op.stream_stiffness + stream.T @ sp.diags(grid.mass) @ self.jacobian @ stream).tocsc()

    def apply_vector(self, x):
        return self.op.apply_vector(x) + self.op.projector(self.jacobian @ x)

    def apply(self, u):
        return FaceField.from_vector(self.op.grid, self.apply_vector(_dofs(u, self.op.grid)))


def assemble_linearized(op, u_star, defect_tol=LINEARIZATION_DEFECT_TOL):
    """
    Linearize the projected Navier-Stokes operator about u_*.

    A warning is logged when u_* is not a Killing field, that is when
    ‖D_{u_*}‖ exceeds defect_tol·‖u_*‖.

    Returns:
        LinearizedOperator: Operator with apply and stream-space matrix
    """
    linearized = LinearizedOperator(op, u_star)
    norm = op.grid.norm(_dofs(u_star, op.grid))
    if linearized.defect > defect_tol * max(norm, 1.0):
        console.log(f"[bold yellow]Linearizing about a field with deformation {linearized.defect:.3e}; it is not a Killing field")
    return linearized


def linearized_eigenvalues(linearized, k, tol=1e-8, shift=None, max_iter=EIGEN_MAX_ITER, seed=0):
    """
    Eigenvalues of A₀ closest to the origin.

    Block orthogonal iteration on the nonsymmetric stream-space pencil
    (K_ψ + CᵀM J C, M_ψ).

    Returns:
        NonsymmetricResult: Ritz values sorted by real part with residuals
    """
    op = linearized.op
    dimension = op.grid.n_stream
    shift = EIGEN_SHIFT_FACTOR * op.scale if shift is None else float(shift)
    try:
        factor = spla.splu((linearized.stream_matrix + shift * op.stream_mass).tocsc())
    except RuntimeError as e:
        raise SolverFailure(f"Shifted linearized factorization failed: {e}") from e
    return orthogonal_iteration(
        solve=factor.solve,
        apply_a=lambda block: linearized.stream_matrix @ block,
        apply_b=lambda block: op.stream_mass @ block,
        dimension=dimension,
        k=k,
        block_size=min(k + max(4, k // 2), dimension - 1),
        shift=shift,
        tol=tol,
        max_iter=max_iter,
        rng=np.random.default_rng(seed),
    )
