"""
Iterative linear-algebra kernels shared by the Poisson, Stokes and Korn solvers.
"""
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from utils.error_utils import SolverFailure


def conjugate_gradient(apply, rhs, tol=1e-10, max_iter=1000, precondition=None, project=None, x0=None):
    """
    Preconditioned conjugate gradient for symmetric positive (semi)definite systems.

    Args:
        apply (callable): x -> A x
        rhs (ndarray): Right-hand side, consistent with A
        tol (float): Relative residual target ‖r‖ / ‖b‖
        max_iter (int): Iteration cap
        precondition (callable, optional): r -> M⁻¹ r (symmetric positive)
        project (callable, optional): Removes the null-space component of
            residuals and search directions (deflation)
        x0 (ndarray, optional): Initial guess

    Returns:
        tuple: (solution, relative residual, iterations)

    Raises:
        SolverFailure: If the residual target is not met within max_iter
    """
    project = project or (lambda v: v)
    precondition = precondition or (lambda v: v)
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=float)
    r = project(rhs - apply(x) if x0 is not None else rhs.copy())
    norm_b = np.linalg.norm(project(rhs))
    if norm_b == 0.0:
        return np.zeros_like(rhs), 0.0, 0

    residual = np.linalg.norm(r) / norm_b
    if residual <= tol:
        return x, residual, 0
    z = project(precondition(r))
    p = z.copy()
    rz = np.dot(r, z)
    for iteration in range(1, max_iter + 1):
        ap = apply(p)
        curvature = np.dot(p, ap)
        if curvature <= 0.0:
            raise SolverFailure("Conjugate gradient met non-positive curvature", residual=residual, iterations=iteration)
        alpha = rz / curvature
        x += alpha * p
        r = project(r - alpha * ap)
        residual = np.linalg.norm(r) / norm_b
        if residual <= tol:
            return x, residual, iteration
        z = project(precondition(r))
        rz_next = np.dot(r, z)
        p = z + (rz_next / rz) * p
        rz = rz_next
    raise SolverFailure(
        f"Conjugate gradient did not converge in {max_iter} iterations (residual {residual:.3e})",
        residual=residual,
        iterations=max_iter,
    )


def b_orthonormalize(block, apply_b):
    """
    Orthonormalize the columns of a block in the B-inner product.

    Cholesky QR applied twice; columns that are numerically dependent are
    dropped through an eigen-whitening fallback.
    """
    for _ in range(2):
        gram = block.T @ apply_b(block)
        gram = 0.5 * (gram + gram.T)
        try:
            factor = linalg.cholesky(gram, lower=True)
            block = linalg.solve_triangular(factor, block.T, lower=True).T
        except linalg.LinAlgError:
            values, vectors = linalg.eigh(gram)
            keep = values > 1e-14 * max(values[-1], np.finfo(float).tiny)
            block = block @ (vectors[:, keep] / np.sqrt(values[keep]))
    return block


@dataclass
class SubspaceResult:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    iterations: int


def subspace_iteration(solve, apply_a, apply_b, dimension, k, block_size, tol, max_iter, rng, residual_fn=None):
    """
    Shift-invert block subspace iteration for A x = λ B x, A symmetric, B SPD.

    Args:
        solve (callable): Y -> (A + σB)⁻¹ Y, columnwise
        apply_a (callable): X -> A X
        apply_b (callable): X -> B X
        dimension (int): Length of the vectors
        k (int): Number of wanted eigenpairs (smallest)
        block_size (int): Working block size, at least k
        tol (float): Target for residual_fn, or for the relative change of
            Ritz values when residual_fn is None
        max_iter (int): Iteration cap
        rng (numpy.random.Generator): Source of the starting block
        residual_fn (callable, optional): (values, vectors) -> residual norms

    Returns:
        SubspaceResult: Ascending Ritz values and B-orthonormal Ritz vectors

    Raises:
        SolverFailure: If the wanted pairs do not converge
    """
    block = rng.standard_normal((dimension, max(block_size, k)))
    previous = None
    residuals = np.full(k, np.inf)
    for iteration in range(1, max_iter + 1):
        block = b_orthonormalize(solve(apply_b(block)), apply_b)
        if block.shape[1] < k:
            raise SolverFailure(f"Subspace collapsed to {block.shape[1]} vectors, {k} requested", iterations=iteration)
        projected = block.T @ apply_a(block)
        values, coefficients = linalg.eigh(0.5 * (projected + projected.T))
        block = block @ coefficients
        wanted = values[:k]
        if residual_fn is not None:
            residuals = np.asarray(residual_fn(wanted, block[:, :k]), dtype=float)
            converged = np.all(residuals <= tol)
        elif previous is not None:
            scale = np.maximum(np.abs(wanted), np.finfo(float).eps)
            residuals = np.abs(wanted - previous) / scale
            converged = np.all(residuals <= tol)
        else:
            converged = False
        if converged:
            return SubspaceResult(wanted, block[:, :k], residuals, iteration)
        previous = wanted
    raise SolverFailure(
        f"Subspace iteration did not converge in {max_iter} iterations (largest residual {np.max(residuals):.3e})",
        residual=float(np.max(residuals)),
        iterations=max_iter,
    )


@dataclass
class NonsymmetricResult:
    values: np.ndarray
    residuals: np.ndarray
    iterations: int


def orthogonal_iteration(solve, apply_a, apply_b, dimension, k, block_size, shift, tol, max_iter, rng):
    """
    Block orthogonal iteration for the nonsymmetric pencil A x = λ B x.

    The block is driven towards the dominant invariant subspace of
    (A + σB)⁻¹B; Ritz pairs come from the B-Galerkin matrix H = Xᵀ A X with
    X B-orthonormal. The k Ritz values closest to −σ are returned once each
    of their relative residuals ‖A x − λ B x‖ / ((|λ| + σ)‖B x‖) is below tol.

    Returns:
        NonsymmetricResult: Ritz values sorted by real part with residuals
    """
    block = rng.standard_normal((dimension, max(block_size, k)))
    residuals = np.full(k, np.inf)
    for iteration in range(1, max_iter + 1):
        block = b_orthonormalize(solve(apply_b(block)), apply_b)
        a_block = apply_a(block)
        galerkin = block.T @ a_block
        values, coefficients = linalg.eig(galerkin)
        order = np.argsort(np.abs(values + shift), kind="stable")[:k]
        values, coefficients = values[order], coefficients[:, order]
        ritz = block @ coefficients
        b_ritz = apply_b(ritz)
        defect = a_block @ coefficients - b_ritz * values
        residuals = np.linalg.norm(defect, axis=0) / ((np.abs(values) + shift) * np.linalg.norm(b_ritz, axis=0))
        if np.all(residuals <= tol):
            by_real = np.argsort(values.real, kind="stable")
            return NonsymmetricResult(values[by_real], residuals[by_real], iteration)
        block = block @ np.real(_real_basis(coefficients, block.shape[1]))
    raise SolverFailure(
        f"Orthogonal iteration did not converge in {max_iter} iterations (largest residual {np.max(residuals):.3e})",
        residual=float(np.max(residuals)),
        iterations=max_iter,
    )


def _real_basis(coefficients, size):
    # keep the wanted Ritz directions leading, completed to a real square basis
    real = np.concatenate([coefficients.real, coefficients.imag], axis=1)
    basis, _ = linalg.qr(np.concatenate([real, np.eye(size)], axis=1), mode="economic")
    return basis[:, :size]
