"""
Staggered (MAC) discretization of the chart used by the solver core.

Layout on a chart with n1 cells in s and n2 cells in φ:

  u¹   contravariant s-component on s-faces (s_f, φ_j), f = 0..n1
  u²   contravariant φ-component at (s_i, φ_{j+½})
  p    scalars at cell centers (s_i, φ_j)
  ψ    stream function at corners (s_f, φ_{j+½})

Velocity unknowns ("dofs") are u¹ on the interior faces f = 1..n1-1 followed
by all u² values; boundary faces carry zero normal velocity. On a pole chart
the face f = 0 degenerates to a point and its u¹ value is reconstructed from
the first interior ring for display and for the strain stencils.

All operators are scipy.sparse matrices acting on row-major flattened
(n_s, n2) arrays.
"""
import functools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from utils.error_utils import FieldError
from utils.geometry_utils import ChartGeometry
from utils.tensor_utils import VectorField


def _diag(values):
    return sp.diags(np.asarray(values, dtype=float))


def _faces_to_cells_diff(n1, ds):
    return sp.diags([-np.ones(n1), np.ones(n1)], [0, 1], shape=(n1, n1 + 1)) / ds


def _faces_to_cells_avg(n1):
    return sp.diags([np.full(n1, 0.5), np.full(n1, 0.5)], [0, 1], shape=(n1, n1 + 1))


def _cells_to_inner_faces_diff(n1, ds):
    return sp.diags([-np.ones(n1 - 1), np.ones(n1 - 1)], [0, 1], shape=(n1 - 1, n1)) / ds


def _cells_to_inner_faces_avg(n1):
    return sp.diags([np.full(n1 - 1, 0.5), np.full(n1 - 1, 0.5)], [0, 1], shape=(n1 - 1, n1))


def _periodic(n2, offsets, weights):
    rows = np.repeat(np.arange(n2), len(offsets))
    cols = (rows + np.tile(offsets, n2)) % n2
    data = np.tile(np.asarray(weights, dtype=float), n2)
    return sp.csr_matrix((data, (rows, cols)), shape=(n2, n2))


@dataclass(frozen=True, eq=False)
class FaceField:
    """Velocity on the staggered grid: u1 of shape (n1+1, n2), u2 of shape (n1, n2)."""
    u1: np.ndarray
    u2: np.ndarray
    grid: "StaggeredGrid"

    def __post_init__(self):
        n1, n2 = self.grid.n1, self.grid.n2
        for name, shape in (("u1", (n1 + 1, n2)), ("u2", (n1, n2))):
            array = np.asarray(getattr(self, name), dtype=float)
            if array.shape != shape:
                raise FieldError(f"face field {name} has shape {array.shape}, expected {shape}")
            if not np.all(np.isfinite(array)):
                raise FieldError(f"face field {name} contains non-finite values")
            object.__setattr__(self, name, array)

    def to_vector(self):
        """Interior dofs (drops boundary normal components)."""
        return np.concatenate([self.u1[1:-1].ravel(), self.u2.ravel()])

    @classmethod
    def from_vector(cls, grid, x):
        x = np.asarray(x, dtype=float)
        u1 = (grid.embed_u1 @ x[: grid.n_u1]).reshape(grid.n1 + 1, grid.n2)
        u2 = x[grid.n_u1 :].reshape(grid.n1, grid.n2)
        return cls(u1, u2, grid)

    @classmethod
    def zeros(cls, grid):
        return cls(np.zeros((grid.n1 + 1, grid.n2)), np.zeros((grid.n1, grid.n2)), grid)

    @classmethod
    def sample(cls, grid, fn):
        """
        Sample fn(s, φ) -> (u¹, u²) at the staggered positions.

        u¹ is read at the s-faces, u² at the φ-faces; each call only uses the
        component that belongs to the position.
        """
        s_f, phi_c = np.meshgrid(grid.s_faces, grid.phi_centers, indexing="ij")
        s_c, phi_f = np.meshgrid(grid.s_centers, grid.phi_faces, indexing="ij")
        with np.errstate(divide="ignore", invalid="ignore"):
            u1 = np.asarray(fn(s_f, phi_c)[0], dtype=float) * np.ones(s_f.shape)
        u2 = np.asarray(fn(s_c, phi_f)[1], dtype=float) * np.ones(s_c.shape)
        if grid.has_pole:
            u1[0] = grid.pole_value(u1[1])
        return cls(u1, u2, grid)

    def __add__(self, other):
        return FaceField(self.u1 + other.u1, self.u2 + other.u2, self.grid)

    def __sub__(self, other):
        return FaceField(self.u1 - other.u1, self.u2 - other.u2, self.grid)

    def __mul__(self, scalar):
        return FaceField(self.u1 * float(scalar), self.u2 * float(scalar), self.grid)

    __rmul__ = __mul__

    def __neg__(self):
        return FaceField(-self.u1, -self.u2, self.grid)


class StaggeredGrid:
    """Sparse operators of the MAC discretization on one chart geometry."""

    def __init__(self, geom):
        self.geom = geom
        n1, n2 = geom.n1, geom.n2
        self.n1, self.n2 = n1, n2
        self.ds, self.dphi = geom.ds, geom.dphi
        self.has_pole = geom.has_pole
        profile = geom.profile

        self.s_centers = np.asarray(geom.s)
        self.s_faces = profile.s0 + np.arange(n1 + 1) * self.ds
        self.phi_centers = np.asarray(geom.phi)
        self.phi_faces = self.phi_centers + 0.5 * self.dphi

        self.f_c = np.asarray(profile.f(self.s_centers), dtype=float)
        self.df_c = np.asarray(profile.df(self.s_centers), dtype=float)
        self.gauss_c = -np.asarray(profile.d2f(self.s_centers), dtype=float) / self.f_c
        self.f_f = np.asarray(profile.f(self.s_faces), dtype=float) * np.ones(n1 + 1)
        if self.has_pole:
            self.f_f[0] = 0.0
        self.df_f = np.asarray(profile.df(self.s_faces), dtype=float) * np.ones(n1 + 1)
        f_in = self.f_f[1:-1]
        self.f_inner = f_in
        self.G_c = self.f_c ** 2
        self.G_inner = f_in ** 2
        self.gauss_inner = -np.asarray(profile.d2f(self.s_faces[1:-1]), dtype=float) / f_in

        self.n_u1 = (n1 - 1) * n2
        self.n_u2 = n1 * n2
        self.n_dof = self.n_u1 + self.n_u2
        self.n_cells = n1 * n2
        self.n_corners = (n1 - 1) * n2
        area = self.ds * self.dphi

        ones_phi = np.ones(n2)
        self.mass = np.concatenate([np.kron(f_in, ones_phi), np.kron(self.G_c * self.f_c, ones_phi)]) * area
        self.cell_mass = np.kron(self.f_c, ones_phi) * area
        self.corner_weight = np.kron(f_in, ones_phi) * area

        self._build_basic(profile)
        self._build_energies()
        self._build_boundary()
        self._build_stream()
        self._build_advection()

    # construction --------------------------------------------------------

    def _build_basic(self, profile):
        n1, n2 = self.n1, self.n2
        eye_phi = sp.identity(n2, format="csr")
        self.phi_fwd = _periodic(n2, [0, 1], [-1.0 / self.dphi, 1.0 / self.dphi])
        self.phi_back = _periodic(n2, [0, -1], [1.0 / self.dphi, -1.0 / self.dphi])
        self.phi_avg_fwd = _periodic(n2, [0, 1], [0.5, 0.5])
        self.phi_avg_back = _periodic(n2, [0, -1], [0.5, 0.5])
        self.antipode = _periodic(n2, [n2 // 2], [1.0])

        self.d_fc = _faces_to_cells_diff(n1, self.ds)
        self.a_fc = _faces_to_cells_avg(n1)
        self.d_cf = _cells_to_inner_faces_diff(n1, self.ds)
        self.a_cf = _cells_to_inner_faces_avg(n1)

        zero_row = sp.csr_matrix((n2, self.n_u1))
        if self.has_pole:
            first_ring = sp.hstack([0.5 * (eye_phi - self.antipode), sp.csr_matrix((n2, self.n_u1 - n2))])
            top = first_ring
        else:
            top = zero_row
        self.embed_u1 = sp.vstack([top, sp.identity(self.n_u1), zero_row]).tocsr()

        self.pick_u1 = sp.hstack([sp.identity(self.n_u1), sp.csr_matrix((self.n_u1, self.n_u2))]).tocsr()
        self.pick_u2 = sp.hstack([sp.csr_matrix((self.n_u2, self.n_u1)), sp.identity(self.n_u2)]).tocsr()
        self.full_u1 = (self.embed_u1 @ self.pick_u1).tocsr()

        radial = _diag(1.0 / self.f_c) @ self.d_fc @ _diag(self.f_f)
        self.div = (sp.kron(radial, eye_phi) @ self.full_u1 + sp.kron(sp.identity(n1), self.phi_back) @ self.pick_u2).tocsr()
        self.grad = (-_diag(1.0 / self.mass) @ self.div.T @ _diag(self.cell_mass)).tocsr()
        self.poisson = (_diag(self.cell_mass) @ self.div @ _diag(1.0 / self.mass) @ self.div.T @ _diag(self.cell_mass)).tocsr()

    def _build_energies(self):
        n1, n2 = self.n1, self.n2
        eye_phi = sp.identity(n2, format="csr")
        eye_inner = sp.identity(n1 - 1, format="csr")
        cell_w = self.cell_mass
        corner_w = self.corner_weight
        G_corner = np.kron(self.G_inner, np.ones(n2))

        # u¹_{|1} and u²_{|2} at cell centers; the latter is D22/G
        d11 = sp.kron(self.d_fc, eye_phi) @ self.full_u1
        d22 = sp.kron(sp.identity(n1), self.phi_back) @ self.pick_u2 + sp.kron(
            _diag(self.df_c / self.f_c) @ self.a_fc, eye_phi
        ) @ self.full_u1
        dphi_u1 = sp.kron(eye_inner, self.phi_fwd) @ self.pick_u1
        ds_u2 = sp.kron(self.d_cf, eye_phi) @ self.pick_u2
        d12 = 0.5 * (dphi_u1 + sp.kron(_diag(self.G_inner) @ self.d_cf, eye_phi) @ self.pick_u2)

        self.strain = sp.vstack([d11, d22, d12]).tocsr()
        self.strain_weight = np.concatenate([cell_w, cell_w, 2.0 * corner_w / G_corner])

        avg_u2 = sp.kron(self.a_cf, eye_phi) @ self.pick_u2
        u1_phi = dphi_u1 - sp.kron(_diag(self.f_inner * self.df_f[1:-1]), eye_phi) @ avg_u2
        u2_s = ds_u2 + sp.kron(_diag(self.df_f[1:-1] / self.f_inner), eye_phi) @ avg_u2
        self.gradient = sp.vstack([d11, d22, u1_phi, u2_s]).tocsr()
        self.gradient_weight = np.concatenate([cell_w, cell_w, corner_w / G_corner, corner_w * G_corner])

        gauss_u1 = np.kron(self.gauss_inner, np.ones(n2))
        gauss_u2 = np.kron(self.gauss_c, np.ones(n2))
        self.ricci_mass = self.mass * np.concatenate([gauss_u1, gauss_u2])

    def _build_boundary(self):
        n1, n2 = self.n1, self.n2
        eye_phi = sp.identity(n2, format="csr")
        blocks, weights, kappas = [], [], []
        for segment in self.geom.boundary:
            row = np.zeros(n1)
            if segment.side > 0:
                row[-1], row[-2] = 1.5, -0.5
            else:
                row[0], row[1] = 1.5, -0.5
            blocks.append(sp.kron(sp.csr_matrix(row), eye_phi) @ self.pick_u2)
            f_b = np.sqrt(segment.g[1, 1])
            weights.append(segment.weights * f_b ** 2)
            kappas.append(segment.kappa)
        self.trace_u2 = sp.vstack(blocks).tocsr()
        self.trace_weight = np.concatenate(weights)
        self.trace_kappa = np.concatenate(kappas)

    def _build_stream(self):
        n1, n2 = self.n1, self.n2
        eye_phi = sp.identity(n2, format="csr")
        n_inner = self.n_corners
        self.n_stream = n_inner + 1
        extra = np.ones((n2, 1))
        empty = sp.csr_matrix((n2, 1))
        inner = sp.hstack([sp.identity(n_inner), sp.csr_matrix((n_inner, 1))])
        bottom = sp.hstack([sp.csr_matrix((n2, n_inner)), sp.csr_matrix(extra) if self.has_pole else empty])
        top = sp.hstack([sp.csr_matrix((n2, n_inner)), empty if self.has_pole else sp.csr_matrix(extra)])
        embed = sp.vstack([bottom, inner, top]).tocsr()

        stream_u1 = -sp.kron(_diag(1.0 / self.f_inner), self.phi_back) @ inner
        stream_u2 = sp.kron(_diag(1.0 / self.f_c) @ self.d_fc, eye_phi) @ embed
        self.stream = sp.vstack([stream_u1, stream_u2]).tocsr()

    def _build_advection(self):
        n1, n2 = self.n1, self.n2
        eye_phi = sp.identity(n2, format="csr")
        eye_inner = sp.identity(n1 - 1, format="csr")
        circulation = sp.kron(self.d_cf @ _diag(self.G_c), eye_phi) @ self.pick_u2 - sp.kron(eye_inner, self.phi_fwd) @ self.pick_u1
        self.vorticity = (_diag(np.kron(1.0 / self.f_inner, np.ones(n2))) @ circulation).tocsr()
        self.flux_s = (sp.kron(_diag(self.f_inner) @ self.a_cf, eye_phi) @ self.pick_u2).tocsr()
        self.flux_phi = (sp.kron(_diag(self.f_inner), self.phi_avg_fwd) @ self.pick_u1).tocsr()

        spread = np.zeros((n1, n1 - 1))
        for f in range(1, n1):
            spread[f - 1, f - 1] = 0.5 * self.f_f[f] / self.f_c[f - 1]
            spread[f, f - 1] = 0.5 * self.f_f[f] / self.f_c[f]
        self.to_u1 = (-sp.kron(eye_inner, self.phi_avg_back)).tocsr()
        self.to_u2 = (_diag(np.kron(1.0 / self.G_c, np.ones(n2))) @ sp.kron(sp.csr_matrix(spread), eye_phi)).tocsr()

    # evaluation ------------------------------------------------------------

    def pole_value(self, first_ring):
        """u¹ at the pole point seen from direction φ_j."""
        return 0.5 * (first_ring - np.roll(first_ring, -(self.n2 // 2)))

    def inner(self, x, y):
        """Discrete L²(M) pairing of two dof vectors."""
        return float(np.dot(self.mass * x, y))

    def norm(self, x):
        return float(np.sqrt(max(self.inner(x, x), 0.0)))

    def divergence(self, x):
        """Discrete divergence of dofs at cell centers (boundary flux zero)."""
        return self.div @ x

    def boundary_flux_divergence(self, field):
        """Divergence contribution of the boundary-face normal components of a FaceField."""
        out = np.zeros((self.n1, self.n2))
        out[-1] += self.f_f[-1] * field.u1[-1] / (self.f_c[-1] * self.ds)
        if not self.has_pole:
            out[0] -= self.f_f[0] * field.u1[0] / (self.f_c[0] * self.ds)
        return out.ravel()

    def full_divergence(self, field):
        return self.divergence(field.to_vector()) + self.boundary_flux_divergence(field)

    def scalar_norm(self, values):
        values = np.ravel(values)
        return float(np.sqrt(np.dot(self.cell_mass * values, values)))

    def scalar_mean(self, values):
        values = np.ravel(values)
        return float(np.dot(self.cell_mass, values) / np.sum(self.cell_mass))

    def deformation_energy(self, x):
        """‖D_u‖²_{L²(M)} (shear taken at interior corners)."""
        r = self.strain @ x
        return float(np.dot(self.strain_weight * r, r))

    def gradient_energy(self, x):
        """‖∇u‖²_{L²(M)}."""
        r = self.gradient @ x
        return float(np.dot(self.gradient_weight * r, r))

    def boundary_energy(self, x):
        """‖u‖²_{L²(Σ)} from extrapolated tangential traces."""
        r = self.trace_u2 @ x
        return float(np.dot(self.trace_weight * r, r))

    def advection(self, x):
        """
        Vector-invariant advection q ⋆ u at the velocity dofs.

        On discretely divergence-free x this equals ∇_u u up to a discrete
        gradient, which the projection removes.
        """
        q = self.vorticity @ x
        return np.concatenate([self.to_u1 @ (q * (self.flux_s @ x)), self.to_u2 @ (q * (self.flux_phi @ x))])

    def advection_jacobian(self, x_star):
        """Sparse derivative of `advection` at x_star."""
        q = self.vorticity @ x_star
        upper = self.to_u1 @ (_diag(self.flux_s @ x_star) @ self.vorticity + _diag(q) @ self.flux_s)
        lower = self.to_u2 @ (_diag(self.flux_phi @ x_star) @ self.vorticity + _diag(q) @ self.flux_phi)
        return sp.vstack([upper, lower]).tocsr()

    def cfl_rate(self, field):
        """max(|u¹|/Δs + |u²|/Δφ) over cells, using cell-averaged components."""
        u1 = 0.5 * (np.abs(field.u1[:-1]) + np.abs(field.u1[1:]))
        u2 = 0.5 * (np.abs(field.u2) + np.abs(np.roll(field.u2, 1, axis=1)))
        return float(np.max(u1 / self.ds + u2 / self.dphi))


@functools.lru_cache(maxsize=32)
def staggered_grid(geom):
    """Cached StaggeredGrid of a geometry."""
    return StaggeredGrid(geom)


def face_to_cell(field):
    """Average a FaceField to the cell-centered analysis grid."""
    grid = field.grid
    u1 = 0.5 * (field.u1[:-1] + field.u1[1:])
    u2 = 0.5 * (field.u2 + np.roll(field.u2, 1, axis=1))
    return VectorField(np.array([u1, u2]), grid.geom)


def cell_to_face(u, grid=None):
    """
    Average a cell-centered VectorField onto the staggered positions.

    Boundary faces receive the extrapolated normal trace, so the result may
    carry a nonzero normal component.
    """
    grid = grid or staggered_grid(u.geom)
    c1, c2 = u.components
    u1 = np.empty((grid.n1 + 1, grid.n2))
    u1[1:-1] = 0.5 * (c1[:-1] + c1[1:])
    u1[-1] = 1.5 * c1[-1] - 0.5 * c1[-2]
    if grid.has_pole:
        u1[0] = grid.pole_value(c1[0])
    else:
        u1[0] = 1.5 * c1[0] - 0.5 * c1[1]
    u2 = 0.5 * (c2 + np.roll(c2, -1, axis=1))
    return FaceField(u1, u2, grid)


def stream_field(grid, psi):
    """FaceField of a stream-function coefficient vector."""
    return FaceField.from_vector(grid, grid.stream @ psi)


def rotation_field(grid, omega=1.0):
    """The field ω∂_φ on the staggered grid."""
    u1 = np.zeros((grid.n1 + 1, grid.n2))
    u2 = np.full((grid.n1, grid.n2), float(omega))
    return FaceField(u1, u2, grid)
