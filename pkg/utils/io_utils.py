"""
File outputs: CSV reports, legacy-VTK snapshots and .npz field files.
"""
import csv
import os

import numpy as np

from utils.error_utils import FieldError
from utils.geometry_utils import embedding
from utils.grid_utils import FaceField, cell_to_face, face_to_cell
from utils.tensor_utils import ScalarField, VectorField


EIGEN_COLUMNS = ["index", "eigenvalue", "residual"]
KORN_COLUMNS = ["resolution", "ritz_value", "constant"]
IDENTITY_COLUMNS = ["geometry", "identity", "resolution", "residual", "order", "status", "passed"]
LINEARIZED_COLUMNS = ["index", "real", "imag", "residual"]
PROJECTION_COLUMNS = ["input_norm", "output_norm", "removed_norm", "residual_div", "residual_flux"]
GEOMETRY_COLUMNS = ["s", "phi", "g11", "g22", "gamma_1_22", "gamma_2_12", "ricci_11", "ricci_22", "gauss"]


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _format(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def write_csv(path, header, rows):
    """
    Write rows under a single header row.

    Args:
        path (str): Output file
        header (list): Column names
        rows (iterable): Sequences matching the header

    Returns:
        str: The path written
    """
    _ensure_parent(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format(value) for value in row])
    return path


def read_csv(path):
    """Read a CSV written by write_csv into (header, rows of strings)."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        return header, [row for row in reader]


def write_diagnostics_csv(path, diagnostics):
    return write_csv(path, diagnostics.columns(), diagnostics.to_rows())


def write_eigen_csv(path, result):
    rows = [(i, value, residual) for i, (value, residual) in enumerate(zip(result.eigenvalues, result.residuals))]
    return write_csv(path, EIGEN_COLUMNS, rows)


def write_geometry_csv(path, geom):
    """Dump g, Γ and Ric at every cell center."""
    rows = []
    for i in range(geom.n1):
        for j in range(geom.n2):
            rows.append(
                (
                    geom.coords[0, i, j],
                    geom.coords[1, i, j],
                    geom.g[0, 0, i, j],
                    geom.g[1, 1, i, j],
                    geom.christoffel[0, 1, 1, i, j],
                    geom.christoffel[1, 0, 1, i, j],
                    geom.ricci[0, 0, i, j],
                    geom.ricci[1, 1, i, j],
                    geom.gauss[i, j],
                )
            )
    return write_csv(path, GEOMETRY_COLUMNS, rows)


def _cell_components(field):
    if isinstance(field, FaceField):
        return face_to_cell(field)
    if isinstance(field, VectorField):
        return field
    raise FieldError(f"Cannot export a {type(field).__name__}")


def write_vtk(path, field, pressure=None, title="slipflow field"):
    """
    Legacy-VTK ASCII structured grid of a velocity field at the cell centers.

    Points are the embedded positions when the chart has an embedding and
    the chart coordinates (s, φ, 0) otherwise. Point data holds the chart
    components, the embedded R³ velocity when available and an optional
    scalar pressure potential.

    Args:
        path (str): Output file
        field (FaceField or VectorField): Velocity
        pressure (ScalarField, optional): Scalar written as "pressure"
        title (str): Header line

    Returns:
        str: The path written
    """
    u = _cell_components(field)
    geom = u.geom
    s, phi = geom.coords
    if geom.profile.embedded:
        position, d_s, d_phi = embedding(geom, s, phi)
        velocity = u.components[0] * d_s + u.components[1] * d_phi
    else:
        position = np.array([s, phi, np.zeros_like(s)])
        velocity = None

    count = geom.n1 * geom.n2
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_GRID",
        f"DIMENSIONS {geom.n2} {geom.n1} 1",
        f"POINTS {count} double",
    ]
    lines += [f"{x!r} {y!r} {z!r}" for x, y, z in position.reshape(3, -1).T.tolist()]
    lines += [f"POINT_DATA {count}", "VECTORS chart_velocity double"]
    lines += [f"{a!r} {b!r} 0.0" for a, b in u.components.reshape(2, -1).T.tolist()]
    if velocity is not None:
        lines.append("VECTORS velocity double")
        lines += [f"{x!r} {y!r} {z!r}" for x, y, z in velocity.reshape(3, -1).T.tolist()]
    if pressure is not None:
        lines += ["SCALARS pressure double 1", "LOOKUP_TABLE default"]
        lines += [repr(value) for value in np.ravel(pressure.values).tolist()]

    _ensure_parent(path)
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")
    return path


def save_field(path, field):
    """
    Save a staggered velocity field to .npz (arrays u1, u2 plus the grid shape).

    Returns:
        str: The path written
    """
    _ensure_parent(path)
    np.savez(path, u1=field.u1, u2=field.u2, n1=field.grid.n1, n2=field.grid.n2, layout="face")
    return path if path.endswith(".npz") else f"{path}.npz"


def load_field(path, grid):
    """
    Load a velocity field for a grid.

    Accepts staggered arrays (u1 of shape (n1+1, n2), u2 of shape (n1, n2))
    or cell-centered arrays (both (n1, n2)); the latter are moved onto the
    staggered grid.

    Raises:
        FieldError: If the file lacks u1/u2 or the shapes fit neither layout
    """
    if not os.path.exists(path):
        raise FieldError(f"Field file not found: {path}")
    with np.load(path) as data:
        if "u1" not in data.files or "u2" not in data.files:
            raise FieldError(f"Field file {path} must contain arrays 'u1' and 'u2'")
        u1, u2 = np.array(data["u1"], dtype=float), np.array(data["u2"], dtype=float)
    n1, n2 = grid.n1, grid.n2
    if u1.shape == (n1 + 1, n2) and u2.shape == (n1, n2):
        return FaceField(u1, u2, grid)
    if u1.shape == (n1, n2) and u2.shape == (n1, n2):
        return cell_to_face(VectorField(np.array([u1, u2]), grid.geom), grid)
    raise FieldError(f"Field arrays of shapes {u1.shape} and {u2.shape} do not fit a {n1}x{n2} grid")


def write_potential(path, potential):
    """Save a cell-centered scalar to .npz under the key 'potential'."""
    if not isinstance(potential, ScalarField):
        raise FieldError(f"Expected a ScalarField, got {type(potential).__name__}")
    _ensure_parent(path)
    np.savez(path, potential=potential.values)
    return path
