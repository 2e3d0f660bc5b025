"""Legacy ASCII VTK export of mesh and fields, plus a reader for the files
this package writes (round-trips the discontinuous velocity bit-exactly)."""

import numpy as np

from .errors import MeshFormatError
from .parameters import DGState


def _fmt(x):
    # repr of a Python float round-trips exactly, which the re-import relies on
    return repr(float(x))


def vertex_averaged_velocity(mesh, state):
    """Average the discontinuous vertex values over adjacent cells, for
    visualization only."""
    out = np.zeros((mesh.n_verts, 2))
    count = np.zeros(mesh.n_verts)
    coefs = state.velocity.reshape(mesh.n_cells, 3, 2)
    for a in range(3):
        np.add.at(out, mesh.cells[:, a], coefs[:, a, :])
        np.add.at(count, mesh.cells[:, a], 1.0)
    count[count == 0] = 1.0
    return out / count[:, None]


def export_vtk(mesh, state, path, title="msflow fields"):
    """Write an unstructured-grid VTK file with cell pressure, region tags,
    the raw 6-coefficient DG velocity as cell data and a vertex-averaged
    velocity as point data."""
    state.validate(mesh.n_cells)
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_verts} double",
    ]
    for x, y in mesh.verts:
        lines.append(f"{_fmt(x)} {_fmt(y)} 0.0")
    lines.append(f"CELLS {mesh.n_cells} {4 * mesh.n_cells}")
    for v in mesh.cells:
        lines.append(f"3 {v[0]} {v[1]} {v[2]}")
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines.extend(["5"] * mesh.n_cells)

    lines.append(f"CELL_DATA {mesh.n_cells}")
    lines.append("SCALARS pressure double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(_fmt(p) for p in state.pressure)
    lines.append("SCALARS region int 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(str(int(r)) for r in mesh.region)
    lines.append("FIELD dgdata 1")
    lines.append(f"velocity_dg 6 {mesh.n_cells} double")
    coefs = state.velocity.reshape(mesh.n_cells, 6)
    for row in coefs:
        lines.append(" ".join(_fmt(v) for v in row))

    lines.append(f"POINT_DATA {mesh.n_verts}")
    lines.append("VECTORS velocity double")
    for vx, vy in vertex_averaged_velocity(mesh, state):
        lines.append(f"{_fmt(vx)} {_fmt(vy)} 0.0")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk_state(path):
    """Read back a file written by export_vtk.

    Returns (points, cells, DGState, region).
    """
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    idx = 0

    def expect(prefix):
        nonlocal idx
        if idx >= len(lines) or not lines[idx].startswith(prefix):
            got = lines[idx] if idx < len(lines) else "<eof>"
            raise MeshFormatError(f"{path}: expected {prefix!r}, got {got!r}")
        line = lines[idx]
        idx += 1
        return line

    expect("# vtk DataFile Version")
    idx += 1  # title
    expect("ASCII")
    expect("DATASET UNSTRUCTURED_GRID")
    n_pts = int(expect("POINTS").split()[1])
    points = np.array(
        [[float(v) for v in lines[idx + k].split()] for k in range(n_pts)]
    )[:, :2]
    idx += n_pts
    n_cells = int(expect("CELLS").split()[1])
    cells = np.array(
        [[int(v) for v in lines[idx + k].split()[1:]] for k in range(n_cells)],
        dtype=np.int64,
    )
    idx += n_cells
    expect("CELL_TYPES")
    idx += n_cells
    expect("CELL_DATA")
    expect("SCALARS pressure")
    expect("LOOKUP_TABLE")
    pressure = np.array([float(lines[idx + k]) for k in range(n_cells)])
    idx += n_cells
    expect("SCALARS region")
    expect("LOOKUP_TABLE")
    region = np.array([int(lines[idx + k]) for k in range(n_cells)], dtype=np.int8)
    idx += n_cells
    expect("FIELD")
    expect("velocity_dg")
    velocity = np.array(
        [[float(v) for v in lines[idx + k].split()] for k in range(n_cells)]
    ).ravel()
    idx += n_cells
    return points, cells, DGState(velocity, pressure), region
