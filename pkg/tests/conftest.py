import numpy as np
import pytest

from msflow.geometry import (
    CircleInclusion,
    DomainSpec,
    TriMesh,
    build_edge_topology,
    CoarseGrid,
    generate_structured_mesh,
)
from msflow.parameters import ModelParameters


def make_params(**overrides):
    base = dict(
        reynolds=1.0,
        darcy=1e-3,
        forchheimer=1.0,
        porosity=0.3,
        tau=0.01,
        n_steps=1,
    )
    base.update(overrides)
    return ModelParameters(**base)


def unit_square_mesh(n=1, porous=False):
    """n x n squares on the unit square, optionally all tagged porous."""
    inclusions = [CircleInclusion(0.5, 0.5, 0.49)] if porous else []
    dom = DomainSpec(bbox=(0.0, 0.0, 1.0, 1.0), inclusions=inclusions, porosity=0.3)
    mesh, coarse = generate_structured_mesh(dom, n, (1, 1))
    if porous:
        mesh.region[:] = 1
    return mesh, coarse


def random_rect_two_cells(rng):
    """Two triangles from a random rectangle with a random diagonal."""
    w = float(rng.uniform(0.4, 2.5))
    h = float(rng.uniform(0.4, 2.5))
    verts = np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])
    if rng.integers(2):
        cells = np.array([[0, 1, 2], [0, 2, 3]])
    else:
        cells = np.array([[0, 1, 3], [1, 2, 3]])
    region = rng.integers(0, 2, size=2).astype(np.int8)
    mesh = TriMesh(verts, cells, region, np.zeros(2, dtype=int), (0, 0, w, h))
    build_edge_topology(mesh)
    coarse = CoarseGrid(1, 1, mesh.bbox, mesh)
    return mesh, coarse


def perturbed_grid_mesh(rng, n=3):
    """Structured n x n mesh with interior vertices randomly displaced."""
    dom = DomainSpec(bbox=(0.0, 0.0, 1.0, 1.0))
    mesh, coarse = generate_structured_mesh(dom, n, (1, 1))
    h = 1.0 / n
    interior = (
        (mesh.verts[:, 0] > 1e-9)
        & (mesh.verts[:, 0] < 1 - 1e-9)
        & (mesh.verts[:, 1] > 1e-9)
        & (mesh.verts[:, 1] < 1 - 1e-9)
    )
    shift = rng.uniform(-0.2 * h, 0.2 * h, size=(interior.sum(), 2))
    verts = mesh.verts.copy()
    verts[interior] += shift
    region = rng.integers(0, 2, size=mesh.n_cells).astype(np.int8)
    new = TriMesh(verts, mesh.cells, region, mesh.coarse_id, mesh.bbox)
    build_edge_topology(new)
    return new, CoarseGrid(1, 1, new.bbox, new)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def desk_domain():
    """Four-inclusion setup used by the desk-scale multiscale checks."""
    inclusions = [
        CircleInclusion(-0.5, -0.5, 0.18),
        CircleInclusion(0.5, -0.45, 0.15),
        CircleInclusion(-0.45, 0.5, 0.2),
        CircleInclusion(0.5, 0.5, 0.16),
    ]
    return DomainSpec(bbox=(-1, -1, 1, 1), inclusions=inclusions, porosity=0.3)
