"""Heterogeneous domain description, fine triangulations and the coarse overlay.

The fine mesh carries per-cell region tags (fluid / porous) and a coarse-cell
id; oriented edge topology is built explicitly because the DG forms need a
fixed plus/minus convention on every interior edge.
"""

import numpy as np
from dataclasses import dataclass, field

from .errors import MeshFormatError

FLUID = 0
POROUS = 1

# Boundary side codes.  The outer boundary splits into a velocity (Dirichlet)
# part on the left/bottom/top sides and a zero-stress outflow on the right.
INTERIOR = -1
LEFT, RIGHT, BOTTOM, TOP = 0, 1, 2, 3
SIDE_NAMES = {LEFT: "left", RIGHT: "right", BOTTOM: "bottom", TOP: "top"}
SIDE_CODES = {v: k for k, v in SIDE_NAMES.items()}
DIRICHLET_SIDES = (LEFT, BOTTOM, TOP)


@dataclass(frozen=True)
class CircleInclusion:
    """A circular porous inclusion with center (cx, cy) and radius r > 0."""

    cx: float
    cy: float
    radius: float

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ValueError(f"inclusion radius must be positive, got {self.radius}")

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        d2 = (pts[:, 0] - self.cx) ** 2 + (pts[:, 1] - self.cy) ** 2
        return d2 <= self.radius**2


@dataclass
class DomainSpec:
    """Rectangular domain with non-overlapping circular porous inclusions."""

    bbox: tuple  # (x0, y0, x1, y1)
    inclusions: list = field(default_factory=list)
    porosity: float = 1.0

    def __post_init__(self):
        x0, y0, x1, y1 = self.bbox
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"domain bbox has no area: {self.bbox}")
        if not 0.0 < self.porosity <= 1.0:
            raise ValueError(f"porosity must lie in (0, 1], got {self.porosity}")
        for inc in self.inclusions:
            if (
                inc.cx - inc.radius <= x0
                or inc.cx + inc.radius >= x1
                or inc.cy - inc.radius <= y0
                or inc.cy + inc.radius >= y1
            ):
                raise ValueError(
                    f"inclusion at ({inc.cx}, {inc.cy}) r={inc.radius} "
                    "is not strictly inside the domain"
                )
        for i, a in enumerate(self.inclusions):
            for b in self.inclusions[i + 1 :]:
                dist = np.hypot(a.cx - b.cx, a.cy - b.cy)
                if dist <= a.radius + b.radius:
                    raise ValueError(
                        f"inclusions at ({a.cx}, {a.cy}) and ({b.cx}, {b.cy}) overlap"
                    )

    @property
    def area(self):
        x0, y0, x1, y1 = self.bbox
        return (x1 - x0) * (y1 - y0)

    def porous_mask(self, pts):
        """True for points inside any inclusion disk (closed)."""
        pts = np.atleast_2d(pts)
        mask = np.zeros(len(pts), dtype=bool)
        for inc in self.inclusions:
            mask |= inc.contains(pts)
        return mask


class TriMesh:
    """Fine triangulation with region tags, coarse ids and oriented edges.

    Vertex/cell arrays are set at construction; edge arrays are populated by
    :func:`build_edge_topology`.  Cells are counter-clockwise.
    """

    def __init__(self, verts, cells, region, coarse_id, bbox):
        self.verts = np.asarray(verts, dtype=float)
        self.cells = np.asarray(cells, dtype=np.int64)
        self.region = np.asarray(region, dtype=np.int8)
        self.coarse_id = np.asarray(coarse_id, dtype=np.int64)
        self.bbox = tuple(float(v) for v in bbox)
        if self.cells.min(initial=0) < 0 or self.cells.max(initial=-1) >= len(self.verts):
            raise MeshFormatError("cell references a missing vertex")
        self._compute_cell_geometry()
        # Populated by build_edge_topology:
        self.edge_verts = None  # (ne, 2) endpoint vertex ids
        self.edge_cells = None  # (ne, 2) adjacent cells, col 1 == -1 on boundary
        self.edge_normal = None  # (ne, 2) unit normal, plus -> minus / outward
        self.edge_length = None  # (ne,)
        self.edge_side = None  # (ne,) INTERIOR or side code
        self.cell_edges = None  # (nc, 3) edge id opposite each local vertex

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_verts(self):
        return len(self.verts)

    @property
    def n_edges(self):
        return 0 if self.edge_verts is None else len(self.edge_verts)

    def _compute_cell_geometry(self):
        p = self.verts[self.cells]  # (nc, 3, 2)
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        area2 = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(area2 <= 0.0):
            bad = int(np.argmax(area2 <= 0.0))
            raise MeshFormatError(f"cell {bad} is degenerate or not counter-clockwise")
        self.area = 0.5 * area2
        self.centroid = p.mean(axis=1)
        # Gradient of the barycentric function of each local vertex.
        grad = np.empty((self.n_cells, 3, 2))
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            grad[:, a, 0] = p[:, b, 1] - p[:, c, 1]
            grad[:, a, 1] = p[:, c, 0] - p[:, b, 0]
        self.grad = grad / area2[:, None, None]

    def xi(self, porosity):
        """Per-cell permeability indicator: 1 on fluid cells, porosity on porous."""
        return np.where(self.region == POROUS, porosity, 1.0)

    def validate(self, coarse=None):
        """Check topology invariants; raises MeshFormatError on violation."""
        if self.edge_verts is None:
            raise MeshFormatError("edge topology not built")
        interior = self.edge_cells[:, 1] >= 0
        if np.any(self.edge_side[interior] != INTERIOR):
            raise MeshFormatError("interior edge carries a boundary side label")
        if np.any(self.edge_side[~interior] == INTERIOR):
            raise MeshFormatError("boundary edge without side classification")
        nrm = np.linalg.norm(self.edge_normal, axis=1)
        if np.any(np.abs(nrm - 1.0) > 1e-12):
            raise MeshFormatError("edge normals are not unit length")
        if coarse is not None:
            expect = coarse.locate(self.centroid)
            if np.any(expect != self.coarse_id):
                bad = int(np.argmax(expect != self.coarse_id))
                raise MeshFormatError(
                    f"cell {bad}: coarse id {self.coarse_id[bad]} does not match "
                    f"its centroid location {expect[bad]}"
                )


class CoarseGrid:
    """Structured rectangular coarse overlay of the fine triangulation."""

    def __init__(self, nx, ny, bbox, mesh):
        self.nx = int(nx)
        self.ny = int(ny)
        self.bbox = tuple(float(v) for v in bbox)
        if self.nx < 1 or self.ny < 1:
            raise ValueError("coarse dimensions must be at least 1x1")
        ids = mesh.coarse_id
        if ids.min(initial=0) < 0 or ids.max(initial=0) >= self.n_cells:
            raise MeshFormatError("fine cell with coarse id outside the grid")
        order = np.argsort(ids, kind="stable")
        bounds = np.searchsorted(ids[order], np.arange(self.n_cells + 1))
        self.cell_fine = [order[bounds[i] : bounds[i + 1]] for i in range(self.n_cells)]
        if any(len(f) == 0 for f in self.cell_fine):
            raise MeshFormatError("coarse cell without fine cells")
        self.cell_area = np.array([mesh.area[f].sum() for f in self.cell_fine])

    @property
    def n_cells(self):
        return self.nx * self.ny

    def locate(self, pts):
        """Coarse cell index containing each point."""
        x0, y0, x1, y1 = self.bbox
        pts = np.atleast_2d(pts)
        ix = np.clip(((pts[:, 0] - x0) / (x1 - x0) * self.nx).astype(int), 0, self.nx - 1)
        iy = np.clip(((pts[:, 1] - y0) / (y1 - y0) * self.ny).astype(int), 0, self.ny - 1)
        return iy * self.nx + ix

    def rect(self, i):
        """Extents (x0, y0, x1, y1) of coarse cell i."""
        x0, y0, x1, y1 = self.bbox
        hx, hy = (x1 - x0) / self.nx, (y1 - y0) / self.ny
        iy, ix = divmod(int(i), self.nx)
        return (x0 + ix * hx, y0 + iy * hy, x0 + (ix + 1) * hx, y0 + (iy + 1) * hy)


def oversample_region(coarse, i):
    """Indices of the coarse cell i plus its vertex-neighbor ring, clipped
    at the domain boundary."""
    if not 0 <= i < coarse.n_cells:
        raise IndexError(f"coarse cell index {i} out of range")
    iy, ix = divmod(int(i), coarse.nx)
    out = []
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            jx, jy = ix + dx, iy + dy
            if 0 <= jx < coarse.nx and 0 <= jy < coarse.ny:
                out.append(jy * coarse.nx + jx)
    return sorted(out)


def build_edge_topology(mesh):
    """Populate oriented edge arrays on the mesh.

    Interior edges store (K+, K-) with the lower cell index as K+ and the
    unit normal pointing from K+ into K-.  Boundary edges store the single
    adjacent cell, an outward normal and the bounding-box side they lie on.
    """
    incidence = {}
    for c in range(mesh.n_cells):
        v = mesh.cells[c]
        for a in range(3):
            key = (min(v[(a + 1) % 3], v[(a + 2) % 3]), max(v[(a + 1) % 3], v[(a + 2) % 3]))
            incidence.setdefault(key, []).append((c, a))
    keys = sorted(incidence)

    ne = len(keys)
    edge_verts = np.empty((ne, 2), dtype=np.int64)
    edge_cells = np.full((ne, 2), -1, dtype=np.int64)
    edge_normal = np.empty((ne, 2))
    edge_length = np.empty(ne)
    edge_side = np.full(ne, INTERIOR, dtype=np.int8)
    cell_edges = np.full((mesh.n_cells, 3), -1, dtype=np.int64)

    x0, y0, x1, y1 = mesh.bbox
    tol = 1e-9 * max(x1 - x0, y1 - y0)

    for e, key in enumerate(keys):
        adj = incidence[key]
        if len(adj) > 2:
            raise MeshFormatError(f"edge {key} shared by more than two cells")
        edge_verts[e] = key
        pa, pb = mesh.verts[key[0]], mesh.verts[key[1]]
        t = pb - pa
        length = float(np.hypot(t[0], t[1]))
        if length <= 0.0:
            raise MeshFormatError(f"edge {key} has zero length")
        n = np.array([t[1], -t[0]]) / length
        for c, a in adj:
            cell_edges[c, a] = e
        if len(adj) == 2:
            cp = min(adj[0][0], adj[1][0])
            cm = max(adj[0][0], adj[1][0])
            edge_cells[e] = (cp, cm)
            if np.dot(n, mesh.centroid[cm] - mesh.centroid[cp]) < 0.0:
                n = -n
        else:
            c = adj[0][0]
            edge_cells[e, 0] = c
            if np.dot(n, mesh.centroid[c] - 0.5 * (pa + pb)) > 0.0:
                n = -n
            mid = 0.5 * (pa + pb)
            if abs(pa[0] - x0) < tol and abs(pb[0] - x0) < tol:
                edge_side[e] = LEFT
            elif abs(pa[0] - x1) < tol and abs(pb[0] - x1) < tol:
                edge_side[e] = RIGHT
            elif abs(pa[1] - y0) < tol and abs(pb[1] - y0) < tol:
                edge_side[e] = BOTTOM
            elif abs(pa[1] - y1) < tol and abs(pb[1] - y1) < tol:
                edge_side[e] = TOP
            else:
                raise MeshFormatError(
                    f"boundary edge {key} near {mid} does not lie on a bbox side"
                )
        edge_normal[e] = n
        edge_length[e] = length

    mesh.edge_verts = edge_verts
    mesh.edge_cells = edge_cells
    mesh.edge_normal = edge_normal
    mesh.edge_length = edge_length
    mesh.edge_side = edge_side
    mesh.cell_edges = cell_edges
    return mesh


def generate_structured_mesh(domain, n_per_coarse, coarse_dims):
    """Uniform triangulation conforming to a structured coarse grid.

    Each coarse cell splits into n_per_coarse x n_per_coarse squares and each
    square into two triangles.  Cells are tagged porous when their centroid
    lies inside an inclusion disk, so circle boundaries are resolved only to
    O(h); use load_mesh for externally fitted meshes.
    """
    nx, ny = coarse_dims
    n = int(n_per_coarse)
    if n < 1 or nx < 1 or ny < 1:
        raise ValueError("n_per_coarse and coarse dimensions must be >= 1")
    x0, y0, x1, y1 = domain.bbox
    ax, ay = nx * n, ny * n

    xs = np.linspace(x0, x1, ax + 1)
    ys = np.linspace(y0, y1, ay + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="xy")
    verts = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (ax + 1) + i

    cells = np.empty((2 * ax * ay, 3), dtype=np.int64)
    k = 0
    for j in range(ay):
        for i in range(ax):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            cells[k] = (v00, v10, v11)
            cells[k + 1] = (v00, v11, v01)
            k += 2

    centroids = verts[cells].mean(axis=1)
    region = np.where(domain.porous_mask(centroids), POROUS, FLUID)
    cix = np.floor((centroids[:, 0] - x0) / (x1 - x0) * nx).astype(np.int64)
    ciy = np.floor((centroids[:, 1] - y0) / (y1 - y0) * ny).astype(np.int64)
    coarse_id = np.clip(ciy, 0, ny - 1) * nx + np.clip(cix, 0, nx - 1)

    mesh = TriMesh(verts, cells, region, coarse_id, domain.bbox)
    build_edge_topology(mesh)
    coarse = CoarseGrid(nx, ny, domain.bbox, mesh)
    return mesh, coarse


REGION_NAMES = {FLUID: "fluid", POROUS: "porous"}
REGION_CODES = {v: k for k, v in REGION_NAMES.items()}


def save_mesh(path, mesh, coarse):
    """Write the line-oriented mesh text format (header `msflow-mesh v1`)."""
    lines = ["msflow-mesh v1", f"coarse {coarse.nx} {coarse.ny}"]
    lines.append(f"vertices {mesh.n_verts}")
    for i, (x, y) in enumerate(mesh.verts):
        lines.append(f"{i} {float(x)!r} {float(y)!r}")
    lines.append(f"cells {mesh.n_cells}")
    for c in range(mesh.n_cells):
        v = mesh.cells[c]
        lines.append(
            f"{c} {v[0]} {v[1]} {v[2]} "
            f"{REGION_NAMES[int(mesh.region[c])]} {mesh.coarse_id[c]}"
        )
    boundary = np.nonzero(mesh.edge_side != INTERIOR)[0]
    lines.append(f"boundary {len(boundary)}")
    for e in boundary:
        va, vb = mesh.edge_verts[e]
        lines.append(f"{va} {vb} {SIDE_NAMES[int(mesh.edge_side[e])]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path, coarse_dims=None):
    """Read the mesh text format and rebuild topology.

    The coarse overlay comes from the file's `coarse nx ny` line or the
    coarse_dims argument; coarse assignments are validated against centroids.
    """
    with open(path) as fh:
        raw = fh.read().splitlines()

    def fail(lineno, msg):
        raise MeshFormatError(f"{path}:{lineno + 1}: {msg}")

    if not raw or raw[0].strip() != "msflow-mesh v1":
        fail(0, "missing 'msflow-mesh v1' header")

    verts = cells = region = coarse_id = None
    boundary_labels = {}
    dims = coarse_dims
    i = 1
    while i < len(raw):
        line = raw[i].strip()
        if not line or line.startswith("#"):
            i += 1
            continue
        tok = line.split()
        if tok[0] == "coarse":
            if len(tok) != 3:
                fail(i, "expected 'coarse nx ny'")
            dims = (int(tok[1]), int(tok[2]))
            i += 1
        elif tok[0] == "vertices":
            count = int(tok[1])
            verts = np.empty((count, 2))
            for k in range(count):
                t = raw[i + 1 + k].split()
                if len(t) != 3:
                    fail(i + 1 + k, "expected 'id x y'")
                verts[int(t[0])] = (float(t[1]), float(t[2]))
            i += 1 + count
        elif tok[0] == "cells":
            count = int(tok[1])
            cells = np.empty((count, 3), dtype=np.int64)
            region = np.empty(count, dtype=np.int8)
            coarse_id = np.empty(count, dtype=np.int64)
            for k in range(count):
                t = raw[i + 1 + k].split()
                if len(t) != 6:
                    fail(i + 1 + k, "expected 'id v0 v1 v2 region coarse_id'")
                c = int(t[0])
                cells[c] = (int(t[1]), int(t[2]), int(t[3]))
                if t[4] not in REGION_CODES:
                    fail(i + 1 + k, f"unknown region tag {t[4]!r}")
                region[c] = REGION_CODES[t[4]]
                coarse_id[c] = int(t[5])
            i += 1 + count
        elif tok[0] == "boundary":
            count = int(tok[1])
            for k in range(count):
                t = raw[i + 1 + k].split()
                if len(t) != 3 or t[2] not in SIDE_CODES:
                    fail(i + 1 + k, "expected 'v0 v1 side'")
                key = (min(int(t[0]), int(t[1])), max(int(t[0]), int(t[1])))
                boundary_labels[key] = SIDE_CODES[t[2]]
            i += 1 + count
        else:
            fail(i, f"unknown section {tok[0]!r}")

    if verts is None or cells is None:
        raise MeshFormatError(f"{path}: missing vertices or cells section")
    if dims is None:
        raise MeshFormatError(
            f"{path}: no 'coarse nx ny' line and no coarse_dims given"
        )
    if cells.min() < 0 or cells.max() >= len(verts):
        bad = int(np.argmax((cells < 0) | (cells >= len(verts))).item() // 3)
        raise MeshFormatError(f"{path}: cell {bad} references a missing vertex")

    bbox = (verts[:, 0].min(), verts[:, 1].min(), verts[:, 0].max(), verts[:, 1].max())
    mesh = TriMesh(verts, cells, region, coarse_id, bbox)
    build_edge_topology(mesh)
    for key, side in boundary_labels.items():
        hits = np.nonzero((mesh.edge_verts[:, 0] == key[0]) & (mesh.edge_verts[:, 1] == key[1]))[0]
        if len(hits) != 1 or mesh.edge_cells[hits[0], 1] >= 0:
            raise MeshFormatError(f"{path}: listed boundary edge {key} is not a boundary edge")
        if mesh.edge_side[hits[0]] != side:
            raise MeshFormatError(
                f"{path}: boundary edge {key} labelled {SIDE_NAMES[side]} but lies on "
                f"{SIDE_NAMES[int(mesh.edge_side[hits[0]])]}"
            )
    coarse = CoarseGrid(dims[0], dims[1], bbox, mesh)
    mesh.validate(coarse)
    return mesh, coarse
