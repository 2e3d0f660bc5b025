"""Cell patches: the assembly unit shared by the global problem and the
local snapshot problems.

A patch is a set of fine cells with a local DOF numbering (6 velocity DOFs
and 1 pressure DOF per cell), its interior edges, and its Dirichlet boundary
edges.  For the full mesh the Dirichlet edges are the velocity-boundary
sides; the outflow side is natural and gets no edge terms.  For a coarse-cell
patch every bounding edge is Dirichlet, which is what the snapshot problems
need.
"""

import numpy as np

from .geometry import INTERIOR, DIRICHLET_SIDES, oversample_region


class Patch:
    def __init__(self, mesh, cells, dirichlet_edges, interior_edges, natural_edges=()):
        self.mesh = mesh
        self.cells = np.asarray(cells, dtype=np.int64)
        if len(self.cells) == 0:
            raise ValueError("empty cell patch")
        self.local_of = np.full(mesh.n_cells, -1, dtype=np.int64)
        self.local_of[self.cells] = np.arange(len(self.cells))
        self.interior_edges = np.asarray(interior_edges, dtype=np.int64)
        self.dirichlet_edges = np.asarray(dirichlet_edges, dtype=np.int64)
        self.natural_edges = np.asarray(natural_edges, dtype=np.int64)
        self.area = float(mesh.area[self.cells].sum())
        self._build_edge_maps()

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_vdof(self):
        return 6 * self.n_cells

    @property
    def n_pdof(self):
        return self.n_cells

    def _local_vertex_index(self, cells, verts):
        """Local index (0..2) of each given vertex id within each given cell."""
        cv = self.mesh.cells[cells]
        idx = np.argmax(cv == verts[:, None], axis=1)
        if not np.all(cv[np.arange(len(cells)), idx] == verts):
            raise ValueError("edge endpoint is not a vertex of the adjacent cell")
        return idx

    def _build_edge_maps(self):
        mesh = self.mesh
        ie = self.interior_edges
        self.int_len = mesh.edge_length[ie]
        self.int_normal = mesh.edge_normal[ie]
        self.int_cp = self.local_of[mesh.edge_cells[ie, 0]] if len(ie) else np.empty(0, dtype=np.int64)
        self.int_cm = self.local_of[mesh.edge_cells[ie, 1]] if len(ie) else np.empty(0, dtype=np.int64)
        va, vb = (mesh.edge_verts[ie, 0], mesh.edge_verts[ie, 1]) if len(ie) else (np.empty(0, dtype=np.int64),) * 2
        if len(ie):
            self.int_ia_p = self._local_vertex_index(mesh.edge_cells[ie, 0], va)
            self.int_ib_p = self._local_vertex_index(mesh.edge_cells[ie, 0], vb)
            self.int_ia_m = self._local_vertex_index(mesh.edge_cells[ie, 1], va)
            self.int_ib_m = self._local_vertex_index(mesh.edge_cells[ie, 1], vb)
        else:
            self.int_ia_p = self.int_ib_p = self.int_ia_m = self.int_ib_m = np.empty(0, dtype=np.int64)

        de = self.dirichlet_edges
        self.dir_len = mesh.edge_length[de]
        self.dir_va = mesh.edge_verts[de, 0] if len(de) else np.empty(0, dtype=np.int64)
        self.dir_vb = mesh.edge_verts[de, 1] if len(de) else np.empty(0, dtype=np.int64)
        # The inside cell is whichever adjacent cell belongs to the patch;
        # orient the stored normal outward from it.
        if len(de):
            c0, c1 = mesh.edge_cells[de, 0], mesh.edge_cells[de, 1]
            in0 = self.local_of[c0] >= 0
            inside = np.where(in0, c0, c1)
            self.dir_cell = self.local_of[inside]
            # Boundary edges of the global mesh already point outward from
            # their only cell; interior edges point K+ -> K-.
            sign = np.where(c1 < 0, 1.0, np.where(in0, 1.0, -1.0))
            self.dir_normal = mesh.edge_normal[de] * sign[:, None]
            self.dir_ia = self._local_vertex_index(inside, self.dir_va)
            self.dir_ib = self._local_vertex_index(inside, self.dir_vb)
        else:
            self.dir_cell = np.empty(0, dtype=np.int64)
            self.dir_normal = np.empty((0, 2))
            self.dir_ia = self.dir_ib = np.empty(0, dtype=np.int64)
        self.dir_side = mesh.edge_side[de] if len(de) else np.empty(0, dtype=np.int8)

        ng = self.natural_edges
        self.nat_len = mesh.edge_length[ng]
        if len(ng):
            self.nat_va = mesh.edge_verts[ng, 0]
            self.nat_vb = mesh.edge_verts[ng, 1]
            self.nat_cell = self.local_of[mesh.edge_cells[ng, 0]]
            self.nat_ia = self._local_vertex_index(mesh.edge_cells[ng, 0], self.nat_va)
            self.nat_ib = self._local_vertex_index(mesh.edge_cells[ng, 0], self.nat_vb)
        else:
            self.nat_va = self.nat_vb = np.empty(0, dtype=np.int64)
            self.nat_cell = np.empty(0, dtype=np.int64)
            self.nat_ia = self.nat_ib = np.empty(0, dtype=np.int64)

    def restrict_velocity(self, global_vec):
        """Restrict a global fine velocity vector to patch-local layout."""
        return global_vec.reshape(self.mesh.n_cells, 6)[self.cells].ravel()


def edge_split(mesh, cells):
    """Classify mesh edges against a cell set.

    Returns (interior, boundary): edges with both adjacent cells in the set,
    and edges with exactly one (global boundary edges of set cells included).
    """
    # extra slot absorbs the -1 marker of global boundary edges
    inset = np.zeros(mesh.n_cells + 1, dtype=bool)
    inset[cells] = True
    c0 = mesh.edge_cells[:, 0]
    c1 = mesh.edge_cells[:, 1]
    in0 = inset[c0]
    in1 = (c1 >= 0) & inset[c1]
    both = in0 & in1
    one = in0 ^ in1
    return np.nonzero(both)[0], np.nonzero(one)[0]


def full_patch(mesh):
    """Patch covering the whole mesh: velocity sides Dirichlet, outflow natural."""
    cells = np.arange(mesh.n_cells)
    interior = np.nonzero(mesh.edge_cells[:, 1] >= 0)[0]
    boundary = mesh.edge_side != INTERIOR
    dirichlet = np.nonzero(np.isin(mesh.edge_side, DIRICHLET_SIDES))[0]
    natural = np.nonzero(boundary & ~np.isin(mesh.edge_side, DIRICHLET_SIDES))[0]
    return Patch(mesh, cells, dirichlet, interior, natural)


def coarse_cell_patch(mesh, coarse, i, oversampled=False):
    """Patch over coarse cell i (or its oversampled neighborhood); every
    bounding facet is a Dirichlet edge for the local problems."""
    if oversampled:
        ids = oversample_region(coarse, i)
        cells = np.concatenate([coarse.cell_fine[j] for j in ids])
        cells.sort()
    else:
        cells = np.sort(coarse.cell_fine[int(i)])
    interior, boundary = edge_split(mesh, cells)
    return Patch(mesh, cells, boundary, interior)


def boundary_facets(mesh, coarse, i, oversampled=False):
    """Fine facets forming the boundary of coarse cell i (or of its
    oversampled neighborhood), in deterministic edge-id order."""
    if oversampled:
        ids = oversample_region(coarse, i)
        cells = np.concatenate([coarse.cell_fine[j] for j in ids])
    else:
        cells = coarse.cell_fine[int(i)]
    _, boundary = edge_split(mesh, cells)
    return boundary
