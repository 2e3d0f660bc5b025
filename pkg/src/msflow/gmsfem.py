"""Multiscale velocity space construction and the coarse-scale solver.

Offline stage: solve local steady flow problems on each coarse cell (or its
oversampled neighborhood) with a discrete-delta boundary datum per fine
boundary facet and Cartesian direction, restrict to the target cell, and
reduce the resulting snapshot family through a generalized eigenproblem.
Online stage: project the fine blocks onto the retained basis, march the
same linearized implicit scheme on the reduced system, and reconstruct the
fine-grid velocity from the coarse coefficients.
"""

import hashlib
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from . import forms
from .errors import SingularSystemError
from .fine_solver import StepOperators, Trajectory, run_fine
from .parameters import DGState
from .patches import coarse_cell_patch
from .quadrature import EDGE_G2_W
from .saddle import SaddleSolver, SaddleSystem

S_RANK_TOL = 1e-10


@dataclass
class SnapshotSet:
    """Velocity snapshots of one coarse cell restricted to that cell.

    rows has one snapshot per boundary facet and Cartesian direction
    (row 2k + d for facet k, direction d) over the target cell's local
    velocity DOFs.
    """

    cell_index: int
    oversampled: bool
    target_cells: np.ndarray  # sorted global fine-cell ids of the coarse cell
    facet_edges: np.ndarray  # global edge ids carrying the delta data
    rows: np.ndarray  # (2 * n_facets, 6 * len(target_cells))

    @property
    def n_snapshots(self):
        return self.rows.shape[0]


@dataclass
class CellBasis:
    """All generalized eigenpairs of one cell's snapshot reduction; a basis
    of any size m is the prefix of the eigenvector list.

    a_snap/s_snap are the operator pair on the (rank-filtered) snapshot
    family and reduced_vectors holds the eigenvectors in that family's
    coordinates, so residual and orthogonality checks are well posed even
    when the raw restricted snapshots were numerically dependent.
    """

    cell_index: int
    eigenvalues: np.ndarray
    snap_vectors: np.ndarray  # (n_raw_snapshots, n_pairs), raw coordinates
    snapshots: SnapshotSet
    a_snap: np.ndarray
    s_snap: np.ndarray
    reduced_vectors: np.ndarray  # (n_pairs, n_pairs), columns s_snap-orthonormal

    def fine_vectors(self, m):
        """First m basis vectors on the target cell's local velocity DOFs,
        returned as rows (m, 6 * n_target_cells)."""
        if not 1 <= m <= self.snap_vectors.shape[1]:
            raise ValueError(
                f"basis size {m} outside 1..{self.snap_vectors.shape[1]} "
                f"for coarse cell {self.cell_index}"
            )
        return (self.snapshots.rows.T @ self.snap_vectors[:, :m]).T


@dataclass
class MultiscaleSpace:
    """Retained per-cell bases with the global projection operators."""

    m: int
    oversampled: bool
    cell_bases: list
    r_u: sp.csr_matrix  # (m * n_coarse, 6 * n_fine)
    r_p: sp.csr_matrix  # (n_coarse, n_fine)

    @property
    def n_u(self):
        return self.r_u.shape[0]

    @property
    def n_p(self):
        return self.r_p.shape[0]

    @property
    def dof(self):
        return self.n_u + self.n_p


def compute_linearization_field(mesh, params, bc, ops=None):
    """Final-time velocity of the linear (convection- and drag-frozen)
    evolution, used to weight the local snapshot problems."""
    traj = run_fine(mesh, params, bc, linear=True, ops=ops)
    return traj.final.velocity.copy()


def compatibility_constant(patch, edge_id, direction):
    """Uniform mass source balancing the boundary flux of a unit delta on
    the given patch boundary facet: |facet| (e_dir . n_out) / |patch|."""
    pos = np.nonzero(patch.dirichlet_edges == edge_id)[0]
    if len(pos) != 1:
        raise ValueError(f"edge {edge_id} is not a boundary facet of the patch")
    k = int(pos[0])
    if patch.area <= 0.0:
        raise ValueError("patch has zero area")
    return float(patch.dir_len[k] * patch.dir_normal[k, direction] / patch.area)


def _delta_rhs_batch(patch, params):
    """Right-hand sides of all delta-data local problems, one column per
    (facet, direction) pair in row order 2k + d.

    The continuity data combines the facet flux with a uniform volume source
    sized so each column sums to zero, which the all-Dirichlet local problem
    needs for solvability.
    """
    nd = len(patch.dirichlet_edges)
    mesh = patch.mesh
    w = EDGE_G2_W
    xi = mesh.xi(params.porosity)
    kappa = 1.0 / (xi[patch.cells[patch.dir_cell]] * params.reynolds)
    lam = forms._edge_traces(patch, "d")
    gdn = forms._grad_dot_n(patch, patch.dir_cell, patch.dir_normal)
    intlam = np.einsum("q,nqa->na", w, lam)  # edge-average of each trace fn
    base = 2.0 * params.penalty * kappa[:, None] * intlam - kappa[:, None] * (
        patch.dir_len[:, None] * gdn
    )

    f_u = np.zeros((patch.n_vdof, 2 * nd))
    f_p = np.zeros((patch.n_pdof, 2 * nd))
    areas = mesh.area[patch.cells]
    for k in range(nd):
        cell = patch.dir_cell[k]
        flux = patch.dir_len[k] * patch.dir_normal[k]  # per direction
        for d in range(2):
            col = 2 * k + d
            f_u[6 * cell + 2 * np.arange(3) + d, col] = base[k]
            f_p[cell, col] += flux[d]
            f_p[:, col] -= (flux[d] / patch.area) * areas
    return f_u, f_p


def build_snapshots(mesh, coarse, params, i, oversampled, u_lin):
    """Solve the local snapshot problems of coarse cell i and restrict the
    velocities to the cell.  u_lin is the global linearization field."""
    patch = coarse_cell_patch(mesh, coarse, i, oversampled=oversampled)
    target = np.sort(coarse.cell_fine[int(i)])

    a = forms.assemble_convection_diffusion(patch, params, u_lin)
    d = forms.assemble_darcy_forchheimer(patch, params, u_lin)
    b = forms.assemble_divergence(patch)
    f_u, f_p = _delta_rhs_batch(patch, params)
    system = SaddleSystem(
        sp.csr_matrix((patch.n_vdof, patch.n_vdof)), a, d, b,
        np.zeros(patch.n_vdof), np.zeros(patch.n_pdof),
    )
    try:
        solver = SaddleSolver(system, pin_pressure=True)
    except SingularSystemError as exc:
        raise SingularSystemError(
            f"local system of coarse cell {i} (oversampled={oversampled}): {exc}"
        ) from exc
    velocities, _, residuals = solver.solve_many(f_u, f_p)
    bad = np.nonzero(residuals > 1e-9)[0]
    if len(bad):
        k, d = divmod(int(bad[0]), 2)
        raise SingularSystemError(
            f"snapshot solve failed on coarse cell {i}, facet {k} "
            f"(edge {patch.dirichlet_edges[k]}), direction {d}: "
            f"relative residual {residuals[bad[0]]:.2e}"
        )

    local_target = patch.local_of[target]
    take = (6 * local_target[:, None] + np.arange(6)[None, :]).ravel()
    rows = velocities[take, :].T.copy()
    if not np.all(np.isfinite(rows)):
        raise SingularSystemError(f"non-finite snapshot on coarse cell {i}")
    return SnapshotSet(
        cell_index=int(i),
        oversampled=bool(oversampled),
        target_cells=target,
        facet_edges=patch.dirichlet_edges.copy(),
        rows=rows,
    )


def generalized_eigh(a, s, rank_tol=S_RANK_TOL):
    """Ascending eigenpairs of the symmetric pencil (a, s) with a singular
    or ill-conditioned right operator handled by rank-revealing whitening.

    Directions outside the numerical range of s (relative eigenvalue below
    rank_tol) correspond to infinite pencil eigenvalues and are dropped; for
    a well-conditioned s this reduces to the ordinary generalized solve.

    Returns (eigenvalues, vectors, filtered) where vectors are in the
    original coordinates with columns s-orthonormal, and filtered is the
    pair (a_f, s_f, z) on the whitened family: a_f its stiffness, s_f the
    (identity) mass, z the eigenvectors in whitened coordinates.
    """
    a = 0.5 * (a + a.T)
    s = 0.5 * (s + s.T)
    sw, q = la.eigh(s)
    keep = sw > rank_tol * max(sw[-1], 0.0)
    if not np.any(keep):
        raise ValueError("trace-mass operator of the snapshot family is zero")
    if not np.all(keep):
        warnings.warn(
            f"snapshot family numerically dependent: keeping {keep.sum()} of "
            f"{len(sw)} directions with trace mass",
            RuntimeWarning,
        )
    white = q[:, keep] / np.sqrt(sw[keep])[None, :]
    a_f = white.T @ a @ white
    a_f = 0.5 * (a_f + a_f.T)
    lam, z = la.eigh(a_f)
    vectors = white @ z
    s_f = white.T @ s @ white
    return lam, vectors, (a_f, 0.5 * (s_f + s_f.T), z)


def spectral_reduce(snapshots, mesh, coarse, params, m, edge_set="boundary"):
    """Reduce a snapshot set to its m smoothest modes.

    The pencil pairs the viscous stiffness (volume plus interior-edge
    couplings on the target cell, no boundary or drag terms) against the
    boundary-trace mass, both projected through the snapshot rows; the m
    eigenvectors of smallest eigenvalue become the cell's velocity basis.
    """
    patch = coarse_cell_patch(mesh, coarse, snapshots.cell_index, oversampled=False)
    if not np.array_equal(patch.cells, snapshots.target_cells):
        raise ValueError("snapshot set does not match the coarse cell")
    n_snap = snapshots.n_snapshots
    if not 1 <= m <= n_snap:
        raise ValueError(f"basis size {m} outside 1..{n_snap}")
    a_loc, s_loc = forms.assemble_spectral_pair(patch, params, edge_set=edge_set)
    r = snapshots.rows
    a_snap = r @ (a_loc @ r.T)
    s_snap = r @ (s_loc @ r.T)
    w, v, (a_f, s_f, z) = generalized_eigh(a_snap, s_snap)
    if m > len(w):
        raise ValueError(
            f"coarse cell {snapshots.cell_index}: only {len(w)} independent "
            f"modes available, cannot retain {m}"
        )
    return CellBasis(
        cell_index=snapshots.cell_index,
        eigenvalues=w,
        snap_vectors=v,
        snapshots=snapshots,
        a_snap=a_f,
        s_snap=s_f,
        reduced_vectors=z,
    )


def build_projection(cell_bases, mesh, coarse, m):
    """Stack the per-cell bases into the global velocity projection and the
    coarse-cell indicator rows for pressure."""
    n = coarse.n_cells
    if len(cell_bases) != n:
        raise ValueError(f"expected {n} cell bases, got {len(cell_bases)}")
    rows, cols, vals = [], [], []
    for basis in sorted(cell_bases, key=lambda b: b.cell_index):
        vecs = basis.fine_vectors(m)  # (m, 6 * n_target)
        target = basis.snapshots.target_cells
        gdof = (6 * target[:, None] + np.arange(6)[None, :]).ravel()
        base_row = m * basis.cell_index
        rows.append(np.repeat(base_row + np.arange(m), len(gdof)))
        cols.append(np.tile(gdof, m))
        vals.append(vecs.ravel())
    r_u = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m * n, 6 * mesh.n_cells),
    ).tocsr()

    pcols = np.concatenate([np.sort(coarse.cell_fine[i]) for i in range(n)])
    prows = np.concatenate([np.full(len(coarse.cell_fine[i]), i) for i in range(n)])
    r_p = sp.coo_matrix(
        (np.ones(len(pcols)), (prows, pcols)), shape=(n, mesh.n_cells)
    ).tocsr()
    return r_u, r_p


def default_thread_count():
    env = os.environ.get("MSFLOW_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return 1


def build_multiscale_space(
    mesh,
    coarse,
    params,
    bc=None,
    m=10,
    oversampled=False,
    u_lin=None,
    edge_set="boundary",
    threads=None,
):
    """Offline stage: linearization field, per-cell snapshots and spectral
    reduction (cell-parallel), and the global projection operators."""
    if u_lin is None:
        if bc is None:
            raise ValueError("either boundary data or a linearization field is needed")
        u_lin = compute_linearization_field(mesh, params, bc)
    threads = default_thread_count() if threads is None else max(1, int(threads))

    def one_cell(i):
        snap = build_snapshots(mesh, coarse, params, i, oversampled, u_lin)
        return spectral_reduce(snap, mesh, coarse, params, m, edge_set=edge_set)

    indices = range(coarse.n_cells)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            bases = list(pool.map(one_cell, indices))
    else:
        bases = [one_cell(i) for i in indices]
    bases.sort(key=lambda b: b.cell_index)
    r_u, r_p = build_projection(bases, mesh, coarse, m)
    return MultiscaleSpace(
        m=m, oversampled=bool(oversampled), cell_bases=bases, r_u=r_u, r_p=r_p
    )


def resize_space(space, mesh, coarse, m):
    """Same cell bases, different retained count (prefix of the eigenvectors)."""
    if not space.cell_bases:
        raise ValueError("space carries no cell bases to resize")
    r_u, r_p = build_projection(space.cell_bases, mesh, coarse, m)
    return MultiscaleSpace(
        m=m,
        oversampled=space.oversampled,
        cell_bases=space.cell_bases,
        r_u=r_u,
        r_p=r_p,
    )


def _coarse_solve(upper, b_h, rhs_u, rhs_p):
    """Solve the projected saddle system; falls back to a dense least-squares
    solve when the sparse factorization cannot reach the residual target."""
    n_u = upper.shape[0]
    matrix = sp.bmat([[upper, b_h.T], [b_h, None]], format="csc")
    rhs = np.concatenate([rhs_u, rhs_p])
    try:
        x = sp.linalg.splu(matrix).solve(rhs)
        fail = not np.all(np.isfinite(x))
    except RuntimeError:
        fail = True
        x = None
    scale = abs(matrix).sum(axis=1).max() or 1.0
    if not fail:
        resid = np.linalg.norm(matrix @ x - rhs)
        fail = resid > 1e-9 * max(np.linalg.norm(rhs), scale * np.linalg.norm(x), 1e-300)
    if fail:
        warnings.warn(
            "coarse system factorization degraded; using dense least squares",
            RuntimeWarning,
        )
        x, *_ = np.linalg.lstsq(matrix.toarray(), rhs, rcond=None)
        resid = np.linalg.norm(matrix @ x - rhs)
        if resid > 1e-9 * max(np.linalg.norm(rhs), scale * np.linalg.norm(x), 1e-300):
            raise SingularSystemError(
                f"coarse system is singular (residual {resid:.2e})"
            )
    return x[:n_u], x[n_u:]


def run_multiscale(mesh, coarse, params, bc, m=None, oversampled=False, space=None, ops=None):
    """Online stage: march the projected system and reconstruct the fine
    velocity.

    The nonlinear weights are refreshed every step from the reconstructed
    fine-grid field of the previous coarse step; the basis stays fixed.
    Returns the coarse trajectory and the reconstructed fine state at the
    final time.
    """
    if space is None:
        if m is None:
            raise ValueError("either a space or a basis size m is required")
        space = build_multiscale_space(mesh, coarse, params, bc, m=m, oversampled=oversampled)
    r_u, r_p = space.r_u, space.r_p
    ops = ops if ops is not None else StepOperators(mesh, params, bc)
    patch = ops.patch

    m_h = (r_u @ ops.mass @ r_u.T).tocsr()
    a_static = (r_u @ ops.viscous @ r_u.T).tocsr()
    d_static = (r_u @ ops.darcy @ r_u.T).tocsr()
    b_h = (r_p @ ops.div @ r_u.T).tocsr()
    f_u = r_u @ ops.f_u
    f_p = r_p @ ops.f_p
    b_scale = abs(b_h).sum(axis=1).max() or 1.0

    u_h = np.zeros(space.n_u)
    p_h = np.zeros(space.n_p)
    states = [DGState(u_h.copy(), p_h.copy())]
    residuals = np.empty(params.n_steps)
    for step in range(params.n_steps):
        u_rec = r_u.T @ u_h
        upper = m_h + a_static + d_static
        if np.any(u_rec):
            upper = upper + r_u @ forms.convection_block(patch, params, u_rec) @ r_u.T
            upper = upper + r_u @ forms.forchheimer_block(patch, params, u_rec) @ r_u.T
        rhs_u = m_h @ u_h + f_u
        u_h, p_h = _coarse_solve(upper.tocsr(), b_h, rhs_u, f_p)
        resid = np.linalg.norm(b_h @ u_h - f_p)
        denom = max(np.linalg.norm(f_p), b_scale * np.linalg.norm(u_h), 1e-300)
        residuals[step] = resid / denom
        states.append(DGState(u_h.copy(), p_h.copy()))
    times = params.tau * np.arange(params.n_steps + 1)
    coarse_traj = Trajectory(states, times, residuals)
    fine_state = DGState(r_u.T @ u_h, r_p.T @ p_h)
    return coarse_traj, fine_state


def _space_key(mesh, params, oversampled, edge_set):
    digest = hashlib.sha256()
    for arr in (mesh.verts, mesh.cells, mesh.region, mesh.coarse_id):
        digest.update(np.ascontiguousarray(arr).tobytes())
    digest.update(
        repr(
            (
                params.reynolds,
                params.darcy,
                params.forchheimer,
                params.porosity,
                params.penalty,
                params.tau,
                params.n_steps,
                bool(oversampled),
                edge_set,
            )
        ).encode()
    )
    return digest.hexdigest()[:16]


def save_space(directory, mesh, params, space, edge_set="boundary"):
    """Dump eigenvalues and basis rows keyed by mesh/parameter hashes so a
    later run with the same inputs can skip the offline stage."""
    os.makedirs(directory, exist_ok=True)
    key = _space_key(mesh, params, space.oversampled, edge_set)
    path = os.path.join(directory, f"basis_{key}_m{space.m}.npz")
    payload = {
        "m": np.array([space.m]),
        "oversampled": np.array([int(space.oversampled)]),
    }
    for basis in space.cell_bases:
        i = basis.cell_index
        payload[f"eig_{i}"] = basis.eigenvalues
        payload[f"vec_{i}"] = basis.fine_vectors(space.m)
        payload[f"cells_{i}"] = basis.snapshots.target_cells
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        np.savez_compressed(fh, **payload)
    os.replace(tmp, path)
    return path


def load_space(directory, mesh, coarse, params, m, oversampled, edge_set="boundary"):
    """Load a cached space with basis size >= m, or None when absent."""
    key = _space_key(mesh, params, oversampled, edge_set)
    if not os.path.isdir(directory):
        return None
    candidates = []
    for name in os.listdir(directory):
        if name.startswith(f"basis_{key}_m") and name.endswith(".npz"):
            stored_m = int(name[len(f"basis_{key}_m") : -4])
            if stored_m >= m:
                candidates.append((stored_m, name))
    if not candidates:
        return None
    _, name = min(candidates)
    data = np.load(os.path.join(directory, name))
    n = coarse.n_cells
    rows, cols, vals = [], [], []
    for i in range(n):
        vecs = data[f"vec_{i}"][:m]
        target = data[f"cells_{i}"]
        gdof = (6 * target[:, None] + np.arange(6)[None, :]).ravel()
        rows.append(np.repeat(m * i + np.arange(m), len(gdof)))
        cols.append(np.tile(gdof, m))
        vals.append(vecs.ravel())
    r_u = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m * n, 6 * mesh.n_cells),
    ).tocsr()
    pcols = np.concatenate([np.sort(coarse.cell_fine[i]) for i in range(n)])
    prows = np.concatenate([np.full(len(coarse.cell_fine[i]), i) for i in range(n)])
    r_p = sp.coo_matrix(
        (np.ones(len(pcols)), (prows, pcols)), shape=(n, mesh.n_cells)
    ).tocsr()
    return MultiscaleSpace(m=m, oversampled=bool(oversampled), cell_bases=[], r_u=r_u, r_p=r_p)
