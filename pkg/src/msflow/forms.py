"""Sparse assembly of the interior-penalty DG forms.

Velocity DOF layout inside a cell: index 2*a + d for vertex a (0..2) and
component d (0 = x, 1 = y); cell c of a patch owns DOFs [6c, 6c + 6) and the
pressure DOF c.  All assemblers act on a Patch, so the same code serves the
global problem and the local snapshot problems.

The convective term and the quadratic drag carry the linearization field
pointwise (degree-4 rule, since |u| is not polynomial); every polynomial
integrand uses rules that are exact for its degree.
"""

import numpy as np
import scipy.sparse as sp

from .geometry import POROUS
from .quadrature import TRI_D4_BARY, TRI_D4_W, EDGE_G2_S, EDGE_G2_W


def _kron2(blocks):
    """Expand per-cell scalar 3x3 blocks to 6x6 vector blocks (components
    uncoupled)."""
    out = np.zeros(blocks.shape[:-2] + (6, 6))
    out[..., 0::2, 0::2] = blocks
    out[..., 1::2, 1::2] = blocks
    return out


def _pair_coo(rows_cells, cols_cells, blocks6):
    """COO triplets for (n, 6, 6) blocks coupling two local cell lists."""
    base_r = 6 * np.asarray(rows_cells)
    base_c = 6 * np.asarray(cols_cells)
    rows = base_r[:, None, None] + np.arange(6)[None, :, None]
    cols = base_c[:, None, None] + np.arange(6)[None, None, :]
    rows = np.broadcast_to(rows, blocks6.shape)
    cols = np.broadcast_to(cols, blocks6.shape)
    return rows.ravel(), cols.ravel(), blocks6.ravel()


def _cell_coo(local_cells, blocks6):
    return _pair_coo(local_cells, local_cells, blocks6)


def _collect(parts, shape):
    rows = np.concatenate([p[0] for p in parts]) if parts else np.empty(0, dtype=np.int64)
    cols = np.concatenate([p[1] for p in parts]) if parts else np.empty(0, dtype=np.int64)
    vals = np.concatenate([p[2] for p in parts]) if parts else np.empty(0)
    return sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()


def _edge_traces(patch, which):
    """Per-edge P1 trace tables lam (ne, q, 3) at the 2-point Gauss nodes.

    which selects the side: 'p'/'m' for interior edges, 'd' for Dirichlet
    boundary edges, 'n' for natural edges.
    """
    s = EDGE_G2_S
    if which == "p":
        ia, ib, n_edges = patch.int_ia_p, patch.int_ib_p, len(patch.interior_edges)
    elif which == "m":
        ia, ib, n_edges = patch.int_ia_m, patch.int_ib_m, len(patch.interior_edges)
    elif which == "d":
        ia, ib, n_edges = patch.dir_ia, patch.dir_ib, len(patch.dirichlet_edges)
    else:
        ia, ib, n_edges = patch.nat_ia, patch.nat_ib, len(patch.natural_edges)
    lam = np.zeros((n_edges, len(s), 3))
    if n_edges:
        e_idx = np.arange(n_edges)[:, None]
        q_idx = np.arange(len(s))[None, :]
        lam[e_idx, q_idx, ia[:, None]] = 1.0 - s[None, :]
        lam[e_idx, q_idx, ib[:, None]] = s[None, :]
    return lam


def _grad_dot_n(patch, cells_local, normal):
    g = patch.mesh.grad[patch.cells[cells_local]]
    return np.einsum("nam,nm->na", g, normal)


def dirichlet_edge_points(patch):
    """Quadrature points on the Dirichlet edges, (ne, q, 2)."""
    pa = patch.mesh.verts[patch.dir_va]
    pb = patch.mesh.verts[patch.dir_vb]
    s = EDGE_G2_S
    return pa[:, None, :] * (1.0 - s)[None, :, None] + pb[:, None, :] * s[None, :, None]


def natural_edge_points(patch):
    pa = patch.mesh.verts[patch.nat_va]
    pb = patch.mesh.verts[patch.nat_vb]
    s = EDGE_G2_S
    return pa[:, None, :] * (1.0 - s)[None, :, None] + pb[:, None, :] * s[None, :, None]


def _lambda_mass(patch):
    """Exact per-cell integrals of lambda_a lambda_b, (n, 3, 3)."""
    area = patch.mesh.area[patch.cells]
    template = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return area[:, None, None] * template[None]


def _velocity_at(patch, u_local, bary):
    """Evaluate a patch-local velocity vector at volume quadrature points.

    Returns (n_cells, q, 2).
    """
    coefs = u_local.reshape(patch.n_cells, 3, 2)
    return np.einsum("qa,nad->nqd", bary, coefs)


def assemble_mass(patch, params):
    """Velocity mass block of the time derivative: (1/tau) (u, v) weighted by
    the inverse permeability indicator."""
    xi = patch.mesh.xi(params.porosity)[patch.cells]
    coef = 1.0 / (params.tau * xi)
    blocks = _kron2(coef[:, None, None] * _lambda_mass(patch))
    part = _cell_coo(np.arange(patch.n_cells), blocks)
    return _collect([part], (patch.n_vdof, patch.n_vdof))


def velocity_mass(patch):
    """Plain vector L2 mass matrix (no model weights), used for norms."""
    blocks = _kron2(_lambda_mass(patch))
    part = _cell_coo(np.arange(patch.n_cells), blocks)
    return _collect([part], (patch.n_vdof, patch.n_vdof))


def _diffusion_volume(patch, params):
    mesh = patch.mesh
    xi = mesh.xi(params.porosity)[patch.cells]
    kappa = 1.0 / (xi * params.reynolds)
    grad = mesh.grad[patch.cells]
    gg = np.einsum("nam,nbm->nab", grad, grad)
    blocks = _kron2((kappa * mesh.area[patch.cells])[:, None, None] * gg)
    return _cell_coo(np.arange(patch.n_cells), blocks)


def _interior_edge_terms(patch, params):
    """Consistency, symmetry and penalty couplings on interior edges."""
    parts = []
    if len(patch.interior_edges) == 0:
        return parts
    mesh = patch.mesh
    w = EDGE_G2_W
    xi = mesh.xi(params.porosity)
    kap_p = 1.0 / (xi[patch.cells[patch.int_cp]] * params.reynolds)
    kap_m = 1.0 / (xi[patch.cells[patch.int_cm]] * params.reynolds)
    length = patch.int_len
    normal = patch.int_normal
    lam = {"p": _edge_traces(patch, "p"), "m": _edge_traces(patch, "m")}
    gdn = {
        "p": _grad_dot_n(patch, patch.int_cp, normal),
        "m": _grad_dot_n(patch, patch.int_cm, normal),
    }
    kap = {"p": kap_p, "m": kap_m}
    cell = {"p": patch.int_cp, "m": patch.int_cm}
    sign = {"p": 1.0, "m": -1.0}
    intlam = {k: np.einsum("q,nqa->na", w, v) * length[:, None] for k, v in lam.items()}
    # Mean of the permeability-Reynolds-size product over the two sides.
    pen_weight = params.penalty / (params.reynolds * length * 0.5 * (
        xi[patch.cells[patch.int_cp]] + xi[patch.cells[patch.int_cm]]
    ))
    for t in ("p", "m"):
        for u in ("p", "m"):
            cons = -0.5 * sign[t] * kap[u][:, None, None] * np.einsum(
                "na,nb->nab", intlam[t], gdn[u]
            )
            symm = -0.5 * sign[u] * kap[t][:, None, None] * np.einsum(
                "na,nb->nab", gdn[t], intlam[u]
            )
            pen = (sign[t] * sign[u] * pen_weight * length)[:, None, None] * np.einsum(
                "q,nqa,nqb->nab", w, lam[t], lam[u]
            )
            parts.append(_pair_coo(cell[t], cell[u], _kron2(cons + symm + pen)))
    return parts


def _dirichlet_edge_terms(patch, params):
    """Weak Dirichlet (Nitsche) couplings on the patch boundary edges."""
    parts = []
    if len(patch.dirichlet_edges) == 0:
        return parts
    mesh = patch.mesh
    w = EDGE_G2_W
    xi = mesh.xi(params.porosity)
    kappa = 1.0 / (xi[patch.cells[patch.dir_cell]] * params.reynolds)
    length = patch.dir_len
    lam = _edge_traces(patch, "d")
    gdn = _grad_dot_n(patch, patch.dir_cell, patch.dir_normal)
    intlam = np.einsum("q,nqa->na", w, lam) * length[:, None]
    cons = -kappa[:, None, None] * np.einsum("na,nb->nab", intlam, gdn)
    symm = -kappa[:, None, None] * np.einsum("na,nb->nab", gdn, intlam)
    pen = (2.0 * params.penalty * kappa)[:, None, None] * np.einsum(
        "q,nqa,nqb->nab", w, lam, lam
    )
    parts.append(_pair_coo(patch.dir_cell, patch.dir_cell, _kron2(cons + symm + pen)))
    return parts


def _convection_volume(patch, params, u_local):
    """Linearized convective volume term (u_lin . grad u, v) / xi^2."""
    mesh = patch.mesh
    bary, w = TRI_D4_BARY, TRI_D4_W
    xi = mesh.xi(params.porosity)[patch.cells]
    ulq = _velocity_at(patch, u_local, bary)
    grad = mesh.grad[patch.cells]
    adv = np.einsum("nqm,nbm->nqb", ulq, grad)
    scale = mesh.area[patch.cells] / xi**2
    blocks = scale[:, None, None] * np.einsum("q,qa,nqb->nab", w, bary, adv)
    return _cell_coo(np.arange(patch.n_cells), _kron2(blocks))


def viscous_block(patch, params):
    """Viscous volume term plus all interior and Dirichlet edge couplings;
    this is the linearization-independent part of the convection-diffusion
    block."""
    parts = [_diffusion_volume(patch, params)]
    parts += _interior_edge_terms(patch, params)
    parts += _dirichlet_edge_terms(patch, params)
    return _collect(parts, (patch.n_vdof, patch.n_vdof))


def convection_block(patch, params, u_lin):
    """Convective volume term linearized at the global fine field u_lin."""
    u_local = patch.restrict_velocity(np.asarray(u_lin, dtype=float))
    if u_local.shape != (patch.n_vdof,):
        raise ValueError("linearization field does not match the patch")
    if not np.any(u_local):
        return sp.csr_matrix((patch.n_vdof, patch.n_vdof))
    part = _convection_volume(patch, params, u_local)
    return _collect([part], (patch.n_vdof, patch.n_vdof))


def assemble_convection_diffusion(patch, params, u_lin=None):
    """Convection-diffusion block: viscous volume and edge terms plus the
    convective term linearized at u_lin (global fine layout; None means zero,
    which drops convection and leaves a symmetric block)."""
    block = viscous_block(patch, params)
    if u_lin is not None:
        block = block + convection_block(patch, params, u_lin)
    return block


def darcy_block(patch, params):
    """Linear porous drag; zero rows and columns on fluid cells."""
    if params.darcy <= 0:
        raise ValueError("darcy number must be positive")
    porous = np.nonzero(patch.mesh.region[patch.cells] == POROUS)[0]
    parts = []
    if len(porous):
        blocks = _lambda_mass(patch)[porous] / (params.reynolds * params.darcy)
        parts.append(_cell_coo(porous, _kron2(blocks)))
    return _collect(parts, (patch.n_vdof, patch.n_vdof))


def forchheimer_block(patch, params, u_lin):
    """Quadratic porous drag weighted by the pointwise speed of u_lin."""
    if params.darcy <= 0:
        raise ValueError("darcy number must be positive")
    mesh = patch.mesh
    porous = np.nonzero(mesh.region[patch.cells] == POROUS)[0]
    parts = []
    if len(porous) and params.forchheimer != 0.0:
        u_local = patch.restrict_velocity(np.asarray(u_lin, dtype=float))
        bary, w = TRI_D4_BARY, TRI_D4_W
        coefs = u_local.reshape(patch.n_cells, 3, 2)[porous]
        ulq = np.einsum("qa,nad->nqd", bary, coefs)
        speed = np.linalg.norm(ulq, axis=2)
        area = mesh.area[patch.cells[porous]]
        blocks = (params.forchheimer / np.sqrt(params.darcy)) * area[
            :, None, None
        ] * np.einsum("q,nq,qa,qb->nab", w, speed, bary, bary)
        parts.append(_cell_coo(porous, _kron2(blocks)))
    return _collect(parts, (patch.n_vdof, patch.n_vdof))


def assemble_darcy_forchheimer(patch, params, u_lin=None):
    """Porous drag block: Darcy term plus quadratic drag weighted by the
    pointwise speed of the linearization field.  Fluid cells contribute
    nothing."""
    block = darcy_block(patch, params)
    if u_lin is not None:
        block = block + forchheimer_block(patch, params, u_lin)
    return block


def assemble_divergence(patch, edge_terms=True):
    """Pressure-velocity coupling block (pressure rows, velocity columns):
    cellwise -(q, div v) plus mean-pressure jump terms on interior edges and
    the boundary flux term on Dirichlet edges."""
    mesh = patch.mesh
    rows, cols, vals = [], [], []

    grad = mesh.grad[patch.cells]
    area = mesh.area[patch.cells]
    vol = -area[:, None, None] * grad  # (n, 3, 2); entry (c, b, e)
    c_loc = np.arange(patch.n_cells)
    r = np.broadcast_to(c_loc[:, None, None], vol.shape)
    c = 6 * c_loc[:, None, None] + 2 * np.arange(3)[None, :, None] + np.arange(2)[None, None, :]
    rows.append(r.ravel())
    cols.append(np.broadcast_to(c, vol.shape).ravel())
    vals.append(vol.ravel())

    if edge_terms and len(patch.interior_edges):
        w = EDGE_G2_W
        length = patch.int_len
        normal = patch.int_normal
        lam = {"p": _edge_traces(patch, "p"), "m": _edge_traces(patch, "m")}
        cell = {"p": patch.int_cp, "m": patch.int_cm}
        sign = {"p": 1.0, "m": -1.0}
        for t in ("p", "m"):  # pressure side, averaged with weight 1/2
            for u in ("p", "m"):  # velocity trace side
                intlam = np.einsum("q,nqa->na", w, lam[u]) * length[:, None]
                block = 0.5 * sign[u] * intlam[:, :, None] * normal[:, None, :]
                r = np.broadcast_to(cell[t][:, None, None], block.shape)
                c = (
                    6 * cell[u][:, None, None]
                    + 2 * np.arange(3)[None, :, None]
                    + np.arange(2)[None, None, :]
                )
                rows.append(r.ravel())
                cols.append(np.broadcast_to(c, block.shape).ravel())
                vals.append(block.ravel())

    if edge_terms and len(patch.dirichlet_edges):
        w = EDGE_G2_W
        lam = _edge_traces(patch, "d")
        intlam = np.einsum("q,nqa->na", w, lam) * patch.dir_len[:, None]
        block = intlam[:, :, None] * patch.dir_normal[:, None, :]
        r = np.broadcast_to(patch.dir_cell[:, None, None], block.shape)
        c = (
            6 * patch.dir_cell[:, None, None]
            + 2 * np.arange(3)[None, :, None]
            + np.arange(2)[None, None, :]
        )
        rows.append(r.ravel())
        cols.append(np.broadcast_to(c, block.shape).ravel())
        vals.append(block.ravel())

    coo = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(patch.n_pdof, patch.n_vdof),
    )
    return coo.tocsr()


def dirichlet_rhs_from_values(patch, params, g_quad, grad_quad=None):
    """Momentum and continuity right-hand sides for Dirichlet data given as
    quadrature-point values g_quad (ne, q, 2) on the patch Dirichlet edges.

    The weak imposition pairs the penalty and adjoint-consistency terms so
    that the solve drives the boundary trace to +g; grad_quad (ne, q, 2, 2)
    adds the boundary-gradient flux of the data and defaults to zero.
    """
    f_u = np.zeros(patch.n_vdof)
    f_p = np.zeros(patch.n_pdof)
    nd = len(patch.dirichlet_edges)
    if nd == 0:
        return f_u, f_p
    mesh = patch.mesh
    w = EDGE_G2_W
    xi = mesh.xi(params.porosity)
    kappa = 1.0 / (xi[patch.cells[patch.dir_cell]] * params.reynolds)
    length = patch.dir_len
    normal = patch.dir_normal
    lam = _edge_traces(patch, "d")
    gdn = _grad_dot_n(patch, patch.dir_cell, normal)

    intg = np.einsum("q,nqd->nd", w, g_quad) * length[:, None]  # edge integral of g
    pen = 2.0 * params.penalty * kappa[:, None, None] * np.einsum(
        "q,nqa,nqd->nad", w, lam, g_quad
    )
    symm = -kappa[:, None, None] * np.einsum("na,nd->nad", gdn, intg)
    contrib = pen + symm
    if grad_quad is not None:
        gn = np.einsum("nqde,ne->nqd", grad_quad, normal)
        contrib = contrib + kappa[:, None, None] * length[:, None, None] * np.einsum(
            "q,nqa,nqd->nad", w, lam, gn
        )
    dof = (
        6 * patch.dir_cell[:, None, None]
        + 2 * np.arange(3)[None, :, None]
        + np.arange(2)[None, None, :]
    )
    np.add.at(f_u, dof.ravel(), contrib.ravel())

    flux = np.einsum("nd,nd->n", intg, normal)
    np.add.at(f_p, patch.dir_cell, flux)
    return f_u, f_p


def assemble_rhs(patch, params, bc, forcing=None):
    """Right-hand sides for the global problem: weak Dirichlet data on the
    velocity sides, optional outflow traction and optional volume forcing."""
    pts = dirichlet_edge_points(patch)
    g_quad = bc.values(patch.dir_side, pts) if len(patch.dirichlet_edges) else pts
    grad_quad = bc.grad_values(pts) if bc.grad is not None else None
    f_u, f_p = dirichlet_rhs_from_values(patch, params, g_quad, grad_quad)

    if bc.traction is not None and len(patch.natural_edges):
        w = EDGE_G2_W
        npts = natural_edge_points(patch)
        tq = bc.traction_values(npts)
        lam = _edge_traces(patch, "n")
        contrib = patch.nat_len[:, None, None] * np.einsum("q,nqa,nqd->nad", w, lam, tq)
        dof = (
            6 * patch.nat_cell[:, None, None]
            + 2 * np.arange(3)[None, :, None]
            + np.arange(2)[None, None, :]
        )
        np.add.at(f_u, dof.ravel(), contrib.ravel())

    if forcing is not None:
        bary, w = TRI_D4_BARY, TRI_D4_W
        verts = patch.mesh.verts[patch.mesh.cells[patch.cells]]
        xq = np.einsum("qa,nad->nqd", bary, verts)
        fq = np.asarray(forcing(xq.reshape(-1, 2)), dtype=float).reshape(xq.shape)
        area = patch.mesh.area[patch.cells]
        contrib = area[:, None, None] * np.einsum("q,qa,nqd->nad", w, bary, fq)
        dof = (
            6 * np.arange(patch.n_cells)[:, None, None]
            + 2 * np.arange(3)[None, :, None]
            + np.arange(2)[None, None, :]
        )
        np.add.at(f_u, dof.ravel(), contrib.ravel())
    return f_u, f_p


def assemble_spectral_pair(patch, params, edge_set="boundary"):
    """Operator pair of the local model-reduction eigenproblem.

    Returns (stiffness, trace_mass) on the patch velocity DOFs: the stiffness
    is the viscous volume term plus the interior-edge couplings (no Dirichlet
    terms, drag or convection); the trace mass integrates u . v over the
    patch boundary facets, or over the interior edges when edge_set is
    "interior".
    """
    parts = [_diffusion_volume(patch, params)]
    parts += _interior_edge_terms(patch, params)
    a_loc = _collect(parts, (patch.n_vdof, patch.n_vdof))

    s_parts = []
    w = EDGE_G2_W
    if edge_set == "boundary":
        if len(patch.dirichlet_edges):
            lam = _edge_traces(patch, "d")
            mass = patch.dir_len[:, None, None] * np.einsum("q,nqa,nqb->nab", w, lam, lam)
            s_parts.append(_pair_coo(patch.dir_cell, patch.dir_cell, _kron2(mass)))
    elif edge_set == "interior":
        if len(patch.interior_edges):
            lam = {"p": _edge_traces(patch, "p"), "m": _edge_traces(patch, "m")}
            cell = {"p": patch.int_cp, "m": patch.int_cm}
            for t in ("p", "m"):
                for u in ("p", "m"):
                    mass = 0.25 * patch.int_len[:, None, None] * np.einsum(
                        "q,nqa,nqb->nab", w, lam[t], lam[u]
                    )
                    s_parts.append(_pair_coo(cell[t], cell[u], _kron2(mass)))
    else:
        raise ValueError(f"unknown edge_set {edge_set!r}")
    s_loc = _collect(s_parts, (patch.n_vdof, patch.n_vdof))
    return a_loc, s_loc
