"""Independent integration oracles for the assembled forms.

Everything here avoids the package's quadrature tables and basis code:
triangles are integrated with a tensor Gauss rule under a Duffy transform,
edges with high-order Gauss-Legendre, and P1 fields are evaluated by solving
the 3x3 vertex interpolation system per cell.
"""

import numpy as np

from msflow.geometry import POROUS


def duffy_points(order=10):
    """Tensor Gauss rule on the reference triangle (0,0)-(1,0)-(0,1)."""
    g, w = np.polynomial.legendre.leggauss(order)
    u = 0.5 * (g + 1.0)
    wu = 0.5 * w
    uu, vv = np.meshgrid(u, u, indexing="ij")
    ww = np.outer(wu, wu)
    x = uu
    y = vv * (1.0 - uu)
    weight = ww * (1.0 - uu)
    return np.column_stack([x.ravel(), y.ravel()]), weight.ravel()


def tri_integrate(f, tri, order=10):
    """Integral of f over the triangle with vertex rows tri (3, 2)."""
    ref, w = duffy_points(order)
    v0 = tri[0]
    jac = np.column_stack([tri[1] - v0, tri[2] - v0])
    pts = v0[None, :] + ref @ jac.T
    det = abs(np.linalg.det(jac))
    vals = np.asarray(f(pts), dtype=float)
    return det * np.dot(w, vals)


def edge_integrate(f, p0, p1, order=10):
    g, w = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (g + 1.0)
    pts = p0[None, :] + s[:, None] * (p1 - p0)[None, :]
    length = np.linalg.norm(p1 - p0)
    vals = np.asarray(f(pts), dtype=float)
    return 0.5 * length * np.dot(w, vals)


class P1Field:
    """Vector P1 function on one triangle, evaluated through the vertex
    interpolation system rather than precomputed barycentric gradients."""

    def __init__(self, tri, coefs):
        self.tri = np.asarray(tri, dtype=float)
        self.coefs = np.asarray(coefs, dtype=float).reshape(3, 2)
        system = np.column_stack([np.ones(3), self.tri])
        # coefficients of 1, x, y for each velocity component
        self.poly = np.linalg.solve(system, self.coefs)

    def __call__(self, pts):
        pts = np.atleast_2d(pts)
        basis = np.column_stack([np.ones(len(pts)), pts])
        return basis @ self.poly

    @property
    def grad(self):
        """Constant Jacobian d u_d / d x_m as a (2, 2) array."""
        return self.poly[1:, :].T


def cell_fields(mesh, vec):
    coefs = np.asarray(vec, dtype=float).reshape(mesh.n_cells, 3, 2)
    return [P1Field(mesh.verts[mesh.cells[c]], coefs[c]) for c in range(mesh.n_cells)]


def _edge_geometry(mesh, e):
    pa, pb = mesh.verts[mesh.edge_verts[e]]
    t = pb - pa
    length = np.linalg.norm(t)
    n = np.array([t[1], -t[0]]) / length
    return pa, pb, n, length


def _outward_normal(mesh, e, cell):
    """Unit normal of edge e oriented away from the given cell."""
    pa, pb, n, _ = _edge_geometry(mesh, e)
    mid = 0.5 * (pa + pb)
    if np.dot(n, mid - mesh.centroid[cell]) < 0:
        n = -n
    return n


def mass_energy(mesh, params, u_vec, v_vec):
    xi = mesh.xi(params.porosity)
    uf, vf = cell_fields(mesh, u_vec), cell_fields(mesh, v_vec)
    total = 0.0
    for c in range(mesh.n_cells):
        tri = mesh.verts[mesh.cells[c]]
        total += (1.0 / (params.tau * xi[c])) * tri_integrate(
            lambda p: np.einsum("nd,nd->n", uf[c](p), vf[c](p)), tri
        )
    return total


def convdiff_energy(mesh, params, patch, u_vec, v_vec, ulin_vec=None):
    """a-form value including volume, interior-edge and Dirichlet terms."""
    xi = mesh.xi(params.porosity)
    kappa = 1.0 / (xi * params.reynolds)
    uf, vf = cell_fields(mesh, u_vec), cell_fields(mesh, v_vec)
    lf = cell_fields(mesh, ulin_vec) if ulin_vec is not None else None
    total = 0.0
    for c in range(mesh.n_cells):
        tri = mesh.verts[mesh.cells[c]]
        gu, gv = uf[c].grad, vf[c].grad
        total += kappa[c] * np.sum(gu * gv) * mesh.area[c]
        if lf is not None:
            def conv(p, c=c, gu=gu):
                adv = lf[c](p) @ gu.T  # (n, 2): (u_lin . grad) u
                return np.einsum("nd,nd->n", adv, vf[c](p))
            total += (1.0 / xi[c] ** 2) * tri_integrate(conv, tri)

    for e in patch.interior_edges:
        cp, cm = mesh.edge_cells[e]
        pa, pb, n, length = _edge_geometry(mesh, e)
        if np.dot(n, mesh.centroid[cm] - mesh.centroid[cp]) < 0:
            n = -n

        def consistency(p):
            mean_u = 0.5 * (kappa[cp] * uf[cp].grad + kappa[cm] * uf[cm].grad) @ n
            mean_v = 0.5 * (kappa[cp] * vf[cp].grad + kappa[cm] * vf[cm].grad) @ n
            jump_v = vf[cp](p) - vf[cm](p)
            jump_u = uf[cp](p) - uf[cm](p)
            return jump_v @ mean_u + jump_u @ mean_v

        def penalty(p):
            jump_u = uf[cp](p) - uf[cm](p)
            jump_v = vf[cp](p) - vf[cm](p)
            return np.einsum("nd,nd->n", jump_u, jump_v)

        weight = params.penalty / (
            params.reynolds * length * 0.5 * (xi[cp] + xi[cm])
        )
        total -= edge_integrate(consistency, pa, pb)
        total += weight * edge_integrate(penalty, pa, pb)

    for k, e in enumerate(patch.dirichlet_edges):
        c = patch.cells[patch.dir_cell[k]]
        pa, pb, _, length = _edge_geometry(mesh, e)
        n = _outward_normal(mesh, e, c)

        def bterm(p, c=c, n=n):
            du_n = uf[c].grad @ n
            dv_n = vf[c].grad @ n
            return vf[c](p) @ du_n + uf[c](p) @ dv_n

        def bpen(p, c=c):
            return np.einsum("nd,nd->n", uf[c](p), vf[c](p))

        total -= kappa[c] * edge_integrate(bterm, pa, pb)
        total += 2.0 * params.penalty * kappa[c] / length * edge_integrate(bpen, pa, pb)
    return total


def drag_energy(mesh, params, u_vec, v_vec, ulin_vec=None):
    uf, vf = cell_fields(mesh, u_vec), cell_fields(mesh, v_vec)
    lf = cell_fields(mesh, ulin_vec) if ulin_vec is not None else None
    total = 0.0
    for c in range(mesh.n_cells):
        if mesh.region[c] != POROUS:
            continue
        tri = mesh.verts[mesh.cells[c]]
        total += (1.0 / (params.reynolds * params.darcy)) * tri_integrate(
            lambda p: np.einsum("nd,nd->n", uf[c](p), vf[c](p)), tri
        )
        if lf is not None:
            total += (params.forchheimer / np.sqrt(params.darcy)) * tri_integrate(
                lambda p: np.linalg.norm(lf[c](p), axis=1)
                * np.einsum("nd,nd->n", uf[c](p), vf[c](p)),
                tri,
            )
    return total


def divergence_action(mesh, patch, q_vec, v_vec):
    """b-form value for piecewise-constant q against a velocity field."""
    vf = cell_fields(mesh, v_vec)
    q = np.asarray(q_vec, dtype=float)
    total = 0.0
    for c in range(mesh.n_cells):
        div = np.trace(vf[c].grad)
        total -= q[c] * div * mesh.area[c]
    for e in patch.interior_edges:
        cp, cm = mesh.edge_cells[e]
        pa, pb, n, _ = _edge_geometry(mesh, e)
        if np.dot(n, mesh.centroid[cm] - mesh.centroid[cp]) < 0:
            n = -n
        mean_q = 0.5 * (q[cp] + q[cm])

        def jump_vn(p):
            return (vf[cp](p) - vf[cm](p)) @ n

        total += mean_q * edge_integrate(jump_vn, pa, pb)
    for k, e in enumerate(patch.dirichlet_edges):
        c = patch.cells[patch.dir_cell[k]]
        pa, pb, _, _ = _edge_geometry(mesh, e)
        n = _outward_normal(mesh, e, c)
        total += q[c] * edge_integrate(lambda p, c=c, n=n: vf[c](p) @ n, pa, pb)
    return total


def rhs_functionals(mesh, params, patch, g_func, v_vec, q_vec, grad_func=None):
    """Oracle values of the boundary-data functionals (momentum, continuity)."""
    xi = mesh.xi(params.porosity)
    kappa = 1.0 / (xi * params.reynolds)
    vf = cell_fields(mesh, v_vec)
    q = np.asarray(q_vec, dtype=float)
    f_val = 0.0
    l_val = 0.0
    for k, e in enumerate(patch.dirichlet_edges):
        c = patch.cells[patch.dir_cell[k]]
        pa, pb, _, length = _edge_geometry(mesh, e)
        n = _outward_normal(mesh, e, c)

        def sym(p, c=c, n=n):
            dv_n = vf[c].grad @ n
            return np.asarray(g_func(p)) @ dv_n

        def pen(p, c=c):
            return np.einsum("nd,nd->n", np.asarray(g_func(p)), vf[c](p))

        f_val -= kappa[c] * edge_integrate(sym, pa, pb)
        f_val += 2.0 * params.penalty * kappa[c] / length * edge_integrate(pen, pa, pb)
        if grad_func is not None:
            def gterm(p, c=c, n=n):
                gn = np.asarray(grad_func(p)) @ n
                return np.einsum("nd,nd->n", gn, vf[c](p))
            f_val += kappa[c] * edge_integrate(gterm, pa, pb)
        l_val += q[c] * edge_integrate(lambda p, n=n: np.asarray(g_func(p)) @ n, pa, pb)
    return f_val, l_val
