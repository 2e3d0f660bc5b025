"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`.  The desk-scale multiscale
checks share one session-cached set of reference runs and basis spaces.
"""

from contextlib import nullcontext

import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp

import oracles
from msflow import analysis, forms, gmsfem
from msflow.fine_solver import StepOperators, run_fine
from msflow.geometry import CircleInclusion, DomainSpec, generate_structured_mesh
from msflow.parameters import BoundaryData, preset_parameters
from msflow.patches import coarse_cell_patch, full_patch
from msflow.saddle import SaddleSolver, SaddleSystem

from conftest import desk_domain, make_params, random_rect_two_cells


def _report(criterion, passed, detail):
    status = "PASS" if passed else "FAIL"
    print(f"[acceptance] criterion {criterion}: {status} ({detail})", flush=True)
    assert passed, f"criterion {criterion} failed: {detail}"


# ---------------------------------------------------------------- desk rig


class DeskRig:
    """Desk-scale benchmark configuration shared by criteria 3, 4, 5, 6, 8:
    4x4 coarse grid, 2048 fine triangles, four inclusions, Test-1 parameters
    with 50 time steps."""

    M_LIST = (2, 4, 8, 16)

    def __init__(self):
        self.domain = desk_domain()
        self.mesh, self.coarse = generate_structured_mesh(self.domain, 8, (4, 4))
        self.bc = BoundaryData.inflow((1.0, 0.0))
        self._fine = {}
        self._ulin = {}
        self._ops = {}
        self._space = {}
        self._ms = {}

    def params(self, darcy):
        return preset_parameters("test1", darcy=darcy)

    def fine(self, darcy):
        if darcy not in self._fine:
            self._fine[darcy] = run_fine(self.mesh, self.params(darcy), self.bc)
        return self._fine[darcy]

    def ops(self, darcy):
        if darcy not in self._ops:
            self._ops[darcy] = StepOperators(self.mesh, self.params(darcy), self.bc)
        return self._ops[darcy]

    def space(self, darcy, oversampled):
        key = (darcy, oversampled)
        if key not in self._space:
            params = self.params(darcy)
            if darcy not in self._ulin:
                self._ulin[darcy] = gmsfem.compute_linearization_field(
                    self.mesh, params, self.bc
                )
            with pytest.warns(RuntimeWarning) if oversampled else nullcontext():
                self._space[key] = gmsfem.build_multiscale_space(
                    self.mesh,
                    self.coarse,
                    params,
                    self.bc,
                    m=max(self.M_LIST),
                    oversampled=oversampled,
                    u_lin=self._ulin[darcy],
                )
        return self._space[key]

    def multiscale(self, darcy, oversampled, m):
        key = (darcy, oversampled, m)
        if key not in self._ms:
            space = self.space(darcy, oversampled)
            if m != space.m:
                space = gmsfem.resize_space(space, self.mesh, self.coarse, m)
            traj, fine_state = gmsfem.run_multiscale(
                self.mesh,
                self.coarse,
                self.params(darcy),
                self.bc,
                space=space,
                ops=self.ops(darcy),
            )
            ref = self.fine(darcy).final
            e_u = analysis.error_velocity(ref.velocity, fine_state.velocity, self.mesh)
            self._ms[key] = {
                "e_u": e_u,
                "div_residual": float(traj.div_residuals.max()),
            }
        return self._ms[key]



@pytest.fixture(scope="session")
def rig():
    return DeskRig()


# ---------------------------------------------------------------- criteria


def test_criterion_1_dof_accounting():
    fine_ok = analysis.dof_fine(12504) == 87528
    table = {m: analysis.dof_multiscale(100, m) for m in (5, 10, 15, 20, 25)}
    table_ok = list(table.values()) == [600, 1100, 1600, 2100, 2600]
    _report(
        1,
        fine_ok and table_ok,
        f"dof_fine(12504)={analysis.dof_fine(12504)}, coarse column={list(table.values())}",
    )


def test_criterion_2_manufactured_convergence():
    pi = np.pi
    reynolds = 1.0

    def u_ex(x):
        x = np.atleast_2d(x)
        return np.stack(
            [
                np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1]),
                np.cos(pi * x[:, 0]) * np.cos(pi * x[:, 1]),
            ],
            axis=-1,
        )

    def grad_ex(x):
        x = np.atleast_2d(x)
        sx, cx = np.sin(pi * x[:, 0]), np.cos(pi * x[:, 0])
        sy, cy = np.sin(pi * x[:, 1]), np.cos(pi * x[:, 1])
        g = np.empty(x.shape[:1] + (2, 2))
        g[:, 0, 0] = pi * cx * sy
        g[:, 0, 1] = pi * sx * cy
        g[:, 1, 0] = -pi * sx * cy
        g[:, 1, 1] = -pi * cx * sy
        return g

    def p_ex(x):
        x = np.atleast_2d(x)
        return np.sin(pi * x[:, 0]) * np.cos(pi * x[:, 1])

    def forcing(x):
        x = np.atleast_2d(x)
        grad_p = np.stack(
            [
                pi * np.cos(pi * x[:, 0]) * np.cos(pi * x[:, 1]),
                -pi * np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1]),
            ],
            axis=-1,
        )
        return (2.0 * pi * pi / reynolds) * u_ex(x) + grad_p

    def traction(x):
        # outflow side x = 1, n = (1, 0): the discrete natural flux is
        # (1/Re) grad(u) n - p n, built from the analytic boundary gradient
        x = np.atleast_2d(x)
        n = np.array([1.0, 0.0])
        return (1.0 / reynolds) * np.einsum("ndm,m->nd", grad_ex(x), n) - p_ex(x)[
            :, None
        ] * n

    # The analytic gradient enters through the outflow traction; feeding it
    # to the Dirichlet-side boundary-gradient flux term instead adds an
    # O(1) consistency error and caps the observed L2 order near 1.5.
    bc = BoundaryData(velocity=u_ex, traction=traction)
    params = make_params(reynolds=reynolds, porosity=1.0, forchheimer=0.0)
    errs_l2, errs_h1 = [], []
    for n in (4, 8, 16, 32):
        dom = DomainSpec(bbox=(0, 0, 1, 1))
        mesh, _ = generate_structured_mesh(dom, n, (1, 1))
        patch = full_patch(mesh)
        a = forms.assemble_convection_diffusion(patch, params)
        b = forms.assemble_divergence(patch)
        f_u, f_p = forms.assemble_rhs(patch, params, bc, forcing=forcing)
        zero = sp.csr_matrix(a.shape)
        u, _ = SaddleSolver(SaddleSystem(zero, a, zero, b, f_u, f_p)).solve()
        from msflow.quadrature import TRI_D4_BARY, TRI_D4_W

        verts = mesh.verts[mesh.cells]
        xq = np.einsum("qa,nad->nqd", TRI_D4_BARY, verts)
        uq = np.einsum("qa,nad->nqd", TRI_D4_BARY, u.reshape(-1, 3, 2))
        gap = uq - u_ex(xq.reshape(-1, 2)).reshape(uq.shape)
        errs_l2.append(
            np.sqrt(np.einsum("n,q,nqd->", mesh.area, TRI_D4_W, gap**2))
        )
        gh = np.einsum("nad,nam->ndm", u.reshape(-1, 3, 2), mesh.grad)
        ggap = gh[:, None, :, :] - grad_ex(xq.reshape(-1, 2)).reshape(
            xq.shape[0], xq.shape[1], 2, 2
        )
        errs_h1.append(
            np.sqrt(np.einsum("n,q,nqdm->", mesh.area, TRI_D4_W, ggap**2))
        )
    order_l2 = np.log2(errs_l2[-2] / errs_l2[-1])
    order_h1 = np.log2(errs_h1[-2] / errs_h1[-1])
    _report(
        2,
        order_l2 >= 1.8 and order_h1 >= 0.9,
        f"velocity L2 order {order_l2:.2f} (need >= 1.8), "
        f"broken-H1 order {order_h1:.2f} (need >= 0.9)",
    )


def test_criterion_3_basis_refinement_trend(rig):
    darcy = 1e-3
    errors = [rig.multiscale(darcy, False, m)["e_u"] for m in rig.M_LIST]
    monotone = all(
        later <= 1.05 * earlier for earlier, later in zip(errors, errors[1:])
    )
    e_plain = rig.multiscale(darcy, False, 16)["e_u"]
    e_os = rig.multiscale(darcy, True, 16)["e_u"]
    oversampling_wins = e_os <= e_plain
    detail = (
        "e_u over M=(2,4,8,16): "
        + ", ".join(f"{100 * e:.2f}%" for e in errors)
        + f"; oversampled at M=16: {100 * e_os:.2f}% vs plain {100 * e_plain:.2f}%"
    )
    _report(3, monotone and oversampling_wins, detail)


def test_criterion_4_darcy_ordering(rig):
    e_high = rig.multiscale(1e-3, True, 16)["e_u"]
    e_low = rig.multiscale(1e-5, True, 16)["e_u"]
    _report(
        4,
        e_high <= e_low,
        f"oversampled M=16: e_u(Da=1e-3)={100 * e_high:.2f}% <= "
        f"e_u(Da=1e-5)={100 * e_low:.2f}%",
    )


def test_criterion_5_conservation(rig):
    worst_fine = max(rig.fine(da).div_residuals.max() for da in (1e-3, 1e-5))
    keys = [(1e-3, False, m) for m in rig.M_LIST] + [(1e-3, True, 16), (1e-5, True, 16)]
    worst_coarse = max(rig.multiscale(*k)["div_residual"] for k in keys)
    _report(
        5,
        worst_fine <= 1e-9 and worst_coarse <= 1e-9,
        f"max continuity residual: fine {worst_fine:.2e}, coarse {worst_coarse:.2e}",
    )


def test_criterion_6_spectral_suite(rig):
    space = rig.space(1e-3, False)
    worst_order = 0.0
    worst_orth = 0.0
    worst_resid = 0.0
    for basis in space.cell_bases:
        diffs = np.diff(basis.eigenvalues)
        worst_order = max(worst_order, float(-(diffs.min() if len(diffs) else 0.0)))
        m = space.m
        z = basis.reduced_vectors[:, :m]
        gram = z.T @ basis.s_snap @ z
        worst_orth = max(worst_orth, float(np.abs(gram - np.eye(m)).max()))
        scale = la.norm(basis.a_snap)
        for k in range(m):
            resid = la.norm(
                basis.a_snap @ basis.reduced_vectors[:, k]
                - basis.eigenvalues[k] * (basis.s_snap @ basis.reduced_vectors[:, k])
            )
            worst_resid = max(worst_resid, float(resid / scale))
    passed = worst_order <= 1e-12 and worst_orth <= 1e-10 and worst_resid <= 1e-8
    _report(
        6,
        passed,
        f"eigenvalue order violation {worst_order:.1e}, orthogonality defect "
        f"{worst_orth:.1e} (<= 1e-10), pencil residual {worst_resid:.1e} (<= 1e-8)",
    )


def test_criterion_7_oracle_equivalence():
    worst_form = 0.0
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        mesh, _ = random_rect_two_cells(rng)
        params = make_params(
            reynolds=float(rng.uniform(0.5, 10.0)),
            darcy=float(10.0 ** rng.uniform(-5, -2)),
            forchheimer=float(rng.uniform(0.0, 4.0)),
            porosity=float(rng.uniform(0.2, 1.0)),
        )
        patch = full_patch(mesh)
        u = rng.standard_normal(12)
        v = rng.standard_normal(12)
        q = rng.standard_normal(2)
        ulin = rng.standard_normal(12)
        ulin_const = np.repeat(rng.standard_normal((2, 2)), 3, axis=0).ravel()

        def rel(a, b):
            return abs(a - b) / max(abs(a), abs(b), 1e-14)

        m = forms.assemble_mass(patch, params)
        worst_form = max(
            worst_form, rel(v @ (m @ u), oracles.mass_energy(mesh, params, u, v))
        )
        a_zero = forms.assemble_convection_diffusion(patch, params)
        worst_form = max(
            worst_form,
            rel(
                v @ (a_zero @ u),
                oracles.convdiff_energy(mesh, params, patch, u, v, None),
            ),
        )
        a_lin = forms.assemble_convection_diffusion(patch, params, ulin)
        worst_form = max(
            worst_form,
            rel(
                v @ (a_lin @ u),
                oracles.convdiff_energy(mesh, params, patch, u, v, ulin),
            ),
        )
        mesh.region[:] = 1
        d = forms.assemble_darcy_forchheimer(patch, params, ulin_const)
        worst_form = max(
            worst_form,
            rel(v @ (d @ u), oracles.drag_energy(mesh, params, u, v, ulin_const)),
        )
        mesh.region[:] = 0
        b = forms.assemble_divergence(patch)
        worst_form = max(
            worst_form,
            rel(q @ (b @ u), oracles.divergence_action(mesh, patch, q, u)),
        )
        bc = BoundaryData(sides={"left": (1.0, 0.5), "top": (-0.3, 0.2), "bottom": (0.1, 0.4)})
        f_u, f_p = forms.assemble_rhs(patch, params, bc)

        def g_func(p, bbox=mesh.bbox):
            out = np.zeros((len(p), 2))
            out[np.abs(p[:, 0] - bbox[0]) < 1e-12] = (1.0, 0.5)
            out[np.abs(p[:, 1] - bbox[3]) < 1e-12] = (-0.3, 0.2)
            out[np.abs(p[:, 1] - bbox[1]) < 1e-12] = (0.1, 0.4)
            return out

        f_exp, l_exp = oracles.rhs_functionals(mesh, params, patch, g_func, v, q)
        worst_form = max(worst_form, rel(v @ f_u, f_exp), rel(q @ f_p, l_exp))

    # local snapshot solves against a dense bordered solve
    dom = DomainSpec(bbox=(0, 0, 1, 1), inclusions=[CircleInclusion(0.5, 0.5, 0.3)],
                     porosity=0.3)
    mesh, coarse = generate_structured_mesh(dom, 2, (2, 2))
    params = make_params()
    ulin = np.zeros(6 * mesh.n_cells)
    worst_snap = 0.0
    for i in range(coarse.n_cells):
        snap = gmsfem.build_snapshots(mesh, coarse, params, i, False, ulin)
        patch = coarse_cell_patch(mesh, coarse, i)
        a = forms.assemble_convection_diffusion(patch, params, ulin)
        d = forms.assemble_darcy_forchheimer(patch, params, ulin)
        b = forms.assemble_divergence(patch)
        f_u, f_p = gmsfem._delta_rhs_batch(patch, params)
        nu, npr = patch.n_vdof, patch.n_pdof
        dense = np.zeros((nu + npr, nu + npr))
        dense[:nu, :nu] = (a + d).toarray()
        dense[:nu, nu:] = b.T.toarray()
        pinned = b.toarray()
        pinned[0, :] = 0.0
        dense[nu:, :nu] = pinned
        dense[nu, nu] = 1.0
        for col in range(f_u.shape[1]):
            rhs = np.concatenate([f_u[:, col], f_p[:, col]])
            rhs[nu] = 0.0
            x = np.linalg.solve(dense, rhs)
            gap = np.abs(snap.rows[col] - x[:nu]).max()
            worst_snap = max(worst_snap, gap / max(np.abs(x[:nu]).max(), 1e-14))
    passed = worst_form <= 1e-12 and worst_snap <= 1e-10
    _report(
        7,
        passed,
        f"form-vs-oracle max relative gap {worst_form:.1e} (<= 1e-12), "
        f"snapshot-vs-dense max gap {worst_snap:.1e} (<= 1e-10)",
    )


def test_criterion_8_porous_speed_contrast(rig):
    state = rig.fine(1e-5).final
    stats = analysis.field_statistics(state, rig.mesh)
    ratio = stats.fluid.mean_speed / max(stats.porous.mean_speed, 1e-300)
    _report(
        8,
        ratio >= 5.0,
        f"mean speed fluid {stats.fluid.mean_speed:.4f} vs porous "
        f"{stats.porous.mean_speed:.5f} (ratio {ratio:.1f}, need >= 5)",
    )
