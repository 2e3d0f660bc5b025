"""Direct solution of the indefinite velocity-pressure block systems."""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from dataclasses import dataclass

from .errors import SingularSystemError

RESIDUAL_TOL = 1e-9


@dataclass
class SaddleSystem:
    """Assembled blocks of one linearized step.

    mass/convdiff/drag are velocity blocks, div couples pressure rows to
    velocity columns, f_u/f_p are the right-hand sides.
    """

    mass: sp.spmatrix
    convdiff: sp.spmatrix
    drag: sp.spmatrix
    div: sp.spmatrix
    f_u: np.ndarray
    f_p: np.ndarray

    def __post_init__(self):
        nu = self.mass.shape[0]
        npr = self.div.shape[0]
        for name, block in (("convdiff", self.convdiff), ("drag", self.drag)):
            if block.shape != (nu, nu):
                raise ValueError(f"{name} block shape {block.shape} != ({nu}, {nu})")
        if self.div.shape[1] != nu:
            raise ValueError("divergence block does not match velocity DOFs")
        if self.f_u.shape != (nu,) or self.f_p.shape != (npr,):
            raise ValueError("right-hand side shapes do not match the blocks")

    @property
    def n_velocity(self):
        return self.mass.shape[0]

    @property
    def n_pressure(self):
        return self.div.shape[0]

    def velocity_block(self):
        return (self.mass + self.convdiff + self.drag).tocsr()

    def check_mass_symmetry(self, tol=1e-10):
        m = self.mass
        delta = abs(m - m.T).max()
        scale = abs(m).max() or 1.0
        if delta > tol * scale:
            raise ValueError(f"mass block asymmetry {delta / scale:.2e} exceeds {tol:.0e}")


class SaddleSolver:
    """LU factorization of [[M+A+D, B^T], [B, 0]] reused across right-hand
    sides.

    pin_pressure replaces the first continuity row by a zero-mean style pin
    (first pressure DOF = 0); valid only when the continuity data is
    compatible, as it is for the local snapshot problems.
    """

    def __init__(self, system, pin_pressure=False):
        self.system = system
        self.pinned = bool(pin_pressure)
        nu, npr = system.n_velocity, system.n_pressure
        upper = system.velocity_block()
        if not np.all(np.isfinite(upper.data)):
            raise SingularSystemError("non-finite entries in assembled blocks")
        if npr == 0:
            matrix = upper.tocsc()
        elif pin_pressure:
            div = system.div.tolil(copy=True)
            div[0, :] = 0.0
            pin = sp.coo_matrix(([1.0], ([0], [0])), shape=(npr, npr))
            matrix = sp.bmat(
                [[upper, system.div.T], [div.tocsr(), pin]], format="csc"
            )
        else:
            matrix = sp.bmat([[upper, system.div.T], [system.div, None]], format="csc")
        self.scale = abs(matrix).sum(axis=1).max()
        try:
            self.lu = spla.splu(matrix)
        except RuntimeError as exc:  # SuperLU reports singularity this way
            raise SingularSystemError(f"factorization failed: {exc}") from exc
        self.matrix = matrix

    def solve(self, rhs_u=None, rhs_p=None):
        system = self.system
        rhs_u = system.f_u if rhs_u is None else rhs_u
        rhs_p = system.f_p if rhs_p is None else rhs_p
        if not (np.all(np.isfinite(rhs_u)) and np.all(np.isfinite(rhs_p))):
            raise SingularSystemError("non-finite right-hand side")
        nu = system.n_velocity
        if system.n_pressure == 0:
            rhs = rhs_u
        else:
            rhs_p = rhs_p.copy()
            if self.pinned:
                rhs_p[0] = 0.0
            rhs = np.concatenate([rhs_u, rhs_p])
        x = self.lu.solve(rhs)
        resid = np.linalg.norm(self.matrix @ x - rhs)
        denom = max(np.linalg.norm(rhs), self.scale * np.linalg.norm(x), 1e-300)
        if not np.isfinite(resid) or resid > RESIDUAL_TOL * denom:
            raise SingularSystemError(
                f"solve residual {resid / denom:.2e} exceeds {RESIDUAL_TOL:.0e} "
                "(system singular or severely ill-conditioned)"
            )
        return x[:nu], x[nu:]

    def solve_many(self, rhs_u_mat, rhs_p_mat):
        """Solve for a batch of right-hand sides given as columns.

        Returns (velocities, pressures, relative residuals) with one column
        per input column; no exception is raised so the caller can attach
        context to a failing column.
        """
        system = self.system
        nu = system.n_velocity
        if system.n_pressure == 0:
            rhs = np.asarray(rhs_u_mat, dtype=float)
        else:
            rhs_p_mat = np.array(rhs_p_mat, dtype=float, copy=True)
            if self.pinned:
                rhs_p_mat[0, :] = 0.0
            rhs = np.vstack([rhs_u_mat, rhs_p_mat])
        x = self.lu.solve(rhs)
        resid = np.linalg.norm(self.matrix @ x - rhs, axis=0)
        denom = np.maximum(
            np.linalg.norm(rhs, axis=0),
            self.scale * np.linalg.norm(x, axis=0),
        )
        rel = resid / np.maximum(denom, 1e-300)
        return x[:nu], x[nu:], rel


def solve_saddle(system, rhs=None, pin_pressure=False):
    """One-shot factor-and-solve; rhs defaults to the assembled (f_u, f_p)."""
    solver = SaddleSolver(system, pin_pressure=pin_pressure)
    if rhs is None:
        return solver.solve()
    return solver.solve(rhs[0], rhs[1])
