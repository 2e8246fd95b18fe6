"""Tangent-plane step for the magnetization.

One step solves a linear system for the discrete time derivative v in the
space of P1 fields nodewise orthogonal to the current magnetization, then
updates m linearly without renormalizing.  The tangent space is realized by
an explicit orthonormal frame per node, which reduces the solve to an
unconstrained positive-definite 2n system and makes the nodewise
orthogonality of v exact by construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import ConfigurationError, ConstraintError, SolverError
from .fem import (P1_CUBIC_INTEGRALS, FemWorkspace, NodalField3,
                  Support)
from .params import MaterialParams, SolverConfig


@dataclass(frozen=True)
class TangentBasis:
    """Orthonormal pair (t1, t2) spanning m(z)-perp at every magnetic node."""

    t1: np.ndarray
    t2: np.ndarray

    @property
    def n(self) -> int:
        return self.t1.shape[0]

    def prolongation(self) -> sparse.csr_matrix:
        """Sparse (3n, 2n) map from tangent coefficients to nodal vectors."""
        n = self.n
        rows = np.repeat(3 * np.arange(n), 6) + np.tile([0, 1, 2, 0, 1, 2], n)
        cols = np.repeat(2 * np.arange(n), 6) + np.tile([0, 0, 0, 1, 1, 1], n)
        data = np.concatenate([self.t1, self.t2], axis=1).reshape(-1)
        return sparse.csr_matrix((data, (rows, cols)), shape=(3 * n, 2 * n))


@dataclass(frozen=True)
class LlgSystem:
    """Tangent-reduced linear system for one magnetization step."""

    matrix: sparse.csr_matrix
    rhs: np.ndarray
    basis: TangentBasis


def build_tangent_basis(m: NodalField3) -> TangentBasis:
    """Deterministic orthonormal tangent frame at every node.

    Pivot rule: at node z pick the canonical axis e_j with the smallest
    magnetization component, set t1 to e_j orthogonalized against m(z), and
    t2 = m(z) x t1 normalized.  For m = (0, 0, 1) this yields t1 = (1, 0, 0)
    and t2 = (0, 1, 0).
    """
    vals = m.values
    norms_sq = np.einsum("zx,zx->z", vals, vals)
    if np.any(norms_sq < 1e-300):
        raise ConstraintError("zero magnetization vector: tangent plane undefined")
    pivot = np.argmin(np.abs(vals), axis=1)
    e = np.zeros_like(vals)
    e[np.arange(len(vals)), pivot] = 1.0
    proj = vals[np.arange(len(vals)), pivot] / norms_sq
    t1 = e - proj[:, None] * vals
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(vals, t1)
    t2 /= np.linalg.norm(t2, axis=1)[:, None]
    return TangentBasis(t1, t2)


def cross_term_matrix(ws: FemWorkspace, m: NodalField3) -> sparse.csr_matrix:
    """Assemble (m x u, w) over the magnetic region, exact cubic integrals.

    Returns the (3n, 3n) matrix in the interleaved nodal-block layout; it is
    skew symmetric because the underlying bilinear form is.
    """
    ws.check_field(m, Support.OMEGA_MAGNETIC)
    m_loc = m.values[ws.mag_nodes_local]                       # (E, 4, 3)
    w = np.einsum("e,abc,ecx->eabx", ws.mag_vols, P1_CUBIC_INTEGRALS, m_loc)  # (E, 4, 4, 3)
    blocks = np.zeros(w.shape[:3] + (3, 3))                    # (E, b, a, 3, 3)
    wt = np.transpose(w, (0, 2, 1, 3))                         # w[a, b] -> [b, a]
    blocks[..., 0, 1] = -wt[..., 2]
    blocks[..., 0, 2] = wt[..., 1]
    blocks[..., 1, 0] = wt[..., 2]
    blocks[..., 1, 2] = -wt[..., 0]
    blocks[..., 2, 0] = -wt[..., 1]
    blocks[..., 2, 1] = wt[..., 0]
    loc = ws.mag_nodes_local
    rows = (3 * loc[:, :, None, None, None] + np.arange(3)[None, None, None, :, None])
    cols = (3 * loc[:, None, :, None, None] + np.arange(3)[None, None, None, None, :])
    rows = np.broadcast_to(rows, blocks.shape).reshape(-1)
    cols = np.broadcast_to(cols, blocks.shape).reshape(-1)
    n3 = 3 * ws.n_omega
    mat = sparse.coo_matrix((blocks.reshape(-1), (rows, cols)), shape=(n3, n3)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def assemble_llg_system(ws: FemWorkspace, m: NodalField3, basis: TangentBasis,
                        f_i: NodalField3, pi_of_m: NodalField3,
                        s_i_omega: NodalField3, params: MaterialParams,
                        k: float) -> LlgSystem:
    """Build the tangent-space system for the discrete time derivative.

    The bilinear form is damping mass + gyroscopic cross term + theta-
    weighted exchange stiffness; the right side collects the exchange
    residual of the current magnetization and the field, anisotropy, and
    spin-coupling loads, all evaluated at the current step.
    """
    if k <= 0:
        raise ConfigurationError("step size k must be positive")
    if not (0.5 < params.theta <= 1.0):
        raise ConfigurationError("theta must lie in (1/2, 1]")
    ws.check_field(m, Support.OMEGA_MAGNETIC)
    ws.check_field(f_i, Support.OMEGA_MAGNETIC)
    ws.check_field(pi_of_m, Support.OMEGA_MAGNETIC)
    ws.check_field(s_i_omega, Support.OMEGA_MAGNETIC)

    a_full = (params.alpha * ws.mass_omega3
              + params.C_exch * params.theta * k * ws.stiff_omega3
              + cross_term_matrix(ws, m))
    load = (pi_of_m.values + f_i.values + params.c * s_i_omega.values).reshape(-1)
    rhs_full = ws.mass_omega3 @ load - params.C_exch * (ws.stiff_omega3 @ m.flat())

    p = basis.prolongation()
    matrix = (p.T @ a_full @ p).tocsr()
    matrix.sum_duplicates()
    matrix.sort_indices()
    return LlgSystem(matrix=matrix, rhs=p.T @ rhs_full, basis=basis)


def _gmres_solve(matrix: sparse.csr_matrix, rhs: np.ndarray,
                 solver: SolverConfig, what: str) -> np.ndarray:
    dim = matrix.shape[0]
    norm_rhs = float(np.linalg.norm(rhs))
    if norm_rhs == 0.0:
        return np.zeros(dim)
    restart = min(solver.restart, dim)
    maxiter = max(1, int(np.ceil(solver.max_iter_factor * dim / restart)))
    # converge on the true residual: restart from the current iterate if the
    # recurrence drifted, give up once the iteration budget is spent
    x = np.zeros(dim)
    for _ in range(3):
        x, info = spla.gmres(matrix, rhs, x0=x, rtol=solver.tol, atol=0.0,
                             restart=restart, maxiter=maxiter)
        residual = float(np.linalg.norm(rhs - matrix @ x)) / norm_rhs
        if residual <= solver.tol:
            return x
        if info > 0:
            break
    raise SolverError(f"{what} solve stalled at relative residual {residual:.3e}",
                      residual=residual, iterations=info if info > 0 else None)


def solve_v(system: LlgSystem, solver: SolverConfig) -> NodalField3:
    """Solve for the discrete time derivative; exact nodewise tangency.

    The returned field is expanded in the tangent frame, so v(z) . m(z)
    vanishes by construction, independent of the solver tolerance.
    """
    x = _gmres_solve(system.matrix, system.rhs, solver, "magnetization")
    v_flat = system.basis.prolongation() @ x
    return NodalField3(v_flat.reshape(-1, 3), Support.OMEGA_MAGNETIC)


def update_m(m: NodalField3, v: NodalField3, k: float) -> NodalField3:
    """Linear update m + k v, deliberately without nodal renormalization."""
    if k <= 0:
        raise ConfigurationError("step size k must be positive")
    return NodalField3(m.values + k * v.values, m.support)
