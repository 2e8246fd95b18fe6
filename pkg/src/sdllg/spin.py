"""Implicit diffusion step for the spin accumulation.

The step solves a linear 3N system whose bilinear form combines isotropic
diffusion and reaction over the whole stack with three magnetization-
dependent contributions on the magnetic region: an anisotropic reduction of
the diffusion, a gyroscopic cross term, and the current-driven load with
its boundary part on the shared outer/magnetic boundary.  The projected
(nodewise unit) magnetization enters as an L-infinity bounded coefficient,
interpolated at the quadrature points of a degree-2 rule.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import ConfigurationError
from .fem import (FemWorkspace, NodalField3, Support, TET_DEGREE2,
                  TRI_MIDPOINT, assemble, element_mass, element_stiffness)
from .llg import _gmres_solve
from .params import MaterialParams, SolverConfig


@dataclass(frozen=True)
class SpinSystem:
    """Linear system for one spin-diffusion step (rhs filled separately)."""

    matrix: sparse.csr_matrix
    n_nodes: int
    rhs: np.ndarray | None = None


def _quad_values(ws: FemWorkspace, nodal_local: np.ndarray,
                 rule=TET_DEGREE2) -> np.ndarray:
    """P1 values at the quadrature points of every magnetic tet: (E, Q, 3)."""
    return np.einsum("qa,eax->eqx", rule.points, nodal_local)


def _scatter_blocks(ws: FemWorkspace, blocks: np.ndarray) -> sparse.csr_matrix:
    """Scatter (E, 4, 4, 3, 3) nodal blocks of magnetic tets into 3N x 3N."""
    glob = ws.mag_nodes_global
    rows = 3 * glob[:, :, None, None, None] + np.arange(3)[None, None, None, :, None]
    cols = 3 * glob[:, None, :, None, None] + np.arange(3)[None, None, None, None, :]
    rows = np.broadcast_to(rows, blocks.shape).reshape(-1)
    cols = np.broadcast_to(cols, blocks.shape).reshape(-1)
    n3 = 3 * ws.n_nodes
    mat = sparse.coo_matrix((blocks.reshape(-1), (rows, cols)), shape=(n3, n3)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def anisotropic_term_matrix(ws: FemWorkspace, m_proj: NodalField3,
                            params: MaterialParams) -> sparse.csr_matrix:
    """Matrix of the anisotropic diffusion term over the magnetic region.

    The form pairs the m-weighted component gradients of trial and test
    fields: with the outer-product convention (m w^T)_jk = m_j w_k and
    grad(u) . m = sum_l m_l grad(u_l), the term contracts to
    (grad(u) . m, grad(w) . m).  The element block between nodes (b, a) is
    D0 * K^e_ab * Q with Q the quadrature average of m m^T, so the matrix
    is symmetric.
    """
    ws.check_field(m_proj, Support.OMEGA_MAGNETIC)
    rule = TET_DEGREE2
    m_q = _quad_values(ws, m_proj.values[ws.mag_nodes_local], rule)
    q_e = np.einsum("q,eqx,eqy->exy", rule.weights, m_q, m_q)   # (E, 3, 3)
    d0 = params.D0_magnetic
    blocks = d0 * np.einsum("eab,exy->ebaxy", ws.mag_ke, q_e)
    return _scatter_blocks(ws, blocks)


def cross_reaction_matrix(ws: FemWorkspace, m_proj: NodalField3,
                          params: MaterialParams) -> sparse.csr_matrix:
    """Matrix of (D0 (u x m), w) over the magnetic region (skew symmetric)."""
    ws.check_field(m_proj, Support.OMEGA_MAGNETIC)
    rule = TET_DEGREE2
    m_q = _quad_values(ws, m_proj.values[ws.mag_nodes_local], rule)
    lamlam = np.einsum("qa,qb->qab", rule.points, rule.points)
    r = np.einsum("e,q,qab,eqx->eabx", ws.mag_vols, rule.weights, lamlam, m_q)
    # (u x m) . w = -w^T [m]_x u: block(b, a) = -coeff * [r(a, b)]_x
    blocks = np.zeros(r.shape[:3] + (3, 3))
    blocks[..., 0, 1] = r[..., 2]
    blocks[..., 0, 2] = -r[..., 1]
    blocks[..., 1, 0] = -r[..., 2]
    blocks[..., 1, 2] = r[..., 0]
    blocks[..., 2, 0] = r[..., 1]
    blocks[..., 2, 1] = -r[..., 0]
    d0 = params.D0_magnetic * params.reaction_scale_J
    blocks = d0 * np.transpose(blocks, (0, 2, 1, 3, 4))          # index order (b, a)
    return _scatter_blocks(ws, blocks)


def assemble_spin_form(ws: FemWorkspace, m_proj: NodalField3,
                       params: MaterialParams, k: float) -> SpinSystem:
    """Assemble the full step matrix (time term plus diffusion form).

    The quadratic form is bounded below by
    ``(1/k + D_star) ||u||^2 + D_star (1 - beta beta') ||grad u||^2``,
    so the system is positive definite for every admissible parameter set.
    """
    if k <= 0:
        raise ConfigurationError("step size k must be positive")
    if params.beta * params.beta_prime >= 1.0:
        raise ConfigurationError("need beta*beta' < 1 for coercivity")
    mods = np.linalg.norm(m_proj.values, axis=1)
    if np.any(np.abs(mods - 1.0) > 1e-9):
        raise ConfigurationError("spin form expects a nodewise unit magnetization")

    d0_tet = params.D0_of_region(ws.mesh.tet_region)
    key = ("spin_static", params.D0_magnetic, params.D0_conductor,
           params.reaction_scale_sf)
    cached = getattr(ws, "_spin_static_cache", None)
    if cached is None or cached[0] != key:
        stiff_d0 = assemble(ws.mesh, element_stiffness, coefficient=d0_tet)
        mass_d0 = assemble(ws.mesh, element_mass,
                           coefficient=d0_tet * params.reaction_scale_sf)
        eye3 = sparse.identity(3, format="csr")
        static = (sparse.kron(stiff_d0, eye3, format="csr")
                  + sparse.kron(mass_d0, eye3, format="csr"))
        ws._spin_static_cache = (key, static)
    static = ws._spin_static_cache[1]

    matrix = ((1.0 / k) * ws.mass_all3
              + static
              - params.beta * params.beta_prime * anisotropic_term_matrix(ws, m_proj, params)
              + cross_reaction_matrix(ws, m_proj, params)).tocsr()
    matrix.sum_duplicates()
    matrix.sort_indices()
    return SpinSystem(matrix=matrix, n_nodes=ws.n_nodes)


def assemble_spin_rhs(ws: FemWorkspace, s_prev: NodalField3, m_proj: NodalField3,
                      j_next: NodalField3, params: MaterialParams,
                      k: float) -> np.ndarray:
    """Right-hand side: time term plus the current-driven volume and
    boundary loads.

    The volume load integrates (m x j) : grad(w) over magnetic tets; the
    boundary load integrates (j . n)(m . w) over the facets shared by the
    outer and magnetic boundaries, with n the outward normal of the stack.
    The magnetization is the projected new iterate, the spin value the old
    one, the current is sampled at the new time.
    """
    ws.check_field(s_prev, Support.OMEGA_ALL)
    ws.check_field(m_proj, Support.OMEGA_MAGNETIC)
    ws.check_field(j_next, Support.OMEGA_ALL)

    rhs = (1.0 / k) * (ws.mass_all3 @ s_prev.flat())

    rule = TET_DEGREE2
    m_q = _quad_values(ws, m_proj.values[ws.mag_nodes_local], rule)
    j_q = _quad_values(ws, j_next.values[ws.mag_nodes_global], rule)
    jg = np.einsum("eqx,ebx->eqb", j_q, ws.mag_grads)
    contrib = params.beta * np.einsum("e,q,eqj,eqb->ebj", ws.mag_vols,
                                      rule.weights, m_q, jg)
    vol_load = np.zeros((ws.n_nodes, 3))
    np.add.at(vol_load, ws.mag_nodes_global.reshape(-1), contrib.reshape(-1, 3))
    rhs += vol_load.reshape(-1)

    if len(ws.shared_facet_area):
        lam2 = TRI_MIDPOINT.points
        w2 = TRI_MIDPOINT.weights
        fn = ws.shared_facet_nodes
        m_f = m_proj.values[ws.omega_index[fn]]
        j_f = j_next.values[fn]
        m_fq = np.einsum("qa,fax->fqx", lam2, m_f)
        j_fq = np.einsum("qa,fax->fqx", lam2, j_f)
        jdotn = np.einsum("fqx,fx->fq", j_fq, ws.shared_facet_normal)
        contrib = -params.beta * np.einsum("f,q,fq,fqx,qb->fbx",
                                           ws.shared_facet_area, w2, jdotn,
                                           m_fq, lam2)
        bnd_load = np.zeros((ws.n_nodes, 3))
        np.add.at(bnd_load, fn.reshape(-1), contrib.reshape(-1, 3))
        rhs += bnd_load.reshape(-1)
    return rhs


def solve_s(system: SpinSystem, solver: SolverConfig,
            rhs: np.ndarray | None = None) -> NodalField3:
    """Solve the diffusion step; the outer boundary condition is natural."""
    b = system.rhs if rhs is None else rhs
    if b is None:
        raise ValueError("spin system has no right-hand side")
    x = _gmres_solve(system.matrix, b, solver, "spin accumulation")
    return NodalField3(x.reshape(-1, 3), Support.OMEGA_ALL)
