"""Energy bookkeeping, exact per-step identities, and independent oracles.

The integrator satisfies two exact discrete identities: the nodewise
modulus recursion |m_new(z)|^2 = |m_old(z)|^2 + k^2 |v(z)|^2 and a per-step
energy balance obtained by testing the magnetization system with its own
solution.  This module measures both to solver precision, accumulates the
stability and energy ledgers, checks weak-form residuals against smooth
space-time test functions, and provides a dense brute-force step for small
meshes that shares only the element formulas with the production path.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintError
from .fem import (P1_CUBIC_INTEGRALS, FemWorkspace, NodalField3, Support,
                  TET_DEGREE2, TRI_MIDPOINT, element_mass, element_stiffness,
                  nodal_projection)
from .fields import PiOperator, SourceField, apply_pi
from .mesh import FacetTag, Region, TetMesh
from .params import MaterialParams


# ---------------------------------------------------------------------------
# energy and ledgers
# ---------------------------------------------------------------------------

LEDGER_COLUMNS = ("step", "t", "E", "dissipation", "theta_term", "f_work",
                  "s_work", "pi_mismatch", "s_L2", "s_H1_cumsum", "m_grad_L2")


@dataclass
class EnergyLedger:
    """Per-step record of every term in the discrete energy balance.

    Row i describes step i (0-based): the energy after the step, the
    dissipation and implicitness terms of that step, the work done by the
    time variation of the applied field and of the spin accumulation, and
    the squared norms entering the stability sums.
    """

    k: float
    theta: float
    E: list = field(default_factory=list)
    dissipation: list = field(default_factory=list)
    theta_term: list = field(default_factory=list)
    f_work: list = field(default_factory=list)
    s_work: list = field(default_factory=list)
    pi_mismatch: list = field(default_factory=list)
    pi_v_quad: list = field(default_factory=list)
    v_l2_sq: list = field(default_factory=list)
    grad_v_sq: list = field(default_factory=list)
    s_l2_sq: list = field(default_factory=list)
    s_h1_sq: list = field(default_factory=list)
    s_diff_sq: list = field(default_factory=list)
    m_grad_sq: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.E)

    def spin_stability_sum(self, j: int | None = None) -> float:
        """||s^j||^2 + k sum ||s^(i+1)||_H1^2 + sum ||s^(i+1) - s^i||^2."""
        j = len(self) if j is None else j
        return (self.s_l2_sq[j - 1]
                + self.k * sum(self.s_h1_sq[:j])
                + sum(self.s_diff_sq[:j]))

    def magnetization_stability_sum(self, j: int | None = None) -> float:
        """||grad m^j||^2 + k sum ||v^i||^2 + (theta - 1/2) k^2 sum ||grad v^i||^2."""
        j = len(self) if j is None else j
        return (self.m_grad_sq[j - 1]
                + self.k * sum(self.v_l2_sq[:j])
                + (self.theta - 0.5) * self.k**2 * sum(self.grad_v_sq[:j]))

    def rows(self):
        """Rows in the documented CSV column order."""
        h1_cumsum = self.k * np.cumsum(self.s_h1_sq)
        for i in range(len(self)):
            # squared norms can round to tiny negatives for constant fields
            yield (i, (i + 1) * self.k, self.E[i], self.dissipation[i],
                   self.theta_term[i], self.f_work[i], self.s_work[i],
                   self.pi_mismatch[i], float(np.sqrt(max(self.s_l2_sq[i], 0.0))),
                   float(h1_cumsum[i]), float(np.sqrt(max(self.m_grad_sq[i], 0.0))))


def energy(ws: FemWorkspace, m: NodalField3, s: NodalField3,
           f: NodalField3, pi_op: PiOperator, params: MaterialParams) -> float:
    """Free energy: exchange - applied-field - anisotropy - coupling terms.

    All inner products use the assembled mass/stiffness matrices, so the
    value is consistent with the integrator's own bilinear forms.
    """
    ws.check_field(m, Support.OMEGA_MAGNETIC)
    ws.check_field(f, Support.OMEGA_MAGNETIC)
    s_w = ws.restrict_to_omega(s)
    pi_m = apply_pi(pi_op, m)
    return (0.5 * params.C_exch * ws.grad_sq_omega(m.values)
            - ws.l2_sq_omega(f.values, m.values)
            - 0.5 * ws.l2_sq_omega(pi_m.values, m.values)
            - params.c * ws.l2_sq_omega(s_w.values, m.values))


def step_identity_check(ws: FemWorkspace, m_before: NodalField3,
                        m_after: NodalField3, v: NodalField3,
                        f_i: NodalField3, pi_m: NodalField3,
                        s_i: NodalField3, params: MaterialParams,
                        k: float) -> float:
    """Relative residual of the exact per-step energy balance.

    Testing the magnetization system with its own solution yields
    ``alpha ||v||^2 + C_exch/(2k) (||grad m_new||^2 - ||grad m_old||^2)
    + C_exch k (theta - 1/2) ||grad v||^2 = (pi + f + c s, v)``; for the
    exact discrete solution the identity is algebraic, so the residual is
    bounded by the linear-solver tolerance.
    """
    s_w = s_i if s_i.support is Support.OMEGA_MAGNETIC else ws.restrict_to_omega(s_i)
    terms = (
        params.alpha * ws.l2_sq_omega(v.values),
        params.C_exch / (2.0 * k) * (ws.grad_sq_omega(m_after.values)
                                     - ws.grad_sq_omega(m_before.values)),
        params.C_exch * k * (params.theta - 0.5) * ws.grad_sq_omega(v.values),
        -ws.l2_sq_omega(pi_m.values, v.values),
        -ws.l2_sq_omega(f_i.values, v.values),
        -params.c * ws.l2_sq_omega(s_w.values, v.values),
    )
    scale = max(abs(t) for t in terms)
    resid = abs(sum(terms))
    return resid / scale if scale > 0 else resid


def nodewise_modulus_check(m_traj, v_traj, k: float) -> float:
    """Max deviation from |m^(i+1)(z)|^2 = 1 + k^2 sum_l |v^l(z)|^2."""
    running = np.zeros(m_traj[0].values.shape[0])
    worst = 0.0
    for i, v in enumerate(v_traj):
        running += np.einsum("zx,zx->z", v.values, v.values)
        mod_sq = np.einsum("zx,zx->z", m_traj[i + 1].values, m_traj[i + 1].values)
        worst = max(worst, float(np.abs(mod_sq - 1.0 - k**2 * running).max()))
    return worst


@dataclass(frozen=True)
class MonitorResult:
    max_excess: float                 # worst positive energy-estimate violation
    corrected_residual: float         # after adding back the quadratic remainder
    excess: np.ndarray


def energy_estimate_monitor(ledger: EnergyLedger, initial_energy: float) -> MonitorResult:
    """Evaluate the telescoped energy balance over a completed run.

    ``excess[j] = E_(j+1) + sum_(i<=j) (dissipation + theta + f_work +
    s_work + pi_mismatch) - E_0`` must be nonpositive up to the quadratic
    remainder ``-(k^2/2) (pi(v), v)`` per step; adding that remainder back
    gives a residual that vanishes to solver precision when the field
    operator is linear and self-adjoint.
    """
    work = (np.asarray(ledger.dissipation) + np.asarray(ledger.theta_term)
            + np.asarray(ledger.f_work) + np.asarray(ledger.s_work)
            + np.asarray(ledger.pi_mismatch))
    excess = np.asarray(ledger.E) + np.cumsum(work) - initial_energy
    corrected = excess + 0.5 * ledger.k**2 * np.cumsum(np.asarray(ledger.pi_v_quad))
    scale = max(abs(initial_energy), float(np.abs(ledger.E).max(initial=0.0)), 1.0)
    return MonitorResult(
        max_excess=float(excess.max(initial=0.0)),
        corrected_residual=float(np.abs(corrected).max(initial=0.0)) / scale,
        excess=excess,
    )


# ---------------------------------------------------------------------------
# dense brute-force oracle
# ---------------------------------------------------------------------------

def _kron3(a: np.ndarray) -> np.ndarray:
    return np.kron(a, np.eye(3))


def _cross_mat(w: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


def dense_oracle_step(mesh: TetMesh, m: NodalField3, s: NodalField3,
                      f_i: NodalField3, pi_op: PiOperator, j_next: NodalField3,
                      params: MaterialParams, k: float):
    """One full step with dense matrices and direct factorization.

    Independent verification path: python-loop assembly into dense arrays,
    a tangent frame from singular vectors (the solve is frame independent),
    and ``numpy.linalg.solve``.  Shares only the element formulas with the
    production path.  Refuses meshes above 500 nodes.
    """
    if mesh.n_nodes > 500:
        raise ValueError("dense oracle is limited to meshes with <= 500 nodes")
    coords = mesh.node_coords
    omega = mesh.omega_nodes
    n, big_n = len(omega), mesh.n_nodes
    loc = np.full(big_n, -1, dtype=np.int64)
    loc[omega] = np.arange(n)

    mass_w = np.zeros((n, n))
    stiff_w = np.zeros((n, n))
    mass_a = np.zeros((big_n, big_n))
    stiff_d0 = np.zeros((big_n, big_n))
    mass_d0 = np.zeros((big_n, big_n))
    cross_llg = np.zeros((3 * n, 3 * n))

    rule = TET_DEGREE2
    aniso = np.zeros((3 * big_n, 3 * big_n))
    cross_spin = np.zeros((3 * big_n, 3 * big_n))

    for t in range(mesh.n_tets):
        nodes = mesh.tets[t]
        ke = element_stiffness(coords[nodes])
        me = element_mass(coords[nodes])
        d0 = (params.D0_magnetic if mesh.tet_region[t] == Region.MAGNETIC
              else params.D0_conductor)
        for a in range(4):
            for b in range(4):
                mass_a[nodes[a], nodes[b]] += me[a, b]
                stiff_d0[nodes[a], nodes[b]] += d0 * ke[a, b]
                mass_d0[nodes[a], nodes[b]] += d0 * params.reaction_scale_sf * me[a, b]
        if mesh.tet_region[t] != Region.MAGNETIC:
            continue
        lw = loc[nodes]
        vol = float(np.linalg.det(coords[nodes][1:] - coords[nodes][0])) / 6.0
        for a in range(4):
            for b in range(4):
                mass_w[lw[a], lw[b]] += me[a, b]
                stiff_w[lw[a], lw[b]] += ke[a, b]
                w = vol * sum(P1_CUBIC_INTEGRALS[a, b, c] * m.values[lw[c]]
                              for c in range(4))
                blk = _cross_mat(w)
                cross_llg[3 * lw[b]:3 * lw[b] + 3, 3 * lw[a]:3 * lw[a] + 3] += blk

    # magnetization solve in an SVD-derived tangent frame
    pi_m = apply_pi(pi_op, m)
    a_full = (params.alpha * _kron3(mass_w)
              + params.C_exch * params.theta * k * _kron3(stiff_w)
              + cross_llg)
    load = (pi_m.values + f_i.values + params.c * s.values[omega]).reshape(-1)
    rhs = _kron3(mass_w) @ load - params.C_exch * (_kron3(stiff_w) @ m.values.reshape(-1))
    p = np.zeros((3 * n, 2 * n))
    for z in range(n):
        _, _, vt = np.linalg.svd(m.values[z].reshape(1, 3))
        p[3 * z:3 * z + 3, 2 * z] = vt[1]
        p[3 * z:3 * z + 3, 2 * z + 1] = vt[2]
    x = np.linalg.solve(p.T @ a_full @ p, p.T @ rhs)
    v = NodalField3((p @ x).reshape(-1, 3), Support.OMEGA_MAGNETIC)
    m_next = NodalField3(m.values + k * v.values, Support.OMEGA_MAGNETIC)

    norms = np.linalg.norm(m_next.values, axis=1)
    if np.any(norms < 1.0 - 1e-12):
        raise ConstraintError("oracle: nodal modulus dropped below one")
    m_proj = m_next.values / norms[:, None]

    # spin system with the same quadrature as production
    for t in np.nonzero(mesh.tet_region == Region.MAGNETIC)[0]:
        nodes = mesh.tets[t]
        vol = float(np.linalg.det(coords[nodes][1:] - coords[nodes][0])) / 6.0
        ke = element_stiffness(coords[nodes])
        mp = m_proj[loc[nodes]]
        for q in range(rule.points.shape[0]):
            lam = rule.points[q]
            wq = rule.weights[q]
            mq = lam @ mp
            for a in range(4):
                for b in range(4):
                    qblk = params.D0_magnetic * ke[a, b] * wq * np.outer(mq, mq)
                    aniso[3 * nodes[b]:3 * nodes[b] + 3,
                          3 * nodes[a]:3 * nodes[a] + 3] += qblk
                    cblk = (-params.D0_magnetic * params.reaction_scale_J * vol
                            * wq * lam[a] * lam[b]) * _cross_mat(mq)
                    cross_spin[3 * nodes[b]:3 * nodes[b] + 3,
                               3 * nodes[a]:3 * nodes[a] + 3] += cblk
    b_mat = ((1.0 / k) * _kron3(mass_a) + _kron3(stiff_d0) + _kron3(mass_d0)
             - params.beta * params.beta_prime * aniso + cross_spin)
    rhs_s = (1.0 / k) * (_kron3(mass_a) @ s.values.reshape(-1))

    for t in np.nonzero(mesh.tet_region == Region.MAGNETIC)[0]:
        nodes = mesh.tets[t]
        vol = float(np.linalg.det(coords[nodes][1:] - coords[nodes][0])) / 6.0
        d = coords[nodes][1:] - coords[nodes][0]
        grads = np.empty((4, 3))
        grads[1:] = np.linalg.inv(d).T
        grads[0] = -grads[1:].sum(axis=0)
        mp = m_proj[loc[nodes]]
        jv = j_next.values[nodes]
        for q in range(rule.points.shape[0]):
            lam = rule.points[q]
            wq = rule.weights[q]
            mq = lam @ mp
            jq = lam @ jv
            for b in range(4):
                rhs_s[3 * nodes[b]:3 * nodes[b] + 3] += (
                    params.beta * vol * wq * (jq @ grads[b]) * mq)

    shared = np.nonzero(mesh.facet_tags == FacetTag.SHARED)[0]
    for fi in shared:
        fn = mesh.facet_nodes[fi]
        pquad = coords[fn]
        nrm = np.cross(pquad[1] - pquad[0], pquad[2] - pquad[0])
        area = 0.5 * np.linalg.norm(nrm)
        normal = nrm / np.linalg.norm(nrm)
        centroid_tet = coords[mesh.tets[mesh.facet_tet[fi]]].mean(axis=0)
        if normal @ (pquad.mean(axis=0) - centroid_tet) < 0:
            normal = -normal
        mp = m_proj[loc[fn]]
        jv = j_next.values[fn]
        for q in range(3):
            lam = TRI_MIDPOINT.points[q]
            wq = TRI_MIDPOINT.weights[q]
            mq = lam @ mp
            jq = lam @ jv
            for b in range(3):
                rhs_s[3 * fn[b]:3 * fn[b] + 3] -= (
                    params.beta * area * wq * (jq @ normal) * lam[b] * mq)

    s_next = NodalField3(np.linalg.solve(b_mat, rhs_s).reshape(-1, 3),
                         Support.OMEGA_ALL)
    return v, m_next, s_next


# ---------------------------------------------------------------------------
# projection gradient bound
# ---------------------------------------------------------------------------

def random_admissible_field(ws: FemWorkspace, rng: np.random.Generator,
                            modulus_range=(1.0, 2.0)) -> NodalField3:
    """Nodal field with iid random directions and moduli >= 1."""
    n = ws.n_omega
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    r = rng.uniform(modulus_range[0], modulus_range[1], size=n)
    return NodalField3(r[:, None] * d, Support.OMEGA_MAGNETIC)


def projection_bound_probe(ws: FemWorkspace, n_probes: int,
                           rng: np.random.Generator,
                           modulus_range=(1.0, 2.0)) -> float:
    """Max gradient amplification of the nodal projection over random fields."""
    worst = 0.0
    for _ in range(n_probes):
        phi = random_admissible_field(ws, rng, modulus_range)
        denom = ws.grad_sq_omega(phi.values)
        num = ws.grad_sq_omega(nodal_projection(phi).values)
        worst = max(worst, float(np.sqrt(num / denom)))
    return worst


# ---------------------------------------------------------------------------
# weak-form residual probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpaceTimePolynomial:
    """Closed-form vector test function with analytic spatial gradient."""

    name: str
    value: object   # (t, X[..., 3]) -> [..., 3]
    grad: object    # (t, X[..., 3]) -> [..., 3, 3], [j, k] = d phi_j / d x_k


def default_test_functions() -> tuple[SpaceTimePolynomial, ...]:
    z3 = lambda X: np.zeros(X.shape[:-1] + (3, 3))

    def g_const(t, X):
        return z3(X)

    def v1(t, X):
        out = np.zeros(X.shape[:-1] + (3,))
        out[..., 0] = 1.0
        return out

    def v2(t, X):
        out = np.zeros(X.shape[:-1] + (3,))
        out[..., 2] = X[..., 0]
        return out

    def g2(t, X):
        out = z3(X)
        out[..., 2, 0] = 1.0
        return out

    def v3(t, X):
        out = np.zeros(X.shape[:-1] + (3,))
        out[..., 0] = X[..., 1]
        out[..., 2] = t
        return out

    def g3(t, X):
        out = z3(X)
        out[..., 0, 1] = 1.0
        return out

    def v4(t, X):
        out = np.zeros(X.shape[:-1] + (3,))
        out[..., 0] = X[..., 0] * X[..., 2]
        out[..., 1] = 1.0 + t * X[..., 1]
        return out

    def g4(t, X):
        out = z3(X)
        out[..., 0, 0] = X[..., 2]
        out[..., 0, 2] = X[..., 0]
        out[..., 1, 1] = t
        return out

    def v5(t, X):
        out = np.empty(X.shape[:-1] + (3,))
        out[..., 0] = t * t
        out[..., 1] = X[..., 0] ** 2
        out[..., 2] = X[..., 1] * X[..., 2]
        return out

    def g5(t, X):
        out = z3(X)
        out[..., 1, 0] = 2.0 * X[..., 0]
        out[..., 2, 1] = X[..., 2]
        out[..., 2, 2] = X[..., 1]
        return out

    return (SpaceTimePolynomial("const_x", v1, g_const),
            SpaceTimePolynomial("shear_xz", v2, g2),
            SpaceTimePolynomial("mixed_t", v3, g3),
            SpaceTimePolynomial("bilinear", v4, g4),
            SpaceTimePolynomial("quadratic", v5, g5))


def weak_residual_probe(ws: FemWorkspace, m_traj, v_traj, s_traj,
                        f_src: SourceField, j_src: SourceField,
                        pi_op: PiOperator, params: MaterialParams, k: float,
                        test_functions=None):
    """Residuals of the two space-time weak formulations along a trajectory.

    Both residuals are evaluated by quadrature with the smooth test
    functions themselves (not their interpolants), so they measure the
    consistency gap of the discrete trajectory and should decay on a joint
    space-time refinement ladder.  Returns one array per equation with one
    entry per test function.
    """
    if test_functions is None:
        test_functions = default_test_functions()
    rule = TET_DEGREE2
    n_steps = len(v_traj)

    mesh = ws.mesh
    all_nodes = mesh.tets                               # (E, 4)
    all_vols = ws.tet_vols
    all_grads = ws.tet_grads
    d0_all = params.D0_of_region(mesh.tet_region)
    mag = ws.mag_tets
    x_q_all = np.einsum("qa,eax->eqx", rule.points, mesh.node_coords[all_nodes])
    x_q_mag = x_q_all[mag]
    mag_loc = ws.mag_nodes_local

    lam2 = TRI_MIDPOINT.points
    w2 = TRI_MIDPOINT.weights
    fn = ws.shared_facet_nodes
    if len(ws.shared_facet_area):
        x_q_f = np.einsum("qa,fax->fqx", lam2, mesh.node_coords[fn])

    r_llg = np.zeros(len(test_functions))
    r_spin = np.zeros(len(test_functions))

    for i in range(n_steps):
        t_old, t_new = i * k, (i + 1) * k
        m_old = m_traj[i].values
        v_i = v_traj[i].values
        s_old = s_traj[i].values
        s_new = s_traj[i + 1].values
        m_proj = nodal_projection(m_traj[i + 1]).values
        f_vec = f_src.vector_at(t_old)
        j_vec = j_src.vector_at(t_new)
        pi_m = apply_pi(pi_op, m_traj[i]).values

        mq = np.einsum("qa,eax->eqx", rule.points, m_old[mag_loc])
        vq = np.einsum("qa,eax->eqx", rule.points, v_i[mag_loc])
        sq_w = np.einsum("qa,eax->eqx", rule.points, s_old[ws.mag_nodes_global])
        piq = np.einsum("qa,eax->eqx", rule.points, pi_m[mag_loc])
        # dm[e, j, k] = d m_j / d x_k, constant per element
        dm = np.einsum("eaj,eak->ejk", m_old[mag_loc], ws.mag_grads)
        dm_t = np.transpose(dm, (0, 2, 1))                      # (E, k, j)

        for p, fn_test in enumerate(test_functions):
            phi = fn_test.value(t_old, x_q_mag)
            gphi = fn_test.grad(t_old, x_q_mag)
            integ = np.einsum("eqx,eqx->eq", vq, phi)
            integ += params.alpha * np.einsum("eqx,eqx->eq", np.cross(vq, mq), phi)
            # exchange: sum_k (d_k m x m) . d_k phi
            cr = np.cross(dm_t[:, None, :, :], mq[:, :, None, :])   # (E, Q, k, 3)
            integ += params.C_exch * np.einsum("eqkj,eqjk->eq", cr, gphi)
            integ -= np.einsum("eqx,eqx->eq", np.cross(piq, mq), phi)
            integ -= np.einsum("eqx,eqx->eq",
                               np.cross(np.broadcast_to(f_vec, mq.shape), mq), phi)
            integ -= params.c * np.einsum("eqx,eqx->eq", np.cross(sq_w, mq), phi)
            r_llg[p] += k * float(np.einsum("e,q,eq->", ws.mag_vols, rule.weights, integ))

        ds = (s_new - s_old) / k
        dsq = np.einsum("qa,eax->eqx", rule.points, ds[all_nodes])
        snq = np.einsum("qa,eax->eqx", rule.points, s_new[all_nodes])
        grad_s = np.einsum("eaj,eak->ejk", s_new[all_nodes], all_grads)
        mpq = np.einsum("qa,eax->eqx", rule.points, m_proj[mag_loc])
        snq_w = snq[mag]
        grad_s_w = grad_s[mag]

        for p, fn_test in enumerate(test_functions):
            zeta = fn_test.value(t_new, x_q_all)
            gzeta = fn_test.grad(t_new, x_q_all)
            integ = np.einsum("eqx,eqx->eq", dsq, zeta)
            integ += d0_all[:, None] * np.einsum("ejk,eqjk->eq", grad_s, gzeta)
            integ += (d0_all[:, None] * params.reaction_scale_sf
                      * np.einsum("eqx,eqx->eq", snq, zeta))
            total = k * float(np.einsum("e,q,eq->", all_vols, rule.weights, integ))

            zeta_w = zeta[mag]
            gzeta_w = gzeta[mag]
            gs_dot_m = np.einsum("eqj,ejk->eqk", mpq, grad_s_w)
            gz_dot_m = np.einsum("eqj,eqjk->eqk", mpq, gzeta_w)
            integ_w = (-params.beta * params.beta_prime * params.D0_magnetic
                       * np.einsum("eqk,eqk->eq", gs_dot_m, gz_dot_m))
            integ_w += (params.D0_magnetic * params.reaction_scale_J
                        * np.einsum("eqx,eqx->eq", np.cross(snq_w, mpq), zeta_w))
            integ_w -= params.beta * np.einsum("eqj,k,eqjk->eq", mpq, j_vec, gzeta_w)
            total += k * float(np.einsum("e,q,eq->", ws.mag_vols, rule.weights, integ_w))

            if len(ws.shared_facet_area):
                zeta_f = fn_test.value(t_new, x_q_f)
                m_fq = np.einsum("qa,fax->fqx", lam2, m_proj[ws.omega_index[fn]])
                jdotn = np.einsum("x,fx->f", j_vec, ws.shared_facet_normal)
                bnd = np.einsum("f,q,f,fqx,fqx->", ws.shared_facet_area, w2,
                                jdotn, m_fq, zeta_f)
                total += k * params.beta * float(bnd)
            r_spin[p] += total

    return r_llg, r_spin
