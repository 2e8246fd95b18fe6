"""Orchestration: initialization, the two-solve time loop, and studies.

Each time step performs, in order: sample the applied field and the
lower-order field contribution at the current time, solve the tangent-space
system for the discrete time derivative, update the magnetization linearly,
project it nodewise, then assemble and solve the spin-diffusion step with
the projected new magnetization and the current sampled at the new time.
States are immutable snapshots; the loop never mutates a previous one, so
identical configurations reproduce bit-identical trajectories.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import diagnostics
from .config import (GeometrySpec, M0File, M0PerLayer, M0Uniform, M0Vortex,
                     S0File, S0Uniform, S0Zero, SimConfig, OutputConfig)
from .errors import ConfigurationError, SolverError
from .fem import (FemWorkspace, NodalField3, Support, constant_field,
                  nodal_projection, zero_field)
from .fields import (PiOperator, SourceTarget, apply_pi, constant_source,
                     pi_uniaxial, pi_zero, sample_source)
from .llg import assemble_llg_system, build_tangent_basis, solve_v, update_m
from .mesh import Region, TetMesh, build_multilayer_mesh
from .params import MaterialParams, SolverConfig
from .spin import assemble_spin_form, assemble_spin_rhs, solve_s


@dataclass(frozen=True)
class SimState:
    """Immutable snapshot of one time level."""

    m: NodalField3
    s: NodalField3
    step: int
    k: float

    @property
    def t(self) -> float:
        return self.step * self.k


@dataclass(frozen=True)
class Initialized:
    config: SimConfig
    mesh: TetMesh
    ws: FemWorkspace
    state: SimState
    pi_op: PiOperator
    params: MaterialParams
    solver: SolverConfig


@dataclass
class RunResult:
    init: Initialized
    states: list
    velocities: list
    ledger: diagnostics.EnergyLedger
    initial_energy: float

    @property
    def final_state(self) -> SimState:
        return self.states[-1]


def _normalize_rows(values: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(values, axis=1)
    if np.any(norms < 1e-300):
        raise ConfigurationError(f"{what}: zero vector cannot be normalized")
    return values / norms[:, None]


def _magnetic_layer_bounds(geometry: GeometrySpec):
    """z-intervals of the magnetic layers, bottom to top."""
    bounds, z0 = [], 0.0
    for thickness, tag in geometry.layers:
        if tag == Region.MAGNETIC:
            bounds.append((z0, z0 + thickness))
        z0 += thickness
    return bounds


def _initial_m(config: SimConfig, mesh: TetMesh) -> NodalField3:
    spec = config.m0
    coords = mesh.node_coords[mesh.omega_nodes]
    if isinstance(spec, M0Uniform):
        values = np.tile(np.asarray(spec.direction, dtype=np.float64),
                         (len(coords), 1))
    elif isinstance(spec, M0PerLayer):
        bounds = _magnetic_layer_bounds(config.geometry)
        if len(spec.directions) != len(bounds):
            raise ConfigurationError(
                f"per-layer initial data needs {len(bounds)} directions")
        values = np.zeros((len(coords), 3))
        assigned = np.zeros(len(coords), dtype=bool)
        tol = 1e-9 * sum(t for t, _ in config.geometry.layers)
        for (z_lo, z_hi), direction in zip(bounds, spec.directions):
            sel = (coords[:, 2] >= z_lo - tol) & (coords[:, 2] <= z_hi + tol) & ~assigned
            values[sel] = np.asarray(direction, dtype=np.float64)
            assigned |= sel
        if not assigned.all():
            raise ConfigurationError("per-layer initial data left nodes unassigned")
    elif isinstance(spec, M0Vortex):
        cx, cy = spec.center
        dx = coords[:, 0] - cx
        dy = coords[:, 1] - cy
        values = np.stack([-dy, dx, np.full(len(coords), spec.polarity * spec.core_radius)],
                          axis=1)
    elif isinstance(spec, M0File):
        values = np.loadtxt(spec.path, delimiter=",", dtype=np.float64, ndmin=2)
        if values.shape != (len(coords), 3):
            raise ConfigurationError(
                f"initial magnetization file must have {len(coords)} rows of 3 values")
    else:
        raise ConfigurationError(f"unknown initial magnetization spec {spec!r}")
    return NodalField3(_normalize_rows(values, "initial magnetization"),
                       Support.OMEGA_MAGNETIC)


def _initial_s(config: SimConfig, mesh: TetMesh) -> NodalField3:
    spec = config.s0
    if isinstance(spec, S0Zero):
        return zero_field(mesh, Support.OMEGA_ALL)
    if isinstance(spec, S0Uniform):
        return constant_field(mesh, Support.OMEGA_ALL, spec.vector)
    if isinstance(spec, S0File):
        values = np.loadtxt(spec.path, delimiter=",", dtype=np.float64, ndmin=2)
        if values.shape != (mesh.n_nodes, 3):
            raise ConfigurationError(
                f"initial spin file must have {mesh.n_nodes} rows of 3 values")
        return NodalField3(values, Support.OMEGA_ALL)
    raise ConfigurationError(f"unknown initial spin spec {spec!r}")


def initialize(config: SimConfig) -> Initialized:
    """Build the mesh and workspace, interpolate the initial data.

    The initial magnetization is normalized nodewise after interpolation,
    so it starts exactly on the unit sphere at every node.
    """
    mesh = build_multilayer_mesh(config.geometry.layers,
                                 config.geometry.cross_section,
                                 config.geometry.resolution)
    ws = FemWorkspace(mesh)
    m0 = _initial_m(config, mesh)
    s0 = _initial_s(config, mesh)
    pi_op = (pi_uniaxial(config.params.easy_axis, config.params.C_ani)
             if config.params.C_ani > 0 else pi_zero())
    state = SimState(m=m0, s=s0, step=0, k=config.k)
    return Initialized(config=config, mesh=mesh, ws=ws, state=state,
                       pi_op=pi_op, params=config.params, solver=config.solver)


def step(init: Initialized, state: SimState):
    """Advance one step; returns (new_state, v)."""
    cfg = init.config
    k = state.k
    f_i = sample_source(cfg.f_source, state.t, init.mesh)
    pi_m = apply_pi(init.pi_op, state.m)
    s_omega = init.ws.restrict_to_omega(state.s)
    basis = build_tangent_basis(state.m)
    system = assemble_llg_system(init.ws, state.m, basis, f_i, pi_m, s_omega,
                                 init.params, k)
    v = solve_v(system, init.solver)
    m_next = update_m(state.m, v, k)

    m_proj = nodal_projection(m_next)
    j_next = sample_source(cfg.j_source, state.t + k, init.mesh)
    spin_sys = assemble_spin_form(init.ws, m_proj, init.params, k)
    rhs = assemble_spin_rhs(init.ws, state.s, m_proj, j_next, init.params, k)
    s_next = solve_s(spin_sys, init.solver, rhs=rhs)
    return SimState(m=m_next, s=s_next, step=state.step + 1, k=k), v


def _append_ledger(ledger, init, state_old, state_new, v, f_old, f_new):
    ws, params = init.ws, init.params
    k = state_old.k
    e_new = diagnostics.energy(ws, state_new.m, state_new.s, f_new,
                               init.pi_op, params)
    s_old_w = ws.restrict_to_omega(state_old.s)
    s_new_w = ws.restrict_to_omega(state_new.s)
    pi_v = apply_pi(init.pi_op, v)
    # squared norms can round to tiny negatives for (near-)constant fields
    sq = lambda x: max(x, 0.0)
    v_l2_sq = sq(ws.l2_sq_omega(v.values))
    grad_v_sq = sq(ws.grad_sq_omega(v.values))
    ledger.E.append(e_new)
    ledger.dissipation.append(params.alpha * k * v_l2_sq)
    ledger.theta_term.append(params.C_exch * k**2 * (params.theta - 0.5)
                             * grad_v_sq)
    ledger.f_work.append(ws.l2_sq_omega(f_new.values - f_old.values,
                                        state_new.m.values))
    ledger.s_work.append(params.c * ws.l2_sq_omega(
        s_new_w.values - s_old_w.values, state_new.m.values))
    ledger.pi_mismatch.append(0.0)  # the discrete operator is the operator itself
    ledger.pi_v_quad.append(ws.l2_sq_omega(pi_v.values, v.values))
    ledger.v_l2_sq.append(v_l2_sq)
    ledger.grad_v_sq.append(grad_v_sq)
    ledger.s_l2_sq.append(sq(ws.l2_sq_all(state_new.s.values)))
    ledger.s_h1_sq.append(sq(ws.h1_sq_all(state_new.s.values)))
    ledger.s_diff_sq.append(sq(ws.l2_sq_all(state_new.s.values - state_old.s.values)))
    ledger.m_grad_sq.append(sq(ws.grad_sq_omega(state_new.m.values)))


def run(config_or_init, start_state: SimState | None = None,
        n_steps: int | None = None, on_step=None) -> RunResult:
    """Execute the time loop from the initial or a restart state.

    Appends every step to the energy ledger and keeps all state snapshots
    and velocities (desk-scale runs; outputs are written by the CLI from
    the returned trajectory).  ``on_step(state)`` is invoked after each
    completed step with the new immutable snapshot, e.g. for rolling
    checkpoints; it must not mutate the state.
    """
    init = (config_or_init if isinstance(config_or_init, Initialized)
            else initialize(config_or_init))
    cfg = init.config
    state = init.state if start_state is None else start_state
    total = cfg.n_steps if n_steps is None else state.step + n_steps
    ledger = diagnostics.EnergyLedger(k=cfg.k, theta=init.params.theta)
    f0 = sample_source(cfg.f_source, state.t, init.mesh)
    e0 = diagnostics.energy(init.ws, state.m, state.s, f0, init.pi_op, init.params)

    states = [state]
    velocities = []
    f_old = f0
    while state.step < total:
        try:
            new_state, v = step(init, state)
        except SolverError as exc:
            raise SolverError(f"aborted at step {state.step}: {exc}",
                              residual=exc.residual,
                              iterations=exc.iterations) from exc
        f_new = sample_source(cfg.f_source, new_state.t, init.mesh)
        _append_ledger(ledger, init, state, new_state, v, f_old, f_new)
        states.append(new_state)
        velocities.append(v)
        state, f_old = new_state, f_new
        if on_step is not None:
            on_step(new_state)
    return RunResult(init=init, states=states, velocities=velocities,
                     ledger=ledger, initial_energy=e0)


# -- refinement studies ------------------------------------------------------

def evaluate_p1(mesh: TetMesh, nodal_values: np.ndarray, points: np.ndarray,
                region: Region | None = None) -> np.ndarray:
    """Evaluate a P1 field (values on all mesh nodes) at arbitrary points.

    Brute-force point location over (optionally region-filtered) tets;
    intended for small study meshes.
    """
    from .mesh import signed_volumes

    tets = mesh.tets if region is None else mesh.tets[mesh.tet_region == int(region)]
    vols = signed_volumes(mesh.node_coords, tets)
    out = np.zeros((len(points), nodal_values.shape[1]))
    found = np.zeros(len(points), dtype=bool)
    p = mesh.node_coords[tets]
    for i, x in enumerate(points):
        # barycentric coordinates via volume ratios
        for t in range(len(tets)):
            lam = np.empty(4)
            ok = True
            for a in range(4):
                q = p[t].copy()
                q[a] = x
                lam[a] = (np.linalg.det(q[1:] - q[0]) / 6.0) / vols[t]
                if lam[a] < -1e-9:
                    ok = False
                    break
            if ok:
                out[i] = lam @ nodal_values[tets[t]]
                found[i] = True
                break
    if not found.all():
        raise ValueError("point outside the mesh during P1 evaluation")
    return out


@dataclass(frozen=True)
class StudyRow:
    level: int
    h: float
    k: float
    m_cauchy: float | None     # L2 difference of m(T) to the previous level
    s_cauchy: float | None
    spin_stability_sum: float
    magnetization_stability_sum: float


def refinement_study(config: SimConfig, levels: int,
                     halve_h: bool = False) -> list[StudyRow]:
    """Run a ladder halving k (optionally also h) per level.

    Reports the Cauchy differences of the final fields between consecutive
    levels and the two stability sums per level.  With ``halve_h`` the
    coarse fields are evaluated at the fine nodes for the comparison.
    """
    if levels < 2:
        raise ConfigurationError("a refinement study needs at least 2 levels")
    from .mesh import mesh_size

    rows = []
    prev = None
    for lvl in range(levels):
        geo = config.geometry
        if halve_h and lvl > 0:
            geo = dataclasses.replace(
                geo, resolution=tuple(r * 2**lvl for r in config.geometry.resolution))
        cfg = dataclasses.replace(config, geometry=geo, k=config.k / 2**lvl)
        result = run(cfg)
        ws = result.init.ws
        h, _ = mesh_size(result.init.mesh)
        m_c = s_c = None
        if prev is not None:
            prev_result = prev
            if halve_h:
                m_prev_full = prev_result.init.ws.extend_by_zero(prev_result.final_state.m)
                pts_m = result.init.mesh.node_coords[result.init.mesh.omega_nodes]
                m_prev = evaluate_p1(prev_result.init.mesh, m_prev_full, pts_m,
                                     region=Region.MAGNETIC)
                s_prev = evaluate_p1(prev_result.init.mesh,
                                     prev_result.final_state.s.values,
                                     result.init.mesh.node_coords)
            else:
                m_prev = prev_result.final_state.m.values
                s_prev = prev_result.final_state.s.values
            m_c = float(np.sqrt(ws.l2_sq_omega(result.final_state.m.values - m_prev)))
            s_c = float(np.sqrt(ws.l2_sq_all(result.final_state.s.values - s_prev)))
        n = len(result.ledger)
        rows.append(StudyRow(
            level=lvl, h=h, k=cfg.k, m_cauchy=m_c, s_cauchy=s_c,
            spin_stability_sum=result.ledger.spin_stability_sum(n) if n else 0.0,
            magnetization_stability_sum=(result.ledger.magnetization_stability_sum(n)
                                         if n else 0.0)))
        prev = result
    return rows


# -- default scenario and the self-check battery -----------------------------

def default_trilayer_config(**overrides) -> SimConfig:
    """Two magnetic films around a conductor interlayer, current through
    the stack; reduced units throughout."""
    base = dict(
        geometry=GeometrySpec(
            layers=((0.4, Region.MAGNETIC), (0.2, Region.CONDUCTOR),
                    (0.4, Region.MAGNETIC)),
            cross_section=(1.0, 1.0),
            resolution=(2, 2, 5)),
        params=MaterialParams(alpha=0.5, c=1.0, beta=0.5, beta_prime=0.5,
                              theta=1.0, C_exch=1.0, C_ani=0.0,
                              D0_magnetic=2.0, D0_conductor=2.0),
        k=0.02,
        t_final=1.0,
        m0=M0PerLayer(((1.0, 0.0, 0.0), (0.0, 0.0, 1.0))),
        s0=S0Zero(),
        f_source=constant_source(SourceTarget.APPLIED_F, (0.0, 0.0, 0.2)),
        j_source=constant_source(SourceTarget.CURRENT_J, (0.0, 0.0, 1.0)),
        solver=SolverConfig(),
        output=OutputConfig(),
    )
    base.update(overrides)
    return SimConfig(**base)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_suite(config: SimConfig, seed: int = 0) -> list[CheckResult]:
    """Run the invariant battery on a small mesh; one result per check."""
    from . import checks

    return checks.run_all(config, seed=seed)
