import numpy as np
import pytest

from sdllg.config import (M0File, M0Uniform, M0PerLayer, M0Vortex,
                          S0Uniform)
from sdllg.driver import (SimState, default_trilayer_config, evaluate_p1,
                          initialize, refinement_study, run, step)
from sdllg.errors import ConfigurationError
from sdllg.fields import SourceTarget, constant_source, ramp_source, sample_source
from sdllg.llg import assemble_llg_system, build_tangent_basis, solve_v


def zero_data_config(**overrides):
    base = dict(
        m0=M0Uniform((0.0, 0.0, 1.0)),
        f_source=constant_source(SourceTarget.APPLIED_F, (0, 0, 0)),
        j_source=constant_source(SourceTarget.CURRENT_J, (0, 0, 0)),
    )
    base.update(overrides)
    return default_trilayer_config(**base)


# -- initialization ----------------------------------------------------------

def test_uniform_m0_normalized_exactly():
    cfg = default_trilayer_config(m0=M0Uniform((0.0, 0.0, 2.0)))
    init = initialize(cfg)
    assert np.all(init.state.m.values == [0.0, 0.0, 1.0])


def test_per_layer_m0():
    init = initialize(default_trilayer_config())
    z = init.mesh.node_coords[init.mesh.omega_nodes, 2]
    bottom = z <= 0.4 + 1e-12
    top = z >= 0.6 - 1e-12
    assert np.all(init.state.m.values[bottom] == [1.0, 0.0, 0.0])
    assert np.all(init.state.m.values[top] == [0.0, 0.0, 1.0])


def test_vortex_m0_unit_modulus():
    cfg = default_trilayer_config(m0=M0Vortex(center=(0.5, 0.5), core_radius=0.3))
    init = initialize(cfg)
    norms = np.linalg.norm(init.state.m.values, axis=1)
    assert np.abs(norms - 1.0).max() <= 1e-15
    # in-plane components curl around the center
    coords = init.mesh.node_coords[init.mesh.omega_nodes]
    off_center = np.linalg.norm(coords[:, :2] - 0.5, axis=1) > 0.3
    planar = init.state.m.values[off_center][:, :2]
    radial = coords[off_center, :2] - 0.5
    dots = np.einsum("zx,zx->z", planar, radial)
    assert np.abs(dots).max() <= 1e-12


def test_m0_from_file(tmp_path):
    base = initialize(default_trilayer_config())
    n = base.ws.n_omega
    rng = np.random.default_rng(3)
    vals = rng.normal(size=(n, 3))
    path = tmp_path / "m0.csv"
    np.savetxt(path, vals, delimiter=",")
    cfg = default_trilayer_config(m0=M0File(str(path)))
    init = initialize(cfg)
    expected = vals / np.linalg.norm(vals, axis=1)[:, None]
    assert np.allclose(init.state.m.values, expected, atol=1e-15)

    np.savetxt(path, vals[:-1], delimiter=",")
    with pytest.raises(ConfigurationError, match="rows"):
        initialize(default_trilayer_config(m0=M0File(str(path))))


def test_s0_uniform():
    cfg = default_trilayer_config(s0=S0Uniform((0.1, 0.2, 0.3)))
    init = initialize(cfg)
    assert np.all(init.state.s.values == [0.1, 0.2, 0.3])


def test_per_layer_count_mismatch():
    cfg = default_trilayer_config(m0=M0PerLayer(((1.0, 0.0, 0.0),)))
    with pytest.raises(ConfigurationError, match="directions"):
        initialize(cfg)


# -- the loop ----------------------------------------------------------------

def test_zero_steps_returns_initial_state_only():
    result = run(default_trilayer_config(t_final=0.0))
    assert len(result.states) == 1
    assert len(result.velocities) == 0
    assert result.states[0].step == 0


def test_zero_data_run_is_stationary():
    result = run(zero_data_config(t_final=0.2))
    first, last = result.states[0], result.states[-1]
    assert np.abs(last.m.values - first.m.values).max() <= 1e-12
    assert np.abs(last.s.values).max() <= 1e-12
    energies = [result.initial_energy] + list(result.ledger.E)
    assert np.abs(np.diff(energies)).max() <= 1e-12


def test_determinism_bitwise():
    cfg = default_trilayer_config(t_final=0.2)
    a, b = run(cfg), run(cfg)
    for st_a, st_b in zip(a.states, b.states):
        assert np.array_equal(st_a.m.values, st_b.m.values)
        assert np.array_equal(st_a.s.values, st_b.s.values)
    assert a.ledger.E == b.ledger.E


def test_checkpoint_restart_bitwise(tmp_path):
    from sdllg.output import load_checkpoint, save_checkpoint

    cfg = default_trilayer_config(t_final=0.2)  # 10 steps
    full = run(cfg)
    init = initialize(cfg)
    mid = full.states[4]
    path = str(tmp_path / "mid.ckpt")
    save_checkpoint(path, init.mesh, mid.m, mid.s, mid.step, mid.k)
    m, s, step_idx, k = load_checkpoint(path, init.mesh)
    resumed = run(init, start_state=SimState(m=m, s=s, step=step_idx, k=k))
    for st_resumed, st_full in zip(resumed.states, full.states[4:]):
        assert np.array_equal(st_resumed.m.values, st_full.m.values)
        assert np.array_equal(st_resumed.s.values, st_full.s.values)


def test_states_are_immutable_snapshots():
    result = run(default_trilayer_config(t_final=0.1))
    with pytest.raises((ValueError, AttributeError)):
        result.states[0].m.values[0, 0] = 7.0


def test_time_lag_conventions():
    # the magnetization step must see f(t_i) and the old s; the spin step
    # must see j(t_(i+1)) and the projected new m
    cfg = default_trilayer_config(
        t_final=0.02,
        f_source=ramp_source(SourceTarget.APPLIED_F, (0, 0, 0.2), (0.4, 0, 0.2),
                             0.02, t_final=0.02),
        j_source=ramp_source(SourceTarget.CURRENT_J, (0, 0, 1.0), (0, 0, -1.0),
                             0.02, t_final=0.02))
    init = initialize(cfg)
    new_state, v = step(init, init.state)

    from sdllg.fields import apply_pi
    from sdllg.fem import nodal_projection
    from sdllg.spin import assemble_spin_form, assemble_spin_rhs, solve_s

    f_at_0 = sample_source(cfg.f_source, 0.0, init.mesh)
    pi_m = apply_pi(init.pi_op, init.state.m)
    s_w = init.ws.restrict_to_omega(init.state.s)
    basis = build_tangent_basis(init.state.m)
    system = assemble_llg_system(init.ws, init.state.m, basis, f_at_0, pi_m,
                                 s_w, init.params, cfg.k)
    v_manual = solve_v(system, init.solver)
    assert np.array_equal(v.values, v_manual.values)

    m_proj = nodal_projection(new_state.m)
    j_at_k = sample_source(cfg.j_source, cfg.k, init.mesh)
    spin_sys = assemble_spin_form(init.ws, m_proj, init.params, cfg.k)
    rhs = assemble_spin_rhs(init.ws, init.state.s, m_proj, j_at_k,
                            init.params, cfg.k)
    s_manual = solve_s(spin_sys, init.solver, rhs=rhs)
    assert np.array_equal(new_state.s.values, s_manual.values)


# -- refinement studies ------------------------------------------------------

def test_study_constant_scenario_zero_differences():
    rows = refinement_study(zero_data_config(k=0.05, t_final=0.1), levels=3)
    assert rows[0].m_cauchy is None
    for row in rows[1:]:
        assert row.m_cauchy <= 1e-10
        assert row.s_cauchy <= 1e-10


def test_study_first_order_in_time():
    # halving k changes both final fields at first order
    rows = refinement_study(default_trilayer_config(k=0.1, t_final=0.4), levels=3)
    assert rows[1].m_cauchy / rows[2].m_cauchy >= 1.7
    assert rows[1].s_cauchy / rows[2].s_cauchy >= 1.7


def test_study_stability_sums_bounded():
    rows = refinement_study(default_trilayer_config(k=0.08, t_final=0.32), levels=3)
    spin = [r.spin_stability_sum for r in rows]
    mag = [r.magnetization_stability_sum for r in rows]
    assert max(spin) / min(spin) <= 2.0
    assert max(mag) / min(mag) <= 2.0


def test_study_with_h_refinement():
    rows = refinement_study(default_trilayer_config(k=0.1, t_final=0.1),
                            levels=2, halve_h=True)
    assert rows[1].h == pytest.approx(rows[0].h / 2, rel=1e-12)
    assert rows[1].m_cauchy is not None and np.isfinite(rows[1].m_cauchy)


def test_study_needs_two_levels():
    with pytest.raises(ConfigurationError):
        refinement_study(default_trilayer_config(), levels=1)


def test_on_step_callback_sees_every_snapshot():
    seen = []
    result = run(default_trilayer_config(t_final=0.1), on_step=seen.append)
    assert [st.step for st in seen] == [1, 2, 3, 4, 5]
    assert all(a is b for a, b in zip(seen, result.states[1:]))


def test_evaluate_p1_reproduces_nodal_field():
    init = initialize(default_trilayer_config())
    vals = init.mesh.node_coords @ np.array([[1.0, 0.5, 0.0],
                                             [0.0, 2.0, 0.0],
                                             [0.0, 0.0, -1.0]])
    pts = np.array([[0.31, 0.47, 0.53], [0.9, 0.1, 0.2]])
    out = evaluate_p1(init.mesh, vals, pts)
    expected = pts @ np.array([[1.0, 0.5, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, -1.0]])
    assert np.allclose(out, expected, atol=1e-12)
