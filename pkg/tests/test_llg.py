import numpy as np
import pytest

from sdllg.errors import ConfigurationError, ConstraintError
from sdllg.fem import NodalField3, Support, constant_field, zero_field
from sdllg.llg import (assemble_llg_system, build_tangent_basis, solve_v,
                       update_m)
from sdllg.mesh import Region, from_arrays
from sdllg.params import MaterialParams, SolverConfig

PARAMS = MaterialParams(alpha=0.5, c=1.0, beta=0.5, beta_prime=0.5, theta=1.0,
                        C_exch=1.0, D0_magnetic=2.0, D0_conductor=2.0)
SOLVER = SolverConfig()


def unit_field(rng, n):
    d = rng.normal(size=(n, 3))
    return NodalField3(d / np.linalg.norm(d, axis=1)[:, None], Support.OMEGA_MAGNETIC)


# -- tangent basis -----------------------------------------------------------

def test_canonical_frame():
    tb = build_tangent_basis(NodalField3(np.array([[0.0, 0.0, 1.0]]),
                                         Support.OMEGA_MAGNETIC))
    assert np.allclose(tb.t1[0], [1.0, 0.0, 0.0], atol=1e-15)
    assert np.allclose(tb.t2[0], [0.0, 1.0, 0.0], atol=1e-15)


def test_basis_orthonormality_random(rng):
    m = unit_field(rng, 200)
    tb = build_tangent_basis(m)
    for t in (tb.t1, tb.t2):
        assert np.abs(np.einsum("zx,zx->z", t, m.values)).max() <= 1e-12
        assert np.abs(np.linalg.norm(t, axis=1) - 1).max() <= 1e-12
    assert np.abs(np.einsum("zx,zx->z", tb.t1, tb.t2)).max() <= 1e-12


def test_basis_handles_moduli_above_one(rng):
    vals = rng.normal(size=(50, 3))
    vals /= np.linalg.norm(vals, axis=1)[:, None]
    vals *= rng.uniform(1.0, 4.0, size=50)[:, None]
    m = NodalField3(vals, Support.OMEGA_MAGNETIC)
    tb = build_tangent_basis(m)
    assert np.abs(np.einsum("zx,zx->z", tb.t1, vals)).max() <= 1e-12 * 4


def test_opposite_m_spans_same_plane(rng):
    m = unit_field(rng, 30)
    minus = NodalField3(-m.values, Support.OMEGA_MAGNETIC)
    a, b = build_tangent_basis(m), build_tangent_basis(minus)
    # each frame vector of one basis lies in the span of the other
    for z in range(30):
        span = np.stack([b.t1[z], b.t2[z]])
        for t in (a.t1[z], a.t2[z]):
            coeff = span @ t
            assert np.linalg.norm(coeff @ span - t) <= 1e-12


def test_zero_vector_rejected():
    with pytest.raises(ConstraintError):
        build_tangent_basis(NodalField3(np.zeros((1, 3)), Support.OMEGA_MAGNETIC))


# -- system assembly ---------------------------------------------------------

@pytest.fixture(scope="module")
def assembled(default_ws_m):
    ws, m = default_ws_m
    basis = build_tangent_basis(m)
    f = zero_field(ws.mesh, Support.OMEGA_MAGNETIC)
    pi = zero_field(ws.mesh, Support.OMEGA_MAGNETIC)
    s = zero_field(ws.mesh, Support.OMEGA_MAGNETIC)
    return ws, m, basis, assemble_llg_system(ws, m, basis, f, pi, s, PARAMS, 0.02)


@pytest.fixture(scope="module")
def default_ws_m(default_init):
    rng = np.random.default_rng(7)
    ws = default_init.ws
    d = rng.normal(size=(ws.n_omega, 3))
    m = NodalField3(d / np.linalg.norm(d, axis=1)[:, None], Support.OMEGA_MAGNETIC)
    return ws, m


def test_equilibrium_zero_rhs_zero_v(default_init):
    ws = default_init.ws
    m = constant_field(ws.mesh, Support.OMEGA_MAGNETIC, (0.0, 0.0, 1.0))
    basis = build_tangent_basis(m)
    zero = zero_field(ws.mesh, Support.OMEGA_MAGNETIC)
    system = assemble_llg_system(ws, m, basis, zero, zero, zero, PARAMS, 0.02)
    assert np.abs(system.rhs).max() <= 1e-14
    v = solve_v(system, SOLVER)
    assert np.abs(v.values).max() <= 1e-12


def test_symmetric_part_is_mass_plus_stiffness(assembled):
    ws, m, basis, system = assembled
    k, p = 0.02, basis.prolongation()
    sym = (system.matrix + system.matrix.T) / 2
    ref = (p.T @ (PARAMS.alpha * ws.mass_omega3
                  + PARAMS.C_exch * PARAMS.theta * k * ws.stiff_omega3) @ p)
    assert abs(sym - ref).max() <= 1e-12 * abs(ref).max()


def test_skew_part_annihilated_in_quadratic_form(assembled, rng):
    _, _, _, system = assembled
    skew = system.matrix - system.matrix.T
    for _ in range(20):
        x = rng.normal(size=system.matrix.shape[0])
        assert abs(x @ (skew @ x)) <= 1e-12 * abs(x @ (system.matrix @ x))


def test_positive_definite_with_mass_floor(assembled, rng):
    ws, _, basis, system = assembled
    p = basis.prolongation()
    mass_tan = (p.T @ ws.mass_omega3 @ p).tocsr()
    for _ in range(100):
        x = rng.normal(size=system.matrix.shape[0])
        quad = x @ (system.matrix @ x)
        floor = PARAMS.alpha * (x @ (mass_tan @ x))
        assert quad > 0
        assert quad >= floor * (1 - 1e-10)


def test_rhs_linearity_in_data(default_ws_m, rng):
    # the system is linear in (f, s) for fixed m: scaled data give
    # lam * v + (1 - lam) * v_zero (the exchange residual of m is affine)
    ws, m = default_ws_m
    basis = build_tangent_basis(m)
    f = NodalField3(rng.normal(size=(ws.n_omega, 3)), Support.OMEGA_MAGNETIC)
    s = NodalField3(rng.normal(size=(ws.n_omega, 3)), Support.OMEGA_MAGNETIC)
    pi = zero_field(ws.mesh, Support.OMEGA_MAGNETIC)
    zero = zero_field(ws.mesh, Support.OMEGA_MAGNETIC)
    lam = 3.7
    v0 = solve_v(assemble_llg_system(ws, m, basis, zero, pi, zero, PARAMS, 0.02),
                 SOLVER)
    v1 = solve_v(assemble_llg_system(ws, m, basis, f, pi, s, PARAMS, 0.02), SOLVER)
    f2 = NodalField3(lam * f.values, Support.OMEGA_MAGNETIC)
    s2 = NodalField3(lam * s.values, Support.OMEGA_MAGNETIC)
    v2 = solve_v(assemble_llg_system(ws, m, basis, f2, pi, s2, PARAMS, 0.02), SOLVER)
    assert np.allclose(v2.values, lam * v1.values + (1 - lam) * v0.values,
                       atol=1e-8 * max(1.0, lam * np.abs(v1.values).max()))

    # with constant m the exchange residual vanishes and v scales exactly
    mc = constant_field(ws.mesh, Support.OMEGA_MAGNETIC, (0.0, 0.0, 1.0))
    bc = build_tangent_basis(mc)
    w1 = solve_v(assemble_llg_system(ws, mc, bc, f, pi, s, PARAMS, 0.02), SOLVER)
    w2 = solve_v(assemble_llg_system(ws, mc, bc, f2, pi, s2, PARAMS, 0.02), SOLVER)
    assert np.allclose(w2.values, lam * w1.values,
                       atol=1e-8 * lam * max(1.0, np.abs(w1.values).max()))


def test_invalid_step_parameters(default_ws_m):
    ws, m = default_ws_m
    basis = build_tangent_basis(m)
    zero = zero_field(ws.mesh, Support.OMEGA_MAGNETIC)
    with pytest.raises(ConfigurationError):
        assemble_llg_system(ws, m, basis, zero, zero, zero, PARAMS, -0.1)
    with pytest.raises(ConfigurationError):
        MaterialParams(alpha=0.5, c=1.0, beta=0.5, beta_prime=0.5, theta=0.5,
                       C_exch=1.0)


# -- solve and update --------------------------------------------------------

def test_zero_rhs_returns_zero(assembled):
    ws, m, basis, system = assembled
    import dataclasses

    zero_sys = dataclasses.replace(system, rhs=np.zeros_like(system.rhs))
    v = solve_v(zero_sys, SOLVER)
    assert np.all(v.values == 0.0)


def test_single_tet_dense_oracle():
    coords = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    mesh = from_arrays(coords, [[0, 1, 2, 3]], [Region.MAGNETIC])
    from sdllg.fem import FemWorkspace

    ws = FemWorkspace(mesh)
    rng = np.random.default_rng(11)
    m = unit_field(rng, 4)
    basis = build_tangent_basis(m)
    f = NodalField3(rng.normal(size=(4, 3)), Support.OMEGA_MAGNETIC)
    pi = zero_field(mesh, Support.OMEGA_MAGNETIC)
    s = zero_field(mesh, Support.OMEGA_MAGNETIC)
    params = MaterialParams(alpha=1.0, c=1.0, beta=0.5, beta_prime=0.5, theta=1.0,
                            C_exch=1.0)
    system = assemble_llg_system(ws, m, basis, f, pi, s, params, 1e-3)
    v = solve_v(system, SOLVER)
    dense = np.linalg.solve(system.matrix.toarray(), system.rhs)
    v_dense = (basis.prolongation() @ dense).reshape(-1, 3)
    assert np.abs(v.values - v_dense).max() <= 1e-9


def test_solution_nodewise_tangent(default_ws_m, rng):
    ws, m = default_ws_m
    basis = build_tangent_basis(m)
    f = NodalField3(rng.normal(size=(ws.n_omega, 3)), Support.OMEGA_MAGNETIC)
    zero = zero_field(ws.mesh, Support.OMEGA_MAGNETIC)
    system = assemble_llg_system(ws, m, basis, f, zero, zero, PARAMS, 0.02)
    v = solve_v(system, SOLVER)
    dots = np.einsum("zx,zx->z", v.values, m.values)
    assert np.abs(dots).max() <= 1e-13 * np.abs(v.values).max()


def test_update_pythagoras(default_ws_m, rng):
    ws, m = default_ws_m
    basis = build_tangent_basis(m)
    x = rng.normal(size=2 * ws.n_omega)
    v = NodalField3((basis.prolongation() @ x).reshape(-1, 3),
                    Support.OMEGA_MAGNETIC)
    k = 0.1
    m_new = update_m(m, v, k)
    lhs = np.einsum("zx,zx->z", m_new.values, m_new.values)
    rhs = (np.einsum("zx,zx->z", m.values, m.values)
           + k**2 * np.einsum("zx,zx->z", v.values, v.values))
    assert np.abs(lhs - rhs).max() <= 1e-13


def test_update_keeps_m_for_zero_v(default_ws_m):
    ws, m = default_ws_m
    v = zero_field(ws.mesh, Support.OMEGA_MAGNETIC)
    m_new = update_m(m, v, 0.5)
    assert np.array_equal(m_new.values, m.values)


def test_modulus_recursion_over_steps(default_ws_m, rng):
    # |m^(i+1)|^2 = 1 + k^2 sum |v^l|^2 without any renormalization
    ws, m = default_ws_m
    k = 0.05
    running = np.zeros(ws.n_omega)
    current = m
    for _ in range(20):
        basis = build_tangent_basis(current)
        x = rng.normal(size=2 * ws.n_omega)
        v = NodalField3((basis.prolongation() @ x).reshape(-1, 3),
                        Support.OMEGA_MAGNETIC)
        current = update_m(current, v, k)
        running += np.einsum("zx,zx->z", v.values, v.values)
        mod = np.einsum("zx,zx->z", current.values, current.values)
        assert np.abs(mod - 1.0 - k**2 * running).max() <= 1e-12
