import numpy as np
import pytest

from sdllg.errors import ConfigurationError, DomainError
from sdllg.fem import NodalField3, Support, TET_DEGREE2
from sdllg.fields import (SourceTarget, apply_pi, constant_source, pi_uniaxial,
                          pi_zero, ramp_source, sample_source, verify_pi_bound)


def unit_probe(rng, n):
    d = rng.normal(size=(n, 3))
    return NodalField3(d / np.linalg.norm(d, axis=1)[:, None],
                       Support.OMEGA_MAGNETIC)


# -- anisotropy operator -----------------------------------------------------

def test_uniaxial_along_axis():
    op = pi_uniaxial((0.0, 0.0, 1.0), 0.5)
    m = NodalField3(np.array([[0.0, 0.0, 1.0]]), Support.OMEGA_MAGNETIC)
    out = apply_pi(op, m)
    assert np.allclose(out.values[0], [0.0, 0.0, 1.0], atol=1e-15)


def test_uniaxial_perpendicular_is_zero():
    op = pi_uniaxial((0.0, 0.0, 1.0), 0.5)
    m = NodalField3(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
                    Support.OMEGA_MAGNETIC)
    assert np.all(apply_pi(op, m).values == 0.0)


def test_zero_operator(rng):
    out = apply_pi(pi_zero(), unit_probe(rng, 20))
    assert np.all(out.values == 0.0)


def test_output_parallel_to_m(rng):
    op = pi_uniaxial((0.0, 1.0, 0.0), 0.7)
    m = unit_probe(rng, 50)
    out = apply_pi(op, m)
    cross = np.cross(out.values, m.values)
    assert np.abs(cross).max() <= 1e-14


def test_triple_product_identity(rng):
    # (pi(m), m x phi) = (pi(m) x m, phi) pointwise, hence under any
    # fixed quadrature
    op = pi_uniaxial((0.0, 0.0, 1.0), 0.8)
    rule = TET_DEGREE2
    for _ in range(20):
        m = rng.normal(size=3)
        phi = rng.normal(size=3)
        pi_val = 2 * 0.8 * m[2] * m
        lhs = np.dot(pi_val, np.cross(m, phi))
        rhs = np.dot(np.cross(pi_val, m), phi)
        assert lhs == pytest.approx(rhs, abs=1e-13)
    assert rule.weights.sum() == pytest.approx(1.0)


def test_bound_on_unit_fields(trilayer_ws, rng):
    op = pi_uniaxial((0.0, 0.0, 1.0), 0.5)
    probes = [unit_probe(rng, trilayer_ws.n_omega) for _ in range(100)]
    ratio = verify_pi_bound(op, trilayer_ws, probes)
    assert ratio <= 2 * 0.5 + 1e-12
    assert ratio > 0


def test_bound_zero_operator(trilayer_ws, rng):
    probes = [unit_probe(rng, trilayer_ws.n_omega)]
    assert verify_pi_bound(pi_zero(), trilayer_ws, probes) == 0.0


def test_bound_scale_dependence(trilayer_ws, rng):
    # the operator is quadratic: doubling the probe modulus doubles the ratio
    op = pi_uniaxial((0.0, 0.0, 1.0), 0.5)
    probe = unit_probe(rng, trilayer_ws.n_omega)
    double = NodalField3(2.0 * probe.values, Support.OMEGA_MAGNETIC)
    r1 = verify_pi_bound(op, trilayer_ws, [probe])
    r2 = verify_pi_bound(op, trilayer_ws, [double])
    assert r2 == pytest.approx(2.0 * r1, rel=1e-12)


def test_uniaxial_validation():
    with pytest.raises(ConfigurationError):
        pi_uniaxial((0.0, 0.0, 1.0), 0.0)


# -- sources -----------------------------------------------------------------

def test_constant_source(trilayer_mesh):
    src = constant_source(SourceTarget.CURRENT_J, (0.0, 0.0, 1.0), t_final=2.0)
    f = sample_source(src, 1.3, trilayer_mesh)
    assert f.support is Support.OMEGA_ALL
    assert np.all(f.values == [0.0, 0.0, 1.0])


def test_ramp_interpolates(trilayer_mesh):
    src = ramp_source(SourceTarget.APPLIED_F, (0, 0, 0), (1, 0, 0), 1.0,
                      t_final=3.0)
    half = sample_source(src, 0.5, trilayer_mesh)
    assert np.allclose(half.values, [0.5, 0.0, 0.0], atol=1e-15)
    after = sample_source(src, 2.0, trilayer_mesh)
    assert np.allclose(after.values, [1.0, 0.0, 0.0], atol=1e-15)


def test_source_at_zero_exact(trilayer_mesh):
    src = ramp_source(SourceTarget.APPLIED_F, (0.25, -1.0, 3.0), (1, 0, 0), 0.7)
    assert np.all(sample_source(src, 0.0, trilayer_mesh).values
                  == [0.25, -1.0, 3.0])


def test_ramp_lipschitz():
    src = ramp_source(SourceTarget.APPLIED_F, (0, 0, 0), (2, 0, 0), 1.0,
                      t_final=4.0)
    ts = np.linspace(0.0, 4.0, 201)
    vals = np.array([src.vector_at(t) for t in ts])
    slopes = np.abs(np.diff(vals[:, 0])) / np.diff(ts)
    assert slopes.max() <= 2.0 + 1e-12


def test_sample_outside_domain_rejected(trilayer_mesh):
    src = constant_source(SourceTarget.APPLIED_F, (1, 0, 0), t_final=1.0)
    with pytest.raises(DomainError):
        sample_source(src, -0.1, trilayer_mesh)
    with pytest.raises(DomainError):
        sample_source(src, 1.5, trilayer_mesh)


def test_applied_field_lives_on_magnetic_nodes(trilayer_mesh):
    src = constant_source(SourceTarget.APPLIED_F, (1, 0, 0))
    f = sample_source(src, 0.0, trilayer_mesh)
    assert f.support is Support.OMEGA_MAGNETIC
    assert f.n == len(trilayer_mesh.omega_nodes)


def test_ramp_validation():
    with pytest.raises(ConfigurationError):
        ramp_source(SourceTarget.APPLIED_F, (0, 0, 0), (1, 0, 0), 0.0)
