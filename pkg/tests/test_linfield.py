import math

import numpy as np
import pytest
from scipy.integrate import quad

from tachyon_gr import linfield as lf

ENVELOPES = [
    lf.SourceEnvelope.top_hat(1.0, 1.0, 2),
    lf.SourceEnvelope.top_hat(2.0, 0.3, 3),
    lf.SourceEnvelope.gaussian(1.0, 1.0, 2),
    lf.SourceEnvelope.gaussian(0.5, 2.0, 3),
    lf.SourceEnvelope.poly_cutoff(1.0, 3, 1.0, 2),
    lf.SourceEnvelope.poly_cutoff(1.5, 1, 1.0, 3),
]
IDS = [f"{e.shape}-n{e.n}" for e in ENVELOPES]


def radial(fn, env, lo=0.0):
    pts = [lo] + [p for p in env.breakpoints if p > lo] + [math.inf]
    return sum(quad(fn, a, b, epsabs=0, epsrel=1e-12, limit=400)[0] for a, b in zip(pts[:-1], pts[1:]))


# -- envelopes ------------------------------------------------------------

@pytest.mark.parametrize("env", ENVELOPES, ids=IDS)
def test_envelope_moments_against_quadrature(env):
    for m in (1, 2, 3, 4):
        for r in (0.3, 0.9, 1.7):
            pts = [p for p in env.breakpoints if p < r] or None
            ref = quad(lambda s: s ** m * env(s), 0, r, epsrel=1e-13, points=pts)[0]
            assert env.moment(m, r) == pytest.approx(ref, rel=1e-10, abs=1e-15)
    for r in (0.2, 0.8, 3.0):
        assert env.tail_inverse(r) == pytest.approx(radial(lambda s: env(s) / s, env, r), rel=1e-9, abs=1e-300)


def test_envelope_validation():
    with pytest.raises(ValueError):
        lf.SourceEnvelope("bump")
    with pytest.raises(ValueError):
        lf.SourceEnvelope.top_hat(1.0, -1.0)
    with pytest.raises(ValueError):
        lf.SourceEnvelope.poly_cutoff(1.0, 0)
    with pytest.raises(ValueError):
        lf.SourceEnvelope.gaussian(0.0)


# -- build_stress -----------------------------------------------------------

def test_top_hat_a_integral_vanishes():
    stress = lf.build_stress(lf.SourceEnvelope.top_hat(1.0, 1.0, 2))
    total = quad(lambda r: r * stress.a(r), 0, 1, epsrel=1e-13)[0] + quad(lambda r: r * stress.a(r), 1, np.inf)[0]
    assert abs(total) < 1e-9


def test_top_hat_jump_carried_by_b():
    stress = lf.build_stress(lf.SourceEnvelope.top_hat(1.0, 1.0, 2))
    lo, hi = 1 - 1e-12, 1 + 1e-12
    assert stress.potential_part(lo) == pytest.approx(stress.potential_part(hi), abs=1e-10)
    assert stress.a(lo) - stress.a(hi) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("env", [e for e in ENVELOPES if e.shape != "top_hat"], ids=lambda e: f"{e.shape}-n{e.n}")
def test_conservation_ode(env):
    stress = lf.build_stress(env)
    n = env.n
    for r in (0.2, 0.7, 1.1):
        h = 1e-5 * r
        da = (stress.a(r + h) - stress.a(r - h)) / (2 * h)
        rb = lambda x: x ** n * env(x)
        drb = (rb(r + h) - rb(r - h)) / (2 * h)
        assert r ** n * da == pytest.approx((n - 1) * drb, rel=1e-6, abs=1e-9)


def test_zero_source_gives_zero_fields():
    prof = lf.solve(lf.SourceEnvelope.top_hat(1.0, 0.0, 2), flow_speed=2.0)
    assert not np.any(prof.values)
    stress = lf.build_stress(lf.SourceEnvelope.top_hat(1.0, 0.0, 2))
    assert not np.any(stress.a_of_r)


def test_gaussian_potential_part_monotone():
    env = lf.SourceEnvelope.gaussian(1.0, 1.0, 3)
    stress = lf.build_stress(env)
    r = np.linspace(1e-3, 10, 1000)
    w = stress.a(r) - 2 * env(r)
    assert np.all(np.diff(w) >= 0)
    assert np.all(w <= 0)


def test_axial_pressure_needs_cylinder():
    env = lf.SourceEnvelope.top_hat(1.0, 1.0, 3)
    with pytest.raises(ValueError):
        lf.build_stress(env, t33=env)


# -- solve_fg ---------------------------------------------------------------

def test_top_hat_exterior_g():
    b0, R = 0.7, 1.3
    prof = lf.solve(lf.SourceEnvelope.top_hat(R, b0, 2))
    mask = prof.r > R
    assert np.allclose(prof.g[mask], -math.pi * b0 * R ** 4 / prof.r[mask] ** 2, rtol=1e-12)


def test_top_hat_axis_value():
    b0, R = 0.7, 1.3
    f0 = lf.f_zero_identity(lf.SourceEnvelope.top_hat(R, b0, 2))["f0"]
    assert f0 == pytest.approx(4 * math.pi * b0 * R * R, rel=1e-10)


@pytest.mark.parametrize("env", ENVELOPES, ids=IDS)
def test_asymptotic_coefficient(env):
    n = env.n
    prof = lf.solve(env)
    expected = -16 * math.pi / (n + 2) * radial(lambda s: s ** (n + 1) * env(s), env)
    assert prof.r[-1] == pytest.approx(1e3 * env.scale)
    assert prof.asymptotic_coeff == pytest.approx(expected, rel=1e-3)


@pytest.mark.parametrize("env", ENVELOPES, ids=IDS)
def test_field_equations_satisfied(env):
    r = np.geomspace(0.05, 20, 40) * env.scale
    r = r[np.min(np.abs(r[:, None] - np.array(env.breakpoints or [-1.0])[None, :]), axis=1) > 1e-2 * r]
    res_f, res_g = lf.field_equation_residuals(env, r)
    assert np.max(np.abs(res_f)) < 1e-5
    assert np.max(np.abs(res_g)) < 1e-5


@pytest.mark.parametrize("env", ENVELOPES, ids=IDS)
def test_gauge_and_tail(env):
    prof = lf.solve(env)
    assert lf.gauge_residual(prof) < 1e-8
    assert lf.tail_exponent(prof) == pytest.approx(-env.n, rel=1e-2)


@pytest.mark.parametrize("env", ENVELOPES, ids=IDS)
def test_f_zero_identity(env):
    out = lf.f_zero_identity(env)
    assert out["f0"] == pytest.approx(out["from_b"], rel=1e-6)
    assert out["from_g"] == pytest.approx(out["from_b"], rel=1e-6)


def test_f_zero_identity_breaks_under_prefactor_mutation():
    env = lf.SourceEnvelope.gaussian(1.0, 1.0, 2)
    with lf._perturbed_g_prefactor(1.01):
        out = lf.f_zero_identity(env)
    assert abs(out["from_g"] / out["from_b"] - 1) > 1e-3
    assert lf.g_prefactor(2) == -4 * math.pi


def test_G_scales_fields_linearly():
    env = lf.SourceEnvelope.gaussian(1.0, 1.0, 3)
    p1 = lf.solve(env, G=1.0, flow_speed=2.0)
    p2 = lf.solve(env, G=2.5, flow_speed=2.0)
    assert np.allclose(p2.values, 2.5 * p1.values, rtol=1e-14, atol=1e-280)


# -- Newtonian potentials -----------------------------------------------------

def test_sphere_exterior_potential():
    R, rho0 = 1.0, 0.4
    env = lf.SourceEnvelope.top_hat(R, rho0, 3)
    V0, V3 = lf.newtonian_potentials(lf.build_stress(env, t00=env))
    M = 4 * math.pi * rho0 * R ** 3 / 3
    r = V0.r[V0.r > R]
    assert np.allclose(V0.values[V0.r > R], -M / r, rtol=1e-9)
    assert not np.any(V3.values)


def test_line_exterior_force():
    R, rho0 = 1.0, 0.4
    env = lf.SourceEnvelope.top_hat(R, rho0, 2)
    V0, _ = lf.newtonian_potentials(lf.build_stress(env, t00=env))
    lam = math.pi * R * R * rho0
    r = np.array([1.5, 3.0, 40.0])
    assert np.allclose(V0.derivative(r), 2 * lam / r, rtol=1e-8)


def test_zero_axial_pressure_lensing_is_newtonian():
    env = lf.SourceEnvelope.gaussian(1.0, 1.0, 2)
    stress = lf.build_stress(env, flow_speed=3.0)
    V0, V3 = lf.newtonian_potentials(stress)
    assert not np.any(V3.values)
    assert np.array_equal(lf.lensing_potential(V0, V3).values, V0.values)


def test_potentials_need_energy_density():
    with pytest.raises(ValueError):
        lf.newtonian_potentials(lf.build_stress(lf.SourceEnvelope.gaussian(1.0)))


# -- virial moments -----------------------------------------------------------

def test_top_hat_sphere_moments_vanish():
    mom = lf.virial_moments(lf.build_stress(lf.SourceEnvelope.top_hat(1.0, 1.0, 3)))
    assert np.max(np.abs(mom["zeroth"])) < 1e-9 * mom["scale"]
    assert np.max(np.abs(mom["first"])) < 1e-9 * mom["scale"]


@pytest.mark.parametrize("env", ENVELOPES, ids=IDS)
def test_first_moments_vanish(env):
    mom = lf.virial_moments(lf.build_stress(env))
    assert np.max(np.abs(mom["first"])) < 1e-9 * mom["scale"]


@pytest.mark.parametrize("n", [2, 3])
def test_broken_source_has_moments(n):
    mom = lf.virial_moments(lf.build_stress(lf.SourceEnvelope.top_hat(1.0, 1.0, n)), kinetic_only=True)
    assert np.max(np.abs(mom["zeroth"])) > 1e-2 * mom["scale"]


def test_displacement_identity():
    x, dx = np.array([0.3, -1.2, 0.5]), np.array([0.1, 0.4, -0.7])
    lhs, rhs = lf.metric_displacement_identity(3, x, dx)
    assert lhs == pytest.approx(rhs, rel=1e-14)


# -- line sources --------------------------------------------------------------

def test_weak_line_force_example():
    assert lf.line_source_force(1.0, 2.0, regime="weak") == -1.0


def test_force_grows_with_tachyon_speed():
    vs = np.array([1.5, 2, 5, 10, 100, 1e3])
    F = np.array([abs(lf.line_source_force(lf.line_pressure(1.0, v), 1.0, regime="weak")) for v in vs])
    assert np.all(np.diff(F) > 0)
    assert F[-1] / F[-2] == pytest.approx(10.0, rel=1e-3)


def test_static_tachyon_line_is_mass_line():
    assert lf.line_source_force(2.0, 3.0, "tachyon_line", v=0.0) == lf.line_source_force(2.0, 3.0, "mass_line")


def test_line_force_rejects_axis():
    with pytest.raises(ValueError):
        lf.line_source_force(1.0, 0.0)


# -- export ----------------------------------------------------------------

def test_profile_csv_round_trip(tmp_path):
    prof = lf.solve(lf.SourceEnvelope.poly_cutoff(1.0, 2, 0.5, 2), flow_speed=2.0, grid=np.geomspace(1e-2, 1e2, 300))
    path = tmp_path / "field.csv"
    prof.to_csv(path)
    back = lf.FieldProfile.from_csv(path)
    assert np.array_equal(back.r, prof.r)
    assert np.array_equal(back.values, prof.values)
    assert np.array_equal(back.derivatives, prof.derivatives)
    assert back.asymptotic_coeff == prof.asymptotic_coeff
    assert back.n == 2 and back.meta["envelope"] == prof.meta["envelope"]
