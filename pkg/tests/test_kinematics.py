import io
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import expit

from tachyon_gr import kinematics as kin


# -- exchange times -----------------------------------------------------------

def test_receding_ship_reverses():
    res = kin.exchange_times(kin.ExchangeScenario(1.0, 0.6, 2.0))
    assert res.dt_earth == pytest.approx(1 / 1.4, rel=1e-15)
    assert res.dt_ship == pytest.approx(1.25 * -0.2 / 1.4, rel=1e-14)
    assert res.reversed


def test_slow_ship_keeps_order():
    res = kin.exchange_times(kin.ExchangeScenario(1.0, 0.4, 2.0))
    assert not res.reversed
    assert res.dt_ship > 0


def test_stationary_ship_agrees():
    res = kin.exchange_times(kin.ExchangeScenario(3.0, 1e-12, 5.0))
    assert res.dt_ship == pytest.approx(res.dt_earth, rel=1e-10)


def test_scenario_validation():
    with pytest.raises(ValueError):
        kin.ExchangeScenario(1.0, 1.0, 2.0)
    with pytest.raises(ValueError):
        kin.ExchangeScenario(1.0, 0.5, 0.9)


# -- packets --------------------------------------------------------------

def test_packet_rest_frame():
    p = kin.packet_size_transform(2.0, 1.0, 0.0)
    assert p.dx_rest == p.dx_boosted == 2.0
    assert not p.diverges


def test_packet_critical_speed():
    p = kin.packet_size_transform(2.0, 1.0, 0.5)
    assert p.diverges
    assert p.dx_boosted == math.inf


def test_packet_quarter_speed():
    p = kin.packet_size_transform(2.0, 1.0, 0.25)
    lg = 1 / math.sqrt(1 - 1 / 16)
    assert p.dx_boosted == pytest.approx(2 / (lg * 0.5), rel=1e-15)
    assert p.dx_boosted == pytest.approx(3.873, abs=5e-4)


# -- phase space and spectra ------------------------------------------------------

def test_on_shell_density():
    assert kin.on_shell_density(0.0, 1.0) == 0.0
    assert kin.on_shell_density(2.0, 0.0) == pytest.approx(4 / (2 * math.pi ** 2), rel=1e-15)
    assert kin.on_shell_density(3.0, 4.0) == pytest.approx(15 / (2 * math.pi ** 2), rel=1e-15)


def test_spectra_at_triple_point():
    E0, m = 10.0, 1.5
    Ee = E0 - m
    assert kin.beta_spectrum(kin.SpectrumModel("massless", E0), Ee) == pytest.approx(m * m, rel=1e-14)
    assert kin.beta_spectrum(kin.SpectrumModel("bradyonic", E0, m), Ee) == 0.0
    assert kin.beta_spectrum(kin.SpectrumModel("tachyonic", E0, m), Ee) == pytest.approx(math.sqrt(2) * m * m,
                                                                                          rel=1e-14)


def test_spectra_vanish_at_endpoint():
    E0 = 5.0
    for model in (kin.SpectrumModel("massless", E0), kin.SpectrumModel("tachyonic", E0, 1.0)):
        assert kin.beta_spectrum(model, E0) == 0.0
    assert kin.beta_spectrum(kin.SpectrumModel("bradyonic", E0, 1.0), E0 - 1.0) == 0.0


def test_tachyonic_endpoint_slope():
    m = 0.7
    model = kin.SpectrumModel("tachyonic", 5.0, m)
    E = np.linspace(5.0 - 1e-4, 5.0, 41)
    slope = np.polyfit(E, kin.beta_spectrum(model, E), 1)[0]
    assert slope == pytest.approx(-m, rel=1e-3)


@pytest.mark.parametrize("variant,label", [("massless", "zero"), ("bradyonic", "infinite"), ("tachyonic", "finite")])
def test_endpoint_slope_classes(variant, label):
    model = kin.SpectrumModel(variant, 5.0, 0.0 if variant == "massless" else 1.0)
    assert kin.endpoint_slope(model) == label
    assert kin.numeric_endpoint_slope(model)[1] == label


def test_spectrum_out_of_support():
    with pytest.raises(ValueError):
        kin.beta_spectrum(kin.SpectrumModel("massless", 5.0), 5.5)
    with pytest.raises(ValueError):
        kin.beta_spectrum(kin.SpectrumModel("bradyonic", 5.0, 1.0), 4.5)


def test_spectrum_table_columns():
    buf = io.StringIO()
    kin.write_table(kin.SPECTRUM_HEADER, kin.spectrum_table(10.0, 1.0, 11), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "Ee,massless,bradyonic,tachyonic"
    assert len(lines) == 12


# -- oscillation phases -----------------------------------------------------------

def test_phase_example():
    ph = kin.oscillation_phase(1.0, 100.0, 100.0)
    assert (ph.bradyonic, ph.tachyonic, ph.fractional_difference) == (-0.5, 0.5, 0.0)


def test_massless_phases():
    ph = kin.oscillation_phase(0.0, 10.0, 100.0)
    assert ph.bradyonic == 0 and ph.tachyonic == 0


def test_phase_expansion_guard():
    with pytest.raises(ValueError):
        kin.oscillation_phase(4.0, 2.0, 1.0)


# -- tachyon gas --------------------------------------------------------------

def test_closed_form_normalisation_and_endpoint():
    assert kin.closed_form_temperature(1.0, 0.3, 1.0) == pytest.approx(0.3, rel=1e-15)
    assert kin.closed_form_temperature(math.sqrt(2), 0.3, 1.0) == pytest.approx(0.0, abs=1e-8)
    assert np.isnan(kin.closed_form_temperature(1.5, 0.3, 1.0))


def test_closed_form_domain_end_reported():
    curve = kin.gas_evolution(kin.GasState(0.01, 1.0), (1.0, 1.6), "low_T_closed_form", points=7)
    assert curve.status == "domain_end"
    assert curve.a_end == pytest.approx(math.sqrt(2), rel=1e-15)


def test_low_T_exponents():
    p_rho, p_P = kin.gas_exponents(1e-2, 1.0)
    assert p_rho == pytest.approx(3.0, rel=0.05)
    assert p_P == pytest.approx(1.0, rel=0.05)


def test_gas_moments_against_direct_quadrature():
    # oracle: integrate over momentum p >= m with E = sqrt(p^2 - m^2)
    T, m = 0.4, 1.0
    f = lambda E: expit(-E / T)
    E = lambda p: math.sqrt(p * p - m * m)
    rho = quad(lambda p: p * p * E(p) * f(E(p)), m, np.inf, epsrel=1e-12)[0] / (2 * math.pi ** 2)
    P = quad(lambda p: p ** 4 / (3 * max(E(p), 1e-300)) * f(E(p)), m, np.inf, epsrel=1e-12, limit=200)[0] / (2 * math.pi ** 2)
    r, Pm, _ = kin.gas_moments(T, m)
    assert r == pytest.approx(rho, rel=1e-8)
    assert Pm == pytest.approx(P, rel=1e-6)


def test_low_T_ratio():
    T, m = 1e-3, 1.0
    rho, P, _ = kin.gas_moments(T, m)
    # rho -> c_rho T^3 m, P -> c_P T m^3 with c_P / c_rho = T*^2 / m^2
    assert (P / T) / (rho / T ** 3) == pytest.approx(kin.fermi_low_T_ratio(), rel=1e-3)


def test_bose_rejected():
    with pytest.raises(ValueError, match="Bose"):
        kin.gas_moments(0.1, 1.0, "bose")


def test_full_ode_conserves_energy():
    curve = kin.gas_evolution(kin.GasState(0.5, 1.0), (1.0, 1.5), points=11)
    assert np.max(np.abs(curve.conservation_residual)) < 1e-8


def test_cold_gas_stops_at_finite_expansion():
    curve = kin.gas_evolution(kin.GasState(0.01, 1.0), (1.0, 1.3), points=31)
    assert curve.status == "domain_end"
    assert 1.0 < curve.a_end < 1.001


def test_closed_form_matches_ode_at_critical_temperature():
    # the leading-order law (T^2 + T*^2) a^2 = const reduces to the closed form when T1 = T*
    m = 1.0
    T1 = math.sqrt(kin.fermi_low_T_ratio()) * m
    a = np.linspace(1.0, 1.02, 5)
    curve = kin.gas_evolution(kin.GasState(1e-3, 1.0, m=m), (1.0, 1.02), points=5)
    Ts = math.sqrt(kin.fermi_low_T_ratio()) * m
    law = np.sqrt(np.maximum((1e-6 + Ts ** 2) / a ** 2 - Ts ** 2, 0))
    n = len(curve.T)
    assert np.allclose(curve.T, law[:n], atol=2e-4)
    assert T1 == pytest.approx(0.358, abs=1e-3)


def test_relativistic_limit():
    curve = kin.gas_evolution(kin.GasState(1e4, 1.0), (1.0, 10.0), points=21)
    slope = np.polyfit(np.log(curve.a), np.log(curve.rho), 1)[0]
    assert slope == pytest.approx(-4, abs=0.05)
    assert np.allclose(curve.rho, 3 * curve.P, rtol=1e-3)


def test_cosmo_table_columns():
    tab = kin.cosmo_table(kin.GasState(0.01, 1.0), (1.0, 1.3), 4)
    assert tab.shape == (4, len(kin.COSMO_HEADER))
    assert tab[-1, 1] == 0.0
