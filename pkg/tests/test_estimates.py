"""Closed-form estimates: trap frequencies, spin state, equilibrium angle,
nutation/precession, torque inference, sensitivity and recoil rates."""

import math
from dataclasses import replace

import numpy as np
import pytest

import levisim as lv
from levisim import estimates as est
from levisim.constants import HBAR, K_BOLTZMANN


# ---------------------------------------------------------------------------
# translations
# ---------------------------------------------------------------------------

def test_translation_symmetric_beam(test_particle):
    beam = lv.BeamParameters(power=0.5, wavelength=1550e-9, waist=1e-6,
                             asymmetry=(1.0, 1.0), rayleigh_range=2e-6)
    wx, wy, wz = est.translation_frequencies(test_particle, beam)
    assert wx == wy
    assert wz > 0.0


def test_translation_power_scaling(test_particle, test_beam):
    base = est.translation_frequencies(test_particle, test_beam)
    quad = est.translation_frequencies(
        test_particle, replace(test_beam, power=4 * test_beam.power))
    for b, q in zip(base, quad):
        assert q == pytest.approx(2 * b, rel=1e-12)


def test_translation_asymmetry_ratio(test_particle, test_beam):
    wx, wy, _ = est.translation_frequencies(test_particle, test_beam)
    a1, a2 = test_beam.asymmetry
    assert wx / wy == pytest.approx(math.sqrt(a1 / a2), rel=1e-12)
    assert wx**2 * a2 == pytest.approx(wy**2 * a1, rel=1e-12)


def test_translation_calibrated_targets(calibrated_config):
    wx, wy, wz = est.translation_frequencies(calibrated_config.particle,
                                             calibrated_config.beam)
    two_pi = 2 * math.pi
    assert wx / two_pi == pytest.approx(196e3, rel=0.25)
    assert wy / two_pi == pytest.approx(246e3, rel=0.25)
    assert wz / two_pi == pytest.approx(124e3, rel=0.25)


# ---------------------------------------------------------------------------
# torque average and spin state
# ---------------------------------------------------------------------------

def test_torque_average_polarization_null(test_particle, test_gas):
    linear = lv.BeamParameters(power=1.0, wavelength=1550e-9, waist=1.2e-6,
                               rayleigh_range=2e-6, polarization=(1.0, 0.0))
    n_s = est.scattering_torque_average(test_particle, linear, 1.0)
    assert np.all(n_s == 0.0)


def test_torque_average_symmetric_top_gamma_null(test_beam):
    particle = lv.ParticleProperties.fused_spheres(2, 50e-9, 2200.0,
                                                   (0.8, 0.8, 1.1))
    n_s = est.scattering_torque_average(particle, test_beam, 1.1)
    assert n_s[2] == 0.0
    assert n_s[1] == 0.0


def test_torque_average_matches_phase_average(test_particle, test_beam):
    """Quadrature over the fast angles reproduces the closed form."""
    from levisim.dynamics import scattering_torque

    beta0 = 1.05
    grid = np.linspace(0.0, 2 * math.pi, 96, endpoint=False)
    acc = np.zeros(3)
    for al in grid[::8]:
        for ga in grid:
            state = lv.PhaseState(angles=(al, beta0, ga))
            acc += scattering_torque(state, test_particle, test_beam)
    acc /= (len(grid[::8]) * len(grid))
    closed = est.scattering_torque_average(test_particle, test_beam, beta0)
    assert acc[0] == pytest.approx(closed[0], rel=1e-9)
    assert abs(acc[1]) < 1e-9 * abs(closed[0])
    assert acc[2] == pytest.approx(closed[2], rel=1e-9)


def test_conversion_matrix_average_closed_form(test_particle):
    i1, i2, i3 = test_particle.inertia
    mu = (i1 + i2) / (2 * i1 * i2)
    for beta0 in (0.5, 1.0, 1.4):
        sb, cb = math.sin(beta0), math.cos(beta0)
        expected = np.array([
            [mu / sb**2, 0.0, -mu * cb / sb**2],
            [0.0, mu, 0.0],
            [-mu * cb / sb**2, 0.0, mu * cb**2 / sb**2 + 1.0 / i3],
        ])
        numeric = est.conversion_matrix_average(test_particle, beta0)
        assert np.max(np.abs(numeric - expected)) < 1e-12 * np.max(np.abs(expected))


def test_spin_state_pressure_scaling(test_particle, test_beam, test_gas):
    base = est.spin_state(test_particle, test_beam, test_gas, 1.1)
    halved = est.spin_state(test_particle, test_beam,
                            test_gas.with_pressure(test_gas.pressure / 2), 1.1)
    assert halved["omega_alpha_spin"] == pytest.approx(
        2 * base["omega_alpha_spin"], rel=1e-12)
    assert halved["omega_gamma_spin"] == pytest.approx(
        2 * base["omega_gamma_spin"], rel=1e-12)


def test_spin_state_middle_component_zero(test_particle, test_beam, test_gas):
    state = est.spin_state(test_particle, test_beam, test_gas, 0.9)
    ey = est.conversion_matrix_average(test_particle, 0.9)
    omega = ey @ state["pi_spin"]
    assert abs(omega[1]) < 1e-12 * abs(omega[0])


def test_spin_state_sign_convention(test_particle, test_beam, test_gas):
    state = est.spin_state(test_particle, test_beam, test_gas, 1.1)
    n_s = est.scattering_torque_average(test_particle, test_beam, 1.1)
    expected = -n_s / (2 * test_gas.collision_rate)
    assert np.allclose(state["pi_spin"], expected, rtol=1e-12)


def test_aligned_cone_gamma_rate(test_particle, test_beam, test_gas):
    """On the aligned cone the gamma rate reduces to
    cos(beta0) * pi_alpha * (1/I3 - mu)."""
    beta0 = 1.2
    cone = est.aligned_cone_spin(test_particle, test_beam, test_gas, beta0)
    i1, i2, i3 = test_particle.inertia
    mu = (i1 + i2) / (2 * i1 * i2)
    pi_alpha = cone["pi_spin"][0]
    expected = math.cos(beta0) * pi_alpha * (1.0 / i3 - mu)
    assert cone["omega_gamma_spin"] == pytest.approx(expected, rel=1e-6)


def test_spin_closed_forms_order_of_magnitude(calibrated_config):
    """The fully expanded forms agree with the rate-map route at the
    order-of-magnitude level (their own stated accuracy)."""
    p, b, g = (calibrated_config.particle, calibrated_config.beam,
               calibrated_config.gas)
    beta0 = math.acos(0.27)
    quad = est.spin_state(p, b, g, beta0)
    b3, b4 = est.spin_closed_forms(p, b, g, beta0)
    assert 0.1 < abs(b3 / quad["omega_alpha_spin"]) < 10.0
    cone = est.aligned_cone_spin(p, b, g, beta0)
    assert 0.1 < abs(b4 / cone["omega_gamma_spin"]) < 10.0


# ---------------------------------------------------------------------------
# equilibrium angle
# ---------------------------------------------------------------------------

def test_beta_equilibrium_weak_spin_approaches_alignment(test_particle, test_beam):
    """As the spin momentum vanishes the fixed point moves toward pi/2."""
    betas = []
    for pressure in (1e4, 1e6, 1e8):
        gas = lv.GasEnvironment(pressure, 300.0, 4.6518e-26, 0.2e-9)
        betas.append(est.beta_equilibrium(test_particle, test_beam, gas))
    # stronger damping -> weaker spin -> argument smaller; the printed
    # relation sends sin(beta0) -> 0 with it
    assert betas[0] > betas[1] > betas[2]
    arg_chain = [math.sin(b) for b in betas]
    assert arg_chain[-1] < 0.05


def test_beta_equilibrium_requires_axial_contrast(test_beam, test_gas):
    particle = lv.ParticleProperties.fused_spheres(
        2, 50e-9, 2200.0, (0.9, 0.85, 0.5))  # 2*chi3 < chi1 + chi2
    with pytest.raises(est.EstimateDomainError):
        est.beta_equilibrium(particle, test_beam, test_gas)


def test_beta_equilibrium_domain_error_when_spin_too_fast(calibrated_config):
    with pytest.raises(est.EstimateDomainError):
        est.beta_equilibrium(calibrated_config.particle, calibrated_config.beam,
                             calibrated_config.gas)


def test_beta_equilibrium_self_consistency(test_particle, test_beam):
    gas = lv.GasEnvironment(1e4, 300.0, 4.6518e-26, 0.2e-9)
    beta0 = est.beta_equilibrium(test_particle, test_beam, gas)
    mapped, arg = est._beta_map(test_particle, test_beam, gas, beta0)
    assert mapped == pytest.approx(beta0, abs=1e-8)
    assert 0.0 < arg <= 1.0


def test_torque_balance_flat_for_isotropic(test_beam, test_gas):
    particle = lv.ParticleProperties.fused_spheres(2, 50e-9, 2200.0,
                                                   (0.8, 0.8, 0.8))
    beta0 = est.beta_equilibrium_torque_balance(particle, test_beam, test_gas)
    assert beta0 == pytest.approx(math.pi / 2, abs=1e-9)


# ---------------------------------------------------------------------------
# nutation, precession, torque, sensitivity
# ---------------------------------------------------------------------------

def test_nutation_zero_without_spin(test_particle):
    assert est.nutation_frequency(test_particle, 1.0, 0.0) == 0.0


def test_nutation_closed_form_identity(test_particle, test_beam, test_gas):
    """Two algebraic forms of the same quantity agree to 1e-10."""
    for beta0 in (0.6, 1.0, 1.45):
        spin = est.spin_state(test_particle, test_beam, test_gas, beta0)
        via_spin = est.nutation_frequency(test_particle, beta0,
                                          float(spin["pi_spin"][0]))
        direct = est.nutation_closed_form(test_particle, test_beam, test_gas, beta0)
        assert direct == pytest.approx(via_spin, rel=1e-10)


def test_precession_difference():
    assert est.precession_frequency(5.0, 5.0) == 0.0
    # 2 pi x (3.919, 3.924) MHz differ by 2 pi x 5 kHz
    w_spin = 2 * math.pi * 3.919e6
    w_nut = 2 * math.pi * 3.924e6
    assert abs(est.precession_frequency(w_spin, w_nut)) == pytest.approx(
        2 * math.pi * 5e3, rel=1e-9)


def test_effective_inertia_reduction():
    assert est.effective_inertia(3.0, 3.0) == pytest.approx(6.0, rel=1e-12)
    i1, i2 = 2.7e-33, 8.1e-33
    expected = 2 * i1 * i2 * (i1 + i2) / (i1**2 + i2**2)
    assert est.effective_inertia(i1, i2) == pytest.approx(expected, rel=1e-15)


def test_torque_from_precession_linear():
    assert est.torque_from_precession(1e4, 1.0, 1e-33, 1e-33, 0.0) == 0.0
    single = est.torque_from_precession(1e4, 1.1, 8e-33, 8e-33, 2 * math.pi * 5e3)
    doubled = est.torque_from_precession(2e4, 1.1, 8e-33, 8e-33, 2 * math.pi * 5e3)
    assert doubled == pytest.approx(2 * single, rel=1e-12)


def test_torque_sensitivity_scaling():
    assert est.torque_sensitivity(1e4, 1.2, 1.6e-32, 0.0) == 0.0
    base = est.torque_sensitivity(1e-2, 1.2, 1.6e-32, 1e3)
    millionth = est.torque_sensitivity(1e-8, 1.2, 1.6e-32, 1e3)
    assert millionth == pytest.approx(base * 1e-6, rel=1e-12)


def test_sensitivity_extrapolation_band(calibrated_config):
    """At 1e-7 mbar with the committed resolvable-shift preset the
    sensitivity lands inside the published band."""
    gas = calibrated_config.gas
    gamma_c_low = gas.with_pressure(1e-7 * 100.0).collision_rate
    beta0 = math.acos(0.27)
    i1, i2, _ = calibrated_config.particle.inertia
    value = est.torque_sensitivity(gamma_c_low, beta0,
                                   est.effective_inertia(i1, i2),
                                   est.DELTA_OMEGA_ALPHA_PRESET)
    assert 2.5e-31 < value < 4.7e-31


# ---------------------------------------------------------------------------
# recoil heating
# ---------------------------------------------------------------------------

def test_recoil_rates_formulas(test_particle, test_beam, test_gas):
    rates = est.recoil_heating_rates(test_particle, test_beam, test_gas)
    kt = K_BOLTZMANN * test_gas.temperature
    gc = test_gas.collision_rate
    gs = test_beam.scattering_rate(test_particle.volume)
    k = test_beam.wavenumber
    assert rates.translation_gas == pytest.approx(4 * kt * test_particle.mass * gc,
                                                  rel=1e-12)
    assert rates.translation_photon == pytest.approx(gs * HBAR**2 * k**2, rel=1e-12)
    assert rates.rotation_gas == pytest.approx(
        0.8 * kt * test_particle.mass * test_particle.radius**2 * gc, rel=1e-12)
    assert rates.rotation_photon == pytest.approx(gs * HBAR**2, rel=1e-12)


def test_recoil_dark_beam_infinite_ratio(test_particle, test_beam, test_gas):
    dark = replace(test_beam, power=0.0)
    rates = est.recoil_heating_rates(test_particle, dark, test_gas)
    assert rates.translation_photon == 0.0
    assert math.isinf(rates.translation_ratio)
    assert math.isinf(rates.rotation_ratio)


def test_recoil_ratio_linear_in_pressure(test_particle, test_beam, test_gas):
    one = est.recoil_heating_rates(test_particle, test_beam, test_gas)
    two = est.recoil_heating_rates(test_particle, test_beam,
                                   test_gas.with_pressure(2 * test_gas.pressure))
    assert two.translation_ratio == pytest.approx(2 * one.translation_ratio,
                                                  rel=1e-12)


def test_recoil_crossover_brute_force(test_particle, test_beam, test_gas):
    """Root of gas_rate(p) = photon_rate found by bisection matches."""
    crossover = est.recoil_crossover_pressure(test_particle, test_beam, test_gas)

    def imbalance(pressure):
        rates = est.recoil_heating_rates(test_particle, test_beam,
                                         test_gas.with_pressure(pressure))
        return rates.translation_gas - rates.translation_photon

    lo, hi = 1e-12, 1e9
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if imbalance(mid) > 0:
            hi = mid
        else:
            lo = mid
    assert crossover == pytest.approx(math.sqrt(lo * hi), rel=1e-6)


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

def test_frequency_estimates_fallback_method(calibrated_config):
    bundle = est.frequency_estimates(calibrated_config.particle,
                                     calibrated_config.beam,
                                     calibrated_config.gas)
    assert bundle.beta0_method == "torque-balance"
    lines = bundle.lines_hz()
    assert lines["omega_x"] == pytest.approx(196e3, rel=0.01)
    assert math.isfinite(lines["omega_alpha_spin"])


def test_frequency_estimates_supplied_beta(calibrated_config):
    beta0 = math.acos(0.27)
    p, b, g = (calibrated_config.particle, calibrated_config.beam,
               calibrated_config.gas)
    bundle = est.frequency_estimates(p, b, g, beta0=beta0)
    assert bundle.beta0_method == "supplied"
    assert bundle.beta0 == pytest.approx(beta0)
    # independent route: torque average over friction through the rate map
    n_s = est.scattering_torque_average(p, b, beta0)
    pi_spin = -np.asarray(n_s) / (2 * g.collision_rate)
    omega = est.conversion_matrix_average(p, beta0) @ pi_spin
    assert bundle.omega_alpha_spin == pytest.approx(omega[0], rel=1e-12)
    assert bundle.omega_gamma_spin == pytest.approx(omega[2], rel=1e-12)


def test_analysis_lines_use_cone_gamma(calibrated_config):
    beta0 = math.acos(0.27)
    p, b, g = (calibrated_config.particle, calibrated_config.beam,
               calibrated_config.gas)
    lines = est.analysis_lines(p, b, g, beta0=beta0)
    cone = est.aligned_cone_spin(p, b, g, beta0)
    assert lines["omega_gamma_spin"] == pytest.approx(
        abs(cone["omega_gamma_spin"]) / (2 * math.pi), rel=1e-12)


def test_frequency_bounds_never_raise(test_particle, test_beam, test_gas):
    f_max, f_min = est.frequency_bounds(test_particle, test_beam, test_gas)
    assert f_max > 0.0
    assert f_min >= 0.0
