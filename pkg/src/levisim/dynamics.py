"""Deterministic and stochastic terms of the equations of motion.

The state evolves under four channels:

* conservative drift from the kinetic Hamiltonian and the dipole (gradient)
  potential, with hand-derived analytic partial derivatives;
* radiation-pressure force along +z and a photon-scattering torque that
  pumps angular momentum into the particle for elliptical polarization;
* gas friction -2 Gamma_c (p, pi);
* gas diffusion: isotropic white force noise plus orientation-dependent
  torque noise driven by a 3x3 block of independent Wiener increments.

Everything in this module is a pure function of (state, parameters) and is
the readable reference; `kernels` repeats the same arithmetic in a compiled
inner loop and is tested against this module term by term.

Rotation convention: R(alpha, beta, gamma) = Rz(alpha) Ry(beta) Rz(gamma)
maps body-frame vectors to the lab frame.  The conjugate momenta pi relate
to the body angular momentum L through L = A^{-T} pi where
omega_body = A(phi) d(phi)/dt.
"""

from __future__ import annotations

import math

import numpy as np

from .constants import HBAR, K_BOLTZMANN, SPEED_OF_LIGHT
from .model import (BeamParameters, GasEnvironment, MIN_SIN_BETA, ParticleProperties,
                    PhaseState, rotational_diffusion_inertia)


class ChartSingularityError(ValueError):
    """Raised when |sin(beta)| is too small for the Euler chart to be usable."""


def _check_chart(beta: float) -> None:
    if abs(math.sin(beta)) < MIN_SIN_BETA:
        raise ChartSingularityError(f"|sin(beta)| = {abs(math.sin(beta)):.3e} "
                                    f"is inside the chart guard ({MIN_SIN_BETA:g})")


# ---------------------------------------------------------------------------
# rotation matrix and partials
# ---------------------------------------------------------------------------

def rotation_matrix(angles) -> np.ndarray:
    """Body-to-lab rotation matrix in the z-y'-z'' convention."""
    al, be, ga = angles
    sa, ca = math.sin(al), math.cos(al)
    sb, cb = math.sin(be), math.cos(be)
    sg, cg = math.sin(ga), math.cos(ga)
    return np.array([
        [ca * cb * cg - sa * sg, -ca * cb * sg - sa * cg, ca * sb],
        [sa * cb * cg + ca * sg, -sa * cb * sg + ca * cg, sa * sb],
        [-sb * cg, sb * sg, cb],
    ])


def rotation_matrix_partials(angles):
    """Return R and its three partial derivatives (dR/dalpha, dR/dbeta, dR/dgamma).

    The alpha partial swaps rows (left generator about lab z), the gamma
    partial swaps columns (right generator about body z''), and the beta
    partial mixes row 3 into rows 1-2.
    """
    al, be, ga = angles
    sa, ca = math.sin(al), math.cos(al)
    r = rotation_matrix(angles)
    d_alpha = np.vstack([-r[1], r[0], np.zeros(3)])
    d_beta = np.vstack([ca * r[2], sa * r[2], -(ca * r[0] + sa * r[1])])
    d_gamma = np.column_stack([r[:, 1], -r[:, 0], np.zeros(3)])
    return r, d_alpha, d_beta, d_gamma


# ---------------------------------------------------------------------------
# beam mode
# ---------------------------------------------------------------------------

def mode_intensity(position, beam: BeamParameters) -> float:
    """Normalized intensity |u(r)|^2 of the astigmatic Gaussian mode.

    u = (w0/w(z)) exp(-(a1 x^2 + a2 y^2)/w(z)^2) e^{-ikz} with
    w(z)^2 = w0^2 (1 + z^2/zR^2); the phase drops out of |u|^2.
    Equals 1 only at the focus and 1/2 on axis at z = zR.
    """
    x, y, z = position
    a1, a2 = beam.asymmetry
    w0sq = beam.waist**2
    wsq = w0sq * (1.0 + z * z / beam.rayleigh_range**2)
    return (w0sq / wsq) * math.exp(-2.0 * (a1 * x * x + a2 * y * y) / wsq)


def mode_intensity_gradient(position, beam: BeamParameters):
    """|u|^2 and its Cartesian gradient."""
    x, y, z = position
    a1, a2 = beam.asymmetry
    w0sq = beam.waist**2
    zr2 = beam.rayleigh_range**2
    wsq = w0sq * (1.0 + z * z / zr2)
    u2 = (w0sq / wsq) * math.exp(-2.0 * (a1 * x * x + a2 * y * y) / wsq)
    du_dx = u2 * (-4.0 * a1 * x / wsq)
    du_dy = u2 * (-4.0 * a2 * y / wsq)
    dwsq_dz = 2.0 * w0sq * z / zr2
    du_dz = u2 * dwsq_dz * (2.0 * (a1 * x * x + a2 * y * y) - wsq) / wsq**2
    return u2, np.array([du_dx, du_dy, du_dz])


# ---------------------------------------------------------------------------
# kinetic (free) part
# ---------------------------------------------------------------------------

def body_angular_momentum(angles, angle_momenta) -> np.ndarray:
    """Body-frame angular momentum L = A^{-T} pi."""
    _check_chart(angles[1])
    al, be, ga = angles
    sb, cb = math.sin(be), math.cos(be)
    sg, cg = math.sin(ga), math.cos(ga)
    pa, pb, pg = angle_momenta
    rho = pa - pg * cb
    l1 = (sb * sg * pb - cg * rho) / sb
    l2 = (sg * rho + sb * cg * pb) / sb
    return np.array([l1, l2, pg])


def conversion_matrix(angles, inertia) -> np.ndarray:
    """Matrix Y(phi) with d(phi)/dt = Y pi; symmetric positive definite."""
    _check_chart(angles[1])
    be, ga = angles[1], angles[2]
    sb, cb = math.sin(be), math.cos(be)
    sg, cg = math.sin(ga), math.cos(ga)
    a_inv = np.array([
        [-cg / sb, sg / sb, 0.0],
        [sg, cg, 0.0],
        [cb * cg / sb, -cb * sg / sb, 1.0],
    ])
    return a_inv @ np.diag([1.0 / i for i in inertia]) @ a_inv.T


def angular_velocity(state: PhaseState, particle: ParticleProperties) -> np.ndarray:
    """Euler-angle rates d(phi)/dt = Y(phi) pi."""
    lb = body_angular_momentum(state.angles, state.angle_momenta)
    om = lb / np.asarray(particle.inertia)
    be, ga = state.angles[1], state.angles[2]
    sb, cb = math.sin(be), math.cos(be)
    sg, cg = math.sin(ga), math.cos(ga)
    dal = (-cg * om[0] + sg * om[1]) / sb
    dbe = sg * om[0] + cg * om[1]
    dga = om[2] - cb * dal
    return np.array([dal, dbe, dga])


def free_hamiltonian(state: PhaseState, particle: ParticleProperties) -> float:
    """Kinetic energy of translation plus rigid-body rotation."""
    p = np.asarray(state.momentum)
    lb = body_angular_momentum(state.angles, state.angle_momenta)
    inertia = np.asarray(particle.inertia)
    return float(p @ p / (2.0 * particle.mass) + 0.5 * np.sum(lb * lb / inertia))


def free_torque(state: PhaseState, particle: ParticleProperties) -> np.ndarray:
    """-d H_free / d phi (alpha is cyclic, so the first component vanishes)."""
    lb = body_angular_momentum(state.angles, state.angle_momenta)
    om = lb / np.asarray(particle.inertia)
    be, ga = state.angles[1], state.angles[2]
    sb, cb = math.sin(be), math.cos(be)
    sg, cg = math.sin(ga), math.cos(ga)
    pa, pb, pg = state.angle_momenta
    rho = pa - pg * cb
    dal = (-cg * om[0] + sg * om[1]) / sb
    dh_dbeta = (pg - rho * cb / (sb * sb)) * sb * dal
    dh_dgamma = lb[0] * lb[1] * (1.0 / particle.inertia[0] - 1.0 / particle.inertia[1])
    return np.array([0.0, -dh_dbeta, -dh_dgamma])


# ---------------------------------------------------------------------------
# gradient (dipole) potential
# ---------------------------------------------------------------------------

def lab_susceptibility(angles, particle: ParticleProperties) -> np.ndarray:
    """Susceptibility tensor rotated to the lab frame, R chi R^T."""
    r = rotation_matrix(angles)
    chi = np.diag(particle.susceptibility)
    return r @ chi @ r.T


def _polarization_weighted_susceptibility(angles, particle, beam):
    """bx^2 chi_xx^lab + by^2 chi_yy^lab plus the row products used by torques."""
    r = rotation_matrix(angles)
    chi = np.asarray(particle.susceptibility)
    bx, by = beam.polarization
    chi_xx = float(np.sum(chi * r[0] * r[0]))
    chi_yy = float(np.sum(chi * r[1] * r[1]))
    return bx * bx * chi_xx + by * by * chi_yy, r, chi


def gradient_potential(state: PhaseState, particle: ParticleProperties,
                       beam: BeamParameters) -> float:
    """Dipole interaction energy, always <= 0 for non-negative chi_i.

    Equals -(V P / c sigma_L) |u|^2 (bx^2 chi_xx^lab + by^2 chi_yy^lab):
    only the two transverse diagonal lab-frame tensor elements couple to
    the polarization ellipse (bx, i by, 0).
    """
    weight, _, _ = _polarization_weighted_susceptibility(state.angles, particle, beam)
    u2 = mode_intensity(state.position, beam)
    k_grad = particle.volume * beam.power / (SPEED_OF_LIGHT * beam.cross_section)
    return -k_grad * u2 * weight


def conservative_force(state: PhaseState, particle: ParticleProperties,
                       beam: BeamParameters) -> np.ndarray:
    """-d H_grad / d r: the optical restoring force."""
    weight, _, _ = _polarization_weighted_susceptibility(state.angles, particle, beam)
    _, grad_u2 = mode_intensity_gradient(state.position, beam)
    k_grad = particle.volume * beam.power / (SPEED_OF_LIGHT * beam.cross_section)
    return k_grad * weight * grad_u2


def gradient_torque(state: PhaseState, particle: ParticleProperties,
                    beam: BeamParameters) -> np.ndarray:
    """-d H_grad / d phi, via lab-frame tensor elements.

    d(chi_xx)/dalpha = -2 chi_xy, d(chi_yy)/dalpha = +2 chi_xy,
    d(chi_xx)/dbeta = 2 cos(alpha) chi_xz, d(chi_yy)/dbeta = 2 sin(alpha) chi_yz,
    d(chi_xx)/dgamma = 2 (chi1 - chi2) R11 R12, and similarly for row 2.
    """
    al = state.angles[0]
    weight, r, chi = _polarization_weighted_susceptibility(state.angles, particle, beam)
    bx2 = beam.polarization[0] ** 2
    by2 = beam.polarization[1] ** 2
    chi_xy = float(np.sum(chi * r[0] * r[1]))
    chi_xz = float(np.sum(chi * r[0] * r[2]))
    chi_yz = float(np.sum(chi * r[1] * r[2]))
    d_alpha = 2.0 * (by2 - bx2) * chi_xy
    d_beta = 2.0 * (bx2 * math.cos(al) * chi_xz + by2 * math.sin(al) * chi_yz)
    d_chi = chi[0] - chi[1]
    d_gamma = 2.0 * d_chi * (bx2 * r[0, 0] * r[0, 1] + by2 * r[1, 0] * r[1, 1])
    u2 = mode_intensity(state.position, beam)
    k_grad = particle.volume * beam.power / (SPEED_OF_LIGHT * beam.cross_section)
    return k_grad * u2 * np.array([d_alpha, d_beta, d_gamma])


def conservative_torque(state: PhaseState, particle: ParticleProperties,
                        beam: BeamParameters) -> np.ndarray:
    """-d (H_free + H_grad) / d phi."""
    return free_torque(state, particle) + gradient_torque(state, particle, beam)


# ---------------------------------------------------------------------------
# photon scattering
# ---------------------------------------------------------------------------

def scattering_force(state: PhaseState, particle: ParticleProperties,
                     beam: BeamParameters) -> float:
    """Radiation-pressure push along +z: (16 pi hbar Gamma_s / 3) k |u|^2."""
    gamma_s = beam.scattering_rate(particle.volume)
    u2 = mode_intensity(state.position, beam)
    return 16.0 * math.pi * HBAR * gamma_s / 3.0 * beam.wavenumber * u2


def scattering_torque(state: PhaseState, particle: ParticleProperties,
                      beam: BeamParameters) -> np.ndarray:
    """Angular momentum transfer rate from photon scattering (d pi/dt).

    Every component carries the common factor bx*by: linear polarization
    transfers no net angular momentum.  The gamma component also vanishes
    for a transversely symmetric particle (chi1 = chi2).
    """
    chi1, chi2, chi3 = particle.susceptibility
    bx, by = beam.polarization
    gamma_s = beam.scattering_rate(particle.volume)
    u2 = mode_intensity(state.position, beam)
    be, ga = state.angles[1], state.angles[2]
    sb, cb = math.sin(be), math.cos(be)
    sg, cg = math.sin(ga), math.cos(ga)

    d12 = chi1 - chi2
    s12 = chi1 + chi2 - 2.0 * chi3
    q_beta_mod = (chi1**2 + 2.0 * chi3 * (chi1 + chi2) - 4.0 * chi1 * chi2
                  + chi2**2 - 2.0 * chi3**2)
    q_const = (3.0 * chi1**2 - 2.0 * chi3 * (chi1 + chi2) - 4.0 * chi1 * chi2
               + 3.0 * chi2**2 + 2.0 * chi3**2)

    base = math.pi * bx * by * HBAR * gamma_s / 3.0 * u2
    cos_2b = 2.0 * cb * cb - 1.0
    cos_2g = 2.0 * cg * cg - 1.0
    n_alpha = 4.0 * base * (-2.0 * sb * sb * cos_2g * d12 * s12
                            + cos_2b * q_beta_mod + q_const)
    n_beta = 16.0 * base * sb * sg * cg * d12 * s12
    n_gamma = 16.0 * base * cb * d12 * d12
    return np.array([n_alpha, n_beta, n_gamma])


# ---------------------------------------------------------------------------
# gas collisions
# ---------------------------------------------------------------------------

def collision_drift(state: PhaseState, gas: GasEnvironment):
    """Friction rates: dp/dt = -2 Gamma_c p, dpi/dt = -2 Gamma_c pi."""
    rate = -2.0 * gas.collision_rate
    return rate * np.asarray(state.momentum), rate * np.asarray(state.angle_momenta)


def translational_noise_amplitude(particle: ParticleProperties,
                                  gas: GasEnvironment) -> float:
    """Per-axis force noise amplitude sqrt(4 M kB T Gamma_c).

    Together with the -2 Gamma_c p friction this gives the stationary
    momentum variance M kB T per axis (equipartition at the gas temperature).
    """
    return math.sqrt(4.0 * particle.mass * K_BOLTZMANN * gas.temperature
                     * gas.collision_rate)


def rotational_noise_matrix(state: PhaseState, particle: ParticleProperties,
                            gas: GasEnvironment) -> np.ndarray:
    """Coefficients sigma[k, zeta, j] of the orientation noise.

    d pi_k = sum_{zeta,j} sigma[k, zeta, j] dZ_{zeta j} with nine
    independent Wiener increments dZ.  The per-axis weight is
    sqrt(4 kB T Gamma_c (I_eta + I_xi - I_zeta)/2) multiplying the rotation
    matrix partial (dR/dphi_k)_{j, zeta}; this is the unique weighting of
    that structure whose covariance equals 4 kB T Gamma_c Y^{-1}, i.e. the
    one in fluctuation-dissipation balance with the -2 Gamma_c pi friction.
    """
    _check_chart(state.angles[1])
    _, d_al, d_be, d_ga = rotation_matrix_partials(state.angles)
    weights = rotational_diffusion_inertia(particle.inertia)
    scale = 4.0 * K_BOLTZMANN * gas.temperature * gas.collision_rate
    c = np.sqrt(scale * np.asarray(weights))
    sigma = np.empty((3, 3, 3))
    for k, dr in enumerate((d_al, d_be, d_ga)):
        # sigma[k, zeta, j] = c_zeta * (dR/dphi_k)_{j, zeta}
        sigma[k] = (c[:, None] * dr.T)
    return sigma


def collision_noise(state: PhaseState, particle: ParticleProperties,
                    gas: GasEnvironment, d_v, d_z):
    """Stochastic momentum increments for given Wiener increments.

    d_v is a 3-vector and d_z a 3x3 matrix of N(0, dt) draws; returns
    (dp, dpi).
    """
    dp = translational_noise_amplitude(particle, gas) * np.asarray(d_v)
    sigma = rotational_noise_matrix(state, particle, gas)
    dpi = np.einsum("kzj,zj->k", sigma, np.asarray(d_z))
    return dp, dpi


def rotational_noise_covariance(state: PhaseState, particle: ParticleProperties,
                                gas: GasEnvironment) -> np.ndarray:
    """Covariance rate matrix C with Cov(dpi) = C dt."""
    sigma = rotational_noise_matrix(state, particle, gas)
    flat = sigma.reshape(3, 9)
    return flat @ flat.T


# ---------------------------------------------------------------------------
# assembled drift
# ---------------------------------------------------------------------------

def drift(state: PhaseState, particle: ParticleProperties, beam: BeamParameters,
          gas: GasEnvironment, gradient_on=True, scattering_on=True,
          collisions_on=True) -> np.ndarray:
    """Deterministic right-hand side of the twelve equations of motion."""
    dr = np.asarray(state.momentum) / particle.mass
    dphi = angular_velocity(state, particle)
    dp = np.zeros(3)
    dpi = free_torque(state, particle)
    if gradient_on:
        dp = dp + conservative_force(state, particle, beam)
        dpi = dpi + gradient_torque(state, particle, beam)
    if scattering_on:
        dp = dp + np.array([0.0, 0.0, scattering_force(state, particle, beam)])
        dpi = dpi + scattering_torque(state, particle, beam)
    if collisions_on:
        fp, fpi = collision_drift(state, gas)
        dp = dp + fp
        dpi = dpi + fpi
    return np.concatenate([dr, dp, dphi, dpi])


def total_hamiltonian(state: PhaseState, particle: ParticleProperties,
                      beam: BeamParameters, gradient_on=True) -> float:
    h = free_hamiltonian(state, particle)
    if gradient_on:
        h += gradient_potential(state, particle, beam)
    return h
