"""Compiled inner loops for the stochastic and deterministic integrators.

The arithmetic here mirrors `dynamics` exactly (a test pins the two against
each other at 1e-12 relative); the duplication buys the ~10^7 steps/s the
long runs need.  All trig of the three Euler angles is evaluated once per
step and reused by every term.

State vector layout (shared with `integrator`):
    0:x 1:y 2:z 3:px 4:py 5:pz 6:alpha 7:beta 8:gamma 9:pi_a 10:pi_b 11:pi_g
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .constants import HBAR, K_BOLTZMANN, SPEED_OF_LIGHT
from .model import BETA_GUARD_BAND, MIN_SIN_BETA

# parameter vector layout
P_MASS = 0
P_I1, P_I2, P_I3 = 1, 2, 3
P_CHI1, P_CHI2, P_CHI3 = 4, 5, 6
P_BX, P_BY = 7, 8
P_KGRAD = 9
P_W0SQ = 10
P_ZRSQ = 11
P_A1, P_A2 = 12, 13
P_GAMMA_C = 14
P_KT = 15
P_FSCAT = 16
P_TORQUE_BASE = 17
P_D12 = 18
P_S12 = 19
P_QMOD = 20
P_QCONST = 21
P_SIG_TRANS = 22
P_CROT1, P_CROT2, P_CROT3 = 23, 24, 25
N_PARAMS = 26

F_GRADIENT, F_SCATTERING, F_COLLISIONS, F_NOISE = 0, 1, 2, 3


def pack_params(particle, beam, gas) -> np.ndarray:
    """Flatten the model objects into the kernel parameter vector."""
    from .model import rotational_diffusion_inertia

    p = np.zeros(N_PARAMS)
    p[P_MASS] = particle.mass
    p[P_I1], p[P_I2], p[P_I3] = particle.inertia
    p[P_CHI1], p[P_CHI2], p[P_CHI3] = particle.susceptibility
    p[P_BX], p[P_BY] = beam.polarization
    p[P_KGRAD] = particle.volume * beam.power / (SPEED_OF_LIGHT * beam.cross_section)
    p[P_W0SQ] = beam.waist**2
    p[P_ZRSQ] = beam.rayleigh_range**2
    p[P_A1], p[P_A2] = beam.asymmetry
    p[P_GAMMA_C] = gas.collision_rate
    p[P_KT] = K_BOLTZMANN * gas.temperature
    gamma_s = beam.scattering_rate(particle.volume)
    p[P_FSCAT] = 16.0 * math.pi * HBAR * gamma_s / 3.0 * beam.wavenumber
    bx, by = beam.polarization
    p[P_TORQUE_BASE] = math.pi * bx * by * HBAR * gamma_s / 3.0
    chi1, chi2, chi3 = particle.susceptibility
    p[P_D12] = chi1 - chi2
    p[P_S12] = chi1 + chi2 - 2.0 * chi3
    p[P_QMOD] = (chi1**2 + 2.0 * chi3 * (chi1 + chi2) - 4.0 * chi1 * chi2
                 + chi2**2 - 2.0 * chi3**2)
    p[P_QCONST] = (3.0 * chi1**2 - 2.0 * chi3 * (chi1 + chi2) - 4.0 * chi1 * chi2
                   + 3.0 * chi2**2 + 2.0 * chi3**2)
    p[P_SIG_TRANS] = math.sqrt(4.0 * particle.mass * p[P_KT] * gas.collision_rate)
    weights = rotational_diffusion_inertia(particle.inertia)
    for k in range(3):
        p[P_CROT1 + k] = math.sqrt(4.0 * p[P_KT] * gas.collision_rate * weights[k])
    return p


@njit(cache=True, inline="always")
def _deterministic_rhs(s, p, gradient_on, scattering_on, collisions_on, out):
    """Drift of all twelve coordinates; returns |sin(beta)| for guard checks."""
    sa = math.sin(s[6]); ca = math.cos(s[6])
    sb = math.sin(s[7]); cb = math.cos(s[7])
    sg = math.sin(s[8]); cg = math.cos(s[8])

    mass = p[P_MASS]
    out[0] = s[3] / mass
    out[1] = s[4] / mass
    out[2] = s[5] / mass

    # body angular momentum and Euler-rate kinematics
    csb = 1.0 / sb
    rho = s[9] - s[11] * cb
    l1 = (sb * sg * s[10] - cg * rho) * csb
    l2 = (sg * rho) * csb + cg * s[10]
    l3 = s[11]
    om1 = l1 / p[P_I1]
    om2 = l2 / p[P_I2]
    om3 = l3 / p[P_I3]
    dal = (-cg * om1 + sg * om2) * csb
    out[6] = dal
    out[7] = sg * om1 + cg * om2
    out[8] = om3 - cb * dal

    # free torque: alpha cyclic
    t_a = 0.0
    t_b = -(s[11] - rho * cb * csb * csb) * sb * dal
    t_g = -l1 * l2 * (1.0 / p[P_I1] - 1.0 / p[P_I2])

    f_x = 0.0; f_y = 0.0; f_z = 0.0
    u2 = 1.0
    need_mode = gradient_on or scattering_on
    if need_mode:
        wsq = p[P_W0SQ] * (1.0 + s[2] * s[2] / p[P_ZRSQ])
        quad = p[P_A1] * s[0] * s[0] + p[P_A2] * s[1] * s[1]
        u2 = (p[P_W0SQ] / wsq) * math.exp(-2.0 * quad / wsq)

        # rotation matrix, needed by the orientation-dependent couplings
        r11 = ca * cb * cg - sa * sg
        r12 = -ca * cb * sg - sa * cg
        r13 = ca * sb
        r21 = sa * cb * cg + ca * sg
        r22 = -sa * cb * sg + ca * cg
        r23 = sa * sb
        r31 = -sb * cg
        r32 = sb * sg
        r33 = cb

        if gradient_on:
            chi1 = p[P_CHI1]; chi2 = p[P_CHI2]; chi3 = p[P_CHI3]
            bx2 = p[P_BX] * p[P_BX]
            by2 = p[P_BY] * p[P_BY]
            chi_xx = chi1 * r11 * r11 + chi2 * r12 * r12 + chi3 * r13 * r13
            chi_yy = chi1 * r21 * r21 + chi2 * r22 * r22 + chi3 * r23 * r23
            weight = bx2 * chi_xx + by2 * chi_yy
            kg = p[P_KGRAD]
            f_x = kg * weight * u2 * (-4.0 * p[P_A1] * s[0] / wsq)
            f_y = kg * weight * u2 * (-4.0 * p[P_A2] * s[1] / wsq)
            dwsq_dz = 2.0 * p[P_W0SQ] * s[2] / p[P_ZRSQ]
            f_z = kg * weight * u2 * dwsq_dz * (2.0 * quad - wsq) / (wsq * wsq)

            chi_xy = chi1 * r11 * r21 + chi2 * r12 * r22 + chi3 * r13 * r23
            chi_xz = chi1 * r11 * r31 + chi2 * r12 * r32 + chi3 * r13 * r33
            chi_yz = chi1 * r21 * r31 + chi2 * r22 * r32 + chi3 * r23 * r33
            ku = kg * u2
            t_a += ku * 2.0 * (by2 - bx2) * chi_xy
            t_b += ku * 2.0 * (bx2 * ca * chi_xz + by2 * sa * chi_yz)
            t_g += ku * 2.0 * p[P_D12] * (bx2 * r11 * r12 + by2 * r21 * r22)

        if scattering_on:
            f_z += p[P_FSCAT] * u2
            base = p[P_TORQUE_BASE] * u2
            cos_2b = 2.0 * cb * cb - 1.0
            cos_2g = 2.0 * cg * cg - 1.0
            t_a += 4.0 * base * (-2.0 * sb * sb * cos_2g * p[P_D12] * p[P_S12]
                                 + cos_2b * p[P_QMOD] + p[P_QCONST])
            t_b += 16.0 * base * sb * sg * cg * p[P_D12] * p[P_S12]
            t_g += 16.0 * base * cb * p[P_D12] * p[P_D12]

    if collisions_on:
        rate = -2.0 * p[P_GAMMA_C]
        f_x += rate * s[3]
        f_y += rate * s[4]
        f_z += rate * s[5]
        t_a += rate * s[9]
        t_b += rate * s[10]
        t_g += rate * s[11]

    out[3] = f_x
    out[4] = f_y
    out[5] = f_z
    out[9] = t_a
    out[10] = t_b
    out[11] = t_g
    return abs(sb)


@njit(cache=True)
def deterministic_rhs(s, p, gradient_on, scattering_on, collisions_on):
    out = np.empty(12)
    _deterministic_rhs(s, p, gradient_on, scattering_on, collisions_on, out)
    return out


@njit(cache=True, inline="always")
def _reflect_beta(s, counters):
    # Reflecting walls at the guard band; folding handles arbitrarily large
    # overshoots (the momentum sign follows the reflection parity).
    lo = BETA_GUARD_BAND
    hi = math.pi - BETA_GUARD_BAND
    if s[7] < lo or s[7] > hi:
        span = hi - lo
        u = (s[7] - lo) % (2.0 * span)
        if u < 0.0:
            u += 2.0 * span
        if u > span:
            s[7] = lo + 2.0 * span - u
            s[10] = -s[10]
        else:
            s[7] = lo + u
        counters[0] += 1


@njit(cache=True, inline="always")
def _is_bad(v):
    return not (v == v) or v > 1e300 or v < -1e300


@njit(cache=True)
def em_chunk(s, p, gradient_on, scattering_on, collisions_on, noise_on,
             dt, n_steps, step_offset, decimation, normals, out, out_cols,
             counters):
    """Advance n_steps first-order stochastic steps in place.

    Each step applies the deterministic force/torque drifts (evaluated at
    the pre-step state) and the noise increments to the momenta first, then
    advances positions and angles with the updated momenta (kick-drift
    splitting).  The split is what keeps the underdamped librations neutral
    instead of exponentially amplified; it leaves the drift+diffusion
    structure, the Ito reading of the noise and the weak first order of the
    plain simultaneous update untouched.

    normals is an (n_steps, 12) block of standard normal draws (ignored when
    noise is off).  Recording: the state after global step k (1-based) lands
    in out row k/decimation - 1 whenever k is a multiple of decimation.
    Returns -1 on success or the (local) index of the step that produced a
    non-finite component.
    """
    deriv = np.empty(12)
    sq_dt = math.sqrt(dt)
    sig_t = p[P_SIG_TRANS] * sq_dt
    c1 = p[P_CROT1] * sq_dt
    c2 = p[P_CROT2] * sq_dt
    c3 = p[P_CROT3] * sq_dt
    n_cols = out_cols.shape[0]
    n_rows = out.shape[0]
    for i in range(n_steps):
        _deterministic_rhs(s, p, gradient_on, scattering_on, collisions_on, deriv)
        # momentum kick from the pre-step drifts
        for k in range(3, 6):
            s[k] += deriv[k] * dt
        for k in range(9, 12):
            s[k] += deriv[k] * dt

        if noise_on:
            s[3] += sig_t * normals[i, 0]
            s[4] += sig_t * normals[i, 1]
            s[5] += sig_t * normals[i, 2]

            # orientation noise: d pi_k = sum c_zeta (dR/dphi_k)_{j zeta} dZ_{zeta j}
            sa = math.sin(s[6]); ca = math.cos(s[6])
            sb = math.sin(s[7]); cb = math.cos(s[7])
            sg = math.sin(s[8]); cg = math.cos(s[8])
            r11 = ca * cb * cg - sa * sg
            r12 = -ca * cb * sg - sa * cg
            r13 = ca * sb
            r21 = sa * cb * cg + ca * sg
            r22 = -sa * cb * sg + ca * cg
            r23 = sa * sb
            r31 = -sb * cg
            r32 = sb * sg
            r33 = cb
            z11 = normals[i, 3]; z12 = normals[i, 4]; z13 = normals[i, 5]
            z21 = normals[i, 6]; z22 = normals[i, 7]; z23 = normals[i, 8]
            z31 = normals[i, 9]; z32 = normals[i, 10]; z33 = normals[i, 11]
            # dR/dalpha rows: (-row2, row1, 0)
            s[9] += (c1 * (-r21 * z11 + r11 * z12)
                     + c2 * (-r22 * z21 + r12 * z22)
                     + c3 * (-r23 * z31 + r13 * z32))
            # dR/dbeta rows: (ca*row3, sa*row3, -(ca*row1 + sa*row2))
            s[10] += (c1 * (ca * r31 * z11 + sa * r31 * z12 - (ca * r11 + sa * r21) * z13)
                      + c2 * (ca * r32 * z21 + sa * r32 * z22 - (ca * r12 + sa * r22) * z23)
                      + c3 * (ca * r33 * z31 + sa * r33 * z32 - (ca * r13 + sa * r23) * z33))
            # dR/dgamma columns: (col2, -col1, 0)
            s[11] += (c1 * (r12 * z11 + r22 * z12 + r32 * z13)
                      - c2 * (r11 * z21 + r21 * z22 + r31 * z23))

        # coordinate drift with the updated momenta (angles still pre-step)
        mass = p[P_MASS]
        s[0] += s[3] / mass * dt
        s[1] += s[4] / mass * dt
        s[2] += s[5] / mass * dt
        sbk = math.sin(s[7]); cbk = math.cos(s[7])
        sgk = math.sin(s[8]); cgk = math.cos(s[8])
        csbk = 1.0 / sbk
        rhok = s[9] - s[11] * cbk
        l1k = (sbk * sgk * s[10] - cgk * rhok) * csbk
        l2k = (sgk * rhok) * csbk + cgk * s[10]
        om1k = l1k / p[P_I1]
        om2k = l2k / p[P_I2]
        om3k = s[11] / p[P_I3]
        dalk = (-cgk * om1k + sgk * om2k) * csbk
        s[6] += dalk * dt
        s[7] += (sgk * om1k + cgk * om2k) * dt
        s[8] += (om3k - cbk * dalk) * dt

        _reflect_beta(s, counters)

        bad = False
        for k in range(12):
            if _is_bad(s[k]):
                bad = True
        if bad:
            return i

        gstep = step_offset + i + 1
        if gstep % decimation == 0:
            row = gstep // decimation - 1
            if 0 <= row < n_rows:
                for c in range(n_cols):
                    out[row, c] = s[out_cols[c]]
    return -1


@njit(cache=True)
def rk4_chunk(s, p, gradient_on, scattering_on, collisions_on,
              dt, n_steps, step_offset, decimation, out, out_cols, counters):
    """Classical fourth-order steps of the deterministic vector field."""
    k1 = np.empty(12); k2 = np.empty(12); k3 = np.empty(12); k4 = np.empty(12)
    tmp = np.empty(12)
    n_cols = out_cols.shape[0]
    n_rows = out.shape[0]
    for i in range(n_steps):
        _deterministic_rhs(s, p, gradient_on, scattering_on, collisions_on, k1)
        for k in range(12):
            tmp[k] = s[k] + 0.5 * dt * k1[k]
        _deterministic_rhs(tmp, p, gradient_on, scattering_on, collisions_on, k2)
        for k in range(12):
            tmp[k] = s[k] + 0.5 * dt * k2[k]
        _deterministic_rhs(tmp, p, gradient_on, scattering_on, collisions_on, k3)
        for k in range(12):
            tmp[k] = s[k] + dt * k3[k]
        _deterministic_rhs(tmp, p, gradient_on, scattering_on, collisions_on, k4)
        for k in range(12):
            s[k] += dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])

        _reflect_beta(s, counters)

        bad = False
        for k in range(12):
            if _is_bad(s[k]):
                bad = True
        if bad:
            return i

        gstep = step_offset + i + 1
        if gstep % decimation == 0:
            row = gstep // decimation - 1
            if 0 <= row < n_rows:
                for c in range(n_cols):
                    out[row, c] = s[out_cols[c]]
    return -1
