#!/usr/bin/env python3
"""Derive and emit the committed calibration configuration.

The calibration reproduces, in one configuration, the measured translation
trio (196, 246, 124 kHz), the two rotational lines (alpha advance near
3.2 MHz, gamma advance near 2.1 MHz, i.e. within 20% of 3.8 / 1.9 MHz) and
the slow precession line near 5.5 kHz at 0.1 mbar, with silica density, a
1550 nm beam and a two-sphere 50 nm compound.

How the knobs were found (summary of the search):

* circular polarization (bx = by up to a 2% split for detector visibility)
  removes the azimuthal potential corrugation entirely - with unequal
  components the corrugation exceeds the photon torque by ~1e3 and no spin
  develops;
* beam power and waist follow in closed form from the translation trio
  (power from omega_x at the chosen waist, Rayleigh range from omega_z,
  asymmetry from omega_x/omega_y);
* the susceptibility split (d = chi1-chi2, e = chi3-(chi1+chi2)/2) around
  the silica Clausius-Mossotti mean 0.805 controls the rotational state:
  empirically the driven top settles on a tilted cone (angular momentum
  along the beam axis, symmetry axis precessing around it) only for
  e/d between roughly 0.85 and 1.2, with the cone angle
  cos(beta) ~ 0.45 -> 0.26 over that window; e/d = 1.15 puts the
  gamma/alpha line ratio at ~0.66;
* the collision rate sets the asymptotic spin momentum (alpha line) and is
  realized through an effective gas collision radius; the overall
  anisotropy scale d then trades the precession-line frequency against the
  recoil-crossover pressure (both improve as d shrinks) at the cost of a
  slower spin-relaxation time;
* the committed initial state sits on the attractor (cone angle, spin
  momenta, thermal translation offsets) so short acceptance runs start
  in the stationary state.

Run with --verify to re-simulate the committed configuration and print the
measured lines next to their targets (about one minute).
"""

import argparse
import json
import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np

import levisim as lv
from levisim.constants import K_BOLTZMANN, NITROGEN_MASS, SPEED_OF_LIGHT

# measured targets (Hz)
F_X, F_Y, F_Z = 196e3, 246e3, 124e3
F_ALPHA = 3.3e6          # initial spin scale; the run stays near 3.2 MHz
CONE_COSINE = 0.27       # attractor cone angle for e/d = 1.15 (measured)

# committed knob values from the search
WAIST = 0.70e-6
D_SPLIT = 0.020
E_OVER_D = 1.15
CHI_MEAN = 0.805
BX_SQUARED = 0.52        # slight polarization split keeps alpha harmonics
                         # visible in the single detector channel
GAS_RADIUS = 2.344e-12   # effective collision radius realizing Gamma_c
SEED = 20260808


def build_config() -> lv.SimulationConfig:
    e = E_OVER_D * D_SPLIT
    chi_base = CHI_MEAN - e / 3.0
    chi = (chi_base + D_SPLIT / 2.0, chi_base - D_SPLIT / 2.0, chi_base + e)
    particle = lv.ParticleProperties.fused_spheres(2, 50e-9, 2200.0, chi)

    a1 = F_X / F_Y
    chi0 = particle.mean_susceptibility
    sigma_l = math.pi * WAIST**2
    omega_x = 2.0 * math.pi * F_X
    power = (omega_x**2 * SPEED_OF_LIGHT * sigma_l * WAIST**2
             * particle.density / (4.0 * a1 * chi0))
    omega_z = 2.0 * math.pi * F_Z
    rayleigh = math.sqrt(2.0 * power * chi0
                         / (SPEED_OF_LIGHT * sigma_l * particle.density)) / omega_z
    beam = lv.BeamParameters(
        power=power, wavelength=1550e-9, waist=WAIST,
        asymmetry=(a1, 1.0 / a1), rayleigh_range=rayleigh,
        polarization=(math.sqrt(BX_SQUARED), math.sqrt(1.0 - BX_SQUARED)))

    gas = lv.GasEnvironment(pressure=10.0, temperature=300.0,
                            particle_mass=NITROGEN_MASS,
                            particle_radius=GAS_RADIUS)

    # attractor initial state: thermal translation offsets, tilted cone,
    # asymptotic spin momenta
    u = CONE_COSINE
    i1 = particle.inertia[0]
    pi_alpha = 2.0 * math.pi * F_ALPHA * i1 * (1.0 - u * u)
    x_rms = math.sqrt(K_BOLTZMANN * 300.0 / (particle.mass * omega_x**2))
    state = lv.PhaseState(
        position=(x_rms, -x_rms, 2.4 * x_rms),
        momentum=(0.0, 0.0, 0.0),
        angles=(0.0, math.acos(u), 0.0),
        angle_momenta=(pi_alpha, 0.0, u * pi_alpha))

    return lv.SimulationConfig(
        particle=particle, beam=beam, gas=gas, initial_state=state,
        dt=8e-10, steps=50_000_000, decimation=50, seed=SEED)


def verify(config: lv.SimulationConfig, steps: int) -> None:
    from dataclasses import replace

    from levisim import spectral as spec

    traj = lv.simulate(replace(config, steps=steps))
    n = len(traj)
    n0 = n // 3
    fs = traj.sample_rate
    alpha = traj.column("alpha")
    gamma = traj.column("gamma")
    f_alpha = (alpha[-1] - alpha[n0]) / ((n - 1 - n0) / fs) / (2 * math.pi)
    f_gamma = (gamma[-1] - gamma[n0]) / ((n - 1 - n0) / fs) / (2 * math.pi)
    beta = traj.column("beta")[n0:]
    rep = spec.find_peaks(spec.welch_psd(np.sin(alpha[n0:]), fs,
                                         segment_length=min(1 << 18, (n - n0) // 2)),
                          min_prominence=20.0)
    low = spec.dominant_peak(rep, 1.5e3, 3e5)
    repx = spec.find_peaks(spec.welch_psd(traj.column("x")[n0:], fs),
                           min_prominence=20.0)
    px = spec.dominant_peak(repx, 2e4, 1e6)
    print(f"alpha advance   : {f_alpha / 1e6:8.3f} MHz  (target 3.04-4.56)")
    print(f"gamma advance   : {abs(f_gamma) / 1e6:8.3f} MHz  (target 1.52-2.28)")
    print(f"cone cosine     : {np.abs(np.cos(beta)).mean():8.3f}")
    print(f"precession line : {low.frequency / 1e3 if low else float('nan'):8.2f} kHz "
          f"(target 2.7-8.1)")
    print(f"x line          : {px.frequency / 1e3 if px else float('nan'):8.1f} kHz "
          f"(target 147-245)")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "configs"))
    parser.add_argument("--verify", action="store_true")
    parser.add_argument("--steps", type=int, default=60_000_000)
    args = parser.parse_args()

    config = build_config()
    problems = lv.validate_config(config)
    if problems:
        raise SystemExit(f"calibration config invalid: {problems}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lv.save_config_json(config, out / "silica_two_sphere_0p1mbar.json")
    lv.save_config_ini(config, out / "silica_two_sphere_0p1mbar.ini")
    print(f"wrote {out / 'silica_two_sphere_0p1mbar.json'}")
    print(json.dumps(lv.derive_constants(config.particle, config.beam,
                                         config.gas).as_dict(), indent=2))
    if args.verify:
        verify(config, args.steps)


if __name__ == "__main__":
    main()
