"""Parameter sets, phase-space state and configuration validation.

Everything here is a plain immutable value object in strict SI units.
Pressures arrive in Pa; the CLI converts mbar once at its own boundary.

The particle sits in an elliptically polarized Gaussian beam propagating
along the lab z axis.  Its orientation is tracked with Euler angles
(alpha, beta, gamma) in the z-y'-z'' convention: rotate by alpha about
lab z, by beta about the new y', by gamma about the body z''.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import HBAR, K_BOLTZMANN, SPEED_OF_LIGHT


class ConfigurationError(ValueError):
    """A derived quantity is unusable; the message names the offending field."""


@dataclass(frozen=True)
class ParticleProperties:
    """Geometry and material response of the nanoparticle.

    Parameters
    ----------
    density : bulk density rho (kg/m^3).
    volume : effective particle volume V (m^3).
    radius : effective radius R (m), used only by the recoil estimates.
    inertia : principal moments (I1, I2, I3) in the body frame (kg m^2).
    susceptibility : diagonal susceptibility tensor (chi1, chi2, chi3),
        dimensionless, body frame.
    """

    density: float
    volume: float
    radius: float
    inertia: tuple[float, float, float]
    susceptibility: tuple[float, float, float]

    @property
    def mass(self) -> float:
        return self.density * self.volume

    @property
    def mean_susceptibility(self) -> float:
        """Effective isotropic susceptibility: arithmetic mean of the chi_i."""
        return sum(self.susceptibility) / 3.0

    def validate(self, path: str = "particle") -> list[tuple[str, str]]:
        problems = []
        for name in ("density", "volume", "radius"):
            if not getattr(self, name) > 0.0:
                problems.append((f"{path}.{name}", "must be strictly positive"))
        i1, i2, i3 = self.inertia
        for k, iv in enumerate(self.inertia):
            if not iv > 0.0:
                problems.append((f"{path}.inertia[{k}]", "must be strictly positive"))
        if min(self.inertia) > 0.0:
            if i1 + i2 < i3 or i2 + i3 < i1 or i3 + i1 < i2:
                problems.append((f"{path}.inertia", "violates the triangle inequality"))
        for k, chi in enumerate(self.susceptibility):
            if chi < 0.0:
                problems.append((f"{path}.susceptibility[{k}]", "must be non-negative"))
        return problems

    @staticmethod
    def sphere(radius: float, density: float,
               susceptibility: tuple[float, float, float]) -> "ParticleProperties":
        """Homogeneous sphere; I = (2/5) M R^2 on every axis."""
        volume = 4.0 / 3.0 * math.pi * radius**3
        mass = density * volume
        moment = 0.4 * mass * radius**2
        return ParticleProperties(density, volume, radius, (moment, moment, moment),
                                  susceptibility)

    @staticmethod
    def fused_spheres(count: int, sphere_radius: float, density: float,
                      susceptibility: tuple[float, float, float],
                      separation: float | None = None) -> "ParticleProperties":
        """Compound of ``count`` equal spheres fused in a line along body z''.

        Inertia follows from the parallel-axis theorem with neighbouring
        sphere centres ``separation`` apart (default: touching, one
        diameter) and the compound centred on its centroid; deeply merged
        aggregates are modelled by separations below one diameter, with the
        volume kept at ``count`` full spheres.  The susceptibility split is
        the caller's choice: the mean should sit near the bulk
        Clausius-Mossotti value, the anisotropy encodes shape.
        """
        if count not in (1, 2, 3):
            raise ValueError("fused_spheres supports 1 to 3 spheres")
        r = sphere_radius
        sep = 2.0 * r if separation is None else separation
        if not 0.0 <= sep <= 2.0 * r:
            raise ValueError("separation must lie between 0 and one diameter")
        sphere_volume = 4.0 / 3.0 * math.pi * r**3
        m = density * sphere_volume
        h = 0.5 * sep
        offsets = {1: (0.0,), 2: (-h, h), 3: (-2.0 * h, 0.0, 2.0 * h)}[count]
        i_axis = count * 0.4 * m * r**2
        i_trans = count * 0.4 * m * r**2 + m * sum(z * z for z in offsets)
        volume = count * sphere_volume
        # Effective radius of the equal-volume sphere.
        radius = (3.0 * volume / (4.0 * math.pi)) ** (1.0 / 3.0)
        return ParticleProperties(density, volume, radius,
                                  (i_trans, i_trans, i_axis), susceptibility)


def transverse_inertia_mean(inertia: tuple[float, float, float]) -> tuple[float, float, float]:
    """Half of (trace(I) - I_zeta) for each body axis, i.e. (I_eta + I_xi)/2."""
    tr = sum(inertia)
    return tuple(0.5 * (tr - iz) for iz in inertia)


def rotational_diffusion_inertia(inertia: tuple[float, float, float]) -> tuple[float, float, float]:
    """Inertia combination (I_eta + I_xi - I_zeta)/2 per body axis.

    This is the weight that makes the orientation noise and the -2*Gamma_c*pi
    friction satisfy the fluctuation-dissipation balance (thermal state at the
    gas temperature).  Positivity is exactly the triangle inequality on the
    principal moments.
    """
    tr = sum(inertia)
    return tuple(0.5 * tr - iz for iz in inertia)


@dataclass(frozen=True)
class BeamParameters:
    """Trapping beam: power, geometry and polarization.

    ``asymmetry`` = (a1, a2) stretches the Gaussian mode along x and y with
    a1*a2 = 1.  ``polarization`` = (bx, by) are the components of the
    elliptical polarization vector (bx, i*by, 0) with bx^2 + by^2 = 1.
    """

    power: float
    wavelength: float
    waist: float
    asymmetry: tuple[float, float] = (1.0, 1.0)
    rayleigh_range: float = 0.0
    polarization: tuple[float, float] = (1.0, 0.0)

    @property
    def cross_section(self) -> float:
        """Effective beam cross-section sigma_L = pi w0^2."""
        return math.pi * self.waist**2

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @property
    def angular_frequency(self) -> float:
        return 2.0 * math.pi * SPEED_OF_LIGHT / self.wavelength

    def scattering_cross_section(self, volume: float) -> float:
        """Rayleigh-type effective scattering cross-section pi^2 V^2 / lambda^4."""
        return math.pi**2 * volume**2 / self.wavelength**4

    def scattering_rate(self, volume: float) -> float:
        """Photon scattering rate (sigma_R/sigma_L) * P / (hbar omega_L), in 1/s."""
        return (self.scattering_cross_section(volume) / self.cross_section
                * self.power / (HBAR * self.angular_frequency))

    def validate(self, path: str = "beam") -> list[tuple[str, str]]:
        problems = []
        for name in ("power", "wavelength", "waist", "rayleigh_range"):
            if not getattr(self, name) > 0.0:
                problems.append((f"{path}.{name}", "must be strictly positive"))
        a1, a2 = self.asymmetry
        if not math.isclose(a1 * a2, 1.0, rel_tol=1e-12):
            problems.append((f"{path}.asymmetry", "a1*a2 must equal 1"))
        bx, by = self.polarization
        if not math.isclose(bx * bx + by * by, 1.0, rel_tol=1e-12):
            problems.append((f"{path}.polarization", "polarization not normalized"))
        return problems


@dataclass(frozen=True)
class GasEnvironment:
    """Background gas: pressure (Pa), temperature (K) and particle species."""

    pressure: float
    temperature: float
    particle_mass: float
    particle_radius: float

    @property
    def collision_rate(self) -> float:
        """Collision damping rate Gamma_c = pi p r_g^2 / sqrt(8 m_g kB T).

        Note the cross-section is the *gas particle* one, not the
        nanoparticle's; this single-collider rate is taken as printed and
        differs from full kinetic-theory damping of an extended sphere.
        """
        return (math.pi * self.pressure * self.particle_radius**2
                / math.sqrt(8.0 * self.particle_mass * K_BOLTZMANN * self.temperature))

    def with_pressure(self, pressure: float) -> "GasEnvironment":
        return replace(self, pressure=pressure)

    def validate(self, path: str = "gas") -> list[tuple[str, str]]:
        problems = []
        for name in ("pressure", "temperature", "particle_mass", "particle_radius"):
            if not getattr(self, name) > 0.0:
                problems.append((f"{path}.{name}", "must be strictly positive"))
        return problems


#: Reject evaluations closer to the Euler chart poles than this.
MIN_SIN_BETA = 1e-6

#: The integrator reflects beta off a band this far from {0, pi}.
BETA_GUARD_BAND = 1e-3


@dataclass(frozen=True)
class PhaseState:
    """A point in the twelve-dimensional phase space.

    position r (m), momentum p (kg m/s), angles phi = (alpha, beta, gamma)
    (rad) and their conjugate momenta pi (kg m^2/s).
    """

    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    momentum: tuple[float, float, float] = (0.0, 0.0, 0.0)
    angles: tuple[float, float, float] = (0.0, math.pi / 2.0, 0.0)
    angle_momenta: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def as_vector(self) -> np.ndarray:
        return np.array(self.position + self.momentum + self.angles
                        + self.angle_momenta, dtype=float)

    @staticmethod
    def from_vector(vec) -> "PhaseState":
        v = [float(x) for x in vec]
        if len(v) != 12:
            raise ValueError("phase state vector must have 12 components")
        return PhaseState(tuple(v[0:3]), tuple(v[3:6]), tuple(v[6:9]), tuple(v[9:12]))

    def validate(self, path: str = "initial_state") -> list[tuple[str, str]]:
        problems = []
        vec = self.as_vector()
        if not np.all(np.isfinite(vec)):
            problems.append((path, "contains non-finite components"))
        beta = self.angles[1]
        if not (0.0 < beta < math.pi) or abs(math.sin(beta)) < MIN_SIN_BETA:
            problems.append((f"{path}.angles[1]",
                             "beta must lie strictly inside (0, pi), away from the chart poles"))
        return problems


@dataclass(frozen=True)
class Toggles:
    """Switches for the individual force/torque channels."""

    gradient_on: bool = True
    scattering_on: bool = True
    collisions_on: bool = True
    noise_on: bool = True


@dataclass(frozen=True)
class SimulationConfig:
    particle: ParticleProperties
    beam: BeamParameters
    gas: GasEnvironment
    initial_state: PhaseState = field(default_factory=PhaseState)
    dt: float = 1e-9
    steps: int = 1_000_000
    decimation: int = 1
    seed: int = 0
    toggles: Toggles = field(default_factory=Toggles)
    deterministic_rk4: bool = False
    #: set when the run is meant to resolve the slow precession line, which
    #: adds the "at least ten slow cycles" duration requirement.
    precession_run: bool = False


@dataclass(frozen=True)
class DerivedConstants:
    """Derived quantities shared by the dynamics and the estimates."""

    mass: float
    mean_susceptibility: float
    cross_section: float
    scattering_cross_section: float
    scattering_rate: float
    collision_rate: float
    laser_angular_frequency: float
    wavenumber: float

    def as_dict(self) -> dict[str, float]:
        return {
            "mass_kg": self.mass,
            "mean_susceptibility": self.mean_susceptibility,
            "cross_section_m2": self.cross_section,
            "scattering_cross_section_m2": self.scattering_cross_section,
            "scattering_rate_hz": self.scattering_rate,
            "collision_rate_hz": self.collision_rate,
            "laser_angular_frequency_rad_s": self.laser_angular_frequency,
            "wavenumber_per_m": self.wavenumber,
        }


def derive_constants(particle: ParticleProperties, beam: BeamParameters,
                     gas: GasEnvironment) -> DerivedConstants:
    """Evaluate every derived constant, checking each one is positive and finite."""
    try:
        values = DerivedConstants(
            mass=particle.mass,
            mean_susceptibility=particle.mean_susceptibility,
            cross_section=beam.cross_section,
            scattering_cross_section=beam.scattering_cross_section(particle.volume),
            scattering_rate=beam.scattering_rate(particle.volume),
            collision_rate=gas.collision_rate,
            laser_angular_frequency=beam.angular_frequency,
            wavenumber=beam.wavenumber,
        )
    except (ZeroDivisionError, OverflowError, ValueError) as exc:
        raise ConfigurationError(f"derived constants are not computable: {exc}; "
                                 "check the configuration inputs") from exc
    for name, value in values.as_dict().items():
        if not math.isfinite(value) or value <= 0.0:
            raise ConfigurationError(f"derived constant {name} is not a positive finite number "
                                     f"(got {value!r}); check the configuration inputs")
    return values


def validate_config(config: SimulationConfig) -> list[tuple[str, str]]:
    """Collect every violated invariant; an empty report means the config is valid.

    Never raises: validation reports, the caller decides.
    """
    problems = []
    problems += config.particle.validate()
    problems += config.beam.validate()
    problems += config.gas.validate()
    problems += config.initial_state.validate()

    if not config.dt > 0.0:
        problems.append(("dt", "must be strictly positive"))
    if config.steps < 0:
        problems.append(("steps", "must be non-negative"))
    if config.decimation < 1:
        problems.append(("decimation", "must be at least 1"))

    if min(config.particle.inertia) > 0.0 and not problems:
        from .estimates import frequency_bounds  # deferred: estimates imports model

        f_max, f_min = frequency_bounds(config.particle, config.beam, config.gas)
        if config.dt * f_max > 0.01:
            problems.append(("dt", f"dt*f_max = {config.dt * f_max:.3g} exceeds 0.01 "
                                    f"(fastest predicted mode {f_max:.3g} Hz)"))
        if config.precession_run and f_min > 0.0:
            if config.steps * config.dt < 10.0 / f_min:
                problems.append(("steps", "run too short to resolve the slowest predicted mode "
                                          f"({f_min:.3g} Hz needs {10.0 / f_min:.3g} s)"))
    return problems
