import math
from pathlib import Path

import numpy as np
import pytest

import levisim as lv

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

ROOT2 = math.sqrt(0.5)


@pytest.fixture(scope="session")
def calibrated_config() -> lv.SimulationConfig:
    return lv.load_config(CONFIG_DIR / "silica_two_sphere_0p1mbar.json")


@pytest.fixture(scope="session")
def test_particle() -> lv.ParticleProperties:
    """A deliberately anisotropic compound used by the derivative tests."""
    return lv.ParticleProperties.fused_spheres(2, 50e-9, 2200.0, (0.55, 0.62, 1.15))


@pytest.fixture(scope="session")
def test_beam() -> lv.BeamParameters:
    return lv.BeamParameters(power=1.0, wavelength=1550e-9, waist=1.2e-6,
                             asymmetry=(0.8, 1.25), rayleigh_range=2.0e-6,
                             polarization=(math.sqrt(0.65), math.sqrt(0.35)))


@pytest.fixture(scope="session")
def test_gas() -> lv.GasEnvironment:
    return lv.GasEnvironment(pressure=10.0, temperature=300.0,
                             particle_mass=4.6518e-26, particle_radius=0.2e-9)


def random_states(rng: np.random.Generator, count: int, beta_margin: float = 0.35):
    """Valid phase points with non-degenerate angles for derivative checks."""
    states = []
    for _ in range(count):
        states.append(lv.PhaseState(
            position=tuple(rng.normal(0.0, 3e-8, 3)),
            momentum=tuple(rng.normal(0.0, 1e-24, 3)),
            angles=(rng.uniform(-3.0, 3.0),
                    rng.uniform(beta_margin, math.pi - beta_margin),
                    rng.uniform(-3.0, 3.0)),
            angle_momenta=tuple(rng.normal(0.0, 1e-26, 3)),
        ))
    return states


def central_difference(f, x0: float, scale: float) -> float:
    """Fourth-order central difference; truncation ~1e-12 relative, good
    enough to serve as the oracle for the 1e-6 analytic-derivative bound."""
    h = (np.finfo(float).eps ** 0.2) * max(abs(x0), scale)
    return (f(x0 - 2 * h) - 8.0 * f(x0 - h) + 8.0 * f(x0 + h)
            - f(x0 + 2 * h)) / (12.0 * h)
