"""Physical constants (CODATA 2018, SI units) and unit conversions."""

SPEED_OF_LIGHT = 299_792_458.0          # m/s (exact)
HBAR = 1.054_571_817e-34                # J s
K_BOLTZMANN = 1.380_649e-23             # J/K (exact)
ATOMIC_MASS = 1.660_539_066_60e-27      # kg

# Common gas species (kinetic radii are effective hard-sphere values).
NITROGEN_MASS = 28.0134 * ATOMIC_MASS   # kg
NITROGEN_RADIUS = 0.20e-9               # m

PASCAL_PER_MBAR = 100.0


def mbar_to_pascal(p_mbar: float) -> float:
    """Convert a pressure quoted in mbar to Pa (used only at CLI boundaries)."""
    return p_mbar * PASCAL_PER_MBAR
