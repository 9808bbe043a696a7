"""Simulation and analysis of a levitated, optically trapped anisotropic
nanoparticle: stochastic rigid-body dynamics, spectra, peak classification,
closed-form frequency and torque estimates, and sweep orchestration."""

from .model import (BeamParameters, ConfigurationError, DerivedConstants,
                    GasEnvironment, ParticleProperties, PhaseState,
                    SimulationConfig, Toggles, derive_constants, validate_config)
from .config_io import (config_fingerprint, config_from_dict, config_to_dict,
                        load_config, save_config_ini, save_config_json)
from .integrator import (IntegrationAbort, InvalidConfig, Trajectory,
                         load_trajectory, save_trajectory, simulate, step,
                         step_deterministic_rk4)
from .spectral import (DetectorModel, Peak, ScalingFit, SpectrumReport,
                       classify_peaks, detector_signal, find_peaks,
                       fit_scaling_exponent, per_angle_spectra, welch_psd)
from .estimates import (EstimateConvergenceError, EstimateDomainError,
                        FrequencyEstimates, beta_equilibrium,
                        beta_equilibrium_torque_balance, frequency_estimates,
                        recoil_crossover_pressure, recoil_heating_rates,
                        spin_state, torque_from_precession, torque_sensitivity,
                        translation_frequencies)

__version__ = "0.1.0"
