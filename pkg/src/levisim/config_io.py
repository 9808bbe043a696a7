"""Configuration files: an INI-style plain-text format and a JSON mirror.

Both carry the same nested schema; parse -> SimulationConfig -> dump is
lossless.  Pressures inside files are SI (Pa); only the command line accepts
mbar and converts on entry.  A canonical fingerprint of the full
configuration (including the seed) travels with every artifact the pipeline
emits so results can always be traced to their inputs.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import os
from pathlib import Path

from .model import (BeamParameters, GasEnvironment, ParticleProperties, PhaseState,
                    SimulationConfig, Toggles)

ENV_PREFIX = "LEVISIM_"


def config_to_dict(config: SimulationConfig) -> dict:
    return {
        "particle": {
            "density": config.particle.density,
            "volume": config.particle.volume,
            "radius": config.particle.radius,
            "inertia": list(config.particle.inertia),
            "susceptibility": list(config.particle.susceptibility),
        },
        "beam": {
            "power": config.beam.power,
            "wavelength": config.beam.wavelength,
            "waist": config.beam.waist,
            "asymmetry": list(config.beam.asymmetry),
            "rayleigh_range": config.beam.rayleigh_range,
            "polarization": list(config.beam.polarization),
        },
        "gas": {
            "pressure": config.gas.pressure,
            "temperature": config.gas.temperature,
            "particle_mass": config.gas.particle_mass,
            "particle_radius": config.gas.particle_radius,
        },
        "initial_state": {
            "position": list(config.initial_state.position),
            "momentum": list(config.initial_state.momentum),
            "angles": list(config.initial_state.angles),
            "angle_momenta": list(config.initial_state.angle_momenta),
        },
        "run": {
            "dt": config.dt,
            "steps": config.steps,
            "decimation": config.decimation,
            "seed": config.seed,
            "gradient_on": config.toggles.gradient_on,
            "scattering_on": config.toggles.scattering_on,
            "collisions_on": config.toggles.collisions_on,
            "noise_on": config.toggles.noise_on,
            "deterministic_rk4": config.deterministic_rk4,
            "precession_run": config.precession_run,
        },
    }


def config_from_dict(data: dict) -> SimulationConfig:
    part = data["particle"]
    beam = data["beam"]
    gas = data["gas"]
    state = data.get("initial_state", {})
    run = data.get("run", {})
    return SimulationConfig(
        particle=ParticleProperties(
            density=float(part["density"]),
            volume=float(part["volume"]),
            radius=float(part["radius"]),
            inertia=tuple(float(v) for v in part["inertia"]),
            susceptibility=tuple(float(v) for v in part["susceptibility"]),
        ),
        beam=BeamParameters(
            power=float(beam["power"]),
            wavelength=float(beam["wavelength"]),
            waist=float(beam["waist"]),
            asymmetry=tuple(float(v) for v in beam.get("asymmetry", (1.0, 1.0))),
            rayleigh_range=float(beam["rayleigh_range"]),
            polarization=tuple(float(v) for v in beam.get("polarization", (1.0, 0.0))),
        ),
        gas=GasEnvironment(
            pressure=float(gas["pressure"]),
            temperature=float(gas["temperature"]),
            particle_mass=float(gas["particle_mass"]),
            particle_radius=float(gas["particle_radius"]),
        ),
        initial_state=PhaseState(
            position=tuple(float(v) for v in state.get("position", (0.0, 0.0, 0.0))),
            momentum=tuple(float(v) for v in state.get("momentum", (0.0, 0.0, 0.0))),
            angles=tuple(float(v) for v in state.get("angles", (0.0, math.pi / 2, 0.0))),
            angle_momenta=tuple(float(v) for v in state.get("angle_momenta", (0.0, 0.0, 0.0))),
        ),
        dt=float(run.get("dt", 1e-9)),
        steps=int(run.get("steps", 1_000_000)),
        decimation=int(run.get("decimation", 1)),
        seed=int(run.get("seed", 0)),
        toggles=Toggles(
            gradient_on=_as_bool(run.get("gradient_on", True)),
            scattering_on=_as_bool(run.get("scattering_on", True)),
            collisions_on=_as_bool(run.get("collisions_on", True)),
            noise_on=_as_bool(run.get("noise_on", True)),
        ),
        deterministic_rk4=_as_bool(run.get("deterministic_rk4", False)),
        precession_run=_as_bool(run.get("precession_run", False)),
    )


def _as_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


_VECTOR_KEYS = {"inertia", "susceptibility", "asymmetry", "polarization",
                "position", "momentum", "angles", "angle_momenta"}


def _ini_to_dict(parser: configparser.ConfigParser) -> dict:
    data: dict = {}
    for section in parser.sections():
        out = {}
        for key, raw in parser.items(section):
            if key in _VECTOR_KEYS:
                out[key] = [float(v) for v in raw.replace(",", " ").split()]
            else:
                out[key] = raw
        data[section] = out
    return data


def load_config(path, overrides: dict | None = None,
                env: dict | None = None) -> SimulationConfig:
    """Read an INI or JSON configuration file.

    Precedence: file < LEVISIM_* environment variables < explicit overrides.
    Override keys are dotted paths such as ``gas.pressure``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"configuration file not found: {path}")
    text = path.read_text()
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        data = json.loads(text)
    else:
        parser = configparser.ConfigParser()
        parser.read_string(text)
        data = _ini_to_dict(parser)

    env = os.environ if env is None else env
    for name, value in env.items():
        if name.startswith(ENV_PREFIX):
            dotted = name[len(ENV_PREFIX):].lower().replace("__", ".")
            if "." in dotted:
                _apply_override(data, dotted, value)
    for dotted, value in (overrides or {}).items():
        _apply_override(data, dotted, value)
    return config_from_dict(data)


def _apply_override(data: dict, dotted: str, value) -> None:
    section, _, key = dotted.partition(".")
    data.setdefault(section, {})
    data[section][key] = value


def save_config_json(config: SimulationConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n")


def save_config_ini(config: SimulationConfig, path) -> None:
    data = config_to_dict(config)
    lines = []
    for section, values in data.items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            if isinstance(value, list):
                value = " ".join(repr(float(v)) for v in value)
            lines.append(f"{key} = {value}")
        lines.append("")
    Path(path).write_text("\n".join(lines))


def config_fingerprint(config: SimulationConfig) -> str:
    """Stable hash of the complete configuration, seed included."""
    blob = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
