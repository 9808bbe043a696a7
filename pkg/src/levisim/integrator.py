"""Time integration, trajectory recording and trajectory files.

One simulation is strictly sequential and owns one PCG64 stream seeded from
the configuration; a fixed (config, seed) pair reproduces the trajectory
bit for bit.  Gaussian increments are drawn in blocks outside the compiled
loop so the stream consumption is independent of chunking internals.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .config_io import config_fingerprint, config_to_dict
from .model import PhaseState, SimulationConfig, validate_config

STATE_COLUMNS = ("x", "y", "z", "px", "py", "pz",
                 "alpha", "beta", "gamma", "pi_alpha", "pi_beta", "pi_gamma")

_CHUNK = 16384

_MAGIC = b"LEVITRAJ"
_VERSION = 1


class IntegrationAbort(RuntimeError):
    """A state component became non-finite; carries the failing step index."""

    def __init__(self, step: int, state: np.ndarray):
        super().__init__(f"non-finite state component at step {step}")
        self.step = step
        self.state = state


class InvalidConfig(ValueError):
    def __init__(self, problems):
        lines = "; ".join(f"{path}: {msg}" for path, msg in problems)
        super().__init__(f"configuration invalid: {lines}")
        self.problems = problems


@dataclass
class Trajectory:
    """Decimated record of selected state components.

    data is column-major: data[i] is the full series of columns[i].
    """

    sample_interval: float
    columns: tuple[str, ...]
    data: np.ndarray
    counters: dict[str, int]
    fingerprint: str
    config: dict
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.data.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.data[self.columns.index(name)]

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.sample_interval

    def reliable(self) -> bool:
        total = max(self.counters.get("steps", 1), 1)
        return self.counters.get("chart_reflections", 0) <= 1e-4 * total


def _rng_for(config: SimulationConfig) -> np.random.Generator:
    return np.random.default_rng(np.random.PCG64(config.seed))


def step(state: PhaseState, config: SimulationConfig,
         rng: np.random.Generator) -> PhaseState:
    """One Euler-Maruyama step (convenience path used by tests)."""
    s = state.as_vector()
    params = kernels.pack_params(config.particle, config.beam, config.gas)
    t = config.toggles
    noise = t.noise_on and t.collisions_on
    normals = rng.standard_normal((1, 12)) if noise else np.zeros((1, 12))
    counters = np.zeros(2, dtype=np.int64)
    out = np.empty((0, 0))
    cols = np.arange(0, dtype=np.int64)
    bad = kernels.em_chunk(s, params, t.gradient_on, t.scattering_on,
                           t.collisions_on, noise, config.dt, 1, 0, 2**62,
                           normals, out, cols, counters)
    if bad >= 0:
        raise IntegrationAbort(bad, s)
    return PhaseState.from_vector(s)


def simulate(config: SimulationConfig, record=STATE_COLUMNS,
             progress=None) -> Trajectory:
    """Run the full stochastic (or deterministic) integration.

    record selects which state components are kept; the trajectory length is
    exactly steps // decimation.  progress, when given, is called with the
    fraction completed.
    """
    problems = validate_config(config)
    if problems:
        raise InvalidConfig(problems)

    col_idx = np.array([STATE_COLUMNS.index(c) for c in record], dtype=np.int64)
    n_rec = config.steps // config.decimation
    out = np.empty((n_rec, len(record)))
    s = config.initial_state.as_vector()
    params = kernels.pack_params(config.particle, config.beam, config.gas)
    t = config.toggles
    noise = bool(t.noise_on and t.collisions_on and not config.deterministic_rk4)
    rng = _rng_for(config)
    counters = np.zeros(2, dtype=np.int64)
    normals = np.empty((_CHUNK, 12))
    empty = np.zeros((_CHUNK, 12))

    started = time.perf_counter()
    done = 0
    while done < config.steps:
        n = min(_CHUNK, config.steps - done)
        if noise:
            rng.standard_normal(out=normals[:n])
        block = normals if noise else empty
        if config.deterministic_rk4:
            bad = kernels.rk4_chunk(s, params, t.gradient_on, t.scattering_on,
                                    t.collisions_on, config.dt, n, done,
                                    config.decimation, out, col_idx, counters)
        else:
            bad = kernels.em_chunk(s, params, t.gradient_on, t.scattering_on,
                                   t.collisions_on, noise, config.dt, n, done,
                                   config.decimation, block, out, col_idx,
                                   counters)
        if bad >= 0:
            raise IntegrationAbort(done + bad, s)
        done += n
        if progress is not None:
            progress(done / max(config.steps, 1))
    elapsed = time.perf_counter() - started

    counter_dict = {
        "chart_reflections": int(counters[0]),
        "nan_aborts": 0,
        "steps": int(config.steps),
    }
    traj = Trajectory(
        sample_interval=config.dt * config.decimation,
        columns=tuple(record),
        data=np.ascontiguousarray(out.T),
        counters=counter_dict,
        fingerprint=config_fingerprint(config),
        config=config_to_dict(config),
        metadata={
            "wall_time_s": elapsed,
            "steps_per_second": config.steps / elapsed if elapsed > 0 else float("inf"),
            "final_state": [float(v) for v in s],
            "reliable": counter_dict["chart_reflections"] <= 1e-4 * max(config.steps, 1),
        },
    )
    return traj


def step_deterministic_rk4(state: PhaseState, config: SimulationConfig) -> PhaseState:
    """One classical RK4 step of the conservative vector field.

    Meant for conservation tests: requires scattering and collisions off.
    """
    t = config.toggles
    if t.scattering_on or t.collisions_on:
        raise ValueError("deterministic stepping requires scattering and collisions off")
    s = state.as_vector()
    params = kernels.pack_params(config.particle, config.beam, config.gas)
    counters = np.zeros(2, dtype=np.int64)
    out = np.empty((0, 0))
    cols = np.arange(0, dtype=np.int64)
    bad = kernels.rk4_chunk(s, params, t.gradient_on, False, False, config.dt,
                            1, 0, 2**62, out, cols, counters)
    if bad >= 0:
        raise IntegrationAbort(bad, s)
    return PhaseState.from_vector(s)


# ---------------------------------------------------------------------------
# trajectory files: self-describing binary container + CSV export
# ---------------------------------------------------------------------------

def save_trajectory(traj: Trajectory, path) -> None:
    """Little-endian float64 columns after a JSON header.

    Wall-clock timing stays out of the container (it belongs in metadata
    sidecars) so identical (config, seed) runs produce identical bytes.
    """
    volatile = ("wall_time_s", "steps_per_second")
    header = {
        "columns": list(traj.columns),
        "samples": int(len(traj)),
        "sample_interval": traj.sample_interval,
        "counters": traj.counters,
        "fingerprint": traj.fingerprint,
        "config": traj.config,
        "metadata": {k: v for k, v in traj.metadata.items() if k not in volatile},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.uint32(_VERSION).tobytes())
        fh.write(np.uint32(len(blob)).tobytes())
        fh.write(blob)
        fh.write(np.ascontiguousarray(traj.data, dtype="<f8").tobytes())


def load_trajectory(path) -> Trajectory:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path} is not a trajectory container")
        version = int(np.frombuffer(fh.read(4), dtype=np.uint32)[0])
        if version != _VERSION:
            raise ValueError(f"unsupported trajectory version {version}")
        size = int(np.frombuffer(fh.read(4), dtype=np.uint32)[0])
        header = json.loads(fh.read(size).decode())
        data = np.frombuffer(fh.read(), dtype="<f8")
    n_cols = len(header["columns"])
    data = data.reshape(n_cols, header["samples"])
    return Trajectory(
        sample_interval=header["sample_interval"],
        columns=tuple(header["columns"]),
        data=data.copy(),
        counters=header["counters"],
        fingerprint=header["fingerprint"],
        config=header["config"],
        metadata=header.get("metadata", {}),
    )


def export_csv(traj: Trajectory, path) -> None:
    """Plain CSV with a time column; intended for small runs only."""
    t = np.arange(1, len(traj) + 1) * traj.sample_interval
    table = np.column_stack([t, traj.data.T])
    header = ",".join(("time_s",) + traj.columns)
    np.savetxt(path, table, delimiter=",", header=header, comments="")
