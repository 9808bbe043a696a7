"""Command-line interface: simulate, analyze, estimate, sweep, report.

Exit codes: 0 success, 2 configuration error, 3 runtime abort,
4 missing/mismatched inputs, 5 estimate domain error, 6 sweep mostly failed.
Common overrides: --pressure-mbar and --power-watt rewrite the gas pressure
(converted to Pa once, here) and beam power before validation; LEVISIM_*
environment variables override file values (see config_io).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import estimates as est
from . import spectral as spec
from .config_io import (config_fingerprint, config_from_dict, config_to_dict,
                        load_config, save_config_json)
from .constants import mbar_to_pascal
from .integrator import (IntegrationAbort, Trajectory, export_csv,
                         load_trajectory, save_trajectory, simulate)
from .model import SimulationConfig, derive_constants, validate_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_MISSING = 4
EXIT_DOMAIN = 5
EXIT_SWEEP = 6


def _load_config_or_exit(path, args) -> SimulationConfig:
    overrides = {}
    if getattr(args, "pressure_mbar", None) is not None:
        overrides["gas.pressure"] = mbar_to_pascal(args.pressure_mbar)
    if getattr(args, "power_watt", None) is not None:
        overrides["beam.power"] = args.power_watt
    if getattr(args, "seed", None) is not None:
        overrides["run.seed"] = args.seed
    if getattr(args, "steps", None) is not None:
        overrides["run.steps"] = args.steps
    try:
        config = load_config(path, overrides=overrides)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)
    except (ValueError, KeyError) as exc:
        print(f"error: cannot parse configuration {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)
    problems = validate_config(config)
    if problems:
        for path_, msg in problems:
            print(f"invalid configuration: {path_}: {msg}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)
    return config


def cmd_simulate(args) -> int:
    config = _load_config_or_exit(args.config, args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        traj = simulate(config, progress=_progress if args.progress else None)
    except IntegrationAbort as exc:
        print(f"integration aborted at step {exc.step}", file=sys.stderr)
        return EXIT_RUNTIME
    save_trajectory(traj, out_dir / "trajectory.levitraj")
    if args.csv:
        export_csv(traj, out_dir / "trajectory.csv")
    meta = {
        "fingerprint": traj.fingerprint,
        "derived_constants": derive_constants(config.particle, config.beam,
                                              config.gas).as_dict(),
        "counters": traj.counters,
        "timing": {k: traj.metadata[k] for k in ("wall_time_s", "steps_per_second")},
        "reliable": traj.metadata.get("reliable", True),
    }
    (out_dir / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    print(f"trajectory: {len(traj)} samples at {traj.sample_rate:.6g} Hz, "
          f"{traj.metadata['steps_per_second']:.3g} steps/s")
    return EXIT_OK


def _progress(fraction: float) -> None:
    print(f"\r{100 * fraction:5.1f}%", end="", file=sys.stderr)
    if fraction >= 1.0:
        print(file=sys.stderr)


def _detector_from_args(args, config_dict) -> spec.DetectorModel:
    return spec.DetectorModel(
        c_x=args.cx, c_y=args.cy, c_z=args.cz, c_rot=args.crot,
        observable=args.observable, noise_amplitude=args.noise_floor)


def write_psd_csv(report: spec.SpectrumReport, path, fingerprint: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# fingerprint: {fingerprint}\n")
        writer = csv.writer(fh)
        writer.writerow(["frequency_hz", "psd"])
        for f, p in zip(report.frequencies, report.psd):
            writer.writerow([f"{f:.10g}", f"{p:.10g}"])


def write_peaks_csv(report: spec.SpectrumReport, path, fingerprint: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# fingerprint: {fingerprint}\n")
        writer = csv.writer(fh)
        writer.writerow(["frequency_hz", "height", "width_hz", "label"])
        for p in report.peaks:
            writer.writerow([f"{p.frequency:.10g}", f"{p.height:.10g}",
                             f"{p.width:.10g}", p.label])


def alpha_secondary_line(angle_reports, lines_hz,
                         tolerance: float = 0.10) -> float | None:
    """Strongest alpha-channel peak not explained by the closed-form lines.

    Mirrors how the extra rotational mode is identified: it exists only
    spectrally, so its value comes from the simulation.  The tolerance must
    match the one used for the final classification, otherwise this would
    steal peaks that classification could still explain.
    """
    alpha = angle_reports.get("alpha")
    if alpha is None:
        return None
    classified = spec.classify_peaks(spec.find_peaks(alpha, min_prominence=50.0),
                                     lines_hz, tolerance_fraction=tolerance)
    spin = lines_hz.get("omega_alpha_spin", math.inf)
    prec = lines_hz.get("omega_alpha_precession", 0.0)
    candidates = [p for p in classified.peaks
                  if p.label == "unidentified"
                  and 4.0 * prec < p.frequency < 0.9 * spin]
    if not candidates:
        return None
    return max(candidates, key=lambda p: p.prominence).frequency


CHANNEL_LINE_NAMES = {
    "alpha": ("omega_alpha_spin", "omega_alpha_precession",
              "omega_x", "omega_y", "omega_z"),
    "beta": ("omega_beta_nutation", "omega_alpha_precession",
             "omega_x", "omega_y", "omega_z"),
    "gamma": ("omega_gamma_spin", "omega_x", "omega_y", "omega_z"),
    "x": ("omega_x",), "y": ("omega_y",), "z": ("omega_z",),
}


def channel_lines(lines_hz: dict, channel: str) -> dict:
    """Restrict the line catalog to what a single angle/axis channel carries.

    A lone spin line must not be claimed by a neighbouring mode's prediction
    (the alpha spin and beta nutation lines sit within a few percent of each
    other by construction).
    """
    names = CHANNEL_LINE_NAMES.get(channel)
    if names is None:
        return lines_hz
    return {k: v for k, v in lines_hz.items() if k in names}


def precession_line(angle_reports, lines_hz) -> float | None:
    """Measured slow precession line: the dominant low-band alpha peak.

    The slow line sits orders of magnitude below the spin lines, where the
    closed forms (a difference of two nearly equal fast rates) carry no
    usable precision, so it is located spectrally.
    """
    alpha = angle_reports.get("alpha")
    if alpha is None:
        return None
    f_gamma = lines_hz.get("omega_gamma_spin", 0.0)
    upper = 0.15 * f_gamma if f_gamma > 0 else 3e5
    peak = spec.dominant_peak(alpha, 1.5e3, upper)
    return peak.frequency if peak else None


def cmd_analyze(args) -> int:
    path = Path(args.trajectory)
    if not path.exists():
        print(f"error: trajectory not found: {path}", file=sys.stderr)
        return EXIT_MISSING
    traj = load_trajectory(path)
    config = config_from_dict(traj.config)
    if traj.fingerprint != config_fingerprint(config):
        print("error: trajectory fingerprint does not match its embedded "
              "configuration", file=sys.stderr)
        return EXIT_MISSING
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    discard_n = int(len(traj) * args.discard)
    beta_mean = None
    if "beta" in traj.columns:
        beta_mean = float(np.mean(traj.column("beta")[discard_n:]))
        # report the cone on the same side as the acute mean
        if beta_mean > 0.5 * math.pi:
            beta_mean = math.pi - beta_mean
    try:
        bundle = est.frequency_estimates(config.particle, config.beam, config.gas,
                                         beta0=beta_mean)
        lines = est.analysis_lines(config.particle, config.beam, config.gas,
                                   beta0=beta_mean)
    except (est.EstimateDomainError, est.EstimateConvergenceError) as exc:
        print(f"estimate error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN

    detector = _detector_from_args(args, traj.config)
    try:
        signal = spec.detector_signal(traj, detector)
    except spec.SpectralError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = spec.welch_psd(signal[discard_n:], traj.sample_rate,
                            segment_length=args.segment or None)
    report = spec.find_peaks(report, min_prominence=args.min_prominence)

    angle_reports = {}
    if all(c in traj.columns for c in ("alpha", "beta", "gamma", "x", "y", "z")):
        angle_reports = {k: spec.find_peaks(
            spec.welch_psd(series_of(traj, k)[discard_n:], traj.sample_rate,
                           segment_length=args.segment or None),
            min_prominence=args.min_prominence)
            for k in ("alpha", "beta", "gamma", "x", "y", "z")}
    secondary = alpha_secondary_line(angle_reports, lines, tolerance=args.tolerance)
    measured_prec = precession_line(angle_reports, lines)
    if measured_prec is not None:
        # anchor the slow line spectrally, like the secondary alpha mode: the
        # closed-form difference of two nearly equal MHz rates cannot place a
        # kHz line reliably
        lines["omega_alpha_precession"] = measured_prec
    report = spec.classify_peaks(report, lines, tolerance_fraction=args.tolerance,
                                 alpha_secondary=secondary)

    write_psd_csv(report, out_dir / "psd.csv", traj.fingerprint)
    write_peaks_csv(report, out_dir / "peaks.csv", traj.fingerprint)
    for name, rep in angle_reports.items():
        rep = spec.classify_peaks(rep, channel_lines(lines, name),
                                  tolerance_fraction=args.tolerance,
                                  alpha_secondary=secondary)
        write_psd_csv(rep, out_dir / f"psd_{name}.csv", traj.fingerprint)
        write_peaks_csv(rep, out_dir / f"peaks_{name}.csv", traj.fingerprint)
    summary = {
        "fingerprint": traj.fingerprint,
        "lines_hz": lines,
        "beta0_method": bundle.beta0_method,
        "alpha_secondary_hz": secondary,
        "labelled_peaks": [{"frequency_hz": p.frequency, "label": p.label,
                            "height": p.height} for p in report.peaks],
    }
    (out_dir / "analysis.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    print(f"{len(report.peaks)} peaks, "
          f"{sum(p.label != 'unidentified' for p in report.peaks)} labelled")
    return EXIT_OK


def series_of(traj: Trajectory, name: str) -> np.ndarray:
    if name == "alpha":
        return np.sin(traj.column("alpha"))
    if name == "gamma":
        return np.sin(traj.column("gamma"))
    return traj.column(name)


def cmd_estimate(args) -> int:
    config = _load_config_or_exit(args.config, args)
    try:
        bundle = est.frequency_estimates(config.particle, config.beam, config.gas)
    except est.EstimateDomainError as exc:
        print(f"estimate domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except est.EstimateConvergenceError as exc:
        print(f"estimate did not converge: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    rates = est.recoil_heating_rates(config.particle, config.beam, config.gas)
    data = bundle.as_dict()
    data["beta0_method"] = bundle.beta0_method
    data.update({
        "recoil_translation_gas_w": rates.translation_gas,
        "recoil_translation_photon_w": rates.translation_photon,
        "recoil_rotation_gas_w": rates.rotation_gas,
        "recoil_rotation_photon_w": rates.rotation_photon,
        "recoil_crossover_pressure_pa": est.recoil_crossover_pressure(
            config.particle, config.beam, config.gas),
        "torque_sensitivity_nm_rthz": est.torque_sensitivity(
            config.gas.collision_rate, bundle.beta0, bundle.effective_inertia,
            est.DELTA_OMEGA_ALPHA_PRESET),
        # projection to the published operating point (collision rate is
        # linear in pressure)
        "torque_sensitivity_at_1e-7_mbar_nm_rthz": est.torque_sensitivity(
            config.gas.collision_rate * mbar_to_pascal(1e-7) / config.gas.pressure,
            bundle.beta0, bundle.effective_inertia, est.DELTA_OMEGA_ALPHA_PRESET),
    })
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "estimates.json").write_text(json.dumps(data, indent=2, sort_keys=True))
        with open(out_dir / "estimates.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["quantity", "value"])
            for key, value in sorted(data.items()):
                writer.writerow([key, value])
    for key, value in sorted(data.items()):
        print(f"{key} = {value}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def _scaled_initial_state(config: SimulationConfig, base: dict) -> SimulationConfig:
    """Rescale the recorded spin state to the new drive/damping balance.

    The asymptotic angle momenta scale as power/pressure; starting each
    sweep point on its own predicted attractor keeps the (slow) spin
    relaxation out of the measured spectra.
    """
    scale = ((config.beam.power / base["beam"]["power"])
             * (base["gas"]["pressure"] / config.gas.pressure))
    state = config.initial_state
    momenta = tuple(v * scale for v in state.angle_momenta)
    return replace(config, initial_state=replace(state, angle_momenta=momenta))


def _sweep_point(payload):
    (base_dict, axis, value, index, base_seed, steps, out_dir) = payload
    value = float(value)
    config = config_from_dict(base_dict)
    if axis == "pressure":
        config = replace(config, gas=config.gas.with_pressure(value))
    else:
        config = replace(config, beam=replace(config.beam, power=value))
    config = _scaled_initial_state(config, base_dict)
    f_max, _ = est.frequency_bounds(config.particle, config.beam, config.gas)
    dt = min(config.dt, 0.01 / f_max if f_max > 0 else config.dt)
    decim = max(1, int(round(1.0 / (5.0 * f_max * dt))) if f_max > 0 else config.decimation)
    config = replace(config, dt=dt, steps=steps, decimation=decim,
                     seed=base_seed + index)
    problems = validate_config(config)
    if problems:
        return {"index": index, "value": value, "ok": False,
                "error": "; ".join(f"{p}: {m}" for p, m in problems)}
    try:
        traj = simulate(config)
    except IntegrationAbort as exc:
        return {"index": index, "value": value, "ok": False,
                "error": f"aborted at step {exc.step}"}
    result = {"index": index, "value": value, "ok": True,
              "fingerprint": traj.fingerprint}
    n0 = len(traj) // 3
    fs = traj.sample_rate
    for name, lo, hi in (("x", 2e4, 1.5e6), ("gamma", 3e5, 1.2e7),
                         ("alpha", 3e5, 1.5e7)):
        series = series_of(traj, name)[n0:]
        rep = spec.find_peaks(spec.welch_psd(series, fs), min_prominence=20.0)
        peak = spec.dominant_peak(rep, lo, hi)
        result[f"f_{name}_hz"] = peak.frequency if peak else None
    alpha = series_of(traj, "alpha")[n0:]
    seg = min(len(alpha), max(1 << 14, 1 << int(math.log2(max(len(alpha) // 8, 2)))))
    rep = spec.find_peaks(spec.welch_psd(alpha, fs, segment_length=seg),
                          min_prominence=20.0)
    f_gamma = result.get("f_gamma_hz") or math.inf
    peak = spec.dominant_peak(rep, 1.5e3, min(3e5, 0.25 * f_gamma))
    result["f_precession_hz"] = peak.frequency if peak else None
    if out_dir is not None:
        save_trajectory(traj, Path(out_dir) / f"point_{index:02d}.levitraj")
    return result


def cmd_sweep(args) -> int:
    plan_path = Path(args.plan)
    if not plan_path.exists():
        print(f"error: sweep plan not found: {plan_path}", file=sys.stderr)
        return EXIT_CONFIG
    plan = json.loads(plan_path.read_text())
    axis = plan.get("axis", "pressure")
    if axis not in ("pressure", "power"):
        print(f"error: unknown sweep axis {axis!r}", file=sys.stderr)
        return EXIT_CONFIG
    values = [float(v) for v in plan["values"]]
    if sorted(values) != values or len(values) < 4:
        print("error: sweep grid must be increasing with at least 4 points",
              file=sys.stderr)
        return EXIT_CONFIG
    base = load_config(plan_path.parent / plan["base_config"]
                       if not Path(plan["base_config"]).is_absolute()
                       else plan["base_config"])
    base_dict = config_to_dict(base)
    steps = int(plan.get("steps", 10_000_000))
    base_seed = int(plan.get("base_seed", base.seed))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    keep = bool(plan.get("keep_trajectories", False))

    payloads = [(base_dict, axis, v, i, base_seed, steps,
                 str(out_dir) if keep else None) for i, v in enumerate(values)]
    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(_sweep_point, payloads))
    else:
        results = [_sweep_point(p) for p in payloads]

    good = [r for r in results if r["ok"]]
    table_path = out_dir / "sweep_table.csv"
    with open(table_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([axis, "f_x_hz", "f_gamma_hz", "f_alpha_hz",
                         "f_precession_hz", "ok", "error"])
        for r in results:
            writer.writerow([r["value"], r.get("f_x_hz"), r.get("f_gamma_hz"),
                             r.get("f_alpha_hz"), r.get("f_precession_hz"),
                             r["ok"], r.get("error", "")])

    fits = {}
    for mode in ("f_x_hz", "f_gamma_hz", "f_alpha_hz", "f_precession_hz"):
        pairs = [(r["value"], r[mode]) for r in good if r.get(mode)]
        try:
            fit = spec.fit_scaling_exponent(pairs)
            fits[mode] = {"exponent": fit.exponent, "stderr": fit.stderr,
                          "points": fit.points}
        except spec.SpectralError as exc:
            fits[mode] = {"error": str(exc)}
    (out_dir / "exponents.json").write_text(json.dumps(
        {"axis": axis, "fits": fits, "points_ok": len(good),
         "points_total": len(results)}, indent=2, sort_keys=True))
    # plot-ready panels: control value vs each labeled mode frequency
    with open(out_dir / f"panel_{axis}.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([axis, "translation_hz", "rotation_hz", "precession_hz"])
        for r in good:
            writer.writerow([r["value"], r.get("f_x_hz"), r.get("f_gamma_hz"),
                             r.get("f_precession_hz")])
    for mode, fit in fits.items():
        print(f"{mode}: {fit}")
    if len(good) < 0.8 * len(results):
        print(f"sweep mostly failed: {len(good)}/{len(results)} points",
              file=sys.stderr)
        return EXIT_SWEEP
    return EXIT_OK


def cmd_report(args) -> int:
    results = Path(args.results)
    if not results.exists() or not results.is_dir():
        print(f"error: results directory not found: {results}", file=sys.stderr)
        return EXIT_MISSING
    sections = []
    estimates_file = results / "estimates.json"
    analysis_file = results / "analysis.json"
    found = False
    if estimates_file.exists():
        found = True
        data = json.loads(estimates_file.read_text())
        rows = "\n".join(f"| {k} | {v} |" for k, v in sorted(data.items()))
        sections.append("## Closed-form estimates\n\n| quantity | value |\n"
                        "|---|---|\n" + rows)
    if analysis_file.exists():
        found = True
        data = json.loads(analysis_file.read_text())
        lines = data.get("lines_hz", {})
        rows = []
        for peak in data.get("labelled_peaks", []):
            label = peak["label"]
            predicted = lines.get(label)
            dev = ""
            if predicted:
                dev = f"{100 * (peak['frequency_hz'] - predicted) / predicted:+.2f}%"
            rows.append(f"| {peak['frequency_hz']:.6g} | {label} | "
                        f"{predicted if predicted else ''} | {dev} |")
        sections.append("## Labelled spectrum\n\n"
                        "| peak (Hz) | label | predicted (Hz) | deviation |\n"
                        "|---|---|---|---|\n" + "\n".join(rows))
    for sweep_json in sorted(results.glob("**/exponents.json")):
        found = True
        data = json.loads(sweep_json.read_text())
        rows = "\n".join(f"| {mode} | {fit.get('exponent', '')} | "
                         f"{fit.get('stderr', '')} |"
                         for mode, fit in sorted(data.get("fits", {}).items()))
        sections.append(f"## Sweep exponents ({data.get('axis')}, "
                        f"{sweep_json.parent.name})\n\n"
                        "| mode | exponent | stderr |\n|---|---|---|\n" + rows)
    if not found:
        print("error: no analyzable outputs in the results directory",
              file=sys.stderr)
        return EXIT_MISSING
    text = "# Levitated nanoparticle simulation report\n\n" + "\n\n".join(sections) + "\n"
    out = Path(args.out) if args.out else results / "report.md"
    out.write_text(text)
    print(f"report written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levisim",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate a configuration")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--steps", type=int)
    sim.add_argument("--pressure-mbar", type=float)
    sim.add_argument("--power-watt", type=float)
    sim.add_argument("--csv", action="store_true", help="also export CSV")
    sim.add_argument("--progress", action="store_true")
    sim.set_defaults(func=cmd_simulate)

    ana = sub.add_parser("analyze", help="spectra and labelled peaks from a trajectory")
    ana.add_argument("--trajectory", required=True)
    ana.add_argument("--out", required=True)
    ana.add_argument("--tolerance", type=float, default=0.10,
                     help="relative matching tolerance for peak labels")
    ana.add_argument("--min-prominence", type=float, default=30.0)
    ana.add_argument("--segment", type=int, default=0)
    ana.add_argument("--discard", type=float, default=0.25,
                     help="fraction of the record dropped as transient")
    ana.add_argument("--cx", type=float, default=1.0)
    ana.add_argument("--cy", type=float, default=1.0)
    ana.add_argument("--cz", type=float, default=1.0)
    ana.add_argument("--crot", type=float, default=1e-7,
                     help="weight of the angular observable")
    ana.add_argument("--observable", default="lab_susceptibility",
                     choices=spec.ANGULAR_OBSERVABLES)
    ana.add_argument("--noise-floor", type=float, default=0.0)
    ana.set_defaults(func=cmd_analyze)

    estp = sub.add_parser("estimate", help="closed-form frequency/torque estimates")
    estp.add_argument("--config", required=True)
    estp.add_argument("--out")
    estp.add_argument("--pressure-mbar", type=float)
    estp.add_argument("--power-watt", type=float)
    estp.set_defaults(func=cmd_estimate)

    swp = sub.add_parser("sweep", help="run a pressure or power sweep plan")
    swp.add_argument("--plan", required=True)
    swp.add_argument("--out", required=True)
    swp.add_argument("--threads", type=int, default=1)
    swp.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="summarize a results directory")
    rep.add_argument("--results", required=True)
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:  # raised by config loading helpers
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
