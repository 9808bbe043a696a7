"""Detector signals, power spectral densities, peak finding and labelling.

The measurement chain is: trajectory -> scalar detector time series ->
Welch PSD -> peak list -> labels against the closed-form line catalog ->
scaling-exponent fits across sweeps.

The true homodyne map of the experiment involves detection physics outside
this model; the surrogate detector used here carries the same angular
harmonics (translations linearly, orientation through either sin(alpha) or
the polarization-weighted lab-frame susceptibility), so peak positions are
trustworthy while absolute PSD heights are not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal as _sig

from .integrator import Trajectory


class SpectralError(ValueError):
    pass


# ---------------------------------------------------------------------------
# detector
# ---------------------------------------------------------------------------

ANGULAR_OBSERVABLES = ("lab_susceptibility", "sin_alpha", "angles")


@dataclass(frozen=True)
class DetectorModel:
    """Linear weights on the translations plus one angular observable.

    noise_amplitude adds a white floor (per-sample standard deviation); its
    stream is derived from the trajectory fingerprint so repeated analysis
    of the same run is reproducible.
    """

    c_x: float = 0.0
    c_y: float = 0.0
    c_z: float = 0.0
    c_rot: float = 0.0
    observable: str = "lab_susceptibility"
    noise_amplitude: float = 0.0

    def validate(self) -> None:
        if self.observable not in ANGULAR_OBSERVABLES:
            raise SpectralError(f"unknown angular observable {self.observable!r}")
        if not any((self.c_x, self.c_y, self.c_z, self.c_rot)):
            raise SpectralError("detector needs at least one nonzero weight")


def _require_columns(traj: Trajectory, names) -> None:
    missing = [n for n in names if n not in traj.columns]
    if missing:
        raise SpectralError(f"trajectory lacks required components {missing}; "
                            f"recorded: {list(traj.columns)}")


def _angular_series(traj: Trajectory, model: DetectorModel) -> np.ndarray:
    if model.observable == "sin_alpha":
        _require_columns(traj, ["alpha"])
        return np.sin(traj.column("alpha"))
    if model.observable == "angles":
        # one channel built from the three angle components; the spinning
        # angles enter through their sines (their raw ramps carry no lines)
        _require_columns(traj, ["alpha", "beta", "gamma"])
        return (np.sin(traj.column("alpha")) + traj.column("beta")
                + np.sin(traj.column("gamma")))
    _require_columns(traj, ["alpha", "beta", "gamma"])
    chi = np.asarray(traj.config["particle"]["susceptibility"])
    bx, by = traj.config["beam"]["polarization"]
    al = traj.column("alpha")
    be = traj.column("beta")
    ga = traj.column("gamma")
    sa, ca = np.sin(al), np.cos(al)
    sb, cb = np.sin(be), np.cos(be)
    sg, cg = np.sin(ga), np.cos(ga)
    r1 = (ca * cb * cg - sa * sg, -ca * cb * sg - sa * cg, ca * sb)
    r2 = (sa * cb * cg + ca * sg, -sa * cb * sg + ca * cg, sa * sb)
    chi_xx = chi[0] * r1[0] ** 2 + chi[1] * r1[1] ** 2 + chi[2] * r1[2] ** 2
    chi_yy = chi[0] * r2[0] ** 2 + chi[1] * r2[1] ** 2 + chi[2] * r2[2] ** 2
    return bx * bx * chi_xx + by * by * chi_yy


def detector_signal(traj: Trajectory, model: DetectorModel) -> np.ndarray:
    """Scalar detector series with the configured white-noise floor."""
    model.validate()
    out = np.zeros(len(traj))
    for weight, name in ((model.c_x, "x"), (model.c_y, "y"), (model.c_z, "z")):
        if weight:
            _require_columns(traj, [name])
            out = out + weight * traj.column(name)
    if model.c_rot:
        out = out + model.c_rot * _angular_series(traj, model)
    if model.noise_amplitude > 0.0:
        seed = int(traj.fingerprint[:12], 16) ^ 0xD0_7EC7
        rng = np.random.default_rng(seed)
        out = out + model.noise_amplitude * rng.standard_normal(out.shape)
    return out


# ---------------------------------------------------------------------------
# PSD estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Peak:
    frequency: float
    height: float
    width: float
    prominence: float
    label: str = "unidentified"


@dataclass(frozen=True)
class SpectrumReport:
    frequencies: np.ndarray
    psd: np.ndarray
    sample_rate: float
    peaks: tuple[Peak, ...] = ()

    def labelled(self, label_prefix: str) -> tuple[Peak, ...]:
        return tuple(p for p in self.peaks if p.label.startswith(label_prefix))


def welch_psd(series, sample_rate: float, segment_length: int | None = None,
              overlap: float = 0.5, window: str = "hann") -> SpectrumReport:
    """One-sided Welch PSD normalized so that sum(psd) * df = Var(series).

    Defaults: Hann window, 50% overlap, at least eight segments.  The mean
    is removed per segment, so the DC bin carries no variance.
    """
    series = np.asarray(series, dtype=float)
    if window not in ("hann", "boxcar", "rectangular"):
        raise SpectralError(f"unsupported window {window!r}")
    win = "boxcar" if window == "rectangular" else window
    if segment_length is None:
        segment_length = max(256, len(series) // 8)
        segment_length = min(segment_length, len(series))
    if segment_length > len(series) or segment_length < 8:
        raise SpectralError(f"segment length {segment_length} unusable for a "
                            f"series of {len(series)} samples")
    noverlap = int(segment_length * overlap)
    if noverlap >= segment_length:
        raise SpectralError("overlap must leave a nonzero segment advance")
    freqs, psd = _sig.welch(series, fs=sample_rate, window=win,
                            nperseg=segment_length, noverlap=noverlap,
                            detrend="constant", scaling="density")
    return SpectrumReport(frequencies=freqs, psd=psd, sample_rate=sample_rate)


def parseval_ratio(report: SpectrumReport, series) -> float:
    """Integral of the PSD over the variance of the series (1 when exact)."""
    series = np.asarray(series, dtype=float)
    df = report.frequencies[1] - report.frequencies[0]
    var = float(np.var(series))
    if var == 0.0:
        return 1.0
    return float(np.sum(report.psd) * df / var)


# ---------------------------------------------------------------------------
# peaks
# ---------------------------------------------------------------------------

def _refine_peak(freqs, psd, idx) -> float:
    """Sub-bin refinement: vertex of the parabola through log-PSD neighbours."""
    if idx <= 0 or idx >= len(psd) - 1:
        return float(freqs[idx])
    with np.errstate(divide="ignore"):
        y0, y1, y2 = np.log(psd[idx - 1: idx + 2])
    if not np.all(np.isfinite((y0, y1, y2))):
        return float(freqs[idx])
    denom = y0 - 2.0 * y1 + y2
    if denom >= 0.0:
        return float(freqs[idx])
    shift = 0.5 * (y0 - y2) / denom
    shift = float(np.clip(shift, -0.5, 0.5))
    df = freqs[1] - freqs[0]
    return float(freqs[idx] + shift * df)


def find_peaks(report: SpectrumReport, min_prominence: float = 10.0,
               max_peaks: int = 40, skip_dc_bins: int = 2) -> SpectrumReport:
    """Locate spectral peaks by prominence on the log-power axis.

    min_prominence is in power ratio (10 = one decade of prominence).
    Peaks come back sorted by descending prominence; widths are measured at
    half prominence and frequencies refined by a local quadratic fit.
    """
    psd = report.psd.copy()
    floor = np.max(psd) * 1e-300 + np.finfo(float).tiny
    log_psd = np.log10(np.maximum(psd, floor))
    log_prom = math.log10(min_prominence) if min_prominence > 1.0 else None
    idx, props = _sig.find_peaks(log_psd, prominence=log_prom)
    idx_ok = idx[idx >= skip_dc_bins]
    keep = np.isin(idx, idx_ok)
    prominences = props["prominence_values"] if "prominence_values" in props else props["prominences"]
    prominences = prominences[keep]
    idx = idx_ok
    if len(idx) == 0:
        return replace(report, peaks=())
    widths, _, _, _ = _sig.peak_widths(log_psd, idx, rel_height=0.5)
    df = report.frequencies[1] - report.frequencies[0]
    order = np.argsort(prominences)[::-1][:max_peaks]
    peaks = []
    for k in order:
        i = idx[k]
        peaks.append(Peak(
            frequency=_refine_peak(report.frequencies, psd, i),
            height=float(psd[i]),
            width=float(widths[k] * df),
            prominence=float(10.0 ** prominences[k]),
        ))
    return replace(report, peaks=tuple(peaks))


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

FUNDAMENTAL_LINES = ("omega_x", "omega_y", "omega_z", "omega_alpha_spin",
                     "omega_gamma_spin", "omega_beta_nutation",
                     "omega_alpha_precession")

TRANSLATION_LINES = ("omega_x", "omega_y", "omega_z")

_SIDEBAND_PARENTS = ("omega_alpha_spin", "omega_gamma_spin", "omega_beta_nutation")


def classify_peaks(report: SpectrumReport, lines_hz: dict[str, float],
                   tolerance_fraction: float = 0.10,
                   alpha_secondary: float | None = None,
                   max_harmonic: int = 4) -> SpectrumReport:
    """Label peaks against the closed-form line catalog.

    Three deterministic passes, each independent of the input peak order:

    1. fundamentals: each peak matches the nearest predicted line within
       tolerance_fraction (relative), ties to the lower frequency;
    2. harmonics: integer multiples, anchored to the measured position of
       the labelled fundamental when one was found (the prediction
       otherwise);
    3. sidebands: labelled spin/nutation parents plus or minus a translation
       (or secondary-alpha) offset, within tolerance_fraction of the offset.

    Unmatched peaks stay "unidentified", never forced.
    """
    ordered = sorted(report.peaks, key=lambda p: (p.frequency, -p.prominence))
    labels: dict[int, str] = {}

    fundamentals = [(lines_hz[name], name) for name in FUNDAMENTAL_LINES
                    if lines_hz.get(name, 0.0) > 0.0]
    if alpha_secondary and alpha_secondary > 0.0:
        fundamentals.append((alpha_secondary, "omega_alpha_prime"))
    fundamentals.sort()

    # each fundamental line claims one peak: the most prominent inside the
    # tolerance ball (a line dominates its own satellites, and a broad or
    # split line must not absorb them)
    anchors: dict[str, Peak] = {}
    for f_c, name in fundamentals:
        best = None
        for i, peak in enumerate(ordered):
            if i in labels:
                continue
            rel = abs(peak.frequency - f_c) / f_c
            if rel <= tolerance_fraction:
                key = (-peak.prominence, rel, peak.frequency)
                if best is None or key < best[0]:
                    best = (key, i)
        if best:
            labels[best[1]] = name
            anchors[name] = ordered[best[1]]

    def anchored(name: str) -> float:
        if name in anchors:
            return anchors[name].frequency
        if name == "omega_alpha_prime":
            return alpha_secondary or 0.0
        return lines_hz.get(name, 0.0)

    harmonic_parents = sorted(set(n for _, n in fundamentals))
    for i, peak in enumerate(ordered):
        if i in labels:
            continue
        best = None
        for name in harmonic_parents:
            f_base = anchored(name)
            if f_base <= 0.0:
                continue
            for n in range(2, max_harmonic + 1):
                f_c = n * f_base
                rel = abs(peak.frequency - f_c) / f_c
                if rel <= tolerance_fraction and (best is None or (rel, f_c) < best[0]):
                    best = ((rel, f_c), f"harmonic({name},{n})")
        if best:
            labels[i] = best[1]

    offsets = [(lines_hz.get(t, 0.0), t) for t in TRANSLATION_LINES]
    if alpha_secondary and alpha_secondary > 0.0:
        offsets.append((alpha_secondary, "omega_alpha_prime"))
    for i, peak in enumerate(ordered):
        if i in labels:
            continue
        best = None
        for parent in _SIDEBAND_PARENTS:
            f_p = anchored(parent)
            if f_p <= 0.0:
                continue
            for f_off, off_name in sorted(offsets):
                if f_off <= 0.0 or f_off >= f_p:
                    continue
                for sign, tag in ((1.0, "+"), (-1.0, "-")):
                    f_c = f_p + sign * f_off
                    delta = abs(peak.frequency - f_c)
                    if delta <= tolerance_fraction * f_off and (
                            best is None or (delta, f_c) < best[0]):
                        best = ((delta, f_c), f"sideband({parent},{tag}{off_name})")
        if best:
            labels[i] = best[1]

    labelled = [replace(peak, label=labels.get(i, "unidentified"))
                for i, peak in enumerate(ordered)]
    labelled.sort(key=lambda p: -p.prominence)
    return replace(report, peaks=tuple(labelled))


def dominant_peak(report: SpectrumReport, f_lo: float = 0.0,
                  f_hi: float = math.inf) -> Peak | None:
    """Most prominent peak inside [f_lo, f_hi]."""
    inside = [p for p in report.peaks if f_lo <= p.frequency <= f_hi]
    if not inside:
        return None
    return max(inside, key=lambda p: (p.prominence, p.height))


# ---------------------------------------------------------------------------
# per-angle spectra (bounded observables of the unbounded angles)
# ---------------------------------------------------------------------------

def per_angle_spectra(traj: Trajectory, **welch_kw) -> dict[str, SpectrumReport]:
    """PSDs of sin(alpha), beta and sin(gamma) plus the three translations."""
    _require_columns(traj, ["alpha", "beta", "gamma", "x", "y", "z"])
    fs = traj.sample_rate
    out = {}
    for name, series in (
        ("alpha", np.sin(traj.column("alpha"))),
        ("beta", traj.column("beta")),
        ("gamma", np.sin(traj.column("gamma"))),
        ("x", traj.column("x")),
        ("y", traj.column("y")),
        ("z", traj.column("z")),
    ):
        out[name] = welch_psd(series, fs, **welch_kw)
    return out


# ---------------------------------------------------------------------------
# scaling fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    stderr: float
    points: int


def fit_scaling_exponent(pairs) -> ScalingFit:
    """Least-squares power-law exponent of (control, frequency) pairs.

    Requires at least four positive points spanning half a decade of the
    control variable; returns the log-log slope and its standard error.
    """
    pairs = [(float(c), float(f)) for c, f in pairs]
    if len(pairs) < 4:
        raise SpectralError(f"need at least 4 points for a scaling fit, got {len(pairs)}")
    if any(c <= 0.0 or f <= 0.0 for c, f in pairs):
        raise SpectralError("scaling fits need strictly positive controls and frequencies")
    controls = np.array([c for c, _ in pairs])
    if controls.max() / controls.min() < math.sqrt(10.0) * (1.0 - 1e-9):
        raise SpectralError("control values must span at least half a decade")
    x = np.log10(controls)
    y = np.log10(np.array([f for _, f in pairs]))
    n = len(x)
    sxx = float(np.sum((x - x.mean()) ** 2))
    slope = float(np.sum((x - x.mean()) * (y - y.mean())) / sxx)
    resid = y - (y.mean() + slope * (x - x.mean()))
    dof = max(n - 2, 1)
    stderr = math.sqrt(float(np.sum(resid**2)) / dof / sxx)
    return ScalingFit(exponent=slope, stderr=stderr, points=n)
