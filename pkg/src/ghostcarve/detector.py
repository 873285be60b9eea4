"""Simulated nonlinear, noisy evoked-energy detector.

Models a flicker-driven detector whose readout is the summed spectral energy
at the flicker frequency and its first four harmonics. The mean response is
a saturating function of input intensity with per-frequency gain and
saturation knee (monotone at 15 Hz, peaked inside the range at 6 Hz); noise
is multiplicative truncated-Gaussian with sigma proportional to the mean.
Calibration sweeps locate the linear input range used to rescale and bias
binary patterns, and to invert measured energies back to intensity units.
"""

from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, SamplingError
from .patterns import StimulusSpec

HARMONIC_COUNT = 4

DEFAULT_FREQ_ANCHORS = (3.0, 6.0, 10.0, 15.0, 22.0, 30.0)
DEFAULT_GAIN_ANCHORS = (0.10, 0.30, 0.18, 0.25, 0.12, 0.05)
DEFAULT_SATURATION_ANCHORS = (0.50, 0.65, 1.20, 2.50, 2.00, 1.50)
DEFAULT_HARMONIC_WEIGHTS = (0.5, 0.25, 0.15, 0.10)


@dataclass(frozen=True)
class ResponseModel:
    """Mean evoked energy as a function of flicker frequency and intensity.

    mean = mu0 + gain(f) * I / (1 + (I / sat(f))^2): linear toe, knee at
    sat(f). Saturation above 1 keeps the curve monotone over the full input
    range; below 1 it peaks inside the range. ``harmonic_weights`` split the
    evoked energy across harmonics 1..4 of the flicker frequency.
    """

    freq_hz: float = 6.0
    mu0: float = 2e-4
    harmonic_weights: tuple = DEFAULT_HARMONIC_WEIGHTS
    freq_anchors: tuple = DEFAULT_FREQ_ANCHORS
    gain_anchors: tuple = DEFAULT_GAIN_ANCHORS
    saturation_anchors: tuple = DEFAULT_SATURATION_ANCHORS
    # broadband floor per spectral bin, as a fraction of mu0: visible in a
    # spectrum plot yet small against the weakest zero-stimulus harmonic
    synth_noise_floor: float = 0.01

    def __post_init__(self):
        if self.mu0 <= 0:
            raise CalibrationError("baseline mu0 must be positive")
        w = np.asarray(self.harmonic_weights, dtype=float)
        if len(w) != HARMONIC_COUNT or np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=1e-9):
            raise ValueError("harmonic weights must be 4 non-negative fractions summing to 1")
        if not (len(self.freq_anchors) == len(self.gain_anchors) == len(self.saturation_anchors)):
            raise ValueError("anchor tuples must have equal length")

    def gain_at(self, freq_hz: float) -> float:
        return float(np.interp(freq_hz, self.freq_anchors, self.gain_anchors))

    def saturation_at(self, freq_hz: float) -> float:
        return float(np.interp(freq_hz, self.freq_anchors, self.saturation_anchors))

    def mean_energy(self, intensity: float, freq_hz: float | None = None) -> float:
        """Mean evoked energy for a normalized input intensity in [0, 1]."""
        if intensity < -1e-12 or intensity > 1.0 + 1e-12:
            raise ValueError(f"intensity {intensity} outside [0, 1]")
        i = min(max(float(intensity), 0.0), 1.0)
        f = self.freq_hz if freq_hz is None else freq_hz
        sat = self.saturation_at(f)
        return self.mu0 + self.gain_at(f) * i / (1.0 + (i / sat) ** 2)

    @classmethod
    def from_config(cls, path, freq_hz: float | None = None) -> "ResponseModel":
        """Load model parameters from an INI file (section [response]).

        Recognised keys: freq_hz, mu0, harmonic_weights, freq_anchors,
        gain_anchors, saturation_anchors, synth_noise_floor. Missing keys
        fall back to the defaults.
        """
        cp = configparser.ConfigParser()
        read = cp.read(path)
        if not read:
            raise CalibrationError(f"cannot read model config {path}")
        sec = cp["response"] if cp.has_section("response") else {}

        def floats(key, default):
            if key not in sec:
                return default
            return tuple(float(tok) for tok in str(sec[key]).replace(",", " ").split())

        kwargs = dict(
            freq_hz=float(sec.get("freq_hz", cls.freq_hz)),
            mu0=float(sec.get("mu0", cls.mu0)),
            harmonic_weights=floats("harmonic_weights", DEFAULT_HARMONIC_WEIGHTS),
            freq_anchors=floats("freq_anchors", DEFAULT_FREQ_ANCHORS),
            gain_anchors=floats("gain_anchors", DEFAULT_GAIN_ANCHORS),
            saturation_anchors=floats("saturation_anchors", DEFAULT_SATURATION_ANCHORS),
            synth_noise_floor=float(sec.get("synth_noise_floor", cls.synth_noise_floor)),
        )
        if freq_hz is not None:
            kwargs["freq_hz"] = freq_hz
        return cls(**kwargs)


def noise_sigma_ratio_from_config(path, default: float = 0.4) -> float:
    cp = configparser.ConfigParser()
    cp.read(path)
    if cp.has_section("noise") and "sigma_ratio" in cp["noise"]:
        return float(cp["noise"]["sigma_ratio"])
    return default


class NoiseModel:
    """Multiplicative truncated-Gaussian measurement noise, sigma = ratio * mu."""

    def __init__(self, sigma_ratio: float = 0.4, rng_seed=0):
        if sigma_ratio < 0:
            raise ValueError("sigma_ratio must be non-negative")
        self.sigma_ratio = float(sigma_ratio)
        self.rng_seed = rng_seed
        self._rng = np.random.default_rng(rng_seed)

    def draw(self, mu: float) -> float:
        g = self._rng.standard_normal()
        return max(0.0, mu * (1.0 + self.sigma_ratio * g))

    def draws(self, mu: float, n: int) -> np.ndarray:
        g = self._rng.standard_normal(n)
        return np.maximum(0.0, mu * (1.0 + self.sigma_ratio * g))


@dataclass
class CalibrationCurve:
    """Input-output sweep with its detected linear prefix and line fit.

    ``samples`` are (intensity, mean_energy) pairs over the sweep;
    ``linear_range`` is the widest prefix interval whose line fit stays
    under the residual tolerance; ``gain``/``bias`` are that line's slope
    and intercept, used to map energies back to intensity units.
    """

    samples: list
    linear_range: tuple
    gain: float
    bias: float
    freq_hz: float
    simulated_time_s: float = 0.0

    @property
    def span(self) -> float:
        return self.linear_range[1] - self.linear_range[0]

    def _prefix_table(self):
        pts = [(i, e) for i, e in self.samples if i <= self.linear_range[1] + 1e-12]
        intensities = np.array([i for i, _ in pts])
        energies = np.maximum.accumulate(np.array([e for _, e in pts]))
        return intensities, energies

    def invert_energy(self, energy) -> np.ndarray:
        """Energy -> intensity via the measured curve inside the linear prefix.

        Piecewise-linear interpolation of the sweep samples (forced
        non-decreasing), clipped to the prefix ends.
        """
        intensities, energies = self._prefix_table()
        return np.interp(np.asarray(energy, dtype=float), energies, intensities)

    def energy_at(self, intensity) -> np.ndarray:
        """Intensity -> energy along the measured curve (inverse of invert_energy)."""
        intensities, energies = self._prefix_table()
        return np.interp(np.asarray(intensity, dtype=float), intensities, energies)

    def write_csv(self, path, harmonic_weights=DEFAULT_HARMONIC_WEIGHTS) -> None:
        rows = [
            (i, self.freq_hz) + tuple(w * e for w in harmonic_weights) + (e,)
            for i, e in self.samples
        ]
        write_energy_csv(path, rows)


def write_energy_csv(path, rows) -> None:
    """CSV rows of (intensity, frequency, e1..e4, total)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["intensity", "frequency", "e1", "e2", "e3", "e4", "total"])
        for row in rows:
            writer.writerow([f"{v:.10g}" for v in row])


def heatmap_rows(model: ResponseModel, freqs, intensities) -> list:
    """Total/per-harmonic mean energy over a (frequency, intensity) grid."""
    rows = []
    for f in freqs:
        for i in intensities:
            mu = model.mean_energy(i, f)
            rows.append((i, f) + tuple(w * mu for w in model.harmonic_weights) + (mu,))
    return rows


def _linear_prefix(levels: np.ndarray, energies: np.ndarray, tol: float):
    """Largest prefix index whose affine fit keeps RMS residual under tol."""
    best = None
    for j in range(2, len(levels)):
        x = levels[: j + 1]
        y = energies[: j + 1]
        a = np.vstack([np.ones_like(x), x]).T
        coef, *_ = np.linalg.lstsq(a, y, rcond=None)
        resid = y - a @ coef
        rng = y.max() - y.min()
        if rng <= 0:
            continue
        if np.sqrt(np.mean(resid**2)) / rng <= tol:
            best = (j, coef)
    return best


CALIBRATION_DWELL_S = 4.0
CALIBRATION_PAUSE_S = 0.5
LINEARITY_TOL = 0.03


def calibrate(
    model: ResponseModel,
    noise: NoiseModel | None,
    sweep_levels: int = 33,
    repeats: int = 30,
    tol: float = LINEARITY_TOL,
) -> CalibrationCurve:
    """Sweep intensity 0..1, average per level, detect the linear prefix.

    With a noise model attached each level is averaged over ``repeats``
    draws; the timing ledger accounts 4 s dwell + 0.5 s pause per
    presentation (simulated time only). Fails when no >=3-point prefix
    passes the linearity residual test.
    """
    if sweep_levels < 8:
        raise CalibrationError(f"need at least 8 sweep levels, got {sweep_levels}")
    levels = np.linspace(0.0, 1.0, sweep_levels)
    passes = repeats if noise is not None else 1
    means = []
    for lvl in levels:
        mu = model.mean_energy(lvl)
        if noise is None:
            means.append(mu)
        else:
            means.append(float(np.mean(noise.draws(mu, repeats))))
    means = np.asarray(means)

    found = _linear_prefix(levels, means, tol)
    if found is None:
        raise CalibrationError("no linear prefix found in calibration sweep")
    j, coef = found

    # The detected range must stop at or before the curve's first peak.
    descents = np.nonzero(np.diff(means) < 0)[0]
    first_peak = levels[descents[0]] if len(descents) else levels[-1]
    if levels[j] > first_peak + 1e-12:
        raise CalibrationError(
            f"linear range {levels[j]:.3f} extends past first response peak {first_peak:.3f}"
        )

    sweep_time = sweep_levels * CALIBRATION_DWELL_S + (sweep_levels - 1) * CALIBRATION_PAUSE_S
    return CalibrationCurve(
        samples=[(float(i), float(e)) for i, e in zip(levels, means)],
        linear_range=(float(levels[0]), float(levels[j])),
        gain=float(coef[1]),
        bias=float(coef[0]),
        freq_hz=model.freq_hz,
        simulated_time_s=passes * sweep_time,
    )


def rescale_bias(pattern: np.ndarray, calib: CalibrationCurve) -> np.ndarray:
    """Map a 0/1 pattern onto projected intensities inside the linear range."""
    lo, hi = calib.linear_range
    if hi - lo <= 0:
        raise CalibrationError("degenerate linear range; cannot rescale patterns")
    return lo + (hi - lo) * np.asarray(pattern, dtype=float)


def rescale_bias_inverse(values: np.ndarray, calib: CalibrationCurve) -> np.ndarray:
    """Recover the binary pattern from its rescaled projection."""
    lo, hi = calib.linear_range
    return np.rint((np.asarray(values, dtype=float) - lo) / (hi - lo)).astype(np.int64)


def measure_bucket(
    pattern: np.ndarray,
    obj: np.ndarray,
    model: ResponseModel,
    noise: NoiseModel | None,
    calib: CalibrationCurve,
) -> float:
    """One bucket measurement of a binary pattern against a binary object.

    The pattern is rescaled/biased into the calibration linear range; the
    effective projected intensity is the mean of (projected pattern *
    object), i.e. overlap normalized by pattern length; the model maps it to
    a mean energy and the noise model draws once. ``noise=None`` returns the
    mean itself.
    """
    pat = np.asarray(pattern)
    ob = np.asarray(obj)
    if pat.shape != ob.shape:
        raise ValueError(f"pattern shape {pat.shape} != object shape {ob.shape}")
    projected = rescale_bias(pat, calib)
    intensity = float(np.dot(projected, ob)) / len(pat)
    mu = model.mean_energy(intensity)
    return mu if noise is None else noise.draw(mu)


@dataclass(frozen=True)
class HarmonicEnergies:
    """Peak magnitudes at harmonics 1..4 plus their sum.

    ``valid[k]`` is False when the harmonic window would cross Nyquist and
    the harmonic was skipped (it then contributes 0 to the total).
    """

    energies: tuple
    valid: tuple
    total: float

    def __iter__(self):
        return iter(self.energies + (self.total,))


def synthesize_evoked(
    spec: StimulusSpec, model: ResponseModel, sample_rate: float, seed=0
) -> np.ndarray:
    """Evoked time series for one flicker presentation.

    Sum of four harmonics of the flicker frequency with session-random
    phases, amplitudes scaled so the spectral peak magnitudes sum to the
    model's mean energy at this intensity, plus a broadband floor well below
    the zero-stimulus energy.
    """
    if sample_rate < 4 * HARMONIC_COUNT * spec.freq_hz:
        raise SamplingError(
            f"sample rate {sample_rate} cannot resolve harmonic {HARMONIC_COUNT} "
            f"of {spec.freq_hz} Hz (need >= {4 * HARMONIC_COUNT * spec.freq_hz})"
        )
    rng = np.random.default_rng(seed)
    n = int(round(spec.duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    mu = model.mean_energy(spec.normalized_level, spec.freq_hz)
    phases = rng.uniform(0.0, 2.0 * np.pi, HARMONIC_COUNT)
    series = np.zeros(n)
    for k in range(1, HARMONIC_COUNT + 1):
        amp = 2.0 * model.harmonic_weights[k - 1] * mu / n
        series += amp * np.sin(2.0 * np.pi * k * spec.freq_hz * t + phases[k - 1])
    sigma_n = model.synth_noise_floor * model.mu0 * math.sqrt(2.0 / n)
    series += sigma_n * rng.standard_normal(n)
    return series


def extract_harmonics(
    series: np.ndarray, freq_hz: float, sample_rate: float, half_width_hz: float = 0.5
) -> HarmonicEnergies:
    """Peak spectral magnitude in a narrow window around each harmonic.

    Needs at least 2 s of samples. The window max reads the harmonic
    amplitude exactly when the dwell spans an integer number of flicker
    cycles (the operating convention here); harmonics whose window would
    cross Nyquist are skipped and flagged.
    """
    x = np.asarray(series, dtype=float)
    if len(x) < 2 * sample_rate:
        raise SamplingError(
            f"series too short: {len(x)} samples < 2 s at {sample_rate} Hz"
        )
    mags = np.abs(np.fft.rfft(x))
    freqs = np.fft.rfftfreq(len(x), d=1.0 / sample_rate)
    energies = []
    valid = []
    for k in range(1, HARMONIC_COUNT + 1):
        target = k * freq_hz
        if target + half_width_hz > sample_rate / 2.0:
            energies.append(0.0)
            valid.append(False)
            continue
        window = np.abs(freqs - target) <= half_width_hz
        energies.append(float(mags[window].max()) if window.any() else 0.0)
        valid.append(bool(window.any()))
    total = float(sum(e for e, v in zip(energies, valid) if v))
    return HarmonicEnergies(tuple(energies), tuple(valid), total)
