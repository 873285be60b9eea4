
import numpy as np
import pytest

from ghostcarve.detector import (
    CalibrationCurve,
    NoiseModel,
    ResponseModel,
    calibrate,
    extract_harmonics,
    heatmap_rows,
    measure_bucket,
    noise_sigma_ratio_from_config,
    rescale_bias,
    rescale_bias_inverse,
    synthesize_evoked,
    write_energy_csv,
)
from ghostcarve.errors import CalibrationError, SamplingError
from ghostcarve.patterns import StimulusSpec


@pytest.fixture(scope="module")
def model6():
    return ResponseModel(freq_hz=6.0)


@pytest.fixture(scope="module")
def model15():
    return ResponseModel(freq_hz=15.0)


@pytest.fixture(scope="module")
def calib6(model6):
    return calibrate(model6, None)


GRID = np.linspace(0.0, 1.0, 101)


class TestResponseModel:
    def test_baseline_at_zero_for_all_frequencies(self, model6):
        for f in np.arange(3.0, 30.5, 0.5):
            assert model6.mean_energy(0.0, f) == pytest.approx(model6.mu0)

    def test_monotone_at_fifteen(self, model6):
        mu = np.array([model6.mean_energy(i, 15.0) for i in GRID])
        assert (np.diff(mu) > 0).all()

    def test_six_rises_then_turns(self, model6):
        mu = np.array([model6.mean_energy(i, 6.0) for i in GRID])
        lower = mu[GRID <= 0.5]
        assert (np.diff(lower) > 0).all()
        upper_diffs = np.diff(mu[GRID >= 0.5])
        assert (upper_diffs < 0).any()

    def test_heatmap_shape_checks(self, model6):
        rows = heatmap_rows(model6, np.arange(3.0, 30.5, 1.0), GRID)
        by_freq = {}
        for row in rows:
            by_freq.setdefault(row[1], []).append(row[-1])
        assert (np.diff(by_freq[15.0]) > 0).all()
        assert (np.diff(by_freq[6.0]) < 0).any()

    def test_weight_validation(self):
        with pytest.raises(ValueError):
            ResponseModel(harmonic_weights=(0.7, 0.2, 0.2, 0.1))
        with pytest.raises(ValueError):
            ResponseModel(harmonic_weights=(-0.1, 0.6, 0.3, 0.2))

    def test_intensity_domain_guard(self, model6):
        with pytest.raises(ValueError):
            model6.mean_energy(1.2)

    def test_config_round_trip(self, tmp_path):
        path = tmp_path / "model.ini"
        path.write_text(
            "[response]\n"
            "freq_hz = 9.5\n"
            "mu0 = 3e-4\n"
            "harmonic_weights = 0.4, 0.3, 0.2, 0.1\n"
            "synth_noise_floor = 0.02\n"
            "[noise]\n"
            "sigma_ratio = 0.35\n"
        )
        model = ResponseModel.from_config(path)
        assert model.freq_hz == 9.5
        assert model.mu0 == 3e-4
        assert model.harmonic_weights == (0.4, 0.3, 0.2, 0.1)
        assert model.synth_noise_floor == 0.02
        assert noise_sigma_ratio_from_config(path) == 0.35
        assert ResponseModel.from_config(path, freq_hz=6.0).freq_hz == 6.0

    def test_missing_config(self, tmp_path):
        with pytest.raises(CalibrationError):
            ResponseModel.from_config(tmp_path / "nope.ini")


class TestNoiseModel:
    def test_draws_non_negative(self):
        nm = NoiseModel(0.4, rng_seed=1)
        draws = nm.draws(1e-4, 50000)
        assert (draws >= 0).all()

    def test_sigma_tracks_mean(self):
        nm = NoiseModel(0.4, rng_seed=2)
        mu = 3.7
        draws = nm.draws(mu, 40000)
        # sample sigma of sigma: sigma/sqrt(2n); allow 3 of those
        tol = 3 * 0.4 * mu / np.sqrt(2 * len(draws))
        assert abs(draws.std(ddof=1) - 0.4 * mu) < tol + 0.01 * mu

    def test_seeded_reproducibility(self):
        a = NoiseModel(0.4, rng_seed=7).draws(1.0, 10)
        b = NoiseModel(0.4, rng_seed=7).draws(1.0, 10)
        assert (a == b).all()

    def test_rejects_negative_ratio(self):
        with pytest.raises(ValueError):
            NoiseModel(-0.1)


class TestCalibrate:
    def test_six_hz_linear_range_near_point_three(self, calib6):
        assert 0.25 <= calib6.linear_range[1] <= 0.35

    def test_fifteen_hz_covers_full_sweep(self, model15):
        curve = calibrate(model15, None)
        assert curve.linear_range[1] == pytest.approx(1.0)

    def test_linear_toy_model_recovers_gain_and_bias(self):
        # effectively unsaturated response: mean = mu0 + 0.1 * intensity
        toy = ResponseModel(
            freq_hz=6.0,
            gain_anchors=(0.1,) * 6,
            saturation_anchors=(1e9,) * 6,
        )
        curve = calibrate(toy, None)
        assert curve.linear_range == (0.0, 1.0)
        assert curve.gain == pytest.approx(0.1, rel=1e-6)
        assert curve.bias == pytest.approx(toy.mu0, rel=1e-6)

    def test_upper_bound_stops_at_first_peak(self, model6, calib6):
        sweep = np.array([model6.mean_energy(i) for i in GRID])
        first_peak = GRID[np.argmax(sweep)]
        assert calib6.linear_range[1] <= first_peak

    def test_level_guard(self, model6):
        with pytest.raises(CalibrationError):
            calibrate(model6, None, sweep_levels=5)

    def test_noisy_calibration_is_stable(self, model6):
        curve = calibrate(model6, NoiseModel(0.4, rng_seed=3), repeats=30)
        assert 0.15 <= curve.linear_range[1] <= 0.5

    def test_simulated_time_accounting(self, model6, calib6):
        assert calib6.simulated_time_s == pytest.approx(33 * 4.0 + 32 * 0.5)
        noisy = calibrate(model6, NoiseModel(0.4, rng_seed=0), repeats=30)
        assert noisy.simulated_time_s == pytest.approx(30 * (33 * 4.0 + 32 * 0.5))

    def test_csv_export(self, calib6, tmp_path):
        path = tmp_path / "cal.csv"
        calib6.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "intensity,frequency,e1,e2,e3,e4,total"
        assert len(lines) == 34

    def test_heatmap_csv(self, model6, tmp_path):
        rows = heatmap_rows(model6, [6.0, 15.0], [0.0, 0.5, 1.0])
        path = tmp_path / "heat.csv"
        write_energy_csv(path, rows)
        assert len(path.read_text().splitlines()) == 7


class TestRescaleBias:
    def test_binary_maps_to_range_ends(self, calib6):
        lo, hi = calib6.linear_range
        mapped = rescale_bias(np.array([0, 1, 1, 0]), calib6)
        assert mapped.tolist() == [lo, hi, hi, lo]

    def test_all_dark_constant(self, calib6):
        mapped = rescale_bias(np.zeros(8, dtype=int), calib6)
        assert (mapped == calib6.linear_range[0]).all()

    def test_inverse_recovers_pattern(self, calib6):
        rng = np.random.default_rng(5)
        pattern = rng.integers(0, 2, 16)
        mapped = rescale_bias(pattern, calib6)
        assert (rescale_bias_inverse(mapped, calib6) == pattern).all()

    def test_degenerate_range_rejected(self):
        broken = CalibrationCurve(
            samples=[(0.0, 1.0)], linear_range=(0.2, 0.2), gain=1.0, bias=0.0, freq_hz=6.0
        )
        with pytest.raises(CalibrationError):
            rescale_bias(np.array([0, 1]), broken)


class TestMeasureBucket:
    def test_zero_overlap_noiseless_reads_baseline(self, model6, calib6):
        pattern = np.array([1, 0, 1, 0, 1, 0, 1, 0])
        obj = np.array([0, 1, 0, 1, 0, 1, 0, 1])
        assert measure_bucket(pattern, obj, model6, None, calib6) == pytest.approx(
            model6.mu0
        )

    def test_full_overlap_reads_linear_range_top(self, model6, calib6):
        ones = np.ones(16, dtype=int)
        value = measure_bucket(ones, ones, model6, None, calib6)
        assert value == pytest.approx(model6.mean_energy(calib6.linear_range[1]))

    def test_shape_mismatch(self, model6, calib6):
        with pytest.raises(ValueError):
            measure_bucket(np.ones(8), np.ones(4), model6, None, calib6)

    def test_repeat_noise_ratio(self, model6, calib6):
        pattern = np.ones(16, dtype=int)
        obj = np.zeros(16, dtype=int)
        obj[:8] = 1
        nm = NoiseModel(0.4, rng_seed=9)
        draws = np.array(
            [measure_bucket(pattern, obj, model6, nm, calib6) for _ in range(30)]
        )
        ratio = draws.std(ddof=1) / draws.mean()
        assert 0.25 <= ratio <= 0.55

    def test_noiseless_monotone_in_overlap(self, model6, calib6):
        obj = np.ones(16, dtype=int)
        values = []
        for k in range(17):
            pattern = np.zeros(16, dtype=int)
            pattern[:k] = 1
            values.append(measure_bucket(pattern, obj, model6, None, calib6))
        assert (np.diff(values) > 0).all()


class TestSpectral:
    def test_pure_sine_peak_magnitude(self):
        fs, f, n = 240.0, 6.0, 480
        t = np.arange(n) / fs
        a = 2e-3
        series = a * np.sin(2 * np.pi * f * t)
        result = extract_harmonics(series, f, fs)
        assert result.energies[0] == pytest.approx(a * n / 2, rel=1e-6)
        assert result.energies[1] < a * n / 200
        assert result.energies[3] < a * n / 200

    def test_round_trip_recovers_mean_energy(self, model6):
        spec = StimulusSpec(level=180, freq_hz=6.0, duration_s=2.0)
        series = synthesize_evoked(spec, model6, 240.0, seed=3)
        result = extract_harmonics(series, 6.0, 240.0)
        mu = model6.mean_energy(spec.normalized_level)
        assert result.total == pytest.approx(mu, rel=0.05)

    def test_harmonic_peaks_at_multiples(self, model6):
        spec = StimulusSpec(level=255, freq_hz=6.0, duration_s=2.0)
        series = synthesize_evoked(spec, model6, 240.0, seed=1)
        mags = np.abs(np.fft.rfft(series))
        freqs = np.fft.rfftfreq(len(series), d=1 / 240.0)
        peak_freqs = []
        for k in (1, 2, 3, 4):
            window = np.abs(freqs - 6.0 * k) <= 0.5
            peak_freqs.append(freqs[window][np.argmax(mags[window])])
        assert peak_freqs == [6.0, 12.0, 18.0, 24.0]

    def test_zero_level_stays_at_baseline(self, model6):
        spec = StimulusSpec(level=0, freq_hz=6.0, duration_s=2.0)
        series = synthesize_evoked(spec, model6, 240.0, seed=2)
        result = extract_harmonics(series, 6.0, 240.0)
        assert max(result.energies) <= model6.mu0
        assert result.total == pytest.approx(model6.mu0, rel=0.05)

    def test_doubling_energy_doubles_total(self):
        lo = ResponseModel(freq_hz=6.0, mu0=1e-3, gain_anchors=(0.1,) * 6,
                           saturation_anchors=(1e9,) * 6)
        hi = ResponseModel(freq_hz=6.0, mu0=2e-3, gain_anchors=(0.2,) * 6,
                           saturation_anchors=(1e9,) * 6)
        spec = StimulusSpec(level=128, freq_hz=6.0, duration_s=2.0)
        t_lo = extract_harmonics(synthesize_evoked(spec, lo, 240.0, seed=4), 6.0, 240.0)
        t_hi = extract_harmonics(synthesize_evoked(spec, hi, 240.0, seed=4), 6.0, 240.0)
        assert t_hi.total == pytest.approx(2 * t_lo.total, rel=0.02)

    def test_white_noise_total_is_four_windows(self):
        rng = np.random.default_rng(0)
        totals, singles = [], []
        for _ in range(100):
            series = rng.standard_normal(480) * 1e-4
            result = extract_harmonics(series, 6.0, 240.0)
            totals.append(result.total)
            singles.extend(result.energies)
        assert np.mean(totals) == pytest.approx(4 * np.mean(singles), rel=0.05)

    def test_undersampled_synthesis_rejected(self, model6):
        spec = StimulusSpec(level=100, freq_hz=10.0, duration_s=2.0, frame_rate=60)
        with pytest.raises(SamplingError):
            synthesize_evoked(spec, model6, 100.0)

    def test_short_series_rejected(self):
        with pytest.raises(SamplingError):
            extract_harmonics(np.zeros(100), 6.0, 240.0)

    def test_nyquist_harmonics_flagged(self):
        # 4th harmonic of 10 Hz sits at 40 Hz, past Nyquist for fs = 64
        series = np.zeros(240)
        result = extract_harmonics(series, 10.0, 64.0)
        assert result.valid == (True, True, True, False)
        assert result.energies[3] == 0.0

    def test_seeded_determinism(self, model6):
        spec = StimulusSpec(level=77, freq_hz=7.0, duration_s=2.0)
        a = synthesize_evoked(spec, model6, 240.0, seed=5)
        b = synthesize_evoked(spec, model6, 240.0, seed=5)
        assert (a == b).all()
