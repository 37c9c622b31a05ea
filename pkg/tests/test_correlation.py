import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import S11_TAU_PS, poissonian_pulse_train

from qdbench.correlation import (
    CorrelationHistogram,
    brightness_chain,
    build_histogram,
    corrected_overlap,
    g2_zero,
    hom_visibility,
    integrate_peaks,
    read_histogram,
    write_histogram,
)
from qdbench.model import SetupParams, trion_source
from qdbench.photon_sim import RngSpec, hbt_streams, simulate_pulse_train

PERIOD = SetupParams().rep_period_ps


def make_hist(zero_area: int, side_area: int, bin_width=100.0, periods=10):
    """Hand-built histogram with given zero and side peak contents."""
    half = int(round(periods * PERIOD / bin_width)) + 10
    delays = (np.arange(2 * half + 1) - half) * bin_width
    counts = np.zeros(delays.size, dtype=np.int64)
    for k in range(-periods, periods + 1):
        idx = int(round(k * PERIOD / bin_width)) + half
        counts[idx] = zero_area if k == 0 else side_area
    return CorrelationHistogram(bin_width, delays, counts, PERIOD)


class TestBuildHistogram:
    def test_identical_streams_all_mass_at_zero(self):
        t = np.arange(50, dtype=float) * (PERIOD * 11)
        hist = build_histogram(t, t, 100.0, 10.5 * PERIOD, PERIOD)
        zero_bin = hist.counts[hist.delays_ps == 0.0]
        assert zero_bin[0] == 50
        assert hist.total_counts == 50

    def test_independent_poisson_streams_flat(self):
        rng = np.random.default_rng(5150)
        duration = 2.0e9  # 2 ms in ps
        t0 = np.sort(rng.uniform(0, duration, size=60_000))
        t1 = np.sort(rng.uniform(0, duration, size=60_000))
        hist = build_histogram(t0, t1, 1000.0, 10.5 * PERIOD, PERIOD)
        expected = np.full(hist.counts.size, hist.counts.mean())
        chi2 = float(np.sum((hist.counts - expected) ** 2 / expected))
        p = stats.chi2.sf(chi2, hist.counts.size - 1)
        assert p > 0.01

    def test_pulsed_single_photons_have_empty_zero_peak(self):
        setup = SetupParams(eta_setup=1.0, eta_det=1.0)
        src = trion_source(S11_TAU_PS, brightness_first_lens=0.3)
        batch = simulate_pulse_train(RngSpec(61, 0), src, setup, 300_000)
        t0, t1 = hbt_streams(RngSpec(61, 1), batch, setup, 300_000)
        hist = build_histogram(t0, t1, 100.0, 10.5 * PERIOD, PERIOD)
        peaks = integrate_peaks(hist, 2000.0, range(-6, 7))
        areas = {p.peak_index: p.area for p in peaks}
        assert areas[0] == 0
        for k in (1, 2, 6, -3):
            assert areas[k] > 0
        # Side peaks sit at multiples of 12345.7 ps: the nearest bins to
        # k * period carry the bulk of each peak.
        k_centers = hist.delays_ps[np.argsort(hist.counts)[-12:]]
        assert np.all(np.abs(k_centers - np.rint(k_centers / PERIOD) * PERIOD) < 2000.0)

    def test_unsorted_stream_rejected(self):
        good = np.array([0.0, 1.0, 2.0])
        bad = np.array([1.0, 0.0, 2.0])
        with pytest.raises(ValueError):
            build_histogram(good, bad, 10.0, 10.5 * PERIOD, PERIOD)
        with pytest.raises(ValueError):
            build_histogram(bad, good, 10.0, 10.5 * PERIOD, PERIOD)

    def test_span_invariant_enforced(self):
        t = np.arange(10, dtype=float)
        with pytest.raises(ValueError):
            build_histogram(t, t, 100.0, 5.0 * PERIOD, PERIOD)

    def test_matches_brute_force_pair_count(self):
        rng = np.random.default_rng(62)
        t0 = np.sort(rng.uniform(0, 1e7, 300))
        t1 = np.sort(rng.uniform(0, 1e7, 300))
        max_delay = 10.5 * 1e5
        hist = build_histogram(t0, t1, 500.0, max_delay, 1e5)
        edge = (hist.delays_ps[-1] + 250.0)
        brute = 0
        for a in t0:
            brute += int(np.count_nonzero(np.abs(t1 - a) <= edge))
        assert hist.total_counts == brute


class TestIntegratePeaks:
    def test_contiguous_windows_partition_total(self):
        setup = SetupParams(eta_setup=1.0, eta_det=1.0)
        src = trion_source(S11_TAU_PS, brightness_first_lens=0.3, p_two_photon=0.002)
        batch = simulate_pulse_train(RngSpec(63, 0), src, setup, 100_000)
        t0, t1 = hbt_streams(RngSpec(63, 1), batch, setup, 100_000)
        hist = build_histogram(t0, t1, 100.0, 10.5 * PERIOD, PERIOD)
        peaks = integrate_peaks(hist, PERIOD / 2, range(-10, 11))
        assert sum(p.area for p in peaks) == hist.total_counts

    def test_empty_histogram_zero_areas(self):
        hist = make_hist(0, 0)
        assert all(p.area == 0 for p in integrate_peaks(hist, 2000.0, range(-6, 7)))

    def test_peak_outside_span_rejected(self):
        hist = make_hist(10, 100)
        with pytest.raises(ValueError):
            integrate_peaks(hist, 2000.0, [12])

    def test_window_exceeding_half_period_rejected(self):
        hist = make_hist(10, 100)
        with pytest.raises(ValueError):
            integrate_peaks(hist, 0.6 * PERIOD, [0])

    def test_side_peak_uniformity(self):
        setup = SetupParams(eta_setup=1.0, eta_det=1.0)
        src = trion_source(S11_TAU_PS, brightness_first_lens=0.3)
        batch = simulate_pulse_train(RngSpec(64, 0), src, setup, 1_000_000)
        t0, t1 = hbt_streams(RngSpec(64, 1), batch, setup, 1_000_000)
        hist = build_histogram(t0, t1, 100.0, 10.5 * PERIOD, PERIOD)
        peaks = integrate_peaks(hist, 2000.0, [k for k in range(-6, 7) if k != 0])
        areas = np.array([p.area for p in peaks], dtype=float)
        # Pairwise ratios consistent with unity within Poisson scatter.
        sigma = np.sqrt(areas.mean())
        assert np.all(np.abs(areas - areas.mean()) < 5 * sigma)


class TestG2Zero:
    def test_ideal_single_photon_source(self):
        setup = SetupParams(eta_setup=1.0, eta_det=1.0)
        src = trion_source(S11_TAU_PS, brightness_first_lens=0.3)
        batch = simulate_pulse_train(RngSpec(65, 0), src, setup, 1_000_000)
        t0, t1 = hbt_streams(RngSpec(65, 1), batch, setup, 1_000_000)
        hist = build_histogram(t0, t1, 100.0, 10.5 * PERIOD, PERIOD)
        res = g2_zero(hist)
        assert res.zero_area == 0
        assert res.value == 0.0

    def test_poissonian_stream_gives_unity(self):
        setup = SetupParams(eta_setup=1.0, eta_det=1.0)
        batch = poissonian_pulse_train(66, 1_000_000, mu=0.25, tau_ps=S11_TAU_PS)
        t0, t1 = hbt_streams(RngSpec(66, 1), batch, setup, 1_000_000)
        hist = build_histogram(t0, t1, 100.0, 10.5 * PERIOD, PERIOD)
        res = g2_zero(hist)
        assert res.value == pytest.approx(1.0, abs=0.02)

    def test_zero_side_peaks_rejected(self):
        hist = make_hist(5, 0)
        with pytest.raises(ValueError):
            g2_zero(hist)

    def test_side_set_must_exclude_zero(self):
        hist = make_hist(5, 100)
        with pytest.raises(ValueError):
            g2_zero(hist, side_peaks=(0, 1, 2))

    def test_poisson_error_propagation(self):
        hist = make_hist(100, 10_000)
        res = g2_zero(hist, side_peaks=(-2, 2))
        assert res.value == pytest.approx(0.01)
        expected = math.hypot(
            math.sqrt(100) / 10_000, 100 * math.sqrt(20_000) / (2 * 10_000**2)
        )
        assert res.std_err == pytest.approx(expected, rel=1e-12)

    def test_translation_invariance(self):
        rng = np.random.default_rng(67)
        t0 = np.sort(rng.integers(0, 2**40, size=20_000)).astype(float)
        t1 = np.sort(rng.integers(0, 2**40, size=20_000)).astype(float)
        shift = 2.0**21
        h1 = build_histogram(t0, t1, 100.0, 10.5 * PERIOD, PERIOD)
        h2 = build_histogram(t0 + shift, t1 + shift, 100.0, 10.5 * PERIOD, PERIOD)
        assert np.array_equal(h1.counts, h2.counts)


class TestHomVisibility:
    def test_perfect_interference(self):
        res = hom_visibility(make_hist(0, 1000))
        assert res.value == 1.0

    def test_distinguishable_photons(self):
        res = hom_visibility(make_hist(500, 1000))
        assert res.value == pytest.approx(0.0, abs=1e-12)

    def test_paper_area_ratio(self):
        res = hom_visibility(make_hist(525, 10_000))
        assert res.value == pytest.approx(1 - 2 * 0.0525, rel=1e-9)
        assert res.value == pytest.approx(0.895, abs=1e-9)

    def test_error_twice_ratio_error(self):
        hist = make_hist(100, 10_000)
        assert hom_visibility(hist).std_err == pytest.approx(
            2 * g2_zero(hist).std_err, rel=1e-12
        )


class TestCorrectedOverlap:
    def test_no_correction_without_noise(self):
        assert corrected_overlap(0.87, 0.0).value == 0.87

    def test_paper_values(self):
        res = corrected_overlap(0.895, 0.0237)
        assert res.value == pytest.approx(0.9410, abs=5e-5)
        assert not res.clamped

    def test_clamped_only_above_unity(self):
        res = corrected_overlap(0.99, 0.02)
        assert res.clamped and res.value == 1.0
        res2 = corrected_overlap(1.0 - 2 * 0.02, 0.02)
        assert not res2.clamped

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            corrected_overlap(0.9, 1.0)
        with pytest.raises(ValueError):
            corrected_overlap(1.2, 0.1)

    @given(
        v=st.floats(min_value=-0.5, max_value=1.0),
        g=st.floats(min_value=0.0, max_value=0.9),
        dv=st.floats(min_value=1e-6, max_value=0.1),
        dg=st.floats(min_value=1e-6, max_value=0.05),
    )
    @settings(max_examples=100)
    def test_monotone_and_dominates_raw(self, v, g, dv, dg):
        m = corrected_overlap(v, g).value
        assert corrected_overlap(min(v + dv, 1.0), g).value >= m
        if g + dg < 1.0:
            assert corrected_overlap(v, g + dg).value >= m
        assert m >= v


class TestBrightnessChain:
    setup = SetupParams()

    def test_zero_rate(self):
        res = brightness_chain(0.0, self.setup)
        assert res.fibered_rate_cps == 0.0
        assert res.first_lens_brightness == 0.0

    def test_arithmetic_chain(self):
        res = brightness_chain(4.0e5, self.setup)
        assert res.fibered_rate_cps == pytest.approx(1.3333333333e6, rel=1e-9)
        assert res.fibered_brightness == pytest.approx(0.01646090534979, rel=1e-9)
        assert res.first_lens_brightness == pytest.approx(0.0411522633744856, rel=1e-12)

    def test_cross_polarization_cap_exact(self):
        detected = 81e6 * 0.30 * 0.40 * 0.5
        assert brightness_chain(detected, self.setup).first_lens_brightness == 0.5

    def test_zero_efficiency_rejected(self):
        with pytest.raises(ValueError):
            brightness_chain(1e5, SetupParams(eta_det=0.0))


class TestEstimatorScaling:
    def test_g2_std_scales_inverse_sqrt_pulses(self):
        setup = SetupParams(eta_setup=1.0, eta_det=1.0)
        src = trion_source(150.0, brightness_first_lens=0.3, p_two_photon=0.00225)
        sizes = [10_000, 100_000, 1_000_000]
        stds = []
        for n in sizes:
            vals = []
            for s in range(24):
                batch = simulate_pulse_train(RngSpec(1000 + s, 0), src, setup, n)
                t0, t1 = hbt_streams(RngSpec(1000 + s, 1), batch, setup, n)
                hist = build_histogram(t0, t1, 100.0, 10.5 * PERIOD, PERIOD)
                vals.append(g2_zero(hist).value)
            stds.append(np.std(vals))
        slope = np.polyfit(np.log10(sizes), np.log10(stds), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.05)


class TestHistogramIO:
    def test_round_trip(self, tmp_path):
        hist = make_hist(42, 137)
        path = tmp_path / "hist.csv"
        write_histogram(hist, path, meta={"seed": 1})
        back = read_histogram(path)
        assert back.bin_width_ps == hist.bin_width_ps
        assert back.rep_period_ps == hist.rep_period_ps
        assert np.array_equal(back.counts, hist.counts)
        assert np.allclose(back.delays_ps, hist.delays_ps)
