import math

import numpy as np
import pytest
from scipy import integrate, stats

from conftest import S7_DELTA_UEV, S7_TAU_PS, S11_TAU_PS, single_photon_batch

from qdbench.dynamics import exciton_cross_intensity, peak_emission_delay
from qdbench.model import SetupParams, SourceValidationError, exciton_source, trion_source
from qdbench.photon_sim import (
    CHUNK_PULSES,
    Origin,
    RngSpec,
    UnsamplableEmissionError,
    hbt_streams,
    hom_streams,
    sample_emission_time,
    simulate_pulse_train,
)

S7 = exciton_source(S7_TAU_PS, S7_DELTA_UEV, math.pi / 4, brightness_first_lens=0.136, label="S7")
S11 = trion_source(S11_TAU_PS, brightness_first_lens=0.147, label="S11")


class TestSampleEmissionTime:
    def test_trion_mean_is_lifetime(self):
        rng = RngSpec(11, 0).generator()
        draws = sample_emission_time(rng, S11, size=1_000_000)
        assert np.mean(draws) == pytest.approx(S11_TAU_PS, abs=0.5)

    def test_exciton_mode_matches_peak_delay(self):
        rng = RngSpec(12, 0).generator()
        draws = sample_emission_time(rng, S7, size=1_000_000)
        hist, edges = np.histogram(draws, bins=np.arange(0.0, 1500.0, 2.0))
        centers = 0.5 * (edges[:-1] + edges[1:])
        # The density is flat on top, so locate the mode by the vertex of a
        # local parabola instead of a bare argmax.
        i = int(np.argmax(np.convolve(hist, np.ones(5) / 5, mode="same")))
        window = slice(i - 25, i + 26)
        coeffs = np.polyfit(centers[window], hist[window], 2)
        mode = -coeffs[1] / (2 * coeffs[0])
        assert mode == pytest.approx(peak_emission_delay(S7.exciton), abs=3.0)

    def test_exciton_mean_matches_quadrature(self):
        rng = RngSpec(13, 0).generator()
        n = 1_000_000
        draws = sample_emission_time(rng, S7, size=n)
        weight, _ = integrate.quad(
            lambda t: float(exciton_cross_intensity(t, S7.exciton)), 0, 40 * S7_TAU_PS, limit=400
        )
        first_moment, _ = integrate.quad(
            lambda t: t * float(exciton_cross_intensity(t, S7.exciton)), 0, 40 * S7_TAU_PS, limit=400
        )
        expected_mean = first_moment / weight
        se = np.std(draws) / math.sqrt(n)
        assert abs(np.mean(draws) - expected_mean) < 3 * se

    def test_dark_exciton_unsamplable(self):
        rng = RngSpec(1, 0).generator()
        with pytest.raises(UnsamplableEmissionError):
            sample_emission_time(rng, exciton_source(252.0, 8.58, 0.0), size=10)
        with pytest.raises(UnsamplableEmissionError):
            sample_emission_time(rng, exciton_source(252.0, 0.0, 0.7), size=10)

    def test_scalar_draws(self):
        rng = RngSpec(14, 0).generator()
        t_trion = sample_emission_time(rng, S11)
        t_exciton = sample_emission_time(rng, S7)
        assert float(t_trion) >= 0.0
        assert float(t_exciton) >= 0.0


class TestSimulatePulseTrain:
    def test_no_reexcitation_when_p_two_photon_zero(self):
        batch = simulate_pulse_train(RngSpec(21, 0), S11, SetupParams(), 200_000)
        assert np.max(batch.per_pulse_qd_counts()) == 1
        assert not np.any(batch.origin == Origin.QD_REEXCITE)

    def test_first_photon_count_binomial(self):
        src = trion_source(S11_TAU_PS, brightness_first_lens=0.136)
        batch = simulate_pulse_train(RngSpec(22, 0), src, SetupParams(), 1_000_000)
        n_first = int(np.count_nonzero(batch.origin == Origin.QD_FIRST))
        assert n_first == pytest.approx(136_000, abs=1_000)

    def test_all_probabilities_zero_gives_empty_stream(self):
        src = trion_source(100.0, brightness_first_lens=0.0)
        batch = simulate_pulse_train(RngSpec(23, 0), src, SetupParams(), 10_000)
        assert len(batch) == 0

    def test_invalid_two_photon_probability_rejected(self):
        src = trion_source(100.0, brightness_first_lens=0.1)
        object.__setattr__(src, "p_two_photon", 0.2)
        with pytest.raises(SourceValidationError):
            simulate_pulse_train(RngSpec(1, 0), src, SetupParams(), 100)

    def test_reexcitation_rate_and_delay(self):
        src = trion_source(150.0, brightness_first_lens=0.4, p_two_photon=0.02)
        batch = simulate_pulse_train(RngSpec(24, 0), src, SetupParams(), 500_000)
        counts = batch.per_pulse_qd_counts()
        p2_hat = np.count_nonzero(counts >= 2) / batch.n_pulses
        assert p2_hat == pytest.approx(0.02, abs=0.001)
        # The second photon is always emitted after the first one.
        re_mask = batch.origin == Origin.QD_REEXCITE
        re_pulses = batch.pulse_index[re_mask]
        first_by_pulse = {}
        for pulse, t, origin in zip(batch.pulse_index, batch.emit_time_ps, batch.origin):
            if origin == Origin.QD_FIRST:
                first_by_pulse[pulse] = t
        for pulse, t in zip(re_pulses[:500], batch.emit_time_ps[re_mask][:500]):
            assert t > first_by_pulse[pulse]

    def test_laser_leak_events(self):
        src = trion_source(100.0, brightness_first_lens=0.0)
        setup = SetupParams(laser_leak_per_pulse=0.05)
        batch = simulate_pulse_train(RngSpec(25, 0), src, setup, 200_000)
        n_leak = int(np.count_nonzero(batch.origin == Origin.LASER))
        assert n_leak == pytest.approx(10_000, abs=400)
        leak_times = batch.emit_time_ps[batch.origin == Origin.LASER]
        assert np.std(leak_times) == pytest.approx(15.0 / 2.35482, rel=0.05)

    def test_deterministic_and_thread_invariant(self):
        n = 3 * CHUNK_PULSES + 1234
        a = simulate_pulse_train(RngSpec(77, 3), S11, SetupParams(), n, threads=1)
        b = simulate_pulse_train(RngSpec(77, 3), S11, SetupParams(), n, threads=4)
        assert np.array_equal(a.pulse_index, b.pulse_index)
        assert np.array_equal(a.emit_time_ps, b.emit_time_ps)
        assert np.array_equal(a.origin, b.origin)
        c = simulate_pulse_train(RngSpec(77, 4), S11, SetupParams(), n)
        assert not np.array_equal(a.emit_time_ps, c.emit_time_ps)

    def test_events_sorted_by_pulse(self):
        batch = simulate_pulse_train(RngSpec(26, 0), S7, SetupParams(), 100_000)
        assert np.all(np.diff(batch.pulse_index) >= 0)


class TestHbtStreams:
    def test_one_click_per_pulse_balanced_channels(self, ideal_setup):
        n = 1_000_000
        batch = single_photon_batch(n)
        t0, t1 = hbt_streams(RngSpec(31, 0), batch, ideal_setup, n)
        assert t0.size + t1.size == n
        assert t0.size / n == pytest.approx(0.5, abs=0.002)

    def test_two_photons_split_half_the_time(self, ideal_setup):
        from qdbench.photon_sim import EventBatch

        n = 200_000
        pulse = np.repeat(np.arange(n, dtype=np.int64), 2)
        batch = EventBatch(pulse, np.zeros(2 * n), np.zeros(2 * n, dtype=np.int8), n)
        t0, t1 = hbt_streams(RngSpec(32, 0), batch, ideal_setup, n)
        period = ideal_setup.rep_period_ps
        c0 = np.bincount(np.rint(t0 / period).astype(int), minlength=n)
        c1 = np.bincount(np.rint(t1 / period).astype(int), minlength=n)
        split = np.count_nonzero((c0 == 1) & (c1 == 1)) / n
        assert split == pytest.approx(0.5, abs=0.005)

    def test_jitter_width(self):
        setup = SetupParams(eta_setup=1.0, eta_det=1.0, jitter_fwhm_ps=53.0)
        n = 200_000
        batch = single_photon_batch(n)
        t0, t1 = hbt_streams(RngSpec(33, 0), batch, setup, n)
        period = setup.rep_period_ps
        residual = np.concatenate([t0, t1])
        residual -= np.rint(residual / period) * period
        assert np.std(residual) == pytest.approx(22.507, rel=0.02)

    def test_streams_globally_sorted(self):
        batch = simulate_pulse_train(RngSpec(34, 0), S11, SetupParams(), 100_000)
        t0, t1 = hbt_streams(RngSpec(34, 1), batch, SetupParams(), 100_000)
        assert np.all(np.diff(t0) >= 0)
        assert np.all(np.diff(t1) >= 0)

    def test_accepts_plain_event_records(self, ideal_setup):
        from qdbench.photon_sim import PhotonEvent

        events = [PhotonEvent(k, 10.0 * k, Origin.QD_FIRST) for k in range(1000)]
        t0, t1 = hbt_streams(RngSpec(37, 0), events, ideal_setup, 1000)
        assert t0.size + t1.size == 1000

    def test_thinning_composition_matches_single_stage(self):
        # One-stage thinning at eta_setup*eta_det versus explicit two-stage
        # thinning must give the same per-pulse click distribution.
        n = 1_000_000
        setup_single = SetupParams(eta_setup=0.40, eta_det=0.30, jitter_fwhm_ps=0.0)
        setup_second = SetupParams(eta_setup=1.0, eta_det=0.30, jitter_fwhm_ps=0.0)
        src = trion_source(150.0, brightness_first_lens=0.3, p_two_photon=0.01)
        batch = simulate_pulse_train(RngSpec(35, 0), src, setup_single, n)
        a0, a1 = hbt_streams(RngSpec(35, 1), batch, setup_single, n)

        keep = RngSpec(35, 2).generator().random(len(batch)) < 0.40
        from qdbench.photon_sim import EventBatch

        pre = EventBatch(batch.pulse_index[keep], batch.emit_time_ps[keep],
                         batch.origin[keep], n)
        b0, b1 = hbt_streams(RngSpec(35, 3), pre, setup_second, n)

        period = setup_single.rep_period_ps
        table = []
        for t0, t1 in ((a0, a1), (b0, b1)):
            per_pulse = np.bincount(
                np.concatenate([np.rint(t0 / period).astype(int), np.rint(t1 / period).astype(int)]),
                minlength=n,
            )
            table.append([
                np.count_nonzero(per_pulse == 0),
                np.count_nonzero(per_pulse == 1),
                np.count_nonzero(per_pulse >= 2),
            ])
        _, p_value, _, _ = stats.chi2_contingency(np.array(table))
        assert p_value > 0.01

    def test_dark_counts_added(self, ideal_setup):
        setup = SetupParams(eta_setup=1.0, eta_det=1.0, jitter_fwhm_ps=0.0,
                            dark_rate_cps=100_000.0)
        src = trion_source(100.0, brightness_first_lens=0.0)
        batch = simulate_pulse_train(RngSpec(36, 0), src, setup, 1_000_000)
        t0, t1 = hbt_streams(RngSpec(36, 1), batch, setup, 1_000_000)
        duration_s = 1_000_000 * setup.rep_period_ps * 1e-12
        expect = 100_000.0 * duration_s
        assert t0.size == pytest.approx(expect, abs=4 * math.sqrt(expect))
        assert t1.size == pytest.approx(expect, abs=4 * math.sqrt(expect))


class TestHomStreams:
    def test_perfect_overlap_empties_zero_delay_peak(self, clean_setup):
        n = 500_000
        batch = single_photon_batch(n)
        t0, t1 = hom_streams(RngSpec(41, 0), batch, clean_setup, overlap=1.0, n_pulses=n)
        # Zero-delay coincidences: cross-channel pairs within +-2 ns.
        lo = np.searchsorted(t1, t0 - 2000.0)
        hi = np.searchsorted(t1, t0 + 2000.0)
        assert int(np.sum(hi - lo)) == 0

    def test_zero_overlap_gives_zero_visibility(self, clean_setup):
        from qdbench.correlation import build_histogram, hom_visibility

        n = 1_000_000
        batch = single_photon_batch(n)
        t0, t1 = hom_streams(RngSpec(42, 0), batch, clean_setup, overlap=0.0, n_pulses=n)
        period = clean_setup.rep_period_ps
        hist = build_histogram(t0, t1, 100.0, 10.5 * period, period)
        vis = hom_visibility(hist)
        a0 = vis.zero_area / vis.side_mean
        assert a0 == pytest.approx(0.5, abs=0.01)
        assert vis.value == pytest.approx(0.0, abs=0.02)

    def test_laser_leak_never_coalesces(self, clean_setup):
        from qdbench.correlation import build_histogram, integrate_peaks

        n = 1_000_000
        setup = SetupParams(eta_setup=1.0, eta_det=1.0, jitter_fwhm_ps=53.0,
                            laser_leak_per_pulse=0.2)
        src = trion_source(150.0, brightness_first_lens=0.3)
        batch = simulate_pulse_train(RngSpec(43, 0), src, setup, n)
        t0, t1 = hom_streams(RngSpec(43, 1), batch, setup, overlap=1.0, n_pulses=n)
        period = setup.rep_period_ps
        hist = build_histogram(t0, t1, 100.0, 10.5 * period, period)
        zero = integrate_peaks(hist, 2000.0, [0])[0].area
        # Perfect overlap removes QD-QD zero-delay pairs, so everything
        # left comes from the classical leak light.
        assert zero > 0

    def test_invalid_overlap_rejected(self, clean_setup):
        with pytest.raises(ValueError):
            hom_streams(RngSpec(1, 0), single_photon_batch(10), clean_setup, overlap=1.5)

    def test_deterministic(self, clean_setup):
        n = 200_000
        batch = simulate_pulse_train(RngSpec(44, 0), S11, clean_setup, n)
        a = hom_streams(RngSpec(44, 1), batch, clean_setup, 0.9, n)
        b = hom_streams(RngSpec(44, 1), batch, clean_setup, 0.9, n)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_ideal_photon_overlap_round_trip(self, clean_setup):
        # With pure single photons the corrected overlap must reproduce the
        # overlap fed into the interferometer model.
        from qdbench.correlation import (
            build_histogram,
            corrected_overlap,
            g2_zero,
            hom_visibility,
        )

        n = 1_000_000
        src = trion_source(S11_TAU_PS, brightness_first_lens=0.25)
        period = clean_setup.rep_period_ps
        ev = simulate_pulse_train(RngSpec(45, 0), src, clean_setup, n)
        a, b = hbt_streams(RngSpec(45, 1), ev, clean_setup, n)
        g2 = g2_zero(build_histogram(a, b, 100.0, 10.5 * period, period))
        ev2 = simulate_pulse_train(RngSpec(45, 2), src, clean_setup, n)
        c, d = hom_streams(RngSpec(45, 3), ev2, clean_setup, 0.85, n)
        vis = hom_visibility(build_histogram(c, d, 100.0, 10.5 * period, period))
        m = corrected_overlap(vis.value, g2.value)
        sigma = math.hypot(vis.std_err, 2 * g2.std_err)
        assert abs(m.value - 0.85) < 3 * sigma

    def test_adjacent_side_peaks_suppressed(self, clean_setup):
        # The interferometer pairing removes one photon-pair combination
        # between adjacent slots, suppressing the |k| = 1 peaks to ~3/4 of
        # the uncorrelated side peaks; that is why they sit outside the
        # default normalization set.
        from qdbench.correlation import build_histogram, integrate_peaks

        n = 1_000_000
        batch = single_photon_batch(n)
        t0, t1 = hom_streams(RngSpec(46, 0), batch, clean_setup, overlap=0.5, n_pulses=n)
        period = clean_setup.rep_period_ps
        hist = build_histogram(t0, t1, 100.0, 10.5 * period, period)
        areas = {
            p.peak_index: p.area
            for p in integrate_peaks(hist, 2000.0, [-3, -2, -1, 1, 2, 3])
        }
        near = 0.5 * (areas[1] + areas[-1])
        far = 0.25 * (areas[2] + areas[-2] + areas[3] + areas[-3])
        assert near / far == pytest.approx(0.75, abs=0.02)
