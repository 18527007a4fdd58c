import dataclasses
import math

import numpy as np
import pytest

import doqkd as dq
from doqkd.errors import CalibrationError, ConfigError
from doqkd.simulate import (FWHM_PER_SIGMA, CalibrationTargets, ChannelModel,
                            DetectorModel, DispersiveBasis, SimConfig,
                            SourceModel, beta_from_dispersion, calibrate,
                            dispersive_shift, dispersion_spread_ps,
                            jitter_sigma_for_fwhm, paper_default_config,
                            simulate_session)
from doqkd.timetags import Channel, Party, coincidence_histogram, fwhm


def small_cfg(**kw):
    cfg = paper_default_config()
    cfg.duration_s = kw.pop("duration_s", 0.2)
    cfg.baseline_duration_s = cfg.duration_s
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg


class TestModels:
    def test_source_validation(self):
        with pytest.raises(ConfigError):
            SourceModel(0.0, 1e11)
        with pytest.raises(ConfigError):
            SourceModel(1e6, -1.0)
        SourceModel(1e6, 0.0)  # degenerate spectrum is allowed

    def test_channel_validation(self):
        with pytest.raises(ConfigError):
            ChannelModel(0.0, 1.0)

    def test_detector_validation(self):
        with pytest.raises(ConfigError):
            DetectorModel(1.5, 50.0)

    def test_config_roundtrip(self, tmp_path):
        cfg = paper_default_config()
        p = tmp_path / "cfg.json"
        cfg.save(p)
        back = SimConfig.load(p)
        assert back.to_dict() == cfg.to_dict()

    def test_missing_key_rejected(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"duration_s": 1.0}')
        with pytest.raises(ConfigError):
            SimConfig.load(p)


class TestDispersiveShift:
    def test_zero_detuning(self):
        basis = DispersiveBasis.from_dispersion(1800.0)
        assert dispersive_shift(0.0, basis, Party.ALICE) == 0.0

    def test_party_antisymmetry(self):
        basis = DispersiveBasis.from_dispersion(1800.0)
        omega = 3.7e10
        assert dispersive_shift(omega, basis, Party.ALICE) == pytest.approx(
            -dispersive_shift(omega, basis, Party.BOB))

    def test_beta_magnitude(self):
        # 1800 ps/nm at 1550 nm: known group-delay coefficient
        assert beta_from_dispersion(1800.0, 1550.0) == pytest.approx(2.2958e-9,
                                                                     rel=1e-4)


class TestSimulateSession:
    def test_no_efficiency_no_darks_empty(self):
        cfg = small_cfg()
        cfg.detectors = {c: DetectorModel(0.0, 45.0, 0.0) for c in cfg.detectors}
        tags = simulate_session(cfg)
        assert tags.total_tags == 0

    def test_darks_only_poisson(self):
        cfg = small_cfg(duration_s=10.0)
        cfg.source = dataclasses.replace(cfg.source, pair_rate_hz=1e-9)
        cfg.detectors = {c: DetectorModel(0.0, 45.0, 100.0) for c in cfg.detectors}
        tags = simulate_session(cfg)
        for ch in Channel:
            n = len(tags.stream(ch))
            assert abs(n - 1000) < 100  # ~3 sigma
            assert not (tags.stream(ch).pair_ids >= 0).any()

    def test_same_seed_bit_identical(self):
        a = simulate_session(small_cfg())
        b = simulate_session(small_cfg())
        for ch in Channel:
            np.testing.assert_array_equal(a.stream(ch).times, b.stream(ch).times)
            np.testing.assert_array_equal(a.stream(ch).pair_ids,
                                          b.stream(ch).pair_ids)

    def test_different_seed_differs(self):
        a = simulate_session(small_cfg())
        b = simulate_session(small_cfg(seed=1))
        assert len(a.t1) != len(b.t1) or not np.array_equal(a.t1.times, b.t1.times)

    def test_singles_ratios_match_targets(self):
        tags = simulate_session(small_cfg(duration_s=0.5))
        r = tags.singles_rates_hz()
        assert r["F1"] / r["T1"] == pytest.approx(321 / 554, rel=0.02)
        assert r["F2"] / r["T2"] == pytest.approx(245 / 315, rel=0.02)
        assert r["T2"] / r["T1"] == pytest.approx(315 / 554, rel=0.02)

    def test_truth_annotations_identify_pairs(self):
        tags = simulate_session(small_cfg())
        t1, t2 = tags.t1, tags.t2
        ids1 = {int(i): k for k, i in enumerate(t1.pair_ids) if i >= 0}
        common = [(k, j) for j, i in enumerate(t2.pair_ids)
                  if int(i) in ids1 for k in [ids1[int(i)]]]
        assert len(common) > 100
        k, j = common[0]
        # paired photons share the emission time and have opposite detunings
        assert t1.emit_times[k] == t2.emit_times[j]
        corr = np.corrcoef(
            [float(t1.detunings[k]) for k, j in common[:1000]],
            [float(t2.detunings[j]) for k, j in common[:1000]])[0, 1]
        assert corr < -0.9

    def test_tt_fwhm_independent_of_beta_d(self):
        cfg = small_cfg(duration_s=0.5)
        tags1 = simulate_session(cfg)
        cfg2 = small_cfg(duration_s=0.5)
        cfg2.basis = DispersiveBasis(cfg2.basis.dispersion_ps_per_nm,
                                     cfg2.basis.beta_d_ps_per_rad_s * 2)
        tags2 = simulate_session(cfg2)
        h1 = coincidence_histogram(tags1.t1, tags1.t2, 30, (-3840, 3840))
        h2 = coincidence_histogram(tags2.t1, tags2.t2, 30, (-3840, 3840))
        assert fwhm(h1) == pytest.approx(fwhm(h2), rel=0.05)

    def test_dispersion_cancellation_and_residual_broadening(self):
        widths = []
        for resid in (0.0, 300.0, 600.0):
            cfg = small_cfg(duration_s=0.4)
            cfg.channel = dataclasses.replace(
                cfg.channel, residual_dispersion_ps_per_nm=resid,
                eve_time_sigma_ps=0.0, eve_freq_sigma_rad_s=0.0)
            tags = simulate_session(cfg)
            h = coincidence_histogram(tags.f1, tags.f2, 30, (-3840, 3840))
            widths.append(fwhm(h))
        tt = 150.0
        assert widths[0] == pytest.approx(tt * math.sqrt(1.10), rel=0.12)
        assert widths[0] < widths[1] < widths[2]

    def test_exact_anticorrelation_restores_tt_width(self):
        # perfectly opposite coefficients + perfectly anti-correlated
        # detunings: the freq/freq peak equals the time/time peak
        cfg = small_cfg(duration_s=0.4)
        cfg.source = dataclasses.replace(cfg.source,
                                         correlation_break_sigma_rad_s=0.0)
        cfg.channel = dataclasses.replace(cfg.channel, eve_time_sigma_ps=0.0,
                                          eve_freq_sigma_rad_s=0.0)
        tags = simulate_session(cfg)
        h_tt = coincidence_histogram(tags.t1, tags.t2, 30, (-3840, 3840))
        h_ff = coincidence_histogram(tags.f1, tags.f2, 30, (-3840, 3840))
        assert fwhm(h_ff) == pytest.approx(fwhm(h_tt), rel=0.05)

    def test_accidental_floor_matches_rate_product(self):
        cfg = small_cfg(duration_s=0.5)
        tags = simulate_session(cfg)
        h = coincidence_histogram(tags.t1, tags.t2, 30, (-3840, 3840))
        counts = h.counts.astype(float)
        centers = h.bin_centers()
        floor = counts[np.abs(centers) > 1000].mean()
        expect = tags.t1.rate_hz * tags.t2.rate_hz * 30e-12 * cfg.duration_s
        sigma = math.sqrt(expect / np.count_nonzero(np.abs(centers) > 1000))
        assert abs(floor - expect) < 5 * sigma

    def test_propagation_delay_shifts_bob(self):
        cfg = small_cfg()
        cfg.channel = dataclasses.replace(cfg.channel, propagation_delay_ps=123_456)
        tags = simulate_session(cfg)
        ref = simulate_session(small_cfg())
        # same pairs, shifted arrivals (tail drops aside)
        assert abs(len(tags.t2) - len(ref.t2)) < 200
        h = coincidence_histogram(ref.t2, tags.t2, 2, (123_450, 123_462))
        assert h.counts.sum() > 0.9 * min(len(tags.t2), len(ref.t2))


class TestCalibrate:
    def test_jitter_formula(self):
        sig = jitter_sigma_for_fwhm(150.0)
        assert sig == pytest.approx(150.0 / FWHM_PER_SIGMA / math.sqrt(2))
        assert sig == pytest.approx(45.04, abs=0.01)

    def test_quadrature_subtraction(self):
        spread = dispersion_spread_ps(150.0, 900.0)
        assert spread == pytest.approx(math.sqrt(900**2 - 150**2) / FWHM_PER_SIGMA)

    def test_equal_targets_zero_spread(self):
        assert dispersion_spread_ps(200.0, 200.0) == 0.0

    def test_unattainable_rejected(self):
        with pytest.raises(CalibrationError):
            dispersion_spread_ps(900.0, 150.0)
        with pytest.raises(CalibrationError):
            calibrate(CalibrationTargets(tt_fwhm_ps=900.0, cross_fwhm_ps=150.0))

    def test_bundled_config_matches_calibration(self):
        cfg = calibrate()
        bundled = paper_default_config()
        assert cfg.source.pair_rate_hz == pytest.approx(
            bundled.source.pair_rate_hz, rel=1e-9)
        for c in cfg.detectors:
            assert cfg.detectors[c].efficiency == pytest.approx(
                bundled.detectors[c].efficiency, rel=1e-9)

    def test_calibrated_widths_within_5pct(self):
        cfg = calibrate(refine_iterations=1)
        cfg.duration_s = 0.5
        cfg.baseline_duration_s = 0.5
        cfg.channel = ChannelModel(cfg.channel.alice_transmission,
                                   cfg.channel.bob_transmission)
        tags = simulate_session(cfg)
        h_tt = coincidence_histogram(tags.t1, tags.t2, 30, (-3840, 3840))
        h_tf = coincidence_histogram(tags.t1, tags.f2, 30, (-3840, 3840))
        assert fwhm(h_tt) == pytest.approx(150.0, rel=0.05)
        assert fwhm(h_tf) == pytest.approx(900.0, rel=0.05)

    def test_chunking_is_canonical(self):
        # durations that differ only by trailing time agree on the prefix
        c1 = small_cfg(duration_s=0.3)
        c2 = small_cfg(duration_s=0.55)
        a = simulate_session(c1)
        b = simulate_session(c2)
        cut = np.searchsorted(b.t1.times, c1.duration_ps)
        np.testing.assert_array_equal(a.t1.times, b.t1.times[:cut])
