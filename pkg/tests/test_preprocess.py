import numpy as np
import pytest

from eegmci.dataio import CANONICAL_CHANNELS, EegRecording, Label
from eegmci.preprocess import (Contig, balance_classes, bandpass,
                               bandpass_gain, extract_contigs,
                               apply_feature_norm, apply_norm,
                               fit_feature_norm, fit_norm, resample)


def make_rec(samples, fs=200.0, mask=None, pid="p", label=Label.CONTROL):
    samples = np.atleast_2d(samples)
    if samples.shape[0] != 17:
        samples = np.tile(samples, (17, 1))
    if mask is None:
        mask = np.zeros(samples.shape[1], dtype=bool)
    return EegRecording(patient_id=pid, label=label, sampling_rate_hz=fs,
                        channel_names=CANONICAL_CHANNELS, samples=samples,
                        artifact_mask=mask)


def sine(freq, fs, n, amp=1.0):
    return amp * np.sin(2 * np.pi * freq * np.arange(n) / fs)


class TestBandpass:
    def test_zero_in_zero_out(self):
        rec = bandpass(make_rec(np.zeros((17, 400))), 5, 20)
        np.testing.assert_allclose(rec.samples, 0.0, atol=1e-12)
        assert rec.n_samples == 400

    def test_passband_tone_retained(self):
        # Oracle: designed forward-backward response at 10 Hz.
        gain = bandpass_gain(5, 20, 200.0, [10.0])[0]
        assert 0.7 <= gain <= 1.0
        rec = bandpass(make_rec(sine(10, 200, 2000)), 5, 20)
        mid = slice(500, 1500)
        measured = np.abs(rec.samples[0, mid]).max()
        assert 0.7 <= measured <= 1.0 + 1e-6
        assert abs(measured - gain) < 0.02

    def test_stopband_tone_attenuated_20db(self):
        gain = bandpass_gain(5, 20, 200.0, [1.0])[0]
        assert 20 * np.log10(gain) <= -20.0
        rec = bandpass(make_rec(sine(1, 200, 4000)), 5, 20)
        mid = slice(1000, 3000)
        assert np.abs(rec.samples[0, mid]).max() <= 10 ** (-20 / 20)

    def test_band_edge_validation(self):
        rec = make_rec(np.zeros((17, 100)))
        for lo, hi in [(0, 20), (20, 5), (5, 120)]:
            with pytest.raises(ValueError):
                bandpass(rec, lo, hi)

    def test_linearity(self, rng):
        x = rng.standard_normal((17, 600))
        y = rng.standard_normal((17, 600))
        fa = bandpass(make_rec(2.5 * x - 1.5 * y), 5, 20).samples
        fb = (2.5 * bandpass(make_rec(x), 5, 20).samples
              - 1.5 * bandpass(make_rec(y), 5, 20).samples)
        np.testing.assert_allclose(fa, fb, rtol=1e-9, atol=1e-12)

    def test_mask_unchanged(self):
        mask = np.zeros(400, dtype=bool)
        mask[10:40] = True
        rec = bandpass(make_rec(np.ones((17, 400)), mask=mask), 5, 20)
        np.testing.assert_array_equal(rec.artifact_mask, mask)


class TestResample:
    def test_length_arithmetic(self):
        rec = make_rec(np.zeros((17, 250)), fs=250.0)
        out = resample(rec, 200.0)
        assert out.n_samples == 200
        assert out.sampling_rate_hz == 200.0

    def test_constant_preserved(self):
        rec = make_rec(np.full((17, 250), 3.25), fs=250.0)
        out = resample(rec, 200.0)
        np.testing.assert_allclose(out.samples, 3.25, rtol=1e-12)

    def test_linear_ramp_exact(self):
        t = np.arange(250) / 250.0
        rec = make_rec(np.tile(t, (17, 1)), fs=250.0)
        out = resample(rec, 200.0)
        np.testing.assert_allclose(out.samples[0], np.arange(200) / 200.0,
                                   atol=1e-12)

    def test_upsampling_rejected(self):
        with pytest.raises(ValueError, match="above"):
            resample(make_rec(np.zeros((17, 100))), 400.0)

    def test_mask_conservative(self):
        mask = np.zeros(250, dtype=bool)
        mask[100] = True
        rec = make_rec(np.zeros((17, 250)), fs=250.0, mask=mask)
        out = resample(rec, 200.0)
        assert out.artifact_mask.any()
        # the masked source instant (t=0.4 s) must be covered
        assert out.artifact_mask[80] or out.artifact_mask[79]
        clean = resample(make_rec(np.zeros((17, 250)), fs=250.0), 200.0)
        assert not clean.artifact_mask.any()


class TestExtractContigs:
    def test_clean_run_non_overlapping(self):
        contigs = extract_contigs(make_rec(np.zeros((17, 1000))), 200)
        assert [c.source_offset_samples for c in contigs] == [0, 200, 400, 600, 800]
        assert all(c.data.shape == (17, 200) for c in contigs)

    def test_short_recording(self):
        assert len(extract_contigs(make_rec(np.zeros((17, 399))), 200)) == 1
        assert len(extract_contigs(make_rec(np.zeros((17, 199))), 200)) == 0

    def test_masked_prefix(self):
        mask = np.zeros(400, dtype=bool)
        mask[:200] = True
        contigs = extract_contigs(make_rec(np.zeros((17, 400)), mask=mask), 200)
        assert [c.source_offset_samples for c in contigs] == [200]

    def test_contig_purity_and_count_bound(self, rng):
        for trial in range(20):
            n = int(rng.integers(200, 1500))
            mask = rng.random(n) < 0.02
            rec = make_rec(rng.standard_normal((17, n)), mask=mask)
            contigs = extract_contigs(rec, 100)
            assert len(contigs) <= n // 100
            for c in contigs:
                o = c.source_offset_samples
                assert not mask[o:o + 100].any()

    def test_invalid_length(self):
        with pytest.raises(ValueError):
            extract_contigs(make_rec(np.zeros((17, 100))), 0)


def make_contigs(rng, n=8, length=50, label=Label.CONTROL, pid="p"):
    return [Contig(patient_id=f"{pid}{i}", label=label,
                   data=rng.standard_normal((17, length)) * 3.0 + 1.0,
                   source_offset_samples=0) for i in range(n)]


class TestNormalization:
    def test_meanstd_zeroes_training_stats(self, rng):
        contigs = make_contigs(rng)
        stats = fit_norm(contigs, "meanstd")
        normed = apply_norm(contigs, stats)
        stacked = np.concatenate([c.data for c in normed], axis=1)
        np.testing.assert_allclose(stacked.mean(axis=1), 0.0, atol=1e-6)
        np.testing.assert_allclose(stacked.std(axis=1), 1.0, atol=1e-6)

    def test_none_is_identity(self, rng):
        contigs = make_contigs(rng)
        normed = apply_norm(contigs, fit_norm(contigs, "none"))
        np.testing.assert_array_equal(normed[0].data, contigs[0].data)

    def test_minmax_unit_range_on_train_only(self, rng):
        contigs = make_contigs(rng)
        stats = fit_norm(contigs, "minmax")
        stacked = np.concatenate([c.data for c in apply_norm(contigs, stats)], axis=1)
        assert stacked.min() >= 0.0 and stacked.max() <= 1.0
        outlier = [Contig("q", Label.MCI, np.full((17, 50), 100.0), 0)]
        outside = apply_norm(outlier, stats)[0].data
        assert outside.max() > 1.0  # held-out values may leave [0, 1]

    def test_zero_variance_channel_rejected(self):
        flat = [Contig("p", Label.CONTROL, np.zeros((17, 50)), 0)]
        with pytest.raises(ValueError, match="variance"):
            fit_norm(flat, "meanstd")
        with pytest.raises(ValueError, match="range"):
            fit_norm(flat, "minmax")

    def test_refit_on_normalized_is_standard(self, rng):
        contigs = make_contigs(rng)
        once = apply_norm(contigs, fit_norm(contigs, "meanstd"))
        stats2 = fit_norm(once, "meanstd")
        np.testing.assert_allclose(stats2.loc, 0.0, atol=1e-6)
        np.testing.assert_allclose(stats2.scale, 1.0, atol=1e-6)

    def test_unknown_mode(self, rng):
        with pytest.raises(ValueError, match="mode"):
            fit_norm(make_contigs(rng), "robust")

    def test_feature_norm_matches_definition(self, rng):
        feats = rng.gamma(2.0, 1.0, size=(40, 442))
        stats = fit_feature_norm(feats, "meanstd")
        z = apply_feature_norm(feats, stats)
        np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-9)


class TestBalance:
    def _mixed(self, rng, n0, n1):
        a = make_contigs(rng, n=n0, label=Label.CONTROL, pid="c")
        b = make_contigs(rng, n=n1, label=Label.MCI, pid="m")
        return a + b

    def test_downsamples_majority(self, rng):
        balanced = balance_classes(self._mixed(rng, 100, 60), seed=3)
        labels = [c.label.is_condition for c in balanced]
        assert sum(labels) == 60 and len(labels) == 120

    def test_already_balanced_unchanged(self, rng):
        contigs = self._mixed(rng, 5, 5)
        balanced = balance_classes(contigs, seed=3)
        assert [c.patient_id for c in balanced] == [c.patient_id for c in contigs]

    def test_deterministic(self, rng):
        contigs = self._mixed(rng, 30, 10)
        ids1 = [c.patient_id for c in balance_classes(contigs, seed=9)]
        ids2 = [c.patient_id for c in balance_classes(contigs, seed=9)]
        assert ids1 == ids2

    def test_single_class_rejected(self, rng):
        with pytest.raises(ValueError):
            balance_classes(make_contigs(rng, n=4), seed=0)
