import numpy as np
import pytest

from eegmci import dataio
from eegmci.dataio import (CANONICAL_CHANNELS, CohortDataset, DataFormatError,
                           EegRecording, Label, SynthConfig,
                           generate_synthetic, read_dataset,
                           validate_recording, write_dataset)
from eegmci.preprocess import extract_contigs
from eegmci.spectral import feature_matrix

ALPHA_COLUMNS = [c * 26 + 6 for c in range(17)]  # band [10, 11) per channel


def make_recording(pid="p0", n=500, fs=200.0, label=Label.CONTROL, seed=0):
    r = np.random.default_rng(seed)
    return EegRecording(
        patient_id=pid,
        label=label,
        sampling_rate_hz=fs,
        channel_names=CANONICAL_CHANNELS,
        samples=r.standard_normal((17, n)).astype(np.float32),
        artifact_mask=np.zeros(n, dtype=bool),
    )


class TestRoundTrip:
    def test_write_read_identity(self, tiny_cohort, tmp_path):
        write_dataset(tiny_cohort, tmp_path)
        back = read_dataset(tmp_path)
        assert back.patient_ids() == tiny_cohort.patient_ids()
        for a, b in zip(tiny_cohort.recordings, back.recordings):
            assert a.label is b.label
            assert a.sampling_rate_hz == b.sampling_rate_hz
            assert b.channel_names == CANONICAL_CHANNELS
            np.testing.assert_array_equal(a.samples.astype(np.float32), b.samples)
            np.testing.assert_array_equal(a.artifact_mask, b.artifact_mask)

    def test_empty_dataset_manifest_header_only(self, tmp_path):
        write_dataset(CohortDataset(name="empty"), tmp_path)
        lines = (tmp_path / "manifest.csv").read_text().strip().splitlines()
        assert lines == ["patient_id,label,sampling_rate_hz,n_channels,n_samples,file"]
        assert len(read_dataset(tmp_path)) == 0

    def test_mask_round_trip(self, tmp_path):
        rec = make_recording()
        rec.artifact_mask[100:300] = True
        write_dataset(CohortDataset(name="m", recordings=[rec]), tmp_path)
        assert (tmp_path / "p0.eeg.mask").is_file()
        back = read_dataset(tmp_path)
        np.testing.assert_array_equal(back.recordings[0].artifact_mask,
                                      rec.artifact_mask)

    def test_missing_mask_reads_all_false(self, tmp_path):
        write_dataset(CohortDataset(name="m", recordings=[make_recording()]),
                      tmp_path)
        assert not (tmp_path / "p0.eeg.mask").exists()
        assert not read_dataset(tmp_path).recordings[0].artifact_mask.any()


class TestFormatErrors:
    def test_truncated_signal_file_names_file(self, tmp_path):
        write_dataset(CohortDataset(name="t", recordings=[make_recording()]),
                      tmp_path)
        blob = (tmp_path / "p0.eeg").read_bytes()
        (tmp_path / "p0.eeg").write_bytes(blob[:-4])
        with pytest.raises(DataFormatError, match="p0.eeg"):
            read_dataset(tmp_path)

    def test_unknown_label_rejected(self, tmp_path):
        write_dataset(CohortDataset(name="t", recordings=[make_recording()]),
                      tmp_path)
        manifest = (tmp_path / "manifest.csv").read_text()
        (tmp_path / "manifest.csv").write_text(manifest.replace("control", "healthy"))
        with pytest.raises(DataFormatError, match="label"):
            read_dataset(tmp_path)

    def test_label_parse_case_insensitive(self):
        assert Label.parse("MCI") is Label.MCI
        assert Label.parse(" Dementia ") is Label.DEMENTIA
        assert Label.parse("CONTROL") is Label.CONTROL

    def test_malformed_manifest_row(self, tmp_path):
        write_dataset(CohortDataset(name="t", recordings=[make_recording()]),
                      tmp_path)
        with open(tmp_path / "manifest.csv", "a") as fh:
            fh.write("p1,control,not_a_number,17,500,p1.eeg\n")
        with pytest.raises(DataFormatError, match="malformed"):
            read_dataset(tmp_path)

    def test_channel_list_must_cover_canonical(self, tmp_path):
        write_dataset(CohortDataset(name="t", recordings=[make_recording()]),
                      tmp_path)
        stored = (tmp_path / "channels.txt").read_text().splitlines()
        (tmp_path / "channels.txt").write_text("\n".join(stored[:-1]) + "\n")
        with pytest.raises(DataFormatError, match="O2"):
            read_dataset(tmp_path)

    def test_extra_channels_dropped_and_reordered(self, tmp_path):
        # A 19-channel file in shuffled storage order: the reader must pick
        # out and reorder the canonical 17.
        stored = ["T5", "T6"] + list(reversed(CANONICAL_CHANNELS))
        r = np.random.default_rng(3)
        samples = r.standard_normal((19, 100)).astype(np.float32)
        (tmp_path / "channels.txt").write_text("\n".join(stored) + "\n")
        (tmp_path / "manifest.csv").write_text(
            "patient_id,label,sampling_rate_hz,n_channels,n_samples,file\n"
            "x,mci,250.0,19,100,x.eeg\n"
        )
        dataio._write_signal_file(tmp_path / "x.eeg", samples)
        rec = read_dataset(tmp_path).recordings[0]
        assert rec.channel_names == CANONICAL_CHANNELS
        assert rec.n_channels == 17
        for i, name in enumerate(CANONICAL_CHANNELS):
            np.testing.assert_array_equal(rec.samples[i], samples[stored.index(name)])


class TestValidateRecording:
    def test_valid(self):
        assert validate_recording(make_recording()) == []

    def test_mask_length_mismatch(self):
        rec = make_recording()
        rec.artifact_mask = np.zeros(10, dtype=bool)
        problems = validate_recording(rec)
        assert len(problems) == 1 and "mask" in problems[0]

    def test_nan_sample_names_channel_and_index(self):
        rec = make_recording()
        rec.samples[4, 123] = np.nan
        problems = validate_recording(rec)
        assert len(problems) == 1
        assert "Fz" in problems[0] and "123" in problems[0]

    def test_nonpositive_rate(self):
        rec = make_recording()
        rec.sampling_rate_hz = 0.0
        assert any("sampling_rate" in p for p in validate_recording(rec))


class TestSynthConfig:
    def test_duration_invariant(self):
        with pytest.raises(ValueError, match="duration"):
            SynthConfig(n_patients_per_class=2, duration_s=1.0).validate()

    def test_artifact_fraction_invariant(self):
        with pytest.raises(ValueError, match="artifact_fraction"):
            SynthConfig(n_patients_per_class=2, artifact_fraction=1.0).validate()

    def test_negative_delta_rejected(self):
        with pytest.raises(ValueError, match="delta"):
            SynthConfig(n_patients_per_class=2, effect_size_delta=-1.0).validate()


def _patient_alpha_means(dataset):
    """Per-patient mean alpha-band power, grouped by class (the brute-force
    band-power oracle for class separation)."""
    out = {0: [], 1: []}
    for rec in dataset.recordings:
        contigs = extract_contigs(rec, 200)
        feats = feature_matrix(contigs, rec.sampling_rate_hz)
        out[1 if rec.label.is_condition else 0].append(
            feats[:, ALPHA_COLUMNS].mean()
        )
    return np.array(out[0]), np.array(out[1])


class TestGenerateSynthetic:
    def test_same_seed_bit_identical(self):
        cfg = SynthConfig(n_patients_per_class=2, duration_s=10.0, seed=7,
                          artifact_fraction=0.1)
        a = generate_synthetic(cfg)
        b = generate_synthetic(cfg)
        for ra, rb in zip(a.recordings, b.recordings):
            np.testing.assert_array_equal(ra.samples, rb.samples)
            np.testing.assert_array_equal(ra.artifact_mask, rb.artifact_mask)

    def test_different_seed_differs(self):
        base = dict(n_patients_per_class=2, duration_s=10.0)
        a = generate_synthetic(SynthConfig(seed=1, **base))
        b = generate_synthetic(SynthConfig(seed=2, **base))
        assert not np.array_equal(a.recordings[0].samples, b.recordings[0].samples)

    def test_valid_cohort(self, tiny_cohort):
        assert tiny_cohort.validate() == []
        assert len(tiny_cohort) == 8

    def test_artifact_mask_spans(self):
        cfg = SynthConfig(n_patients_per_class=1, duration_s=60.0,
                          artifact_fraction=0.2, seed=5)
        rec = generate_synthetic(cfg).recordings[0]
        frac = rec.artifact_mask.mean()
        assert 0.15 <= frac <= 0.35
        # spans are contiguous blocks of at least ~0.5 s
        edges = np.flatnonzero(np.diff(rec.artifact_mask.astype(int)))
        assert edges.size >= 2

    def test_domain_shift_is_pure_gain(self):
        base = dict(n_patients_per_class=1, duration_s=10.0, seed=9)
        a = generate_synthetic(SynthConfig(**base))
        b = generate_synthetic(SynthConfig(domain_shift=3.0, **base))
        np.testing.assert_allclose(b.recordings[0].samples,
                                   3.0 * a.recordings[0].samples, rtol=1e-5)

    def test_delta_zero_classes_indistinguishable(self):
        """Patient-label permutation test on contig alpha power: with
        delta=0 both classes follow the same law, so the observed class
        difference must be unremarkable under permutation (p > 0.01)."""
        cfg = SynthConfig(n_patients_per_class=25, duration_s=100.0, seed=322)
        ds = generate_synthetic(cfg)
        per_patient = []
        labels = []
        for rec in ds.recordings:
            contigs = extract_contigs(rec, 200)[:20]
            feats = feature_matrix(contigs, rec.sampling_rate_hz)
            per_patient.append(feats[:, ALPHA_COLUMNS].mean(axis=1))
            labels.append(1 if rec.label.is_condition else 0)
        per_patient = np.array(per_patient)  # 50 patients x 20 contigs
        labels = np.array(labels)
        assert per_patient.size == 1000
        observed = abs(per_patient[labels == 1].mean()
                       - per_patient[labels == 0].mean())
        perm_rng = np.random.default_rng(55)
        hits = 0
        n_perm = 2000
        for _ in range(n_perm):
            perm = perm_rng.permutation(labels)
            stat = abs(per_patient[perm == 1].mean()
                       - per_patient[perm == 0].mean())
            hits += stat >= observed
        p_value = (1 + hits) / (n_perm + 1)
        assert p_value > 0.01

    def test_delta_five_separates_by_three_pooled_stds(self):
        cfg = SynthConfig(n_patients_per_class=30, duration_s=100.0,
                          effect_size_delta=5.0, seed=321)
        a0, a1 = _patient_alpha_means(generate_synthetic(cfg))
        pooled = np.sqrt((a0.var(ddof=1) + a1.var(ddof=1)) / 2)
        assert (a1.mean() - a0.mean()) / pooled >= 3.0

    def test_alpha_separation_monotone_in_delta(self):
        # Fixed-seed spot check: the cohort must be large enough that the
        # delta=0 baseline noise sits below the delta=1 shift.
        diffs = []
        for delta in (0.0, 1.0, 5.0):
            cfg = SynthConfig(n_patients_per_class=25, duration_s=60.0,
                              effect_size_delta=delta, seed=321)
            a0, a1 = _patient_alpha_means(generate_synthetic(cfg))
            diffs.append(abs(a1.mean() - a0.mean()))
        assert diffs[0] <= diffs[1] <= diffs[2]
