"""Recording-to-contig preprocessing: zero-phase bandpass filtering,
resampling, artifact-aware segmentation, normalization, class balancing.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import signal

from .dataio import EegRecording, Label
from .seeding import substream


@dataclass(eq=False)
class Contig:
    """A fixed-length artifact-free segment, the unit of model input.

    ``data`` is [n_channels, length]; ``source_offset_samples`` is the
    window's start index in the source recording.
    """

    patient_id: str
    label: Label
    data: np.ndarray
    source_offset_samples: int

    @property
    def length(self) -> int:
        return self.data.shape[1]


def bandpass(rec: EegRecording, low_hz: float, high_hz: float) -> EegRecording:
    """Zero-phase 4th-order Butterworth band-pass, applied forward and
    backward per channel. Output length equals input length; the artifact
    mask is unchanged.
    """
    nyquist = rec.sampling_rate_hz / 2.0
    if not 0.0 < low_hz < high_hz < nyquist:
        raise ValueError(
            f"band edges ({low_hz}, {high_hz}) must satisfy "
            f"0 < low < high < {nyquist} (Nyquist)"
        )
    sos = butter_bandpass_sos(low_hz, high_hz, rec.sampling_rate_hz)
    filtered = signal.sosfiltfilt(sos, rec.samples, axis=1)
    return replace(rec, samples=filtered)


def butter_bandpass_sos(low_hz: float, high_hz: float, fs: float, order: int = 4):
    """Second-order sections of the filter used by :func:`bandpass`.

    Exposed so tests can evaluate the designed magnitude response directly.
    """
    return signal.butter(order, [low_hz, high_hz], btype="bandpass",
                         fs=fs, output="sos")


def bandpass_gain(low_hz: float, high_hz: float, fs: float, freqs) -> np.ndarray:
    """Amplitude gain of the forward-backward filter at ``freqs`` (Hz).

    Forward-backward application squares the single-pass magnitude response.
    """
    sos = butter_bandpass_sos(low_hz, high_hz, fs)
    _, h = signal.sosfreqz(sos, worN=np.atleast_1d(np.asarray(freqs, float)), fs=fs)
    return np.abs(h) ** 2


def resample(rec: EegRecording, target_hz: float) -> EegRecording:
    """Linear-interpolation resampling to ``target_hz``.

    Output sample i is the source evaluated at t_i = i / target_hz; the
    output length is floor(duration * target_hz). The mask is resampled
    conservatively: output sample i is marked if any source sample in the
    closed interval spanned by [t_i, t_{i+1}] (plus interpolation
    neighbours) is marked.
    """
    if target_hz > rec.sampling_rate_hz:
        raise ValueError(
            f"target rate {target_hz} above source rate {rec.sampling_rate_hz}"
        )
    if target_hz == rec.sampling_rate_hz:
        return rec
    fs = rec.sampling_rate_hz
    n_out = int(np.floor(rec.n_samples / fs * target_hz))
    t_out = np.arange(n_out) / target_hz
    src_pos = t_out * fs  # fractional source indices
    src_idx = np.arange(rec.n_samples)
    samples = np.stack([np.interp(src_pos, src_idx, ch) for ch in rec.samples])

    mask = np.zeros(n_out, dtype=bool)
    if rec.artifact_mask.any():
        lo = np.floor(src_pos).astype(int)
        hi = np.ceil(np.append(src_pos[1:], rec.n_samples - 1)).astype(int)
        hi = np.minimum(hi, rec.n_samples - 1)
        cum = np.concatenate([[0], np.cumsum(rec.artifact_mask.astype(int))])
        mask = (cum[hi + 1] - cum[lo]) > 0
    return replace(rec, sampling_rate_hz=float(target_hz), samples=samples,
                   artifact_mask=mask)


def extract_contigs(rec: EegRecording, contig_len: int) -> list[Contig]:
    """Greedy left-to-right segmentation into non-overlapping clean windows.

    A window [o, o+L) is emitted iff it contains no masked sample; the scan
    resumes at o+L after an emission and just past the last masked sample
    in the window otherwise.
    """
    if contig_len < 1:
        raise ValueError("contig_len must be >= 1")
    mask = rec.artifact_mask
    n = rec.n_samples
    contigs = []
    offset = 0
    while offset + contig_len <= n:
        window = mask[offset:offset + contig_len]
        blocked = np.flatnonzero(window)
        if blocked.size:
            offset += blocked[-1] + 1
            continue
        contigs.append(Contig(
            patient_id=rec.patient_id,
            label=rec.label,
            data=np.array(rec.samples[:, offset:offset + contig_len]),
            source_offset_samples=offset,
        ))
        offset += contig_len
    return contigs


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

NORM_MODES = ("none", "minmax", "meanstd")


@dataclass(frozen=True)
class NormStats:
    """Per-channel statistics fitted on training contigs.

    ``loc``/``scale`` are [n_channels] vectors: mean/std for meanstd,
    min/(max-min) for minmax, unused for none.
    """

    mode: str
    loc: np.ndarray | None = None
    scale: np.ndarray | None = None


def fit_norm(contigs: list[Contig], mode: str) -> NormStats:
    """Fit per-channel statistics over all training contigs and time steps."""
    if mode not in NORM_MODES:
        raise ValueError(f"unknown normalization mode {mode!r}")
    if mode == "none":
        return NormStats(mode="none")
    if not contigs:
        raise ValueError("cannot fit normalization on an empty contig list")
    stacked = np.concatenate([c.data for c in contigs], axis=1)
    if mode == "meanstd":
        loc = stacked.mean(axis=1)
        scale = stacked.std(axis=1)
        if np.any(scale <= 0):
            ch = int(np.argmin(scale))
            raise ValueError(f"zero-variance channel {ch} under meanstd")
    else:
        loc = stacked.min(axis=1)
        scale = stacked.max(axis=1) - loc
        if np.any(scale <= 0):
            ch = int(np.argmin(scale))
            raise ValueError(f"degenerate range on channel {ch} under minmax")
    return NormStats(mode=mode, loc=loc, scale=scale)


def apply_norm(contigs: list[Contig], stats: NormStats) -> list[Contig]:
    """Apply fitted statistics unchanged; held-out values may leave [0, 1]
    under minmax.
    """
    if stats.mode == "none":
        return list(contigs)
    loc = stats.loc[:, None]
    scale = stats.scale[:, None]
    return [replace(c, data=(c.data - loc) / scale) for c in contigs]


def fit_feature_norm(features: np.ndarray, mode: str) -> NormStats:
    """Per-feature analogue of :func:`fit_norm` for flattened feature rows
    [n_samples, n_features], used by frequency-domain model inputs.
    """
    if mode not in NORM_MODES:
        raise ValueError(f"unknown normalization mode {mode!r}")
    if mode == "none":
        return NormStats(mode="none")
    if features.size == 0:
        raise ValueError("cannot fit normalization on empty features")
    if mode == "meanstd":
        loc = features.mean(axis=0)
        scale = features.std(axis=0)
        if np.any(scale <= 0):
            raise ValueError("zero-variance feature under meanstd")
    else:
        loc = features.min(axis=0)
        scale = features.max(axis=0) - loc
        if np.any(scale <= 0):
            raise ValueError("degenerate feature range under minmax")
    return NormStats(mode=mode, loc=loc, scale=scale)


def apply_feature_norm(features: np.ndarray, stats: NormStats) -> np.ndarray:
    if stats.mode == "none":
        return features
    return (features - stats.loc) / stats.scale


def balance_classes(contigs: list[Contig], seed: int) -> list[Contig]:
    """Subsample the majority class's contigs (uniform, without replacement)
    down to the minority count. Deterministic given ``seed``; preserves the
    original ordering of the kept contigs.
    """
    by_class: dict[bool, list[int]] = {False: [], True: []}
    for i, c in enumerate(contigs):
        by_class[c.label.is_condition].append(i)
    if not by_class[False] or not by_class[True]:
        raise ValueError("balance_classes needs contigs from both classes")
    n_keep = min(len(by_class[False]), len(by_class[True]))
    rng = substream(seed, "balance")
    keep: set[int] = set()
    for idxs in by_class.values():
        if len(idxs) == n_keep:
            keep.update(idxs)
        else:
            chosen = rng.choice(len(idxs), size=n_keep, replace=False)
            keep.update(idxs[j] for j in chosen)
    return [c for i, c in enumerate(contigs) if i in keep]
