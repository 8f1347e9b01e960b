"""Spectral featurization: contigs to per-channel band-power matrices.

Bands are the 26 one-hertz intervals [4,5), [5,6), ..., [29,30). A bin at
frequency f belongs to band [b, b+1) iff b <= f < b+1. Model input order
flattens channel-major: feature index = channel_index * 26 + band_index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import Label
from .preprocess import Contig

BAND_LOW_HZ = 4.0
N_BANDS = 26
FEATURE_DIM = 17 * N_BANDS  # 442
BAND_EDGES = [(BAND_LOW_HZ + i, BAND_LOW_HZ + i + 1) for i in range(N_BANDS)]


@dataclass(eq=False)
class SpectralFeatures:
    """Band powers per channel: ``values`` is [17 channels, 26 bands]."""

    patient_id: str
    label: Label
    values: np.ndarray

    def flat(self) -> np.ndarray:
        """Model-input vector; index = channel * 26 + band."""
        return self.values.reshape(-1)


def periodogram(x: np.ndarray, fs: float) -> tuple[np.ndarray, np.ndarray]:
    """One-sided Hann-windowed power spectrum of a 1-D signal.

    The mean is removed before windowing, and the spectrum is scaled so
    that the sum over all bins equals the mean square of the windowed
    signal. Returns (frequencies k*fs/L, psd).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("periodogram needs a 1-D signal of length >= 2")
    L = x.size
    windowed = (x - x.mean()) * np.hanning(L)
    spec = np.fft.rfft(windowed)
    psd = np.abs(spec) ** 2
    if L % 2 == 0:
        psd[1:-1] *= 2.0
    else:
        psd[1:] *= 2.0
    psd /= L * L
    freqs = np.fft.rfftfreq(L, d=1.0 / fs)
    return freqs, psd


def _psd_matrix(data: np.ndarray, fs: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized periodogram over rows of [n_channels, L]."""
    L = data.shape[1]
    windowed = (data - data.mean(axis=1, keepdims=True)) * np.hanning(L)
    spec = np.fft.rfft(windowed, axis=1)
    psd = np.abs(spec) ** 2
    if L % 2 == 0:
        psd[:, 1:-1] *= 2.0
    else:
        psd[:, 1:] *= 2.0
    psd /= L * L
    return np.fft.rfftfreq(L, d=1.0 / fs), psd


def band_powers(contig: Contig, fs: float) -> SpectralFeatures:
    """Sum PSD bins into the 26 one-hertz bands, per channel."""
    if contig.length < 2:
        raise ValueError("contig too short for spectral analysis")
    freqs, psd = _psd_matrix(contig.data, fs)
    values = np.empty((contig.data.shape[0], N_BANDS))
    for b, (lo, hi) in enumerate(BAND_EDGES):
        sel = (freqs >= lo) & (freqs < hi)
        values[:, b] = psd[:, sel].sum(axis=1)
    return SpectralFeatures(patient_id=contig.patient_id, label=contig.label,
                            values=values)


def feature_matrix(contigs: list[Contig], fs: float) -> np.ndarray:
    """Flattened feature rows [n_contigs, 442] in contig order."""
    return np.stack([band_powers(c, fs).flat() for c in contigs])
