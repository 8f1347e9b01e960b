"""Cohort dataset types, the EEGD v1 on-disk format, and a synthetic
EEG cohort generator with controllable class overlap and domain shift.

Dataset directory layout ("EEGD v1"):

* ``channels.txt`` — one channel name per line, defining storage order.
* ``manifest.csv`` — header ``patient_id,label,sampling_rate_hz,n_channels,n_samples,file``.
* one signal file per row: 4 magic bytes ``EEG1``, two little-endian uint32
  (n_channels, n_samples), then float32 little-endian samples, channel-major.
* optional ``<file>.mask`` — n_samples bytes, 0x00 clean / 0x01 artifact.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .seeding import substream

# International 10-20 montage minus T5/T6 and the reference electrodes.
# This order is fixed; feature indices downstream depend on it.
CANONICAL_CHANNELS: tuple[str, ...] = (
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8",
    "T3", "C3", "Cz", "C4", "T4",
    "P3", "Pz", "P4", "O1", "O2",
)
N_CHANNELS = len(CANONICAL_CHANNELS)

_SIGNAL_MAGIC = b"EEG1"


class Label(Enum):
    CONTROL = "control"
    MCI = "mci"
    DEMENTIA = "dementia"

    @classmethod
    def parse(cls, text: str) -> "Label":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise DataFormatError(f"unknown label {text!r}") from None

    @property
    def is_condition(self) -> bool:
        return self is not Label.CONTROL


class DataFormatError(Exception):
    """Raised when an on-disk dataset violates the EEGD v1 contract."""


@dataclass(eq=False)
class EegRecording:
    """One patient's multichannel recording.

    ``samples`` is [n_channels, n_samples] in microvolts; ``artifact_mask``
    is per-sample, True where the signal is excluded from analysis.
    Instances are treated as immutable after construction.
    """

    patient_id: str
    label: Label
    sampling_rate_hz: float
    channel_names: tuple[str, ...]
    samples: np.ndarray
    artifact_mask: np.ndarray

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sampling_rate_hz


def validate_recording(rec: EegRecording) -> list[str]:
    """Return human-readable descriptions of every invariant violation.

    An empty list means the recording is valid. Never raises.
    """
    problems: list[str] = []
    if rec.samples.ndim != 2:
        problems.append(f"samples must be 2-D, got shape {rec.samples.shape}")
        return problems
    if len(rec.channel_names) != rec.n_channels:
        problems.append(
            f"{len(rec.channel_names)} channel names for {rec.n_channels} rows"
        )
    if rec.artifact_mask.shape != (rec.n_samples,):
        problems.append(
            f"artifact_mask length {rec.artifact_mask.shape} != n_samples {rec.n_samples}"
        )
    if not rec.sampling_rate_hz > 0:
        problems.append(f"sampling_rate_hz must be positive, got {rec.sampling_rate_hz}")
    bad = ~np.isfinite(rec.samples)
    if bad.any():
        ch, idx = np.argwhere(bad)[0]
        name = rec.channel_names[ch] if ch < len(rec.channel_names) else f"#{ch}"
        problems.append(f"non-finite sample at channel {name}, index {idx}")
    return problems


@dataclass(eq=False)
class CohortDataset:
    """A named collection of recordings sharing the canonical channel order."""

    name: str
    recordings: list[EegRecording] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.recordings)

    def patient_ids(self) -> list[str]:
        return [r.patient_id for r in self.recordings]

    def validate(self) -> list[str]:
        problems = []
        seen: set[str] = set()
        for rec in self.recordings:
            if rec.patient_id in seen:
                problems.append(f"duplicate patient_id {rec.patient_id!r}")
            seen.add(rec.patient_id)
            if tuple(rec.channel_names) != CANONICAL_CHANNELS:
                problems.append(
                    f"{rec.patient_id}: channels not in canonical order"
                )
            problems.extend(f"{rec.patient_id}: {p}" for p in validate_recording(rec))
        return problems


# ---------------------------------------------------------------------------
# EEGD v1 reading and writing
# ---------------------------------------------------------------------------

def _read_signal_file(path: Path) -> np.ndarray:
    blob = path.read_bytes()
    if len(blob) < 12 or blob[:4] != _SIGNAL_MAGIC:
        raise DataFormatError(f"{path.name}: missing EEG1 magic header")
    n_ch, n_smp = struct.unpack_from("<II", blob, 4)
    expected = 12 + 4 * n_ch * n_smp
    if len(blob) != expected:
        raise DataFormatError(
            f"{path.name}: file is {len(blob)} bytes, expected {expected} "
            f"for {n_ch} channels x {n_smp} samples"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=12)
    return data.reshape(n_ch, n_smp)


def _write_signal_file(path: Path, samples: np.ndarray) -> None:
    n_ch, n_smp = samples.shape
    with open(path, "wb") as fh:
        fh.write(_SIGNAL_MAGIC)
        fh.write(struct.pack("<II", n_ch, n_smp))
        fh.write(np.ascontiguousarray(samples, dtype="<f4").tobytes())


def read_dataset(path: str | Path) -> CohortDataset:
    """Load an EEGD v1 directory, reordering channels to the canonical 17.

    Extra stored channels (e.g. T5/T6) are dropped. A missing ``.mask`` file
    yields an all-false mask. Raises :class:`DataFormatError` on malformed
    manifests, truncated signal files, unknown labels, or a stored channel
    list that does not cover the canonical montage.
    """
    root = Path(path)
    channels_file = root / "channels.txt"
    manifest_file = root / "manifest.csv"
    if not channels_file.is_file() or not manifest_file.is_file():
        raise DataFormatError(f"{root}: missing channels.txt or manifest.csv")

    stored = [ln.strip() for ln in channels_file.read_text().splitlines() if ln.strip()]
    missing = [ch for ch in CANONICAL_CHANNELS if ch not in stored]
    if missing:
        raise DataFormatError(
            f"channels.txt lacks canonical channels: {', '.join(missing)}"
        )
    order = np.array([stored.index(ch) for ch in CANONICAL_CHANNELS])

    recordings = []
    with open(manifest_file, newline="") as fh:
        reader = csv.DictReader(fh)
        expected_cols = ["patient_id", "label", "sampling_rate_hz",
                         "n_channels", "n_samples", "file"]
        if reader.fieldnames != expected_cols:
            raise DataFormatError(
                f"manifest.csv header is {reader.fieldnames}, expected {expected_cols}"
            )
        for lineno, row in enumerate(reader, start=2):
            try:
                rate = float(row["sampling_rate_hz"])
                n_ch = int(row["n_channels"])
                n_smp = int(row["n_samples"])
            except (TypeError, ValueError, KeyError):
                raise DataFormatError(
                    f"manifest.csv line {lineno}: malformed row {row!r}"
                ) from None
            label = Label.parse(row["label"])
            sig_path = root / row["file"]
            samples = _read_signal_file(sig_path)
            if samples.shape != (n_ch, n_smp):
                raise DataFormatError(
                    f"{sig_path.name}: header says {samples.shape}, "
                    f"manifest says ({n_ch}, {n_smp})"
                )
            if n_ch != len(stored):
                raise DataFormatError(
                    f"{sig_path.name}: {n_ch} channels but channels.txt lists {len(stored)}"
                )
            mask_path = root / (row["file"] + ".mask")
            if mask_path.is_file():
                mask_bytes = np.frombuffer(mask_path.read_bytes(), dtype=np.uint8)
                if mask_bytes.size != n_smp:
                    raise DataFormatError(
                        f"{mask_path.name}: {mask_bytes.size} bytes for {n_smp} samples"
                    )
                mask = mask_bytes.astype(bool)
            else:
                mask = np.zeros(n_smp, dtype=bool)
            recordings.append(EegRecording(
                patient_id=row["patient_id"],
                label=label,
                sampling_rate_hz=rate,
                channel_names=CANONICAL_CHANNELS,
                samples=np.array(samples[order]),
                artifact_mask=mask,
            ))
    return CohortDataset(name=root.name, recordings=recordings)


def write_dataset(dataset: CohortDataset, path: str | Path) -> None:
    """Write an EEGD v1 directory. Storage order is the canonical order,
    so ``read_dataset(write_dataset(d))`` reproduces ``d`` bit-exactly at
    float32 precision. Mask files are emitted only for recordings whose
    mask marks at least one sample.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    (root / "channels.txt").write_text("\n".join(CANONICAL_CHANNELS) + "\n")
    with open(root / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "label", "sampling_rate_hz",
                         "n_channels", "n_samples", "file"])
        for rec in dataset.recordings:
            fname = f"{rec.patient_id}.eeg"
            writer.writerow([
                rec.patient_id, rec.label.value, repr(float(rec.sampling_rate_hz)),
                rec.n_channels, rec.n_samples, fname,
            ])
            _write_signal_file(root / fname, rec.samples)
            if rec.artifact_mask.any():
                (root / (fname + ".mask")).write_bytes(
                    rec.artifact_mask.astype(np.uint8).tobytes()
                )


# ---------------------------------------------------------------------------
# Synthetic cohorts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic cohort generator.

    ``effect_size_delta`` shifts the condition class's alpha-band (8-12 Hz)
    oscillation amplitude; zero makes the classes statistically identical.
    ``domain_shift`` is a global gain applied to every sample, for simulating
    a second acquisition domain.
    """

    n_patients_per_class: int
    sampling_rate_hz: float = 200.0
    duration_s: float = 220.0
    effect_size_delta: float = 0.0
    domain_shift: float = 1.0
    artifact_fraction: float = 0.0
    seed: int = 0
    condition_label: Label = Label.MCI

    def validate(self, contig_len: int = 200) -> None:
        if self.n_patients_per_class < 1:
            raise ValueError("n_patients_per_class must be >= 1")
        if self.sampling_rate_hz <= 0:
            raise ValueError("sampling_rate_hz must be positive")
        if self.effect_size_delta < 0:
            raise ValueError("effect_size_delta must be >= 0")
        if not 0 <= self.artifact_fraction < 1:
            raise ValueError("artifact_fraction must be in [0, 1)")
        if self.duration_s * self.sampling_rate_hz < 2 * contig_len:
            raise ValueError("duration too short for two contigs")


# Background pink noise level and the band-limited oscillations layered on
# top of it, as (frequency Hz, base amplitude uV). Only the 10 Hz component
# responds to effect_size_delta.
_BACKGROUND_STD_UV = 10.0
_OSCILLATIONS = ((6.0, 4.0), (10.0, 6.0), (18.0, 3.0))
_ALPHA_HZ = 10.0
# Log-amplitude jitter: common per patient, per oscillation, per channel.
_PATIENT_SIGMA = 0.12
_OSC_SIGMA = 0.05
_CHANNEL_SIGMA = 0.05
# Per-second lognormal burst envelope, shared across channels.
_BURST_SIGMA = 0.25
# Alpha amplitude offset = _DELTA_UNIT * delta**_DELTA_EXPONENT * base amplitude.
# The superlinear response keeps delta=1 cohorts heavily overlapping while
# making delta=5 cohorts nearly separable in feature space.
_DELTA_UNIT = 0.15
_DELTA_EXPONENT = 5.0 / 3.0


def _pink_noise(rng: np.random.Generator, n_channels: int, n: int) -> np.ndarray:
    """1/f-power spectral slope noise, unit variance per channel."""
    white = rng.standard_normal((n_channels, n))
    spec = np.fft.rfft(white, axis=1)
    freq = np.fft.rfftfreq(n)
    freq[0] = freq[1]
    spec *= 1.0 / np.sqrt(freq)
    x = np.fft.irfft(spec, n, axis=1)
    return x / x.std(axis=1, keepdims=True)


def _artifact_mask(rng: np.random.Generator, n: int, fs: float, fraction: float) -> np.ndarray:
    """Mark contiguous 0.5-2 s spans until ~fraction of samples is covered."""
    mask = np.zeros(n, dtype=bool)
    if fraction <= 0:
        return mask
    target = int(fraction * n)
    # Bounded attempts: spans may overlap, so coverage can stall.
    for _ in range(10 * max(1, target)):
        if mask.sum() >= target:
            break
        span = int(rng.uniform(0.5, 2.0) * fs)
        start = int(rng.integers(0, max(1, n - span)))
        mask[start:start + span] = True
    return mask


def _synth_patient(rng: np.random.Generator, cfg: SynthConfig,
                   is_condition: bool) -> np.ndarray:
    n = int(cfg.duration_s * cfg.sampling_rate_hz)
    t = np.arange(n) / cfg.sampling_rate_hz
    block = int(round(cfg.sampling_rate_hz))  # 1 s burst envelope resolution
    n_blocks = -(-n // block)

    sig = _BACKGROUND_STD_UV * _pink_noise(rng, N_CHANNELS, n)
    eps_patient = rng.normal(0.0, _PATIENT_SIGMA)
    for f0, base_amp in _OSCILLATIONS:
        eps_osc = rng.normal(0.0, _OSC_SIGMA)
        bursts = np.exp(rng.normal(0.0, _BURST_SIGMA, size=n_blocks))
        envelope = np.repeat(bursts, block)[:n]
        amp = base_amp * np.exp(eps_patient + eps_osc
                                + rng.normal(0.0, _CHANNEL_SIGMA, size=N_CHANNELS))
        if f0 == _ALPHA_HZ and is_condition and cfg.effect_size_delta > 0:
            amp = amp + (cfg.effect_size_delta ** _DELTA_EXPONENT
                         * _DELTA_UNIT * base_amp)
        phase = rng.uniform(0.0, 2.0 * np.pi, size=N_CHANNELS)
        sig += (amp[:, None] * envelope[None, :]) * np.sin(
            2.0 * np.pi * f0 * t[None, :] + phase[:, None]
        )
    return sig * cfg.domain_shift


def generate_synthetic(config: SynthConfig) -> CohortDataset:
    """Generate a two-class cohort (control + condition), deterministic
    given ``config.seed``. The random draws do not depend on
    ``effect_size_delta`` or ``domain_shift``, so varying only those fields
    reuses identical noise realizations.
    """
    config.validate()
    recordings = []
    for class_idx, label in enumerate((Label.CONTROL, config.condition_label)):
        for k in range(config.n_patients_per_class):
            rng = substream(config.seed, "synth", class_idx, k)
            samples = _synth_patient(rng, config, label.is_condition)
            mask = _artifact_mask(rng, samples.shape[1], config.sampling_rate_hz,
                                  config.artifact_fraction)
            recordings.append(EegRecording(
                patient_id=f"{label.value}{k:03d}",
                label=label,
                sampling_rate_hz=config.sampling_rate_hz,
                channel_names=CANONICAL_CHANNELS,
                samples=samples.astype(np.float32),
                artifact_mask=mask,
            ))
    return CohortDataset(name="synthetic", recordings=recordings)
