"""Patient-level splitting, the training loop, grid search, and the
dataset-size reliability study.

Splits are always by patient, never by contig; every prediction in an
emitted report comes from a model that never saw that patient's data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import Adam, bce_loss
from .dataio import CohortDataset, Label
from .evaluation import (EvalReport, PredictionSet, binary_label,
                         evaluate_predictions, predict_in_batches)
from .models import Model, ModelConfig, build_model
from .preprocess import (Contig, NormStats, bandpass, extract_contigs,
                         fit_feature_norm, fit_norm, resample)
from .seeding import substream
from .spectral import feature_matrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 16
    epochs: int = 10
    seed: int = 0
    balance: bool = False
    normalization: str = "meanstd"
    contig_len: int = 200
    domain: str = "auto"  # time | frequency | auto (from model kind)

    def validate(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.domain not in ("auto", "time", "frequency"):
            raise ValueError(f"unknown domain {self.domain!r}")


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.75
    repeats: int = 30
    seed: int = 0


def split_patients(dataset: CohortDataset, spec: SplitSpec,
                   repeat_index: int) -> tuple[list[str], list[str]]:
    """Stratified patient-level split, deterministic per (seed, repeat).

    The test count per class is round-half-up of (1 - train_fraction) times
    the class size; no patient appears on both sides.
    """
    by_label: dict[Label, list[str]] = {}
    for rec in dataset.recordings:
        by_label.setdefault(rec.label, []).append(rec.patient_id)
    test_frac = 1.0 - spec.train_fraction
    train_ids: list[str] = []
    test_ids: list[str] = []
    for label in sorted(by_label, key=lambda l: l.value):
        ids = sorted(by_label[label])
        if len(ids) < 2:
            raise ValueError(f"class {label.value} has fewer than 2 patients")
        n_test = int(np.floor(test_frac * len(ids) + 0.5))
        rng = substream(spec.seed, "split", repeat_index, label.value)
        perm = rng.permutation(len(ids))
        test_ids.extend(ids[i] for i in perm[:n_test])
        train_ids.extend(ids[i] for i in perm[n_test:])
    return sorted(train_ids), sorted(test_ids)


# ---------------------------------------------------------------------------
# Contig corpus: the preprocessed, split-independent representation
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ContigCorpus:
    """All contigs of a cohort after filtering/resampling/segmentation.

    ``data`` is [n_contigs, channels, length] float32; features are band
    powers computed lazily once (normalization is always split-dependent
    and therefore applied later).
    """

    data: np.ndarray
    patient_ids: np.ndarray
    labels: np.ndarray  # binary
    offsets: np.ndarray
    fs: float
    _features: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def contig_len(self) -> int:
        return self.data.shape[2]

    def features(self) -> np.ndarray:
        if self._features is None:
            self._features = feature_matrix(self.contig_list(), self.fs)
        return self._features

    def contig_list(self, indices=None) -> list[Contig]:
        idx = range(len(self)) if indices is None else indices
        return [Contig(patient_id=str(self.patient_ids[i]),
                       label=Label.MCI if self.labels[i] else Label.CONTROL,
                       data=self.data[i],
                       source_offset_samples=int(self.offsets[i]))
                for i in idx]

    def mask_for_patients(self, patient_ids) -> np.ndarray:
        wanted = set(patient_ids)
        return np.array([pid in wanted for pid in self.patient_ids])


def build_corpus(dataset: CohortDataset, band_lo: float = 5.0,
                 band_hi: float = 20.0, target_hz: float = 200.0,
                 contig_len: int = 200) -> ContigCorpus:
    """Bandpass, resample, and segment every recording of a cohort."""
    data, pids, labels, offsets = [], [], [], []
    fs = None
    for rec in dataset.recordings:
        rec = bandpass(rec, band_lo, band_hi)
        if target_hz < rec.sampling_rate_hz:
            rec = resample(rec, target_hz)
        fs = rec.sampling_rate_hz
        for contig in extract_contigs(rec, contig_len):
            data.append(contig.data.astype(np.float32))
            pids.append(contig.patient_id)
            labels.append(binary_label(contig.label))
            offsets.append(contig.source_offset_samples)
    if not data:
        raise ValueError("no contigs were produced from the dataset")
    return ContigCorpus(
        data=np.stack(data),
        patient_ids=np.array(pids, dtype=object),
        labels=np.array(labels, dtype=np.int8),
        offsets=np.array(offsets, dtype=np.int64),
        fs=float(fs),
    )


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def train(model: Model, inputs: np.ndarray, labels: np.ndarray,
          config: TrainConfig) -> list[float]:
    """Mini-batch training with binary cross-entropy and Adam.

    Batches are reshuffled every epoch from a seeded stream. Returns the
    mean per-sample training loss of each epoch (history length = epochs).
    """
    config.validate()
    n = len(inputs)
    if n == 0:
        raise ValueError("empty training set")
    if np.unique(labels).size < 2:
        raise ValueError("single-class training set")
    labels = np.asarray(labels, dtype=np.float64)
    optimizer = Adam(model.params(), lr=config.learning_rate)
    shuffle_rng = substream(config.seed, "shuffle")
    history = []
    for _ in range(config.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            logits = model.forward(inputs[idx], train=True)
            loss, dlogit = bce_loss(logits, labels[idx])
            epoch_loss += float(loss.sum())
            optimizer.zero_grad()
            model.backward(dlogit / len(idx))
            optimizer.step()
        history.append(epoch_loss / n)
    return history


def _subsample_balanced(train_mask: np.ndarray, labels: np.ndarray,
                        seed: int) -> np.ndarray:
    """Downsample the majority class's contigs inside the training mask."""
    idx = np.flatnonzero(train_mask)
    idx0 = idx[labels[idx] == 0]
    idx1 = idx[labels[idx] == 1]
    if idx0.size == 0 or idx1.size == 0:
        raise ValueError("balancing needs contigs from both classes")
    n_keep = min(idx0.size, idx1.size)
    rng = substream(seed, "balance")
    keep = np.zeros_like(train_mask)
    for group in (idx0, idx1):
        if group.size > n_keep:
            group = group[rng.choice(group.size, size=n_keep, replace=False)]
        keep[group] = True
    return keep


@dataclass(eq=False)
class SplitOutcome:
    model: Model
    stats: NormStats
    report: EvalReport
    history: list[float]
    train_ids: list[str]
    test_ids: list[str]


def run_split(corpus: ContigCorpus, model_config: ModelConfig,
              train_config: TrainConfig, train_ids, test_ids,
              seed: int) -> SplitOutcome:
    """Train on one patient split and evaluate on its held-out side.

    Normalization statistics are fitted on the training contigs only and
    applied unchanged to the test contigs.
    """
    domain = "frequency" if model_config.kind == "mlp" else "time"
    if train_config.domain not in ("auto", domain):
        raise ValueError(
            f"train config domain {train_config.domain!r} does not match "
            f"model kind {model_config.kind!r}"
        )
    train_mask = corpus.mask_for_patients(train_ids)
    test_mask = corpus.mask_for_patients(test_ids)
    if not train_mask.any() or not test_mask.any():
        raise ValueError("a split side has no contigs")
    if train_config.balance:
        train_mask = _subsample_balanced(train_mask, corpus.labels, seed)

    if domain == "time":
        train_contigs = corpus.contig_list(np.flatnonzero(train_mask))
        stats = fit_norm(train_contigs, train_config.normalization)
        if stats.mode == "none":
            x_all = corpus.data
        else:
            x_all = (corpus.data - stats.loc[None, :, None]) / stats.scale[None, :, None]
    else:
        feats = corpus.features()
        stats = fit_feature_norm(feats[train_mask], train_config.normalization)
        x_all = feats if stats.mode == "none" else (feats - stats.loc) / stats.scale
    x_all = x_all.astype(np.float32)

    model = build_model(model_config, seed=seed)
    history = train(model, x_all[train_mask], corpus.labels[train_mask],
                    replace(train_config, seed=seed))

    test_idx = np.flatnonzero(test_mask)
    probs = predict_in_batches(model, x_all[test_idx])
    pred = PredictionSet(
        patient_ids=[str(p) for p in corpus.patient_ids[test_idx]],
        labels=corpus.labels[test_idx].astype(int),
        probs=probs,
    )
    return SplitOutcome(model=model, stats=stats,
                        report=evaluate_predictions(pred),
                        history=history, train_ids=list(train_ids),
                        test_ids=list(test_ids))


def repeated_evaluation(dataset: CohortDataset, corpus: ContigCorpus,
                        model_config: ModelConfig, train_config: TrainConfig,
                        split: SplitSpec) -> list[SplitOutcome]:
    """The repeated protocol: fresh split, init, and shuffle per repeat."""
    outcomes = []
    for repeat in range(split.repeats):
        train_ids, test_ids = split_patients(dataset, split, repeat)
        seed = int(substream(split.seed, "repeat", repeat).integers(2 ** 31))
        outcomes.append(run_split(corpus, model_config, train_config,
                                  train_ids, test_ids, seed))
    return outcomes


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class GridCell:
    index: int
    model_config: ModelConfig
    train_config: TrainConfig
    split_recalls: list[float] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    @property
    def mean_recall(self) -> float:
        return float(np.mean(self.split_recalls)) if self.split_recalls else float("nan")


def grid_search(space: list[tuple[ModelConfig, TrainConfig]],
                dataset: CohortDataset, n_splits: int = 5,
                seed: int = 0, band_lo: float = 5.0, band_hi: float = 20.0,
                target_hz: float = 200.0) -> tuple[list[GridCell], GridCell]:
    """Train/evaluate every configuration on each of ``n_splits`` patient
    splits; rank by mean patient-level macro recall. A failing cell is
    recorded, not fatal.
    """
    if not space:
        raise ValueError("empty search space")
    corpora: dict[int, ContigCorpus] = {}
    cells = []
    for index, (model_cfg, train_cfg) in enumerate(space):
        cell = GridCell(index=index, model_config=model_cfg, train_config=train_cfg)
        length = train_cfg.contig_len
        if length not in corpora:
            corpora[length] = build_corpus(dataset, band_lo, band_hi,
                                           target_hz, length)
        spec = SplitSpec(repeats=n_splits, seed=seed)
        for rep in range(n_splits):
            train_ids, test_ids = split_patients(dataset, spec, rep)
            cell_seed = int(substream(seed, "grid", index, rep).integers(2 ** 31))
            try:
                outcome = run_split(corpora[length], model_cfg, train_cfg,
                                    train_ids, test_ids, cell_seed)
                cell.split_recalls.append(outcome.report.patient["recall_macro"])
            except (ValueError, FloatingPointError) as exc:
                cell.errors.append(f"split {rep}: {exc}")
                log.warning("grid cell %d failed on split %d: %s", index, rep, exc)
        cells.append(cell)
    ranked = sorted(cells, key=lambda c: (np.isnan(c.mean_recall), -c.mean_recall))
    return ranked, ranked[0]


# ---------------------------------------------------------------------------
# Dataset-size reliability study
# ---------------------------------------------------------------------------

STUDY_METRICS = ("contig_recall_macro", "patient_recall_macro",
                 "ece_contig", "ece_patient", "unc_correct", "unc_incorrect")


@dataclass(eq=False)
class StudyRow:
    size: int
    repeat: int
    metrics: dict


@dataclass(eq=False)
class StudyResult:
    rows: list[StudyRow]

    def summary(self) -> list[dict]:
        """Per-size mean and std of every study metric."""
        out = []
        for size in sorted({r.size for r in self.rows}):
            rows = [r for r in self.rows if r.size == size]
            entry: dict = {"size": size, "repeats": len(rows)}
            for key in STUDY_METRICS:
                vals = np.array([r.metrics[key] for r in rows])
                entry[f"{key}_mean"] = float(vals.mean())
                entry[f"{key}_std"] = float(vals.std())
            out.append(entry)
        return out


def _stratified_patient_subset(dataset: CohortDataset, size: int,
                               rng: np.random.Generator) -> list[str]:
    by_label: dict[Label, list[str]] = {}
    for rec in dataset.recordings:
        by_label.setdefault(rec.label, []).append(rec.patient_id)
    total = len(dataset)
    chosen: list[str] = []
    for label in sorted(by_label, key=lambda l: l.value):
        ids = sorted(by_label[label])
        take = int(round(size * len(ids) / total))
        take = min(max(take, 1), len(ids))
        perm = rng.permutation(len(ids))
        chosen.extend(ids[i] for i in perm[:take])
    return chosen


def dataset_size_study(dataset: CohortDataset, corpus: ContigCorpus,
                       model_config: ModelConfig, train_config: TrainConfig,
                       sizes: list[int | None], repeats: int,
                       seed: int = 0, train_fraction: float = 0.75) -> StudyResult:
    """Re-run the full split/train/evaluate pipeline on stratified patient
    subsets of each requested size (None = all patients), ``repeats`` times
    each with fresh subsampling, splits, and initializations.
    """
    n_patients = len(dataset)
    rows = []
    for size in sizes:
        actual = n_patients if size is None else int(size)
        if actual > n_patients:
            log.warning("study size %d exceeds %d patients; skipped",
                        actual, n_patients)
            continue
        for rep in range(repeats):
            rng = substream(seed, "subsample", actual, rep)
            if actual == n_patients:
                subset_ids = [r.patient_id for r in dataset.recordings]
            else:
                subset_ids = _stratified_patient_subset(dataset, actual, rng)
            subset = CohortDataset(
                name=dataset.name,
                recordings=[r for r in dataset.recordings
                            if r.patient_id in set(subset_ids)],
            )
            spec = SplitSpec(train_fraction=train_fraction, repeats=1,
                             seed=int(substream(seed, "study", actual, rep)
                                      .integers(2 ** 31)))
            train_ids, test_ids = split_patients(subset, spec, 0)
            outcome = run_split(corpus, model_config, train_config,
                                train_ids, test_ids, spec.seed)
            report = outcome.report
            rows.append(StudyRow(size=actual, repeat=rep, metrics={
                "contig_recall_macro": report.contig["recall_macro"],
                "patient_recall_macro": report.patient["recall_macro"],
                "ece_contig": report.ece_contig,
                "ece_patient": report.ece_patient,
                "unc_correct": report.unc_correct,
                "unc_incorrect": report.unc_incorrect,
            }))
    return StudyResult(rows=rows)
