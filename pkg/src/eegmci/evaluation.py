"""Contig-to-patient aggregation, performance metrics, and reliability
metrics (expected calibration error, predictive uncertainty).

Binary convention throughout: control = 0, condition (MCI/dementia) = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import Label
from .models import Model, predict_proba
from .preprocess import Contig, NormStats, apply_feature_norm, apply_norm
from .spectral import feature_matrix


def binary_label(label: Label) -> int:
    return 1 if label.is_condition else 0


@dataclass(eq=False)
class PredictionSet:
    """Per-contig condition probabilities with patient attribution."""

    patient_ids: list[str]
    labels: np.ndarray      # binary, per contig
    probs: np.ndarray       # condition probability, per contig

    def __post_init__(self):
        n = len(self.patient_ids)
        if self.labels.shape != (n,) or self.probs.shape != (n,):
            raise ValueError("patient_ids, labels, probs must align")
        if n and (self.probs.min() <= 0.0 or self.probs.max() >= 1.0):
            raise ValueError("probabilities must lie strictly inside (0, 1)")


def vote_patient(probs: np.ndarray) -> tuple[int, float]:
    """Majority vote over one patient's contigs.

    Each contig votes condition iff p >= 0.5; an exact tie goes to the
    condition class. Returns (label, winning-vote fraction).
    """
    probs = np.asarray(probs)
    if probs.size == 0:
        raise ValueError("vote_patient needs at least one contig")
    n_condition = int((probs >= 0.5).sum())
    n_control = probs.size - n_condition
    label = 1 if n_condition >= n_control else 0
    confidence = max(n_condition, n_control) / probs.size
    return label, confidence


def macro_metrics(predicted: np.ndarray, labels: np.ndarray) -> dict:
    """Per-class and macro recall/precision for binary labels.

    Precision with an empty denominator (a class never predicted) is
    defined as 0 and flagged in ``precision_undefined``.
    """
    predicted = np.asarray(predicted)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("macro metrics need both classes present in labels")
    out: dict = {"precision_undefined": []}
    names = {0: "control", 1: "condition"}
    recalls, precisions = [], []
    for cls in (0, 1):
        is_cls = labels == cls
        pred_cls = predicted == cls
        tp = int((is_cls & pred_cls).sum())
        recall = tp / int(is_cls.sum())
        denom = int(pred_cls.sum())
        if denom == 0:
            precision = 0.0
            out["precision_undefined"].append(names[cls])
        else:
            precision = tp / denom
        out[f"recall_{names[cls]}"] = recall
        out[f"precision_{names[cls]}"] = precision
        recalls.append(recall)
        precisions.append(precision)
    out["recall_macro"] = float(np.mean(recalls))
    out["precision_macro"] = float(np.mean(precisions))
    return out


def ece(probabilities: np.ndarray, correct: np.ndarray, n_bins: int = 10) -> float:
    """Expected calibration error with equal-width bins on [0.5, 1.0].

    Each sample contributes confidence max(p, 1-p); patient-level vote
    confidences (already in [0.5, 1]) pass through unchanged. Empty bins
    contribute nothing; the rightmost bin includes confidence 1.0.
    """
    probabilities = np.asarray(probabilities, dtype=float)
    correct = np.asarray(correct, dtype=float)
    if probabilities.size == 0:
        raise ValueError("ece needs at least one sample")
    conf = np.maximum(probabilities, 1.0 - probabilities)
    edges = np.linspace(0.5, 1.0, n_bins + 1)
    total = 0.0
    n = conf.size
    for i in range(n_bins):
        if i < n_bins - 1:
            sel = (conf >= edges[i]) & (conf < edges[i + 1])
        else:
            sel = (conf >= edges[i]) & (conf <= edges[i + 1])
        if sel.any():
            total += (sel.sum() / n) * abs(correct[sel].mean() - conf[sel].mean())
    return float(total)


def uncertainty(p) -> float | np.ndarray:
    """Predictive uncertainty p*(1-p)/0.5, i.e. 2*p*(1-p).

    Peaks at p = 0.5 (value 0.5) and vanishes at p in {0, 1}.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    out = 2.0 * p * (1.0 - p)
    return float(out) if out.ndim == 0 else out


def uncertainty_by_correctness(probs: np.ndarray, correct: np.ndarray) -> tuple[float, float]:
    """Mean uncertainty over correct and incorrect predictions.

    An empty group yields 0.0; consult the report's counts to tell an
    empty group from a genuinely certain one.
    """
    unc = uncertainty(np.asarray(probs))
    correct = np.asarray(correct, dtype=bool)
    mean_c = float(unc[correct].mean()) if correct.any() else 0.0
    mean_i = float(unc[~correct].mean()) if (~correct).any() else 0.0
    return mean_c, mean_i


@dataclass(eq=False)
class EvalReport:
    """Contig- and patient-level metrics for one evaluation run."""

    contig: dict
    patient: dict
    ece_contig: float
    ece_patient: float
    unc_correct: float
    unc_incorrect: float
    n_contigs: int
    n_patients: int
    n_correct: int
    n_incorrect: int
    n_vote_ties: int
    domain: str = ""

    _KEYS = (
        "contig_recall_macro", "contig_recall_control", "contig_recall_condition",
        "contig_precision_macro", "contig_precision_control", "contig_precision_condition",
        "patient_recall_macro", "patient_recall_control", "patient_recall_condition",
        "patient_precision_macro", "patient_precision_control", "patient_precision_condition",
        "ece_contig", "ece_patient", "unc_correct", "unc_incorrect",
        "n_contigs", "n_patients", "n_correct", "n_incorrect", "n_vote_ties",
    )

    def to_records(self) -> list[tuple[str, float]]:
        """Stable machine-readable (key, value) pairs."""
        values = {
            **{f"contig_{k}": v for k, v in self.contig.items()
               if k != "precision_undefined"},
            **{f"patient_{k}": v for k, v in self.patient.items()
               if k != "precision_undefined"},
            "ece_contig": self.ece_contig,
            "ece_patient": self.ece_patient,
            "unc_correct": self.unc_correct,
            "unc_incorrect": self.unc_incorrect,
            "n_contigs": self.n_contigs,
            "n_patients": self.n_patients,
            "n_correct": self.n_correct,
            "n_incorrect": self.n_incorrect,
            "n_vote_ties": self.n_vote_ties,
        }
        return [(key, values[key]) for key in self._KEYS]

    def format_table(self) -> str:
        lines = [f"{'metric':<32}{'value':>12}"]
        if self.domain:
            lines.insert(0, f"domain: {self.domain}")
        for key, value in self.to_records():
            if isinstance(value, float):
                lines.append(f"{key:<32}{value:>12.4f}")
            else:
                lines.append(f"{key:<32}{value:>12}")
        flagged = (self.contig.get("precision_undefined", [])
                   or self.patient.get("precision_undefined", []))
        if flagged:
            lines.append(f"note: precision undefined (no predictions) for: {flagged}")
        return "\n".join(lines)


def evaluate_predictions(pred: PredictionSet, domain: str = "") -> EvalReport:
    """Aggregate a prediction set into contig- and patient-level metrics.

    Contig-level reliability uses raw probabilities; patient-level ECE uses
    majority-vote confidences.
    """
    contig_pred = (pred.probs >= 0.5).astype(int)
    contig_metrics = macro_metrics(contig_pred, pred.labels)
    contig_correct = contig_pred == pred.labels
    unc_c, unc_i = uncertainty_by_correctness(pred.probs, contig_correct)

    per_patient: dict[str, list[int]] = {}
    patient_label: dict[str, int] = {}
    for i, pid in enumerate(pred.patient_ids):
        per_patient.setdefault(pid, []).append(i)
        patient_label[pid] = int(pred.labels[i])

    votes, confs, truths = [], [], []
    n_ties = 0
    for pid, idx in per_patient.items():
        label, conf = vote_patient(pred.probs[idx])
        if conf == 0.5:
            n_ties += 1
        votes.append(label)
        confs.append(conf)
        truths.append(patient_label[pid])
    votes = np.array(votes)
    confs = np.array(confs)
    truths = np.array(truths)
    patient_metrics = macro_metrics(votes, truths)

    return EvalReport(
        contig=contig_metrics,
        patient=patient_metrics,
        ece_contig=ece(pred.probs, contig_correct),
        ece_patient=ece(confs, votes == truths),
        unc_correct=unc_c,
        unc_incorrect=unc_i,
        n_contigs=len(pred.patient_ids),
        n_patients=len(per_patient),
        n_correct=int(contig_correct.sum()),
        n_incorrect=int((~contig_correct).sum()),
        n_vote_ties=n_ties,
        domain=domain,
    )


def predict_in_batches(model: Model, inputs: np.ndarray,
                       batch_size: int = 256) -> np.ndarray:
    parts = [predict_proba(model, inputs[i:i + batch_size])
             for i in range(0, len(inputs), batch_size)]
    return np.concatenate(parts) if parts else np.empty(0)


def model_inputs(model: Model, contigs: list[Contig], stats: NormStats,
                 fs: float) -> np.ndarray:
    """Turn contigs into model-domain inputs using *training* statistics.

    Time-domain models get normalized contigs; the frequency-domain MLP
    gets per-feature-normalized band powers.
    """
    if model.domain == "time":
        normed = apply_norm(contigs, stats)
        return np.stack([c.data for c in normed]).astype(np.float32)
    feats = feature_matrix(contigs, fs)
    return apply_feature_norm(feats, stats).astype(np.float32)


def evaluate_contigs(model: Model, contigs: list[Contig], stats: NormStats,
                     fs: float, domain_tag: str = "") -> EvalReport:
    """Predict on contigs and aggregate; used for in-domain test splits."""
    if not contigs:
        raise ValueError("no contigs to evaluate")
    inputs = model_inputs(model, contigs, stats, fs)
    probs = predict_in_batches(model, inputs)
    pred = PredictionSet(
        patient_ids=[c.patient_id for c in contigs],
        labels=np.array([binary_label(c.label) for c in contigs]),
        probs=probs,
    )
    return evaluate_predictions(pred, domain=domain_tag)


def cross_domain_eval(model: Model, stats: NormStats, contigs: list[Contig],
                      fs: float, domain_tag: str = "foreign") -> EvalReport:
    """Evaluate on another domain's contigs, applying the model's own
    training normalization statistics unchanged.

    The contigs must already be resampled/segmented to the model's expected
    shape. The per-class recalls in the report make degenerate all-one-class
    outcomes visible.
    """
    if model.domain == "time":
        expected = (model.config.input_channels, model.config.input_len) \
            if model.kind == "cnn" else (model.config.input_channels,)
        got = contigs[0].data.shape
        if got[0] != expected[0] or (model.kind == "cnn" and got[1] != expected[1]):
            raise ValueError(f"foreign contig shape {got} incompatible with model")
    return evaluate_contigs(model, contigs, stats, fs, domain_tag=domain_tag)
