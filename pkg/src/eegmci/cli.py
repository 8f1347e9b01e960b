"""Command-line interface: the full pipeline as subcommands driven by a
flat key=value config file.

Every experiment is fully specified by (config file, seed); metric CSVs are
byte-identical across runs with the same config and seed. Cached artifacts
embed a hash of their upstream configuration and are refused when stale.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, dataio, models, training
from .evaluation import EvalReport, cross_domain_eval, evaluate_contigs, model_inputs
from .preprocess import NormStats
from .seeding import substream


class UsageError(Exception):
    pass


# Every key the config file may contain, with its default (None = required
# only when the consuming subcommand runs).
CONFIG_DEFAULTS: dict[str, str | None] = {
    "dataset.path": None,
    "dataset.synth.n_per_class": "30",
    "dataset.synth.sampling_rate_hz": "200",
    "dataset.synth.duration_s": "220",
    "dataset.synth.delta": "0",
    "dataset.synth.domain_shift": "1",
    "dataset.synth.artifact_fraction": "0",
    "preprocess.band_lo": "5",
    "preprocess.band_hi": "20",
    "preprocess.target_hz": "200",
    "preprocess.contig_len": "200",
    "preprocess.norm": "meanstd",
    "preprocess.balance": "false",
    "model.kind": "mlp",
    "model.hidden": "256,256,128,128",
    "model.conv": "32,50,1,1,1;64,50,1,1,1;128,50,1,1,1;4,8,1,1,0",
    "model.dense": "24",
    "model.heads": "4",
    "model.layers": "4",
    "model.dff": "256",
    "model.d_model": "24",
    "train.lr": "1e-4",
    "train.batch": "16",
    "train.epochs": "10",
    "split.train_frac": "0.75",
    "split.repeats": "30",
    "study.sizes": "50,100,200",
    "analysis.gmm_k": "10",
    "analysis.shap_permutations": "64",
    "seed": "0",
}


class RunConfig:
    def __init__(self, values: dict[str, str]):
        self.values = values

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        values = dict(CONFIG_DEFAULTS)
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in CONFIG_DEFAULTS:
                raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = value
        return cls(values)

    def get(self, key: str) -> str:
        value = self.values.get(key)
        if value is None:
            raise UsageError(f"config key {key!r} is required but unset")
        return value

    def get_float(self, key: str) -> float:
        try:
            return float(self.get(key))
        except ValueError:
            raise UsageError(f"config key {key!r}: not a number") from None

    def get_int(self, key: str) -> int:
        try:
            return int(self.get(key))
        except ValueError:
            raise UsageError(f"config key {key!r}: not an integer") from None

    def get_bool(self, key: str) -> bool:
        value = self.get(key).lower()
        if value in ("true", "1", "yes"):
            return True
        if value in ("false", "0", "no"):
            return False
        raise UsageError(f"config key {key!r}: not a boolean")

    def get_int_list(self, key: str) -> list[int]:
        try:
            return [int(tok) for tok in self.get(key).split(",") if tok.strip()]
        except ValueError:
            raise UsageError(f"config key {key!r}: not a comma-separated int list") from None

    def subset(self, prefixes: tuple[str, ...]) -> dict[str, str]:
        return {k: v for k, v in sorted(self.values.items())
                if v is not None and (k.startswith(prefixes) or k == "seed")}


def upstream_hash(config: RunConfig) -> str:
    """Content hash of everything that determines the contig cache."""
    payload = config.subset(("dataset.", "preprocess."))
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def synth_config(config: RunConfig) -> dataio.SynthConfig:
    return dataio.SynthConfig(
        n_patients_per_class=config.get_int("dataset.synth.n_per_class"),
        sampling_rate_hz=config.get_float("dataset.synth.sampling_rate_hz"),
        duration_s=config.get_float("dataset.synth.duration_s"),
        effect_size_delta=config.get_float("dataset.synth.delta"),
        domain_shift=config.get_float("dataset.synth.domain_shift"),
        artifact_fraction=config.get_float("dataset.synth.artifact_fraction"),
        seed=config.get_int("seed"),
    )


def model_config(config: RunConfig) -> models.ModelConfig:
    kind = config.get("model.kind")
    if kind == "mlp":
        hidden = tuple(int(t) for t in config.get("model.hidden").split(",") if t.strip())
        return models.MlpConfig(hidden=hidden)
    if kind == "cnn":
        layers = []
        for chunk in config.get("model.conv").split(";"):
            fields = [int(t) for t in chunk.split(",")]
            if len(fields) != 5:
                raise UsageError("model.conv layers need 5 comma-separated ints")
            layers.append(tuple(fields))
        return models.CnnConfig(conv_layers=tuple(layers),
                                hidden=config.get_int("model.dense"),
                                input_len=config.get_int("preprocess.contig_len"))
    if kind == "transformer":
        return models.TransformerConfig(
            heads=config.get_int("model.heads"),
            layers=config.get_int("model.layers"),
            ff_dim=config.get_int("model.dff"),
            d_model=config.get_int("model.d_model"),
        )
    raise UsageError(f"model.kind must be mlp|cnn|transformer, got {kind!r}")


def train_config(config: RunConfig) -> training.TrainConfig:
    return training.TrainConfig(
        learning_rate=config.get_float("train.lr"),
        batch_size=config.get_int("train.batch"),
        epochs=config.get_int("train.epochs"),
        seed=config.get_int("seed"),
        balance=config.get_bool("preprocess.balance"),
        normalization=config.get("preprocess.norm"),
        contig_len=config.get_int("preprocess.contig_len"),
    )


def split_spec(config: RunConfig) -> training.SplitSpec:
    return training.SplitSpec(
        train_fraction=config.get_float("split.train_frac"),
        repeats=config.get_int("split.repeats"),
        seed=config.get_int("seed"),
    )


# ---------------------------------------------------------------------------
# Cached artifacts
# ---------------------------------------------------------------------------

def save_corpus(corpus: training.ContigCorpus, path: Path, config: RunConfig) -> None:
    path.mkdir(parents=True, exist_ok=True)
    patients = sorted(set(str(p) for p in corpus.patient_ids))
    index = {p: i for i, p in enumerate(patients)}
    meta = {
        "kind": "contig-cache",
        "upstream_hash": upstream_hash(config),
        "fs": corpus.fs,
        "contig_len": corpus.contig_len,
        "n_contigs": len(corpus),
        "patients": patients,
        "config_echo": config.subset(("dataset.", "preprocess.")),
    }
    (path / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1))
    np.save(path / "data.npy", corpus.data)
    np.save(path / "labels.npy", corpus.labels)
    np.save(path / "offsets.npy", corpus.offsets)
    np.save(path / "patient_index.npy",
            np.array([index[str(p)] for p in corpus.patient_ids], dtype=np.int32))


def load_corpus(path: Path, config: RunConfig,
                check_hash: bool = True) -> training.ContigCorpus:
    meta_path = path / "meta.json"
    if not meta_path.is_file():
        raise dataio.DataFormatError(f"{path}: not a contig cache (no meta.json)")
    meta = json.loads(meta_path.read_text())
    if check_hash and meta.get("upstream_hash") != upstream_hash(config):
        raise dataio.DataFormatError(
            f"{path}: cache was built from a different configuration; "
            "rerun the preprocess step"
        )
    patients = meta["patients"]
    patient_idx = np.load(path / "patient_index.npy")
    corpus = training.ContigCorpus(
        data=np.load(path / "data.npy"),
        patient_ids=np.array([patients[i] for i in patient_idx], dtype=object),
        labels=np.load(path / "labels.npy"),
        offsets=np.load(path / "offsets.npy"),
        fs=float(meta["fs"]),
    )
    features_path = path / "features.npy"
    if features_path.is_file():
        corpus._features = np.load(features_path)
    return corpus


def corpus_dataset_view(corpus: training.ContigCorpus) -> dataio.CohortDataset:
    """A patient/label-only view for the splitting helpers."""
    recs = []
    seen = set()
    for pid, lab in zip(corpus.patient_ids, corpus.labels):
        if pid in seen:
            continue
        seen.add(pid)
        recs.append(dataio.EegRecording(
            patient_id=str(pid),
            label=dataio.Label.MCI if lab else dataio.Label.CONTROL,
            sampling_rate_hz=corpus.fs,
            channel_names=dataio.CANONICAL_CHANNELS,
            samples=np.zeros((dataio.N_CHANNELS, 1), dtype=np.float32),
            artifact_mask=np.zeros(1, dtype=bool),
        ))
    return dataio.CohortDataset(name="cache", recordings=recs)


# ---------------------------------------------------------------------------
# Deterministic CSV output
# ---------------------------------------------------------------------------

def fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def write_report_csv(path: Path, report: EvalReport) -> None:
    write_csv(path, ["metric", "value"], report.to_records())


def stats_to_meta(stats: NormStats) -> dict:
    return {
        "mode": stats.mode,
        "loc": None if stats.loc is None else [float(v) for v in stats.loc],
        "scale": None if stats.scale is None else [float(v) for v in stats.scale],
    }


def stats_from_meta(meta: dict) -> NormStats:
    return NormStats(
        mode=meta["mode"],
        loc=None if meta["loc"] is None else np.array(meta["loc"]),
        scale=None if meta["scale"] is None else np.array(meta["scale"]),
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    config = RunConfig.load(args.config)
    out = Path(args.out) if args.out else Path(config.get("dataset.path"))
    dataset = dataio.generate_synthetic(synth_config(config))
    dataio.write_dataset(dataset, out)
    print(f"wrote {len(dataset)} recordings to {out}")
    return 0


def cmd_preprocess(args) -> int:
    config = RunConfig.load(args.config)
    dataset = dataio.read_dataset(args.dataset or config.get("dataset.path"))
    corpus = training.build_corpus(
        dataset,
        band_lo=config.get_float("preprocess.band_lo"),
        band_hi=config.get_float("preprocess.band_hi"),
        target_hz=config.get_float("preprocess.target_hz"),
        contig_len=config.get_int("preprocess.contig_len"),
    )
    save_corpus(corpus, Path(args.out), config)
    print(f"cached {len(corpus)} contigs ({corpus.contig_len} samples "
          f"@ {corpus.fs:g} Hz) to {args.out}")
    return 0


def cmd_features(args) -> int:
    config = RunConfig.load(args.config)
    cache = Path(args.cache)
    corpus = load_corpus(cache, config)
    np.save(cache / "features.npy", corpus.features())
    print(f"cached {len(corpus)}x{corpus.features().shape[1]} spectral features")
    return 0


def cmd_train(args) -> int:
    config = RunConfig.load(args.config)
    corpus = load_corpus(Path(args.cache), config)
    dataset = corpus_dataset_view(corpus)
    spec = split_spec(config)
    train_ids, test_ids = training.split_patients(dataset, spec, 0)
    seed = int(substream(spec.seed, "repeat", 0).integers(2 ** 31))
    outcome = training.run_split(corpus, model_config(config),
                                 train_config(config), train_ids, test_ids, seed)
    outcome.model.meta = {
        "upstream_hash": upstream_hash(config),
        "contig_len": corpus.contig_len,
        "fs": corpus.fs,
        "norm_stats": stats_to_meta(outcome.stats),
        "test_patients": outcome.test_ids,
    }
    models.save_model(outcome.model, args.out)
    if args.history:
        write_csv(Path(args.history), ["epoch", "loss"],
                  list(enumerate(outcome.history)))
    print(f"trained {outcome.model.kind}; final epoch loss {outcome.history[-1]:.4f}")
    print(f"checkpoint written to {args.out}")
    return 0


def _load_checkpoint_for(corpus: training.ContigCorpus, path: str):
    model = models.load_model(path)
    meta = model.meta
    if meta.get("contig_len") != corpus.contig_len:
        raise dataio.DataFormatError(
            f"checkpoint expects contig length {meta.get('contig_len')}, "
            f"cache holds {corpus.contig_len}"
        )
    return model, stats_from_meta(meta["norm_stats"])


def cmd_eval(args) -> int:
    config = RunConfig.load(args.config)
    corpus = load_corpus(Path(args.cache), config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = corpus_dataset_view(corpus)
    spec = split_spec(config)

    if args.model:
        model, stats = _load_checkpoint_for(corpus, args.model)
        test_ids = model.meta.get("test_patients") or \
            training.split_patients(dataset, spec, 0)[1]
        idx = np.flatnonzero(corpus.mask_for_patients(test_ids))
        report = evaluate_contigs(model, corpus.contig_list(idx), stats, corpus.fs)
        write_report_csv(out_dir / "eval.csv", report)
        print(report.format_table())
        return 0

    outcomes = training.repeated_evaluation(dataset, corpus, model_config(config),
                                            train_config(config), spec)
    combined = []
    for rep, outcome in enumerate(outcomes):
        write_report_csv(out_dir / f"eval_r{rep:03d}.csv", outcome.report)
        combined.extend((rep, k, v) for k, v in outcome.report.to_records())
    write_csv(out_dir / "eval.csv", ["repeat", "metric", "value"], combined)
    recalls = [o.report.patient["recall_macro"] for o in outcomes]
    print(f"{len(outcomes)} repeats: patient macro recall "
          f"{np.mean(recalls):.3f} (std {np.std(recalls):.3f})")
    print(f"per-repeat reports in {out_dir}")
    return 0


def cmd_cross_eval(args) -> int:
    config = RunConfig.load(args.config)
    foreign = load_corpus(Path(args.cache), config, check_hash=False)
    model, stats = _load_checkpoint_for(foreign, args.model)
    report = cross_domain_eval(model, stats, foreign.contig_list(), foreign.fs,
                               domain_tag=args.tag)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report_csv(out_dir / "cross_eval.csv", report)
    print(report.format_table())
    return 0


def cmd_size_study(args) -> int:
    config = RunConfig.load(args.config)
    corpus = load_corpus(Path(args.cache), config)
    dataset = corpus_dataset_view(corpus)
    sizes: list[int | None] = list(config.get_int_list("study.sizes")) + [None]
    result = training.dataset_size_study(
        dataset, corpus, model_config(config), train_config(config),
        sizes=sizes, repeats=config.get_int("split.repeats"),
        seed=config.get_int("seed"),
        train_fraction=config.get_float("split.train_frac"),
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metric_keys = list(training.STUDY_METRICS)
    write_csv(out_dir / "size_study.csv", ["size", "repeat"] + metric_keys,
              [(r.size, r.repeat, *[r.metrics[k] for k in metric_keys])
               for r in result.rows])
    summary = result.summary()
    header = ["size", "repeats"] + [f"{k}_{s}" for k in metric_keys
                                    for s in ("mean", "std")]
    write_csv(out_dir / "size_study_summary.csv", header,
              [(e["size"], e["repeats"],
                *[e[f"{k}_{s}"] for k in metric_keys for s in ("mean", "std")])
               for e in summary])
    for entry in summary:
        print(f"size {entry['size']:>4}: ece {entry['ece_contig_mean']:.3f} "
              f"recall {entry['patient_recall_macro_mean']:.3f}")
    return 0


def cmd_grid_search(args) -> int:
    config = RunConfig.load(args.config)
    dataset = dataio.read_dataset(args.dataset or config.get("dataset.path"))
    space = []
    for line in Path(args.space).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        overrides = dict(CONFIG_DEFAULTS, **config.values)
        for token in line.split():
            if "=" not in token:
                raise UsageError(f"space line token {token!r} is not key=value")
            key, value = token.split("=", 1)
            if key not in CONFIG_DEFAULTS or not key.split(".")[0] in ("model", "train"):
                raise UsageError(f"space line key {key!r} must be a model.*/train.* key")
            overrides[key] = value
        cell = RunConfig(overrides)
        space.append((model_config(cell), train_config(cell)))
    ranked, best = training.grid_search(
        space, dataset, n_splits=args.splits, seed=config.get_int("seed"),
        band_lo=config.get_float("preprocess.band_lo"),
        band_hi=config.get_float("preprocess.band_hi"),
        target_hz=config.get_float("preprocess.target_hz"),
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for rank, cell in enumerate(ranked):
        for split_id, recall in enumerate(cell.split_recalls):
            rows.append((cell.index, split_id, recall))
        for err in cell.errors:
            rows.append((cell.index, "failed", err.replace(",", ";")))
    write_csv(out_dir / "grid_cells.csv", ["config_id", "split_id", "patient_recall_macro"], rows)
    write_csv(out_dir / "grid_ranking.csv",
              ["rank", "config_id", "mean_patient_recall_macro", "n_failed"],
              [(rank, cell.index, cell.mean_recall, len(cell.errors))
               for rank, cell in enumerate(ranked)])
    print(f"best cell: #{best.index} mean patient macro recall {best.mean_recall:.3f}")
    return 0


def cmd_gmm_overlap(args) -> int:
    config = RunConfig.load(args.config)
    corpus = load_corpus(Path(args.cache), config)
    dataset = corpus_dataset_view(corpus)
    train_ids, test_ids = training.split_patients(dataset, split_spec(config), 0)
    feats = corpus.features()
    train_mask = corpus.mask_for_patients(train_ids)
    cond = corpus.labels == 1
    sets = {
        "condition_train": feats[train_mask & cond],
        "control_train": feats[train_mask & ~cond],
        "condition_test": feats[~train_mask & cond],
        "control_test": feats[~train_mask & ~cond],
    }
    gmm = analysis.gmm_fit(sets["condition_train"],
                           k=config.get_int("analysis.gmm_k"),
                           seed=config.get_int("seed"))
    report = analysis.overlap_report(gmm, sets)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "loglik_hist.csv", ["set", "bin_lo", "bin_hi", "count"],
              report.histogram_rows())
    write_csv(out_dir / "overlap_dist.csv", ["set_a", "set_b", "w1"],
              report.distance_rows())
    print(f"fitted GMM({gmm.n_components}) on {len(sets['condition_train'])} "
          f"features; {len(gmm.loglik_trace)} EM iterations")
    return 0


def cmd_shap(args) -> int:
    config = RunConfig.load(args.config)
    corpus = load_corpus(Path(args.cache), config)
    model, stats = _load_checkpoint_for(corpus, args.model)
    dataset = corpus_dataset_view(corpus)
    _, test_ids = training.split_patients(dataset, split_spec(config), 0)
    idx = np.flatnonzero(corpus.mask_for_patients(test_ids))
    seed = config.get_int("seed")
    rng = substream(seed, "shap", "inputs")
    chosen = rng.choice(idx, size=min(args.inputs, idx.size), replace=False)
    inputs = model_inputs(model, corpus.contig_list(chosen), stats, corpus.fs)
    flat = inputs.reshape(len(inputs), -1).astype(float)
    background = flat.mean(axis=0)

    shape = inputs.shape[1:]

    def predict(batch: np.ndarray) -> np.ndarray:
        return models.predict_proba(model, batch.reshape(-1, *shape))

    if model.domain == "frequency":
        groupings = {
            "channel": analysis.grouping_by_channel(17, 26),
            "band": analysis.grouping_by_band(17, 26),
        }
    else:
        length = shape[-1]
        groupings = {
            "channel": analysis.grouping_by_channel(17, length),
            "position": analysis.grouping_by_position(17, length),
        }
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, groups in groupings.items():
        report = analysis.shap_attribution(
            predict, flat, groups,
            n_permutations=config.get_int("analysis.shap_permutations"),
            seed=seed, background=background, grouping_name=name,
        )
        write_csv(out_dir / f"shap_{name}.csv",
                  ["group", "mean_abs_phi", "mean_phi"], report.rows())
        print(f"{name}: strongest group {int(report.mean_abs_phi.argmax())}")
    return 0


def cmd_report(args) -> int:
    rows = []
    keys: list[str] | None = None
    for path in args.files:
        records = {}
        for line in Path(path).read_text().splitlines()[1:]:
            key, value = line.split(",", 1)
            records[key] = float(value)
        if keys is None:
            keys = list(records)
        rows.append((Path(path).name, records))
    if not rows:
        raise UsageError("report needs at least one eval csv")
    table = [(name, *[rec[k] for k in keys]) for name, rec in rows]
    data = np.array([[rec[k] for k in keys] for _, rec in rows], dtype=float)
    table.append(("mean", *[float(v) for v in data.mean(axis=0)]))
    table.append(("std", *[float(v) for v in data.std(axis=0)]))
    write_csv(Path(args.out), ["run"] + keys, table)
    print(f"merged {len(rows)} runs into {args.out}")
    return 0


# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="eegmci", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=func)
        p.add_argument("--config", required=True, help="key=value config file")
        return p

    p = add("synth", cmd_synth, help="generate a synthetic EEGD dataset")
    p.add_argument("--out", help="output dataset directory (default: dataset.path)")

    p = add("preprocess", cmd_preprocess, help="EEGD dataset -> contig cache")
    p.add_argument("--dataset", help="dataset directory (default: dataset.path)")
    p.add_argument("--out", required=True, help="contig cache directory")

    p = add("features", cmd_features, help="contig cache -> spectral feature cache")
    p.add_argument("--cache", required=True)

    p = add("train", cmd_train, help="train one model on split repeat 0")
    p.add_argument("--cache", required=True)
    p.add_argument("--out", required=True, help="checkpoint path (.mdl)")
    p.add_argument("--history", help="optional per-epoch loss csv")

    p = add("eval", cmd_eval, help="repeated split/train/eval protocol")
    p.add_argument("--cache", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--model", help="evaluate this checkpoint instead of retraining")

    p = add("cross-eval", cmd_cross_eval, help="evaluate a checkpoint on a foreign cache")
    p.add_argument("--cache", required=True, help="foreign contig cache")
    p.add_argument("--model", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--tag", default="foreign")

    p = add("size-study", cmd_size_study, help="dataset-size reliability study")
    p.add_argument("--cache", required=True)
    p.add_argument("--out-dir", required=True)

    p = add("grid-search", cmd_grid_search, help="configuration grid search")
    p.add_argument("--dataset", help="dataset directory (default: dataset.path)")
    p.add_argument("--space", required=True,
                   help="file with one cell per line: model.*/train.* overrides")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--splits", type=int, default=5)

    p = add("gmm-overlap", cmd_gmm_overlap, help="density-overlap analysis")
    p.add_argument("--cache", required=True)
    p.add_argument("--out-dir", required=True)

    p = add("shap", cmd_shap, help="grouped feature attribution for a checkpoint")
    p.add_argument("--cache", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--inputs", type=int, default=16,
                   help="number of test contigs to attribute")

    p = sub.add_parser("report", help="merge eval csvs into one summary table")
    p.set_defaults(func=cmd_report)
    p.add_argument("--out", required=True)
    p.add_argument("files", nargs="+")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (dataio.DataFormatError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
