"""Experiment lifecycle behind the CLI: data files, training runs, evaluation, comparison.

On-disk layout under an output root::

    data/dataset.csv         index, feature columns, rare (0/1), split name
    data/manifest.json       labelling threshold, split sizes, scaler, hashes
    runs/<mode>_seed<N>/     checkpoint.json, train_report.json, config.json,
                             metrics.json, coverage.csv, density.csv
    compare/                 compare.csv, compare_summary.json, coverage.csv

All JSON is written with sorted keys and floats in shortest round-trip form,
so reruns with the same config and seed are byte-identical (the training
report's wall-clock field is the one exception).
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .data import LabeledDataset, Split, Standardizer, ThresholdMeta, build_dataset, load_csv, sample_mixture
from .errors import ComparisonInvalidError, OutputExistsError, ShapeError, ValidationError
from .metrics import (MetricsReport, coverage_curve, kde_score, mixture_score, rare_recall, region_from_mass,
                      tail_kl, wasserstein_1d)
from .model import (QUANTUM, QegmModel, from_state_dict, generate, predict, reconstruct, to_state_dict, train)
from .neural import Adam
from .randomness import SeededPrng, make_source

OUTPUT_ROOT_ENV = "QEGM_OUTPUT_ROOT"
DATASET_FORMAT = "qegm-dataset"
SPLIT_NAMES = ("train", "val", "test")


def output_root(cfg: ExperimentConfig, override: Optional[str] = None) -> Path:
    return Path(override or cfg.output_dir or os.environ.get(OUTPUT_ROOT_ENV) or "qegm-runs")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_json(path: Path, obj) -> str:
    text = json.dumps(obj, sort_keys=True, indent=1) + "\n"
    path.write_text(text, encoding="utf-8")
    return sha256_bytes(text.encode())


def read_json(path: Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


# ---------------------------------------------------------------------------
# data


def make_dataset(cfg: ExperimentConfig) -> tuple:
    """Build the labelled dataset described by ``cfg``. Returns (dataset, source record)."""
    ds = cfg.dataset
    root = SeededPrng(ds.seed)
    if ds.source == "mixture":
        raw = sample_mixture(cfg.mixture_spec(), ds.n_samples, root.spawn("samples"))[:, None]
        columns = ["x"]
        source = {"kind": "mixture", **cfg.to_dict()["dataset"]["mixture"]}
    else:
        path = Path(ds.csv.path)
        table = load_csv(path, {"numeric": ds.csv.numeric, "categorical": ds.csv.categorical}
                         if ds.csv.numeric is not None else {"categorical": ds.csv.categorical})
        raw, columns = table.matrix, table.columns
        source = {"kind": "csv", "path": str(path), "sha256": sha256_bytes(path.read_bytes())}
    label = {"rule": ds.label.rule, "kappa": ds.label.kappa, "level": ds.label.level,
             "direction": ds.label.direction, "column": ds.label.column}
    dataset = build_dataset(raw, columns, label, ds.split, root.spawn("split"))
    return dataset, source


def write_dataset(dataset: LabeledDataset, source: dict, cfg: ExperimentConfig, data_dir: Path, force=False) -> dict:
    csv_path, manifest_path = data_dir / "dataset.csv", data_dir / "manifest.json"
    if (csv_path.exists() or manifest_path.exists()) and not force:
        raise OutputExistsError(f"{data_dir} already holds a dataset; pass --force to overwrite")
    data_dir.mkdir(parents=True, exist_ok=True)
    split_of = np.empty(len(dataset.raw), dtype=object)
    for name in SPLIT_NAMES:
        split_of[getattr(dataset.split, name)] = name
    rows = [[i, *(repr(float(v)) for v in dataset.raw[i]), int(dataset.rare_mask[i]), split_of[i]]
            for i in range(len(dataset.raw))]
    _write_csv(csv_path, ["index", *dataset.columns, "rare", "split"], rows)
    manifest = {
        "format": DATASET_FORMAT,
        "version": 1,
        "code_version": __version__,
        "seed": cfg.dataset.seed,
        "dataset_config_hash": cfg.dataset_hash(),
        "source": source,
        "columns": dataset.columns,
        "n_samples": len(dataset.raw),
        "rare_count": int(dataset.rare_mask.sum()),
        "threshold_meta": dataset.threshold_meta.to_dict(),
        "split_ratios": list(cfg.dataset.split),
        "split_sizes": dict(zip(SPLIT_NAMES, dataset.split.sizes())),
        "split_rare_counts": {n: int(dataset.rare_mask[getattr(dataset.split, n)].sum()) for n in SPLIT_NAMES},
        "scaler": dataset.scaler.to_dict(),
        "samples_sha256": sha256_bytes(csv_path.read_bytes()),
    }
    write_json(manifest_path, manifest)
    return manifest


def read_dataset(data_dir: Path) -> tuple:
    """Returns (LabeledDataset, manifest, manifest sha256)."""
    manifest_path = Path(data_dir) / "manifest.json"
    csv_path = Path(data_dir) / "dataset.csv"
    manifest_bytes = manifest_path.read_bytes()
    manifest = json.loads(manifest_bytes)
    if manifest.get("format") != DATASET_FORMAT:
        raise ValidationError(f"{manifest_path} is not a {DATASET_FORMAT} manifest")
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    n_feat = len(header) - 3
    raw = np.array([[float(v) for v in r[1 : 1 + n_feat]] for r in rows]).reshape(len(rows), n_feat)
    rare = np.array([r[1 + n_feat] == "1" for r in rows])
    labels = np.array([r[2 + n_feat] for r in rows])
    split = Split(*(np.flatnonzero(labels == n) for n in SPLIT_NAMES))
    meta = ThresholdMeta(**manifest["threshold_meta"])
    dataset = LabeledDataset(raw, header[1 : 1 + n_feat], rare, meta, split, Standardizer.from_dict(manifest["scaler"]))
    return dataset, manifest, sha256_bytes(manifest_bytes)


def generate_data(cfg: ExperimentConfig, out: Path, force: bool = False) -> dict:
    dataset, source = make_dataset(cfg)
    return write_dataset(dataset, source, cfg, out / "data", force)


# ---------------------------------------------------------------------------
# training


def build_model(cfg: ExperimentConfig, d_x: int, mode: Optional[str] = None, seed: Optional[int] = None) -> QegmModel:
    m = cfg.model
    mode = mode or m.mode
    seed = cfg.training.seed if seed is None else seed
    return QegmModel.build(d_x, m.latent_dim, SeededPrng(seed).spawn("init"), mode=mode, hidden=m.hidden,
                           depth=m.depth, encoding=m.encoding, noise_sigma=m.noise_sigma,
                           quantum_input_grad=m.quantum_input_grad and mode == QUANTUM)


def noise_source(cfg: ExperimentConfig, seed: int):
    m = cfg.model
    if m.randomness == "EntropyFile":
        return make_source("EntropyFile", path=m.entropy_file)
    return make_source(m.randomness, seed).spawn("noise")


def run_dir(out: Path, mode: str, seed: int) -> Path:
    return out / "runs" / f"{mode}_seed{seed}"


def train_run(cfg: ExperimentConfig, out: Path, mode: Optional[str] = None, seed: Optional[int] = None,
              force: bool = False, target: Optional[Path] = None) -> Path:
    """Train one model on the dataset in ``out/data``; returns the run directory."""
    mode = mode or cfg.model.mode
    seed = cfg.training.seed if seed is None else seed
    dataset, manifest, manifest_hash = read_dataset(out / "data")
    target = target or run_dir(out, mode, seed)
    if (target / "checkpoint.json").exists() and not force:
        raise OutputExistsError(f"{target} already holds a checkpoint; pass --force to overwrite")
    target.mkdir(parents=True, exist_ok=True)
    model = build_model(cfg, dataset.n_features, mode, seed)
    opt = Adam(cfg.training.learning_rate)
    tcfg = cfg.train_config()
    tcfg = type(tcfg)(tcfg.epochs, tcfg.batch_size, tcfg.learning_rate, tcfg.patience, seed)
    report = train(model, dataset, cfg.loss_config(), tcfg, noise_source(cfg, seed), opt)
    extra = {
        "config_hash": cfg.hash(),
        "seed": seed,
        "code_version": __version__,
        "dataset_manifest_sha256": manifest_hash,
        "scaler": manifest["scaler"],
        "threshold_meta": manifest["threshold_meta"],
    }
    ckpt_hash = write_json(target / "checkpoint.json", to_state_dict(model, opt, extra))
    report.checkpoint = "checkpoint.json"
    rep = report.to_dict()
    rep.update(config_hash=cfg.hash(), checkpoint_sha256=ckpt_hash, code_version=__version__)
    write_json(target / "train_report.json", rep)
    write_json(target / "config.json", {**cfg.to_dict(), "config_hash": cfg.hash()})
    return target


def load_checkpoint(path: Path) -> tuple:
    """Returns (model, checkpoint dict, checkpoint sha256)."""
    raw = Path(path).read_bytes()
    state = json.loads(raw)
    return from_state_dict(state), state, sha256_bytes(raw)


# ---------------------------------------------------------------------------
# evaluation


def tail_region_for(cfg: ExperimentConfig, dataset: LabeledDataset, reference_raw: np.ndarray):
    if cfg.dataset.source == "mixture":
        score, desc = mixture_score(cfg.mixture_spec()), "negative log-density of the generating mixture"
    else:
        score = kde_score(dataset.raw[dataset.split.train])
        desc = "negative log-density of a Silverman-bandwidth Gaussian KDE on the training split"
    return region_from_mass(score, reference_raw, cfg.metrics.tail_mass, desc)


def evaluate_model(model: QegmModel, dataset: LabeledDataset, cfg: ExperimentConfig, seed: int,
                   provenance: Optional[dict] = None) -> tuple:
    """All metrics on the test split, in raw units. Returns (MetricsReport, extras for CSV output)."""
    if model.d_x != dataset.n_features:
        raise ShapeError(f"checkpoint expects {model.d_x} features, dataset has {dataset.n_features}")
    me = cfg.metrics
    scaler, meta = dataset.scaler, dataset.threshold_meta
    test_idx = dataset.split.test
    real = dataset.raw[test_idx]
    gen_src = make_source(cfg.model.randomness if cfg.model.randomness != "EntropyFile" else "SeededPrng",
                          seed).spawn("generate")
    generated = scaler.inverse(generate(model, me.generated_count, gen_src, cfg.model.shots, me.sample_head))
    region = tail_region_for(cfg, dataset, real)
    kl = tail_kl(real, generated, region, me.bins, me.smoothing)

    def is_rare(x):
        return meta.is_rare(np.asarray(x)[:, meta.column])

    rare_rows = real[dataset.rare_mask[test_idx]]
    rec = rare_recall(rare_rows, lambda x: scaler.inverse(reconstruct(model, scaler.transform(x))), is_rare)
    head = predict(model, scaler.transform(real))
    curve = coverage_curve(real, scaler.inverse(head.mean), head.std * scaler.std, me.alphas)
    w1 = wasserstein_1d(real, generated)
    constants = {
        "bins": me.bins,
        "smoothing": me.smoothing,
        "tail_mass": me.tail_mass,
        "tail_threshold": region.threshold,
        "tail_score": region.description,
        "generated_count": me.generated_count,
        "sample_head": me.sample_head,
        "shots": cfg.model.shots,
        "bin_edges": "equal-probability quantiles of real tail samples, open outer bins",
        "interval": "mean +/- ndtri((1+alpha)/2) * std, all dimensions inside",
        "recall_rule": meta.to_dict(),
    }
    report = MetricsReport(kl, rec.recall, rec.tp, rec.fn, curve, w1, constants, dict(provenance or {}))
    return report, {"real": real, "generated": generated, "region": region}


def _density_rows(real: np.ndarray, generated: np.ndarray, bins: int = 60) -> list:
    lo = float(min(real[:, 0].min(), np.quantile(generated[:, 0], 0.001)))
    hi = float(max(real[:, 0].max(), np.quantile(generated[:, 0], 0.999)))
    edges = np.linspace(lo, hi, bins + 1)
    pr, _ = np.histogram(real[:, 0], edges, density=True)
    pg, _ = np.histogram(generated[:, 0], edges, density=True)
    return [[repr(float(a)), repr(float(b)), repr(float(x)), repr(float(y))]
            for a, b, x, y in zip(edges[:-1], edges[1:], pr, pg)]


def evaluate_run(cfg: ExperimentConfig, out: Path, checkpoint: Path, seed: Optional[int] = None,
                 target: Optional[Path] = None) -> MetricsReport:
    dataset, manifest, manifest_hash = read_dataset(out / "data")
    model, state, ckpt_hash = load_checkpoint(checkpoint)
    if state.get("dataset_manifest_sha256") not in (None, manifest_hash):
        raise ValidationError(f"{checkpoint} was trained on a different dataset than {out / 'data'}")
    seed = state.get("seed", cfg.training.seed) if seed is None else seed
    provenance = {
        "seed": seed,
        "config_hash": state.get("config_hash"),
        "evaluation_config_hash": cfg.hash(),
        "dataset_manifest_sha256": manifest_hash,
        "checkpoint_sha256": ckpt_hash,
        "code_version": __version__,
    }
    report, extras = evaluate_model(model, dataset, cfg, seed, provenance)
    target = target or Path(checkpoint).parent
    target.mkdir(parents=True, exist_ok=True)
    write_json(target / "metrics.json", report.to_dict())
    _write_csv(target / "coverage.csv", ["alpha", "coverage"], [[repr(a), repr(c)] for a, c in report.coverage_curve])
    _write_csv(target / "density.csv", ["bin_lo", "bin_hi", "real_density", "model_density"],
               _density_rows(extras["real"], extras["generated"]))
    return report


# ---------------------------------------------------------------------------
# comparison

COMPARE_FIELDS = ("tail_kl", "rare_recall", "coverage_error", "wasserstein_1d")


def compare_checkpoints(cfg: ExperimentConfig, out: Path, checkpoints: dict, seeds) -> dict:
    """Evaluate named checkpoints once per seed (the seed drives generation)."""
    dataset, _, manifest_hash = read_dataset(out / "data")
    loaded = {}
    for name, path in checkpoints.items():
        model, state, ckpt_hash = load_checkpoint(path)
        loaded[name] = (model, state, ckpt_hash)
    hashes = {s.get("dataset_manifest_sha256") for _, s, _ in loaded.values()}
    if len(hashes) != 1:
        raise ComparisonInvalidError(f"checkpoints were trained on different datasets: {sorted(map(str, hashes))}")
    if hashes != {manifest_hash}:
        raise ComparisonInvalidError("checkpoints do not match the dataset in the output directory")
    results = {name: [] for name in loaded}
    for name, (model, state, ckpt_hash) in loaded.items():
        for seed in seeds:
            report, _ = evaluate_model(model, dataset, cfg, seed, {"seed": seed, "checkpoint_sha256": ckpt_hash})
            results[name].append((seed, report))
    return write_comparison(out / "compare", results)


def compare_training(cfg: ExperimentConfig, out: Path, seeds=None, modes=None, log=None) -> dict:
    """Train and evaluate every (mode, seed) pair on the shared dataset, then tabulate."""
    seeds = list(cfg.compare.seeds if seeds is None else seeds)
    modes = list(cfg.compare.modes if modes is None else modes)
    if not (out / "data" / "manifest.json").exists():
        generate_data(cfg, out)
    results = {mode: [] for mode in modes}
    for seed in seeds:
        for mode in modes:
            target = out / "compare" / "runs" / f"{mode}_seed{seed}"
            train_run(cfg, out, mode, seed, force=True, target=target)
            report = evaluate_run(cfg, out, target / "checkpoint.json", seed)
            results[mode].append((seed, report))
            if log:
                log(f"{mode} seed={seed} tail_kl={report.tail_kl:.4f} recall={report.rare_recall:.3f} "
                    f"coverage_err={report.coverage_error:.4f} w1={report.wasserstein_1d:.4f}")
    return write_comparison(out / "compare", results)


def write_comparison(target: Path, results: dict) -> dict:
    target.mkdir(parents=True, exist_ok=True)
    rows, cov_rows, summary = [], [], {"models": {}}
    for name, runs in results.items():
        values = {f: [] for f in COMPARE_FIELDS}
        for seed, rep in runs:
            vals = {"tail_kl": rep.tail_kl, "rare_recall": rep.rare_recall,
                    "coverage_error": rep.coverage_error, "wasserstein_1d": rep.wasserstein_1d}
            rows.append([name, str(seed)] + [repr(vals[f]) for f in COMPARE_FIELDS])
            for f in COMPARE_FIELDS:
                values[f].append(vals[f])
            cov_rows.extend([name, str(seed), repr(a), repr(c)] for a, c in rep.coverage_curve)
        medians = {f: float(np.median(v)) for f, v in values.items()}
        rows.append([name, "median"] + [repr(medians[f]) for f in COMPARE_FIELDS])
        summary["models"][name] = {"median": medians, "per_seed": values, "seeds": [s for s, _ in runs]}
    names = list(results)
    if len(names) >= 2:
        a, b = names[0], names[1]
        summary["reference"], summary["other"] = a, b
        summary["median_delta"] = {f: summary["models"][a]["median"][f] - summary["models"][b]["median"][f]
                                   for f in COMPARE_FIELDS}
        summary["directional"] = {
            "tail_kl_not_worse": summary["models"][a]["median"]["tail_kl"] <= summary["models"][b]["median"]["tail_kl"],
            "rare_recall_not_worse":
                summary["models"][a]["median"]["rare_recall"] >= summary["models"][b]["median"]["rare_recall"],
        }
    _write_csv(target / "compare.csv", ["model", "seed", *COMPARE_FIELDS], rows)
    _write_csv(target / "coverage.csv", ["model", "seed", "alpha", "coverage"], cov_rows)
    write_json(target / "compare_summary.json", summary)
    return summary
