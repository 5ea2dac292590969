"""Experiment configuration: JSON file, strict schema, canonical hash.

Unknown keys anywhere are rejected. Every field has a default, so a config
file only needs the values it changes. See README for the schema.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .data import BENCHMARK_MIXTURE, MixtureSpec
from .errors import ConfigurationError, ValidationError
from .model import MODES, QUANTUM, BASELINE, LossConfig, TrainConfig
from .randomness import SEEDED_PRNG, SOURCE_KINDS
from .vqc import ENCODINGS, FEATURE_MAP


@dataclass
class LabelSection:
    rule: str = "kappa_sigma"
    kappa: float = 2.5
    level: float = 0.01
    direction: str = "lower"
    column: int = 0


@dataclass
class CsvSection:
    path: Optional[str] = None
    numeric: Optional[list] = None
    categorical: list = field(default_factory=list)


@dataclass
class MixtureSection:
    weights: list = field(default_factory=lambda: list(BENCHMARK_MIXTURE.weights))
    means: list = field(default_factory=lambda: list(BENCHMARK_MIXTURE.means))
    variances: list = field(default_factory=lambda: list(BENCHMARK_MIXTURE.variances))


@dataclass
class DatasetSection:
    source: str = "mixture"
    n_samples: int = 5000
    seed: int = 0
    mixture: MixtureSection = field(default_factory=MixtureSection)
    csv: CsvSection = field(default_factory=CsvSection)
    label: LabelSection = field(default_factory=LabelSection)
    split: list = field(default_factory=lambda: [0.70, 0.15, 0.15])


@dataclass
class ModelSection:
    mode: str = QUANTUM
    latent_dim: int = 4
    hidden: list = field(default_factory=lambda: [32, 32])
    depth: int = 3
    encoding: str = FEATURE_MAP
    noise_sigma: float = 0.1
    randomness: str = SEEDED_PRNG
    entropy_file: Optional[str] = None
    shots: Optional[int] = None
    quantum_input_grad: bool = True


@dataclass
class LossSection:
    lambda_rec: float = 1.0
    lambda_tail: float = 1.0


@dataclass
class TrainingSection:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    patience: int = 20
    seed: int = 0


@dataclass
class MetricsSection:
    bins: int = 32
    smoothing: float = 1e-9
    alphas: list = field(default_factory=lambda: [0.5, 0.8, 0.9, 0.95])
    tail_mass: float = 0.1
    generated_count: int = 5000
    sample_head: bool = False


@dataclass
class CompareSection:
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    modes: list = field(default_factory=lambda: [QUANTUM, BASELINE])


@dataclass
class ExperimentConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    model: ModelSection = field(default_factory=ModelSection)
    loss: LossSection = field(default_factory=LossSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    compare: CompareSection = field(default_factory=CompareSection)
    output_dir: Optional[str] = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        """sha256 of the canonical JSON form, ignoring ``output_dir``."""
        d = self.to_dict()
        d.pop("output_dir")
        return _digest(d)

    def dataset_hash(self) -> str:
        return _digest(self.to_dict()["dataset"])

    def loss_config(self) -> LossConfig:
        return LossConfig(self.loss.lambda_rec, self.loss.lambda_tail)

    def train_config(self) -> TrainConfig:
        t = self.training
        return TrainConfig(t.epochs, t.batch_size, t.learning_rate, t.patience, t.seed)

    def mixture_spec(self) -> MixtureSpec:
        m = self.dataset.mixture
        return MixtureSpec(m.weights, m.means, m.variances)

    def validate(self) -> "ExperimentConfig":
        try:
            self._validate()
        except ValidationError as exc:
            raise ConfigurationError(str(exc)) from None
        return self

    def _validate(self) -> None:
        ds, m, t, me = self.dataset, self.model, self.training, self.metrics
        if ds.source not in ("mixture", "csv"):
            raise ConfigurationError(f"dataset.source must be 'mixture' or 'csv', got {ds.source!r}")
        if ds.source == "mixture":
            self.mixture_spec()
            if ds.n_samples < 20:
                raise ConfigurationError("dataset.n_samples must be >= 20")
        elif not ds.csv.path:
            raise ConfigurationError("dataset.csv.path is required when dataset.source is 'csv'")
        if ds.label.rule not in ("kappa_sigma", "quantile"):
            raise ConfigurationError(f"dataset.label.rule must be 'kappa_sigma' or 'quantile', got {ds.label.rule!r}")
        if ds.label.direction not in ("lower", "upper", "both"):
            raise ConfigurationError(f"dataset.label.direction invalid: {ds.label.direction!r}")
        if len(ds.split) != 3 or abs(sum(ds.split) - 1) > 1e-9 or min(ds.split) <= 0:
            raise ConfigurationError(f"dataset.split must be three positive ratios summing to 1, got {ds.split}")
        if m.mode not in MODES:
            raise ConfigurationError(f"model.mode must be one of {MODES}, got {m.mode!r}")
        if m.encoding not in ENCODINGS:
            raise ConfigurationError(f"model.encoding must be one of {ENCODINGS}, got {m.encoding!r}")
        if m.randomness not in SOURCE_KINDS:
            raise ConfigurationError(f"model.randomness must be one of {SOURCE_KINDS}, got {m.randomness!r}")
        if m.randomness == "EntropyFile" and not m.entropy_file:
            raise ConfigurationError("model.entropy_file is required for the EntropyFile source")
        if m.latent_dim < 1 or m.depth < 1 or m.noise_sigma < 0 or any(h < 1 for h in m.hidden):
            raise ConfigurationError("model dimensions must be positive and noise_sigma >= 0")
        if m.shots is not None and m.shots < 1:
            raise ConfigurationError("model.shots must be >= 1 when set")
        if m.encoding != FEATURE_MAP and m.quantum_input_grad and m.mode == QUANTUM:
            raise ConfigurationError("model.quantum_input_grad needs FeatureMap encoding; set it to false")
        self.loss_config()
        TrainConfig(t.epochs, t.batch_size, t.learning_rate, t.patience, t.seed)
        if me.bins < 2 or me.smoothing <= 0 or not 0 < me.tail_mass < 1 or me.generated_count < 1:
            raise ConfigurationError("metrics: bins >= 2, smoothing > 0, 0 < tail_mass < 1, generated_count >= 1")
        if any(not 0 < a < 1 for a in me.alphas) or sorted(set(me.alphas)) != list(me.alphas):
            raise ConfigurationError(f"metrics.alphas must be strictly increasing in (0, 1), got {me.alphas}")
        if not self.compare.seeds or any(mode not in MODES for mode in self.compare.modes):
            raise ConfigurationError("compare.seeds must be non-empty and compare.modes valid model modes")


def _digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path or 'config'} must be an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigurationError(f"unknown key(s) in {path or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = known[name].default_factory if known[name].default_factory is not dataclasses.MISSING else None
        if sub is not None and dataclasses.is_dataclass(sub):
            kwargs[name] = _build(sub, value, f"{path}.{name}" if path else name)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "").validate()


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(data)
