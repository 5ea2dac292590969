"""Benchmark generators, CSV ingestion, rare-event labelling, standardization and splits."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .errors import DegenerateDataError, ParseError, StratificationError, UnseenCategoryError, ValidationError

KAPPA_SIGMA = "KappaSigma"
QUANTILE = "Quantile"
LOWER, UPPER, BOTH = "lower", "upper", "both"


@dataclass(frozen=True)
class MixtureSpec:
    weights: tuple
    means: tuple
    variances: tuple

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        object.__setattr__(self, "variances", tuple(float(v) for v in self.variances))
        problems = []
        if not (len(self.weights) == len(self.means) == len(self.variances)) or not self.weights:
            problems.append("weights, means and variances must be non-empty and of equal length")
        if any(w < 0 for w in self.weights):
            problems.append("weights must be non-negative")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            problems.append(f"weights must sum to 1 (got {sum(self.weights)!r})")
        if any(not v > 0 for v in self.variances):
            problems.append("variances must be > 0")
        if problems:
            raise ValidationError("invalid mixture: " + "; ".join(problems))

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.logpdf(x))

    def logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)[..., None]
        mu, var = np.array(self.means), np.array(self.variances)
        comp = np.log(self.weights) - 0.5 * np.log(2 * np.pi * var) - 0.5 * (x - mu) ** 2 / var
        return special.logsumexp(comp, axis=-1)

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)[..., None]
        z = (x - np.array(self.means)) / np.sqrt(self.variances)
        return (np.array(self.weights) * special.ndtr(z)).sum(axis=-1)


# 70% central mass; the 30% tail mass is split evenly between the outer modes.
BENCHMARK_MIXTURE = MixtureSpec(weights=(0.15, 0.70, 0.15), means=(-3.0, 0.0, 3.0), variances=(1.0, 0.5, 1.5))


def sample_mixture(spec: MixtureSpec, n: int, src) -> np.ndarray:
    if n < 1:
        raise ValidationError(f"sample count must be >= 1, got {n}")
    cum = np.cumsum(spec.weights)
    comp = np.minimum(np.searchsorted(cum, np.asarray(src.uniform(n)), side="right"), len(cum) - 1)
    noise = np.asarray(src.normal(n))
    return np.array(spec.means)[comp] + np.sqrt(spec.variances)[comp] * noise


def sample_student_t(nu: int, n: int, src, loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
    """Heavy-tailed t(nu) draws built from normals: Z / sqrt(chi2_nu / nu)."""
    z = np.asarray(src.normal(n))
    chi2 = (np.asarray(src.normal((n, nu))) ** 2).sum(axis=1)
    return loc + scale * z / np.sqrt(chi2 / nu)


# ---------------------------------------------------------------------------
# rare-event labelling


@dataclass(frozen=True)
class ThresholdMeta:
    kind: str
    direction: str
    kappa: Optional[float] = None
    level: Optional[float] = None
    mu: Optional[float] = None
    sigma: Optional[float] = None
    tau: Optional[float] = None
    cutoff: Optional[float] = None
    column: int = 0

    def is_rare(self, values) -> np.ndarray:
        """Re-apply the fitted rule to raw-unit values (used to score reconstructions)."""
        v = np.asarray(values, dtype=np.float64)
        if self.kind == KAPPA_SIGMA:
            lower, upper = v < -self.tau, v > self.tau
        else:
            lower, upper = v <= self.cutoff, v >= self.cutoff
        return {LOWER: lower, UPPER: upper, BOTH: lower | upper}[self.direction]

    def to_dict(self) -> dict:
        return asdict(self)


def label_rare_kappa_sigma(series, kappa: float, direction: str = LOWER, column: int = 0):
    """tau = mean + kappa * std (population std); crashes are x < -tau.

    ``direction`` "upper" marks x > tau and "both" marks either side.
    """
    x = np.asarray(series, dtype=np.float64).reshape(-1)
    if x.size < 2:
        raise ValidationError("kappa-sigma labelling needs at least 2 observations")
    if not kappa > 0:
        raise ValidationError(f"kappa must be > 0, got {kappa}")
    if direction not in (LOWER, UPPER, BOTH):
        raise ValidationError(f"unknown direction {direction!r}")
    mu, sigma = float(x.mean()), float(x.std())
    if sigma == 0:
        raise DegenerateDataError("series has zero variance; kappa-sigma threshold undefined")
    meta = ThresholdMeta(KAPPA_SIGMA, direction, kappa=float(kappa), mu=mu, sigma=sigma, tau=mu + kappa * sigma, column=column)
    return meta.is_rare(x), meta


def label_rare_quantile(series, level: float, direction: str = UPPER, column: int = 0):
    """Mark exactly ceil(level * N) extreme values; ties go to the lower index."""
    x = np.asarray(series, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise ValidationError("cannot label an empty series")
    if not 0 < level < 1:
        raise ValidationError(f"quantile level must be in (0, 1), got {level}")
    if direction not in (LOWER, UPPER):
        raise ValidationError(f"quantile labelling supports 'lower' or 'upper', got {direction!r}")
    k = math.ceil(level * x.size - 1e-9)
    key = -x if direction == UPPER else x
    order = np.lexsort((np.arange(x.size), key))
    mask = np.zeros(x.size, dtype=bool)
    mask[order[:k]] = True
    meta = ThresholdMeta(QUANTILE, direction, level=float(level), cutoff=float(x[order[k - 1]]), column=column)
    return mask, meta


# ---------------------------------------------------------------------------
# standardization and splitting


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, samples, columns: Sequence[str] | None = None) -> "Standardizer":
        x = np.asarray(samples, dtype=np.float64)
        x = x.reshape(len(x), -1)
        mu, sd = x.mean(axis=0), x.std(axis=0)
        for j in np.flatnonzero(sd == 0):
            name = columns[j] if columns is not None else f"column {j}"
            raise DegenerateDataError(f"feature {name!r} has zero variance in the fitting data")
        return cls(mu, sd)

    def transform(self, samples) -> np.ndarray:
        return (np.asarray(samples, dtype=np.float64) - self.mean) / self.std

    def inverse(self, samples) -> np.ndarray:
        return np.asarray(samples, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64))


def standardize(samples, train_idx=None, columns=None):
    """Fit on the training rows only, apply to every row. Returns (standardized, Standardizer)."""
    x = np.asarray(samples, dtype=np.float64)
    x2 = x.reshape(len(x), -1)
    fit_rows = x2 if train_idx is None else x2[np.asarray(train_idx)]
    st = Standardizer.fit(fit_rows, columns)
    return st.transform(x2).reshape(x.shape), st


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def sizes(self) -> tuple:
        return len(self.train), len(self.val), len(self.test)

    def to_dict(self) -> dict:
        return {"train": self.train.tolist(), "val": self.val.tolist(), "test": self.test.tolist()}


def _allocate(total: int, ratios) -> list:
    val = round(total * ratios[1])
    test = round(total * ratios[2])
    return [total - val - test, val, test]


def stratified_split(rare_mask, ratios=(0.70, 0.15, 0.15), src=None) -> Split:
    """Shuffle the rare and common strata independently and cut each by ``ratios``."""
    rare_mask = np.asarray(rare_mask, dtype=bool)
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) <= 0:
        raise ValidationError(f"split ratios must be three positive numbers summing to 1, got {ratios}")
    n = rare_mask.size
    n_rare = int(rare_mask.sum())
    sizes = _allocate(n, ratios)
    rare_sizes = _allocate(n_rare, ratios)
    if min(rare_sizes) < 1:
        raise StratificationError(
            f"{n_rare} rare samples cannot give every split a rare member (per-split rare counts {rare_sizes})"
        )
    common_sizes = [s - r for s, r in zip(sizes, rare_sizes)]
    if min(common_sizes) < 1:
        raise StratificationError(f"not enough common samples ({n - n_rare}) for split sizes {sizes}")
    parts = [[], [], []]
    for stratum, counts in ((np.flatnonzero(rare_mask), rare_sizes), (np.flatnonzero(~rare_mask), common_sizes)):
        perm = stratum[np.argsort(np.asarray(src.uniform(stratum.size)), kind="stable")]
        start = 0
        for i, c in enumerate(counts):
            parts[i].append(perm[start : start + c])
            start += c
    return Split(*(np.sort(np.concatenate(p)) for p in parts))


# ---------------------------------------------------------------------------
# CSV ingestion


@dataclass
class CsvTable:
    matrix: np.ndarray
    columns: list
    categories: dict = field(default_factory=dict)

    def encode_categories(self, column: str, values: Sequence[str]) -> np.ndarray:
        """One-hot rows for new ``values`` of a fitted categorical column."""
        cats = self.categories[column]
        out = np.zeros((len(values), len(cats)))
        for i, v in enumerate(values):
            if v not in cats:
                raise UnseenCategoryError(f"column {column!r}: category {v!r} was not seen when fitting")
            out[i, cats.index(v)] = 1.0
        return out


def load_csv(path, schema: dict | None = None) -> CsvTable:
    """Strictly parse a UTF-8, comma-separated file with a header row.

    ``schema`` may list ``numeric`` and ``categorical`` column names; by
    default every column is numeric. Categorical columns become one indicator
    column per sorted category, named ``col=value``.
    """
    schema = schema or {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("file is empty", line=1) from None
        rows = [(reader.line_num, row) for row in reader if row]
    numeric = list(schema.get("numeric", [c for c in header if c not in schema.get("categorical", [])]))
    categorical = list(schema.get("categorical", []))
    for col in numeric + categorical:
        if col not in header:
            raise ParseError(f"column {col!r} missing from header {header}", line=1)
    num_idx = [header.index(c) for c in numeric]
    cat_idx = [header.index(c) for c in categorical]
    values = np.empty((len(rows), len(numeric)))
    cat_values = [[] for _ in categorical]
    for r, (line, row) in enumerate(rows):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=line)
        for j, i in enumerate(num_idx):
            try:
                v = float(row[i])
            except ValueError:
                raise ParseError(f"column {header[i]!r}: {row[i]!r} is not a number", line=line) from None
            if not math.isfinite(v):
                raise ParseError(f"column {header[i]!r}: non-finite value {row[i]!r}", line=line)
            values[r, j] = v
        for j, i in enumerate(cat_idx):
            cat_values[j].append(row[i].strip())
    table = CsvTable(values, numeric)
    blocks = [values]
    for col, vals in zip(categorical, cat_values):
        table.categories[col] = sorted(set(vals))
        blocks.append(table.encode_categories(col, vals))
        table.columns.extend(f"{col}={c}" for c in table.categories[col])
    table.matrix = np.hstack(blocks) if len(blocks) > 1 else values
    return table


@dataclass
class LabeledDataset:
    """Raw samples plus labels, split and training-split standardization."""

    raw: np.ndarray
    columns: list
    rare_mask: np.ndarray
    threshold_meta: ThresholdMeta
    split: Split
    scaler: Standardizer

    @property
    def samples(self) -> np.ndarray:
        return self.scaler.transform(self.raw)

    @property
    def n_features(self) -> int:
        return self.raw.shape[1]

    def part(self, name: str):
        idx = getattr(self.split, name)
        return self.samples[idx], self.rare_mask[idx]


def build_dataset(raw, columns, label: dict, ratios, src) -> LabeledDataset:
    """Label on raw values, split stratified, then standardize with training statistics."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim == 1:
        raw = raw[:, None]
    col = int(label.get("column", 0))
    if label["rule"] == "kappa_sigma":
        mask, meta = label_rare_kappa_sigma(raw[:, col], label["kappa"], label.get("direction", LOWER), col)
    elif label["rule"] == "quantile":
        mask, meta = label_rare_quantile(raw[:, col], label["level"], label.get("direction", UPPER), col)
    else:
        raise ValidationError(f"unknown labelling rule {label['rule']!r}")
    split = stratified_split(mask, ratios, src)
    _, scaler = standardize(raw, split.train, columns)
    return LabeledDataset(raw, list(columns), mask, meta, split, scaler)
