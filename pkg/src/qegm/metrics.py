"""Tail-sensitive evaluation metrics.

All functions are deterministic given their inputs. Samples are arrays of
shape (N,) or (N, d) in the same units as the region / rule they are scored
with.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import special, stats

from .errors import UndefinedMetricError, ValidationError

DEFAULT_BINS = 32
DEFAULT_SMOOTHING = 1e-9


def _as_2d(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


@dataclass(frozen=True)
class TailRegion:
    """{x : score(x) >= threshold}, with score a negative log-density."""

    score: Callable[[np.ndarray], np.ndarray]
    threshold: float
    description: str = ""

    def contains(self, x) -> np.ndarray:
        return np.asarray(self.score(_as_2d(x))) >= self.threshold


def mixture_score(spec) -> Callable:
    """Negative log-density under a known 1-D mixture (``data.MixtureSpec``)."""
    return lambda x: -spec.logpdf(_as_2d(x)[:, 0])


def kde_score(reference) -> Callable:
    """Negative log-density under a Gaussian KDE with Silverman bandwidth."""
    kde = stats.gaussian_kde(_as_2d(reference).T, bw_method="silverman")
    return lambda x: -kde.logpdf(_as_2d(x).T)


def region_from_mass(score: Callable, reference, tail_mass: float, description: str = "") -> TailRegion:
    """Threshold set so a fraction ``tail_mass`` of ``reference`` falls in the region."""
    if not 0 < tail_mass < 1:
        raise ValidationError(f"tail_mass must be in (0, 1), got {tail_mass}")
    s = np.asarray(score(_as_2d(reference)))
    return TailRegion(score, float(np.quantile(s, 1.0 - tail_mass)), description)


def kl_from_counts(p_counts, q_counts, smoothing: float = DEFAULT_SMOOTHING) -> float:
    """KL(P || Q) between two histograms over the same bins.

    ``smoothing`` is added to every normalized bin before renormalizing. An
    empty Q histogram (no model mass in the region) is scored against the bare
    smoothing floor, giving a large finite value rather than a uniform Q.
    """
    p = np.asarray(p_counts, dtype=np.float64)
    q = np.asarray(q_counts, dtype=np.float64)
    if p.sum() <= 0:
        raise UndefinedMetricError("reference histogram is empty")
    p = p / p.sum() + smoothing
    p /= p.sum()
    if q.sum() > 0:
        q = q / q.sum() + smoothing
        q /= q.sum()
    else:
        q = np.full_like(p, smoothing)
    return float(np.sum(p * np.log(p / q)))


def _equal_probability_bins(values: np.ndarray, bins: int) -> np.ndarray:
    return np.quantile(values, np.linspace(0.0, 1.0, bins + 1)[1:-1])


def _bin_counts(values: np.ndarray, interior_edges: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(interior_edges, values, side="right")
    return np.bincount(idx, minlength=len(interior_edges) + 1)


def tail_kl(real_samples, model_samples, region: TailRegion, bins: int = DEFAULT_BINS,
            smoothing: float = DEFAULT_SMOOTHING) -> float:
    """KL divergence between real and model samples restricted to ``region``.

    Bin edges are equal-probability quantiles of the real tail samples, with
    open outer bins. Multivariate samples are histogrammed per feature and the
    per-feature divergences averaged.
    """
    if bins < 2:
        raise ValidationError(f"bins must be >= 2, got {bins}")
    real, model = _as_2d(real_samples), _as_2d(model_samples)
    real_tail = real[region.contains(real)]
    model_tail = model[region.contains(model)] if len(model) else model
    if len(real_tail) == 0:
        raise UndefinedMetricError("no real samples fall in the tail region; tail KL is undefined")
    kls = []
    for j in range(real.shape[1]):
        edges = _equal_probability_bins(real_tail[:, j], bins)
        kls.append(kl_from_counts(_bin_counts(real_tail[:, j], edges), _bin_counts(model_tail[:, j], edges), smoothing))
    return float(np.mean(kls))


@dataclass(frozen=True)
class RecallResult:
    recall: float
    tp: int
    fn: int


def recall_from_counts(tp: int, fn: int) -> RecallResult:
    if tp + fn == 0:
        raise UndefinedMetricError("recall needs at least one rare sample")
    return RecallResult(tp / (tp + fn), int(tp), int(fn))


def rare_recall(held_out_rare, reconstruct: Callable, is_rare: Callable) -> RecallResult:
    """A held-out rare sample counts as found when its reconstruction is still rare."""
    x = _as_2d(held_out_rare)
    if len(x) == 0:
        raise UndefinedMetricError("no held-out rare samples; recall is undefined")
    if not np.all(is_rare(x)):
        raise ValidationError("held-out set contains samples that are not rare under the rule")
    hits = np.asarray(is_rare(_as_2d(reconstruct(x))), dtype=bool)
    tp = int(hits.sum())
    return recall_from_counts(tp, len(x) - tp)


def coverage_curve(y, mean, std, alphas) -> list:
    """[(alpha, C_hat(alpha))] for central Gaussian intervals mean +/- q * std.

    A multivariate target is covered only when every dimension is inside.
    """
    y, mean, std = _as_2d(y), _as_2d(mean), _as_2d(std)
    if not (y.shape == mean.shape == std.shape):
        raise ValidationError(f"shape mismatch: y {y.shape}, mean {mean.shape}, std {std.shape}")
    alphas = [float(a) for a in alphas]
    if any(not 0 < a < 1 for a in alphas):
        raise ValidationError(f"coverage levels must lie in (0, 1), got {alphas}")
    dev = np.abs(y - mean)
    out = []
    for a in alphas:
        half = special.ndtri(0.5 * (1.0 + a)) * std
        out.append((a, float(np.mean(np.all(dev <= half, axis=1)))))
    return out


def coverage_error(curve) -> float:
    """Mean absolute calibration error |C_hat(alpha) - alpha| over the curve."""
    return float(np.mean([abs(c - a) for a, c in curve]))


def _w1(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.sort(a), np.sort(b)
    allv = np.sort(np.concatenate([a, b]))
    widths = np.diff(allv)
    fa = np.searchsorted(a, allv[:-1], side="right") / a.size
    fb = np.searchsorted(b, allv[:-1], side="right") / b.size
    return float(np.sum(np.abs(fa - fb) * widths))


def wasserstein_1d(real_samples, model_samples) -> float:
    """Exact W1 between empirical distributions, averaged over features."""
    real, model = _as_2d(real_samples), _as_2d(model_samples)
    if len(real) == 0 or len(model) == 0:
        raise ValidationError("wasserstein distance needs non-empty sample sets")
    if real.shape[1] != model.shape[1]:
        raise ValidationError(f"feature mismatch: {real.shape[1]} vs {model.shape[1]}")
    return float(np.mean([_w1(real[:, j], model[:, j]) for j in range(real.shape[1])]))


@dataclass
class MetricsReport:
    tail_kl: float
    rare_recall: float
    tp: int
    fn: int
    coverage_curve: list
    wasserstein_1d: float
    constants: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        alphas = [a for a, _ in self.coverage_curve]
        if any(b <= a for a, b in zip(alphas, alphas[1:])):
            raise ValidationError("coverage levels must be strictly increasing")
        values = [self.tail_kl, self.rare_recall, self.wasserstein_1d] + [c for _, c in self.coverage_curve]
        if not np.all(np.isfinite(values)):
            raise ValidationError("metrics report contains non-finite values")

    @property
    def coverage_error(self) -> float:
        return coverage_error(self.coverage_curve)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["coverage_curve"] = [{"alpha": a, "coverage": c} for a, c in self.coverage_curve]
        d["coverage_error"] = self.coverage_error
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        d = dict(d)
        d.pop("coverage_error", None)
        d["coverage_curve"] = [(c["alpha"], c["coverage"]) for c in d["coverage_curve"]]
        return cls(**d)
