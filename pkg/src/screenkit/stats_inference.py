"""Resampling and classical inference utilities.

Confidence intervals for classification metrics come from a stratified
bootstrap: every replicate resamples with replacement *within* each
label class, so class counts (and hence prevalence) are preserved and
curve metrics stay defined. Replicates are driven by per-replicate
PCG64 substreams derived from ``(seed, replicate_index)``, which makes
intervals identical whether replicates run sequentially or fanned out
across threads.

Also here: Fisher-z intervals for correlations, the Kruskal-Wallis
rank test with tie correction, Pearson's chi-square test without
continuity correction, and the chi-square survival function they share.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import special

from .errors import InferenceError, ValidationError
from .metrics_core import (
    OPERATING_METRIC_NAMES,
    LabeledScores,
    brier,
    confusion_at,
    operating_point_metrics,
    pr_curve,
    roc_curve,
)

__all__ = [
    "BootstrapConfig",
    "Chi2Result",
    "ConfidenceInterval",
    "GroupedSamples",
    "KruskalWallisResult",
    "chi2_sf",
    "chi_square_test",
    "fisher_z_ci",
    "kruskal_wallis",
    "paired_bootstrap_ci",
    "resolve_metric",
    "stratified_bootstrap_ci",
]

MetricFn = Callable[[LabeledScores], "float | None"]
PairedMetricFn = Callable[[np.ndarray, np.ndarray], "float | None"]
GroupedSamples = Sequence[Sequence[float]]

THREADS_ENV_VAR = "SCREENKIT_THREADS"


@dataclass(frozen=True)
class BootstrapConfig:
    replicates: int = 2000
    seed: int = 0
    ci_level: float = 0.95
    method: str = "percentile"

    def __post_init__(self) -> None:
        if self.replicates < 1:
            raise ValidationError(f"replicates must be >= 1, got {self.replicates}")
        if not 0.0 < self.ci_level < 1.0:
            raise ValidationError(f"ci_level must lie in (0, 1), got {self.ci_level}")
        if self.method != "percentile":
            raise ValidationError(f"unsupported CI method {self.method!r}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a nonnegative 64-bit integer")


@dataclass(frozen=True)
class ConfidenceInterval:
    low: float
    high: float
    point: float
    undefined_replicates: int = 0

    def __post_init__(self) -> None:
        if not self.low <= self.high:
            raise ValidationError(f"interval bounds out of order: ({self.low}, {self.high})")
        if not math.isfinite(self.point):
            raise ValidationError("point estimate must be finite")

    def as_dict(self) -> dict:
        return {
            "point": self.point,
            "low": self.low,
            "high": self.high,
            "undefined_replicates": self.undefined_replicates,
        }


def default_threads() -> int:
    """Worker cap for replicate fan-out, from SCREENKIT_THREADS (default 1)."""
    raw = os.environ.get(THREADS_ENV_VAR, "1")
    try:
        threads = int(raw)
    except ValueError:
        raise ValidationError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}")
    return max(1, threads)


def _clean(value: "float | None") -> "float | None":
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def resample_indices(strata: Sequence[np.ndarray], seed: int, index: int) -> np.ndarray:
    """Index vector for bootstrap replicate ``index``: per-stratum draws with replacement.

    The replicate's generator is a PCG64 stream seeded from (seed, index),
    so any replicate can be reproduced in isolation and execution order
    never matters.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, index)))
    picks = [group[rng.integers(0, group.size, group.size)] for group in strata]
    return np.concatenate(picks)


def _bootstrap_engine(
    strata: Sequence[np.ndarray],
    evaluate: Callable[[np.ndarray], "float | None"],
    point: "float | None",
    config: BootstrapConfig,
    threads: "int | None",
) -> ConfidenceInterval:
    """Shared replicate loop: resample indices within strata, evaluate, summarize."""
    point = _clean(point)
    if point is None:
        raise InferenceError("metric is undefined on the original data")

    def one_replicate(index: int) -> "float | None":
        return _clean(evaluate(resample_indices(strata, config.seed, index)))

    workers = threads if threads is not None else default_threads()
    indices = range(config.replicates)
    if workers <= 1:
        raw = [one_replicate(i) for i in indices]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(one_replicate, indices))

    values = [v for v in raw if v is not None]
    undefined = config.replicates - len(values)
    if not values:
        raise InferenceError("every bootstrap replicate was undefined")

    alpha = (1.0 - config.ci_level) / 2.0
    low, high = np.quantile(np.asarray(values), [alpha, 1.0 - alpha], method="linear")
    return ConfidenceInterval(
        low=float(low), high=float(high), point=point, undefined_replicates=undefined
    )


def stratified_bootstrap_ci(
    data: LabeledScores,
    metric: "MetricFn | str",
    config: BootstrapConfig | None = None,
    threads: "int | None" = None,
) -> ConfidenceInterval:
    """Percentile bootstrap CI for a classification metric, stratified by label.

    ``metric`` is a callable on LabeledScores (returning None when
    undefined) or a registered name like ``"auroc"``. Replicates where
    the metric is undefined are dropped and counted, never imputed.
    """
    config = config or BootstrapConfig()
    if isinstance(metric, str):
        metric = resolve_metric(metric)
    if not data.has_both_classes():
        raise ValidationError("stratified bootstrap needs both label classes")

    strata = [
        np.flatnonzero(data.labels == 0),
        np.flatnonzero(data.labels == 1),
    ]
    labels, scores = data.labels, data.scores

    def evaluate(idx: np.ndarray) -> "float | None":
        return metric(LabeledScores(labels=labels[idx], scores=scores[idx]))

    return _bootstrap_engine(strata, evaluate, metric(data), config, threads)


def paired_bootstrap_ci(
    pred: np.ndarray,
    ref: np.ndarray,
    metric: PairedMetricFn,
    config: BootstrapConfig | None = None,
    labels: "np.ndarray | None" = None,
    stratify: bool = True,
    threads: "int | None" = None,
) -> ConfidenceInterval:
    """Bootstrap CI for a paired-vector metric (regression agreement).

    With ``stratify`` (the default) replicates preserve the per-class
    counts given by ``labels``; pass ``stratify=False`` for plain
    resampling of the pairs.
    """
    config = config or BootstrapConfig()
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.ndim != 1 or pred.shape != ref.shape or pred.size == 0:
        raise ValidationError("pred and ref must be equal-length nonempty vectors")

    if stratify:
        if labels is None:
            raise ValidationError("stratified resampling needs labels; pass stratify=False")
        labels = np.asarray(labels)
        if labels.shape != pred.shape:
            raise ValidationError("labels must align with pred/ref")
        strata = [np.flatnonzero(labels == v) for v in np.unique(labels)]
    else:
        strata = [np.arange(pred.size)]

    def evaluate(idx: np.ndarray) -> "float | None":
        return metric(pred[idx], ref[idx])

    return _bootstrap_engine(strata, evaluate, metric(pred, ref), config, threads)


def resolve_metric(name: str, tau: "float | None" = None) -> MetricFn:
    """Look up a named classification metric for bootstrap use.

    Curve metrics ("auroc", "auprc", "brier") need no threshold;
    operating-point names ("sensitivity", "specificity", ...) require
    ``tau``.
    """
    if name == "auroc":
        return lambda d: roc_curve(d).auroc
    if name == "auprc":
        return lambda d: pr_curve(d).auprc
    if name == "brier":
        return brier
    if name in OPERATING_METRIC_NAMES:
        if tau is None:
            raise ValidationError(f"metric {name!r} needs a threshold (tau)")
        threshold = float(tau)
        return lambda d: getattr(operating_point_metrics(confusion_at(d, threshold)), name)
    raise ValidationError(f"unknown metric {name!r}")


def fisher_z_ci(r: float, n: int, ci_level: float = 0.95) -> ConfidenceInterval:
    """Normal-approximation CI for a Pearson correlation via atanh.

    Needs |r| < 1 and n >= 4 (the standard error is 1/sqrt(n-3)).
    """
    if not 0.0 < ci_level < 1.0:
        raise ValidationError(f"ci_level must lie in (0, 1), got {ci_level}")
    if not math.isfinite(r) or abs(r) >= 1.0:
        raise ValidationError(f"need |r| < 1, got {r}")
    if n < 4:
        raise ValidationError(f"need n >= 4, got {n}")
    z = math.atanh(r)
    se = 1.0 / math.sqrt(n - 3)
    z_crit = float(special.ndtri((1.0 + ci_level) / 2.0))
    return ConfidenceInterval(
        low=math.tanh(z - z_crit * se), high=math.tanh(z + z_crit * se), point=r
    )


def chi2_sf(x: float, df: int) -> float:
    """Chi-square survival function: 1 - P(df/2, x/2) via regularized gamma."""
    if not math.isfinite(x) or x < 0.0:
        raise ValidationError(f"x must be finite and >= 0, got {x}")
    if df < 1 or int(df) != df:
        raise ValidationError(f"df must be a positive integer, got {df}")
    return float(special.gammaincc(df / 2.0, x / 2.0))


def _midranks(values: np.ndarray) -> np.ndarray:
    """Average ranks (1-based) with ties sharing their mean rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_values = values[order]
    i = 0
    while i < values.size:
        j = i + 1
        while j < values.size and sorted_values[j] == sorted_values[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j + 1)  # mean of ranks i+1 .. j
        i = j
    return ranks


class KruskalWallisResult(NamedTuple):
    h: float
    p: float


def kruskal_wallis(samples: GroupedSamples) -> KruskalWallisResult:
    """Kruskal-Wallis H with tie correction; p from the chi-square tail.

    All-identical pooled values make the correction factor zero; that is
    the no-information case and is reported as H=0, p=1 rather than an
    error.
    """
    groups = [np.asarray(g, dtype=np.float64) for g in samples]
    if len(groups) < 2:
        raise ValidationError("need at least 2 groups")
    if any(g.size == 0 for g in groups):
        raise ValidationError("every group must be nonempty")
    pooled = np.concatenate(groups)
    n = pooled.size
    if n < 3:
        raise ValidationError("need at least 3 observations in total")
    if not np.isfinite(pooled).all():
        raise ValidationError("group values must be finite")

    ranks = _midranks(pooled)
    h = 0.0
    offset = 0
    for g in groups:
        rank_sum = float(ranks[offset : offset + g.size].sum())
        h += rank_sum**2 / g.size
        offset += g.size
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0)

    _, tie_counts = np.unique(pooled, return_counts=True)
    correction = 1.0 - float(np.sum(tie_counts**3 - tie_counts)) / (n**3 - n)
    if correction == 0.0:
        return KruskalWallisResult(h=0.0, p=1.0)
    h /= correction
    h = max(h, 0.0)  # guard tiny negative float residue
    return KruskalWallisResult(h=h, p=chi2_sf(h, len(groups) - 1))


class Chi2Result(NamedTuple):
    chi2: float
    df: int
    p: float


def chi_square_test(table: Sequence[Sequence[float]]) -> Chi2Result:
    """Pearson chi-square independence test; no continuity correction."""
    observed = np.asarray(table, dtype=np.float64)
    if observed.ndim != 2 or observed.shape[0] < 2 or observed.shape[1] < 2:
        raise ValidationError(f"need an r x c table with r, c >= 2, got shape {observed.shape}")
    if (observed < 0).any() or not np.isfinite(observed).all():
        raise ValidationError("counts must be finite and nonnegative")
    row_sums = observed.sum(axis=1)
    col_sums = observed.sum(axis=0)
    if (row_sums <= 0).any() or (col_sums <= 0).any():
        raise ValidationError("every row and column sum must be positive")

    expected = np.outer(row_sums, col_sums) / observed.sum()
    chi2 = float(np.sum((observed - expected) ** 2 / expected))
    df = (observed.shape[0] - 1) * (observed.shape[1] - 1)
    return Chi2Result(chi2=chi2, df=df, p=chi2_sf(chi2, df))
