"""Classification, regression, and agreement metrics.

Two conventions are fixed here and used everywhere else in the toolkit:

* a sample is predicted positive iff its score is >= the threshold;
* metrics whose denominator is zero are reported as ``None`` and listed
  in the ``undefined`` field rather than being coerced to 0, so bootstrap
  replicates can drop them honestly.

The module also owns the score-table file schema
(``sample_id,split,label_class,screen_prob,severe_prob,tscore_pred,tscore_ref``),
which is the contract between this toolkit and any model that produces
scores for it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset_audit import ClassLabel
from .errors import CurveUndefinedError, InsufficientDataError, ValidationError

__all__ = [
    "BlandAltmanSummary",
    "ConfusionCounts",
    "LabeledScores",
    "OperatingPointMetrics",
    "PrCurve",
    "RegressionMetrics",
    "RocCurve",
    "ScoreRow",
    "bland_altman",
    "brier",
    "confusion_at",
    "operating_point_metrics",
    "pr_curve",
    "read_score_table",
    "regression_metrics",
    "roc_curve",
    "screening_scores",
    "severity_scores",
    "tscore_pairs",
    "write_score_table",
]

OPERATING_METRIC_NAMES = (
    "sensitivity",
    "specificity",
    "ppv",
    "npv",
    "accuracy",
    "balanced_accuracy",
    "f1",
    "youden_j",
    "mcc",
)


@dataclass(frozen=True)
class LabeledScores:
    """Paired binary labels and predicted probabilities."""

    labels: np.ndarray
    scores: np.ndarray

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=np.float64)
        if labels.ndim != 1 or scores.ndim != 1 or labels.shape != scores.shape:
            raise ValidationError(
                f"labels and scores must be equal-length vectors, got "
                f"{labels.shape} and {scores.shape}"
            )
        if labels.size == 0:
            raise ValidationError("need at least one sample")
        if not np.isin(labels, (0, 1)).all():
            raise ValidationError("labels must be 0 or 1")
        if not np.isfinite(scores).all():
            raise ValidationError("scores must be finite")
        if scores.min() < 0.0 or scores.max() > 1.0:
            raise ValidationError("scores must lie in [0, 1]")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def n_pos(self) -> int:
        return int(np.count_nonzero(self.labels == 1))

    @property
    def n_neg(self) -> int:
        return int(np.count_nonzero(self.labels == 0))

    @property
    def prevalence(self) -> float:
        return self.n_pos / len(self)

    def has_both_classes(self) -> bool:
        return self.n_pos > 0 and self.n_neg > 0


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        for name in ("tp", "fp", "fn", "tn"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be nonnegative")
        if self.total < 1:
            raise ValidationError("confusion counts must cover at least one sample")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion_at(data: LabeledScores, tau: float) -> ConfusionCounts:
    """Tally the confusion matrix with the score >= tau decision rule."""
    if not 0.0 <= tau <= 1.0:
        raise ValidationError(f"tau must lie in [0, 1], got {tau}")
    predicted = data.scores >= tau
    actual = data.labels == 1
    return ConfusionCounts(
        tp=int(np.count_nonzero(predicted & actual)),
        fp=int(np.count_nonzero(predicted & ~actual)),
        fn=int(np.count_nonzero(~predicted & actual)),
        tn=int(np.count_nonzero(~predicted & ~actual)),
    )


@dataclass(frozen=True)
class OperatingPointMetrics:
    """Threshold-level metrics; a ``None`` field means its denominator was 0."""

    sensitivity: float | None
    specificity: float | None
    ppv: float | None
    npv: float | None
    accuracy: float | None
    balanced_accuracy: float | None
    f1: float | None
    youden_j: float | None
    mcc: float | None

    @property
    def undefined(self) -> tuple[str, ...]:
        return tuple(n for n in OPERATING_METRIC_NAMES if getattr(self, n) is None)

    def as_dict(self) -> dict[str, float | None]:
        return {n: getattr(self, n) for n in OPERATING_METRIC_NAMES}


def _ratio(num: int, den: int) -> float | None:
    return num / den if den > 0 else None


def operating_point_metrics(c: ConfusionCounts) -> OperatingPointMetrics:
    """Derive all operating-point metrics from one confusion matrix."""
    sens = _ratio(c.tp, c.tp + c.fn)
    spec = _ratio(c.tn, c.tn + c.fp)
    ppv = _ratio(c.tp, c.tp + c.fp)
    npv = _ratio(c.tn, c.tn + c.fn)
    accuracy = (c.tp + c.tn) / c.total

    balanced = None if sens is None or spec is None else (sens + spec) / 2.0
    youden = None if sens is None or spec is None else sens + spec - 1.0

    f1 = None
    if sens is not None and ppv is not None and (ppv + sens) > 0.0:
        f1 = 2.0 * ppv * sens / (ppv + sens)

    mcc = None
    mcc_den = (
        float(c.tp + c.fp) * float(c.tp + c.fn) * float(c.tn + c.fp) * float(c.tn + c.fn)
    )
    if mcc_den > 0.0:
        mcc = (float(c.tp) * c.tn - float(c.fp) * c.fn) / math.sqrt(mcc_den)

    return OperatingPointMetrics(
        sensitivity=sens,
        specificity=spec,
        ppv=ppv,
        npv=npv,
        accuracy=accuracy,
        balanced_accuracy=balanced,
        f1=f1,
        youden_j=youden,
        mcc=mcc,
    )


def _grouped_counts(data: LabeledScores) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distinct scores in descending order with per-score positive/negative counts."""
    order = np.argsort(-data.scores, kind="stable")
    scores = data.scores[order]
    labels = data.labels[order]
    distinct, start = np.unique(-scores, return_index=True)
    boundaries = np.append(start, scores.size)
    pos_per = np.add.reduceat(labels, boundaries[:-1])
    neg_per = np.diff(boundaries) - pos_per
    return -distinct, pos_per.astype(np.int64), neg_per.astype(np.int64)


@dataclass(frozen=True)
class RocCurve:
    points: tuple[tuple[float, float], ...]
    auroc: float


def roc_curve(data: LabeledScores) -> RocCurve:
    """ROC polyline over distinct score values plus its trapezoidal area.

    Ties are grouped, the curve is anchored at (0,0) and (1,1), and the
    trapezoidal area equals the Mann-Whitney statistic with tied pairs
    counted half.
    """
    if not data.has_both_classes():
        raise CurveUndefinedError("ROC curve needs both classes present")
    _, pos_per, neg_per = _grouped_counts(data)
    p, n = data.n_pos, data.n_neg

    tpr = np.concatenate(([0.0], np.cumsum(pos_per) / p))
    fpr = np.concatenate(([0.0], np.cumsum(neg_per) / n))
    auroc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    points = tuple((float(x), float(y)) for x, y in zip(fpr, tpr))
    return RocCurve(points=points, auroc=auroc)


@dataclass(frozen=True)
class PrCurve:
    points: tuple[tuple[float, float], ...]
    auprc: float
    baseline: float


def pr_curve(data: LabeledScores) -> PrCurve:
    """Precision-recall points and average precision, ties grouped.

    The area is step-wise average precision (sum of precision at each
    descending-score prefix cut weighted by its recall increment), not a
    trapezoidal interpolation. The chance-level precision (prevalence)
    is reported alongside.
    """
    if data.n_pos == 0:
        raise CurveUndefinedError("PR curve needs at least one positive")
    _, pos_per, neg_per = _grouped_counts(data)
    p = data.n_pos

    cum_tp = np.cumsum(pos_per)
    cum_predicted = np.cumsum(pos_per + neg_per)
    recall = cum_tp / p
    precision = cum_tp / cum_predicted
    delta_recall = np.diff(np.concatenate(([0.0], recall)))
    auprc = float(np.sum(delta_recall * precision))
    points = tuple((float(r), float(q)) for r, q in zip(recall, precision))
    return PrCurve(points=points, auprc=auprc, baseline=data.prevalence)


def brier(data: LabeledScores) -> float:
    """Mean squared difference between scores and binary labels."""
    return float(np.mean((data.scores - data.labels) ** 2))


@dataclass(frozen=True)
class RegressionMetrics:
    mae: float
    rmse: float
    pearson_r: float | None
    n: int

    @property
    def undefined(self) -> tuple[str, ...]:
        return ("pearson_r",) if self.pearson_r is None else ()


def regression_metrics(pred: Sequence[float], ref: Sequence[float]) -> RegressionMetrics:
    """MAE, RMSE, and Pearson correlation of paired predictions.

    Pearson r is ``None`` (flagged, not zero) when either vector has zero
    variance; MAE and RMSE are always returned.
    """
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.ndim != 1 or pred.shape != ref.shape or pred.size == 0:
        raise ValidationError("pred and ref must be equal-length nonempty vectors")
    if not (np.isfinite(pred).all() and np.isfinite(ref).all()):
        raise ValidationError("pred and ref must be finite")

    diff = pred - ref
    mae = float(np.mean(np.abs(diff)))
    rmse = float(math.sqrt(np.mean(diff**2)))

    pearson = None
    dp = pred - pred.mean()
    dr = ref - ref.mean()
    denom = math.sqrt(float(np.sum(dp**2)) * float(np.sum(dr**2)))
    if denom > 0.0:
        pearson = float(np.sum(dp * dr) / denom)
    return RegressionMetrics(mae=mae, rmse=rmse, pearson_r=pearson, n=int(pred.size))


@dataclass(frozen=True)
class BlandAltmanSummary:
    bias: float
    loa_low: float
    loa_high: float
    n: int


def bland_altman(pred: Sequence[float], ref: Sequence[float]) -> BlandAltmanSummary:
    """Mean bias of (pred - ref) with 1.96-sigma limits of agreement.

    The spread uses the n-1 sample standard deviation; at least two pairs
    are required.
    """
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.ndim != 1 or pred.shape != ref.shape:
        raise ValidationError("pred and ref must be equal-length vectors")
    if pred.size < 2:
        raise InsufficientDataError("Bland-Altman limits need at least two pairs")
    diff = pred - ref
    bias = float(diff.mean())
    sd = float(diff.std(ddof=1))
    return BlandAltmanSummary(
        bias=bias, loa_low=bias - 1.96 * sd, loa_high=bias + 1.96 * sd, n=int(pred.size)
    )


# --------------------------------------------------------------------------
# Score-table file schema
# --------------------------------------------------------------------------

SCORE_COLUMNS = (
    "sample_id",
    "split",
    "label_class",
    "screen_prob",
    "severe_prob",
    "tscore_pred",
    "tscore_ref",
)


@dataclass(frozen=True)
class ScoreRow:
    """One evaluated sample: reference class plus model outputs."""

    sample_id: str
    split: str
    label_class: ClassLabel
    screen_prob: float
    severe_prob: float | None = None
    tscore_pred: float | None = None
    tscore_ref: float | None = None

    def __post_init__(self) -> None:
        if not self.sample_id:
            raise ValidationError("sample_id must be nonempty")
        if not 0.0 <= self.screen_prob <= 1.0:
            raise ValidationError(
                f"row {self.sample_id}: screen_prob must lie in [0, 1]"
            )
        if self.severe_prob is not None and not 0.0 <= self.severe_prob <= 1.0:
            raise ValidationError(
                f"row {self.sample_id}: severe_prob must lie in [0, 1]"
            )
        if self.severe_prob is not None and self.label_class == ClassLabel.NORMAL:
            raise ValidationError(
                f"row {self.sample_id}: severe_prob is only defined for Bone-Loss rows"
            )
        for name in ("tscore_pred", "tscore_ref"):
            value = getattr(self, name)
            if value is not None and not math.isfinite(value):
                raise ValidationError(f"row {self.sample_id}: {name} must be finite")

    @property
    def is_bone_loss(self) -> bool:
        return self.label_class != ClassLabel.NORMAL


def read_score_table(path: str | Path) -> list[ScoreRow]:
    """Parse a score-table CSV, validating every row."""
    path = Path(path)
    rows: list[ScoreRow] = []
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or tuple(reader.fieldnames) != SCORE_COLUMNS:
            raise ValidationError(
                f"{path}: expected header {','.join(SCORE_COLUMNS)}, got {reader.fieldnames}"
            )
        seen: set[str] = set()
        for line, raw in enumerate(reader, start=2):
            sample_id = raw["sample_id"].strip()
            if sample_id in seen:
                raise ValidationError(f"{path} line {line}: duplicate sample_id {sample_id!r}")
            seen.add(sample_id)

            def opt(column: str) -> float | None:
                text = (raw[column] or "").strip()
                if text == "":
                    return None
                try:
                    return float(text)
                except ValueError as exc:
                    raise ValidationError(
                        f"{path} line {line}: bad {column} value {text!r}"
                    ) from exc

            screen_prob = opt("screen_prob")
            if screen_prob is None:
                raise ValidationError(f"{path} line {line}: screen_prob is required")
            try:
                label = ClassLabel(int(raw["label_class"]))
            except (TypeError, ValueError) as exc:
                raise ValidationError(
                    f"{path} line {line}: bad label_class {raw['label_class']!r}"
                ) from exc
            rows.append(
                ScoreRow(
                    sample_id=sample_id,
                    split=raw["split"].strip(),
                    label_class=label,
                    screen_prob=screen_prob,
                    severe_prob=opt("severe_prob"),
                    tscore_pred=opt("tscore_pred"),
                    tscore_ref=opt("tscore_ref"),
                )
            )
    return rows


def write_score_table(rows: Sequence[ScoreRow], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(SCORE_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.sample_id,
                    row.split,
                    row.label_class.value,
                    repr(row.screen_prob),
                    "" if row.severe_prob is None else repr(row.severe_prob),
                    "" if row.tscore_pred is None else repr(row.tscore_pred),
                    "" if row.tscore_ref is None else repr(row.tscore_ref),
                ]
            )


def screening_scores(rows: Sequence[ScoreRow], split: str | None = None) -> LabeledScores:
    """Binary screening view: Bone Loss (Osteopenia or Osteoporosis) is positive."""
    selected = [r for r in rows if split is None or r.split == split]
    if not selected:
        raise ValidationError(f"no rows{f' in split {split!r}' if split else ''}")
    labels = np.array([1 if r.is_bone_loss else 0 for r in selected], dtype=np.int64)
    scores = np.array([r.screen_prob for r in selected], dtype=np.float64)
    return LabeledScores(labels=labels, scores=scores)


def severity_scores(rows: Sequence[ScoreRow], split: str | None = None) -> LabeledScores:
    """Severity view on Bone-Loss rows only: Osteoporosis is the positive class."""
    selected = [
        r
        for r in rows
        if r.is_bone_loss and r.severe_prob is not None and (split is None or r.split == split)
    ]
    if not selected:
        raise ValidationError("no Bone-Loss rows with severe_prob present")
    labels = np.array(
        [1 if r.label_class == ClassLabel.OSTEOPOROSIS else 0 for r in selected],
        dtype=np.int64,
    )
    scores = np.array([r.severe_prob for r in selected], dtype=np.float64)
    return LabeledScores(labels=labels, scores=scores)


def tscore_pairs(
    rows: Sequence[ScoreRow], split: str | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Aligned (predicted, reference) T-score vectors for rows carrying both."""
    selected = [
        r
        for r in rows
        if r.tscore_pred is not None
        and r.tscore_ref is not None
        and (split is None or r.split == split)
    ]
    pred = np.array([r.tscore_pred for r in selected], dtype=np.float64)
    ref = np.array([r.tscore_ref for r in selected], dtype=np.float64)
    return pred, ref
