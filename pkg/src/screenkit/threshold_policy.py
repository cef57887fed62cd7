"""Sensitivity-constrained operating-point selection.

The decision threshold is chosen by grid search: among grid points whose
sensitivity meets a floor, pick the one maximizing specificity (ties go
to the smallest threshold, which keeps the largest sensitivity margin).
When no grid point satisfies the floor, the fallback maximizes
sensitivity, then specificity, then prefers the smallest threshold, and
the selection is marked infeasible.

A chosen threshold is meant to be *transferred*: `evaluate_at_fixed`
applies a previously selected threshold to new data without searching.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import ValidationError
from .metrics_core import (
    ConfusionCounts,
    LabeledScores,
    OperatingPointMetrics,
    confusion_at,
    operating_point_metrics,
)

__all__ = [
    "DEFAULT_TAU",
    "FixedEvaluation",
    "PolicyConfig",
    "PolicySelection",
    "ThresholdGrid",
    "evaluate_at_fixed",
    "feasible_set",
    "select_threshold",
]

# Default shipped operating point for fixed-transfer evaluation.
DEFAULT_TAU = 0.44


@dataclass(frozen=True)
class ThresholdGrid:
    """Evenly spaced candidate thresholds, quantized to 2 decimals.

    Quantization keeps transferred thresholds exactly representable
    (0.44 stays 0.44, never 0.44000000000000001).
    """

    start: float = 0.20
    end: float = 0.80
    step: float = 0.01

    def __post_init__(self) -> None:
        if not 0.0 <= self.start < self.end <= 1.0:
            raise ValidationError(f"need 0 <= start < end <= 1, got ({self.start}, {self.end})")
        if self.step <= 0.0:
            raise ValidationError(f"step must be positive, got {self.step}")

    def values(self) -> list[float]:
        count = int((self.end - self.start) / self.step + 1e-9) + 1
        return [round(self.start + k * self.step, 2) for k in range(count)]


@dataclass(frozen=True)
class PolicyConfig:
    sensitivity_floor: float = 0.86
    grid: ThresholdGrid = field(default_factory=ThresholdGrid)

    def __post_init__(self) -> None:
        if not 0.0 < self.sensitivity_floor <= 1.0:
            raise ValidationError(
                f"sensitivity_floor must lie in (0, 1], got {self.sensitivity_floor}"
            )


@dataclass(frozen=True)
class PolicySelection:
    tau_star: float
    feasible: bool
    metrics_at_tau: OperatingPointMetrics
    feasible_set_size: int


def _require_both_classes(data: LabeledScores) -> None:
    if not data.has_both_classes():
        raise ValidationError("threshold selection needs both classes present")


def _sens_spec(data: LabeledScores, tau: float) -> tuple[float, float]:
    c = confusion_at(data, tau)
    return c.tp / (c.tp + c.fn), c.tn / (c.tn + c.fp)


def feasible_set(data: LabeledScores, config: PolicyConfig | None = None) -> list[float]:
    """All grid thresholds whose sensitivity meets the floor, ascending."""
    config = config or PolicyConfig()
    _require_both_classes(data)
    return [
        tau
        for tau in config.grid.values()
        if _sens_spec(data, tau)[0] >= config.sensitivity_floor
    ]


def select_threshold(data: LabeledScores, config: PolicyConfig | None = None) -> PolicySelection:
    """Pick the grid threshold maximizing specificity under the sensitivity floor.

    Specificity ties break toward the smallest threshold. With an empty
    feasible set the selection falls back to maximal sensitivity (then
    specificity, then smallest threshold) and is flagged infeasible.
    """
    config = config or PolicyConfig()
    _require_both_classes(data)
    grid = config.grid.values()
    stats = [(tau, *_sens_spec(data, tau)) for tau in grid]

    feasible = [(tau, sens, spec) for tau, sens, spec in stats if sens >= config.sensitivity_floor]
    if feasible:
        # max specificity; ties -> smallest tau (list is ascending in tau)
        tau_star = max(feasible, key=lambda t: (t[2], -t[0]))[0]
        chosen_feasible = True
    else:
        # fallback: max sensitivity, then max specificity, then smallest tau
        tau_star = max(stats, key=lambda t: (t[1], t[2], -t[0]))[0]
        chosen_feasible = False

    return PolicySelection(
        tau_star=tau_star,
        feasible=chosen_feasible,
        metrics_at_tau=operating_point_metrics(confusion_at(data, tau_star)),
        feasible_set_size=len(feasible),
    )


class FixedEvaluation(NamedTuple):
    confusion: ConfusionCounts
    metrics: OperatingPointMetrics


def evaluate_at_fixed(data: LabeledScores, tau: float) -> FixedEvaluation:
    """Evaluate a previously selected threshold on new data; no search."""
    counts = confusion_at(data, tau)
    return FixedEvaluation(confusion=counts, metrics=operating_point_metrics(counts))
