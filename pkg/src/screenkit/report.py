"""Evaluation runs and serialized reports.

A run reads a score table (and optionally a manifest plus image
directory), computes the requested blocks, and emits one versioned JSON
document. Reports are deterministic for fixed inputs and seed: they
carry content digests of every input file and no timestamps, so two
identical runs produce byte-identical output.

Block conventions:

* screening uses the Bone-Loss-vs-Normal view of the score table;
* the severity block is computed exclusively on Bone-Loss rows, with
  Osteoporosis as the positive class (a fixed constant, not a flag);
* blocks whose inputs are absent are omitted, never zero-filled.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dataset_audit import (
    SplitManifest,
    composition_table,
    leakage_scan,
    phash64,
    read_manifest,
)
from .errors import ConfigurationError, ValidationError
from .image_pipeline import PreprocessConfig, preprocess
from .metrics_core import (
    OPERATING_METRIC_NAMES,
    LabeledScores,
    ScoreRow,
    bland_altman,
    brier,
    confusion_at,
    operating_point_metrics,
    pr_curve,
    read_score_table,
    regression_metrics,
    roc_curve,
    screening_scores,
    severity_scores,
    tscore_pairs,
)
from .stats_inference import (
    BootstrapConfig,
    default_threads,
    fisher_z_ci,
    resample_indices,
)
from .threshold_policy import (
    DEFAULT_TAU,
    PolicyConfig,
    PolicySelection,
    select_threshold,
)

__all__ = ["AuditOutcome", "RunConfig", "run_audit", "run_develop", "run_fixed"]

SCHEMA_VERSION = 1

MODES = ("develop", "internal_test", "external")


@dataclass(frozen=True)
class RunConfig:
    """Everything one evaluation run needs; validated on construction."""

    mode: str
    score_path: "str | Path | None" = None
    manifest_path: "str | Path | None" = None
    images_dir: "str | Path | None" = None
    tau: "float | None" = None
    severity_tau: "float | None" = None
    split: "str | None" = None
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    output_path: "str | Path | None" = None
    threads: "int | None" = None
    hash_originals: bool = False
    max_distance: int = 4

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.mode in ("internal_test", "external") and self.tau is None:
            raise ConfigurationError(f"mode {self.mode!r} requires a fixed tau")
        if self.tau is not None and not 0.0 <= self.tau <= 1.0:
            raise ConfigurationError(f"tau must lie in [0, 1], got {self.tau}")


def _sha256(path: "str | Path") -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _input_digests(config: RunConfig) -> dict:
    digests = {}
    if config.score_path is not None:
        digests["scores"] = {"path": str(config.score_path), "sha256": _sha256(config.score_path)}
    if config.manifest_path is not None:
        digests["manifest"] = {
            "path": str(config.manifest_path),
            "sha256": _sha256(config.manifest_path),
        }
    return digests


def _run_header(config: RunConfig) -> dict:
    return {
        "tool": "screenkit",
        "version": __version__,
        "mode": config.mode,
        "seed": config.bootstrap.seed,
        "bootstrap_replicates": config.bootstrap.replicates,
        "ci_level": config.bootstrap.ci_level,
        "inputs": _input_digests(config),
    }


def _replicate_metrics(data: LabeledScores, tau: float) -> dict:
    """All screening metrics of one (re)sample; None marks undefined values."""
    values: dict[str, "float | None"] = {}
    values["auroc"] = roc_curve(data).auroc if data.has_both_classes() else None
    values["auprc"] = pr_curve(data).auprc if data.n_pos > 0 else None
    values["brier"] = brier(data)
    point = operating_point_metrics(confusion_at(data, tau))
    values.update(point.as_dict())
    return values


def _block_cis(
    data: LabeledScores, tau: float, config: BootstrapConfig, threads: "int | None"
) -> dict:
    """Percentile CIs for every block metric from a single replicate sweep.

    Resampling matches `stratified_bootstrap_ci` exactly (same strata
    order, same per-replicate substreams), so single-metric and block
    intervals agree to the bit.
    """
    strata = [np.flatnonzero(data.labels == 0), np.flatnonzero(data.labels == 1)]
    names = ("auroc", "auprc", "brier", *OPERATING_METRIC_NAMES)
    collected: dict[str, list[float]] = {name: [] for name in names}
    labels, scores = data.labels, data.scores

    workers = threads if threads is not None else default_threads()

    def one_replicate(index: int) -> dict:
        idx = resample_indices(strata, config.seed, index)
        return _replicate_metrics(LabeledScores(labels=labels[idx], scores=scores[idx]), tau)

    if workers <= 1:
        replicate_rows = [one_replicate(i) for i in range(config.replicates)]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            replicate_rows = list(pool.map(one_replicate, range(config.replicates)))

    for row in replicate_rows:
        for name in names:
            value = row[name]
            if value is not None and np.isfinite(value):
                collected[name].append(float(value))

    alpha = (1.0 - config.ci_level) / 2.0
    out: dict[str, dict] = {}
    for name in names:
        values = collected[name]
        undefined = config.replicates - len(values)
        if not values:
            out[name] = {"low": None, "high": None, "undefined_replicates": undefined}
            continue
        low, high = np.quantile(np.asarray(values), [alpha, 1.0 - alpha], method="linear")
        out[name] = {
            "low": float(low),
            "high": float(high),
            "undefined_replicates": undefined,
        }
    return out


def _classification_block(
    data: LabeledScores,
    tau: "float | None",
    config: BootstrapConfig,
    threads: "int | None",
) -> dict:
    """Curves, threshold-free metrics, and (when tau given) the operating point."""
    roc = roc_curve(data)
    pr = pr_curve(data)
    block: dict = {
        "n": len(data),
        "n_pos": data.n_pos,
        "n_neg": data.n_neg,
        "prevalence": data.prevalence,
        "curves": {
            "roc": [[x, y] for x, y in roc.points],
            "pr": [[r, q] for r, q in pr.points],
            "pr_baseline": pr.baseline,
        },
    }

    cis = _block_cis(data, tau if tau is not None else DEFAULT_TAU, config, threads)
    for name, point in (("auroc", roc.auroc), ("auprc", pr.auprc), ("brier", brier(data))):
        block[name] = {"point": point, **cis[name]}

    if tau is not None:
        counts = confusion_at(data, tau)
        metrics = operating_point_metrics(counts)
        block["tau"] = tau
        block["confusion"] = {
            "tp": counts.tp,
            "fp": counts.fp,
            "fn": counts.fn,
            "tn": counts.tn,
        }
        block["operating_point"] = {
            name: {"point": getattr(metrics, name), **cis[name]}
            for name in OPERATING_METRIC_NAMES
        }
        block["undefined_metrics"] = list(metrics.undefined)
    return block


def _tscore_block(pred: np.ndarray, ref: np.ndarray) -> "dict | None":
    if pred.size == 0:
        return None
    reg = regression_metrics(pred, ref)
    block: dict = {
        "n": reg.n,
        "mae": reg.mae,
        "rmse": reg.rmse,
        "pearson_r": {"point": reg.pearson_r, "low": None, "high": None},
    }
    if reg.pearson_r is not None and abs(reg.pearson_r) < 1.0 and reg.n >= 4:
        ci = fisher_z_ci(reg.pearson_r, reg.n)
        block["pearson_r"] = {"point": ci.point, "low": ci.low, "high": ci.high}
    if reg.n >= 2:
        ba = bland_altman(pred, ref)
        block["bland_altman"] = {
            "bias": ba.bias,
            "loa_low": ba.loa_low,
            "loa_high": ba.loa_high,
            "n": ba.n,
        }
    return block


def _maybe_severity_block(
    rows: list[ScoreRow],
    split: "str | None",
    tau: "float | None",
    config: BootstrapConfig,
    threads: "int | None",
) -> "dict | None":
    try:
        data = severity_scores(rows, split)
    except ValidationError:
        return None
    if not data.has_both_classes():
        return None
    block = _classification_block(data, tau, config, threads)
    block["positive_class"] = "osteoporosis"
    return block


def _selection_dict(selection: PolicySelection, config: PolicyConfig) -> dict:
    return {
        "tau_star": selection.tau_star,
        "feasible": selection.feasible,
        "feasible_set_size": selection.feasible_set_size,
        "sensitivity_floor": config.sensitivity_floor,
        "grid": {
            "start": config.grid.start,
            "end": config.grid.end,
            "step": config.grid.step,
        },
        "metrics_at_tau": selection.metrics_at_tau.as_dict(),
    }


def _write_report(report: dict, output_path: "str | Path | None") -> None:
    if output_path is not None:
        Path(output_path).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")


def run_develop(config: RunConfig) -> dict:
    """Select the operating threshold on validation rows, then evaluate it.

    The selected tau is echoed in the report for downstream
    fixed-transfer runs.
    """
    if config.score_path is None:
        raise ConfigurationError("develop mode requires a score table")
    rows = read_score_table(config.score_path)
    split = config.split if config.split is not None else "val"
    data = screening_scores(rows, split)
    if not data.has_both_classes():
        raise ValidationError(f"split {split!r} must contain both classes")

    selection = select_threshold(data, config.policy)
    report: dict = {"schema_version": SCHEMA_VERSION, "run": _run_header(config)}
    report["run"]["tau"] = selection.tau_star
    report["policy"] = _selection_dict(selection, config.policy)
    report["screening"] = _classification_block(
        data, selection.tau_star, config.bootstrap, config.threads
    )

    severity_tau = None
    try:
        severity_data = severity_scores(rows, split)
        if severity_data.has_both_classes():
            severity_selection = select_threshold(severity_data, config.policy)
            severity_tau = severity_selection.tau_star
            report["severity_policy"] = _selection_dict(severity_selection, config.policy)
    except ValidationError:
        pass
    severity = _maybe_severity_block(rows, split, severity_tau, config.bootstrap, config.threads)
    if severity is not None:
        report["severity"] = severity

    tscore = _tscore_block(*tscore_pairs(rows, split))
    if tscore is not None:
        report["tscore"] = tscore

    _write_report(report, config.output_path)
    return report


def run_fixed(config: RunConfig) -> dict:
    """Evaluate a transferred threshold; no selection happens here."""
    if config.tau is None:
        raise ConfigurationError("fixed evaluation requires tau")
    if config.score_path is None:
        raise ConfigurationError("fixed evaluation requires a score table")
    rows = read_score_table(config.score_path)
    data = screening_scores(rows, config.split)

    report: dict = {"schema_version": SCHEMA_VERSION, "run": _run_header(config)}
    report["run"]["tau"] = config.tau
    report["screening"] = _classification_block(data, config.tau, config.bootstrap, config.threads)

    severity = _maybe_severity_block(
        rows, config.split, config.severity_tau, config.bootstrap, config.threads
    )
    if severity is not None:
        report["severity"] = severity

    tscore = _tscore_block(*tscore_pairs(rows, config.split))
    if tscore is not None:
        report["tscore"] = tscore

    _write_report(report, config.output_path)
    return report


@dataclass(frozen=True)
class AuditOutcome:
    report: dict
    has_findings: bool


def _load_image(path: Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as handle:
        if handle.mode in ("L", "RGB"):
            converted = handle
        elif handle.mode in ("1", "P", "LA", "RGBA", "CMYK"):
            converted = handle.convert("RGB")
        else:
            raise ValidationError(f"{path}: unsupported image mode {handle.mode!r}")
        return np.asarray(converted)


def run_audit(config: RunConfig) -> AuditOutcome:
    """Composition table plus cross-split near-duplicate findings.

    Images are preprocessed before hashing unless ``hash_originals`` is
    set. Unreadable images are listed and excluded from the scan; the
    run continues.
    """
    if config.manifest_path is None:
        raise ConfigurationError("audit requires a manifest")
    manifest = read_manifest(config.manifest_path)
    report: dict = {"schema_version": SCHEMA_VERSION, "run": _run_header(config)}
    composition = composition_table(manifest)
    audit_block: dict = {
        "n_records": len(manifest),
        "composition": composition.as_dict(),
        "max_distance": config.max_distance,
        "hash_source": "original" if config.hash_originals else "preprocessed",
    }

    findings = []
    if config.images_dir is not None:
        images_dir = Path(config.images_dir)
        digests: dict[str, int] = {}
        unreadable: list[dict] = []
        for record in manifest.records:
            path = images_dir / record.image_path
            try:
                image = _load_image(path)
                if not config.hash_originals:
                    image = preprocess(image, config.preprocess)
                elif image.ndim == 3:
                    from .image_pipeline import to_grayscale

                    image = to_grayscale(image)
                digests[record.sample_id] = phash64(image)
            except Exception as exc:  # unreadable image: list it, keep going
                unreadable.append({"sample_id": record.sample_id, "error": str(exc)})

        readable = tuple(r for r in manifest.records if r.sample_id in digests)
        scan_manifest = SplitManifest(records=readable, provenance=manifest.provenance)
        pairs = leakage_scan(scan_manifest, digests, config.max_distance)
        findings = [
            {
                "sample_a": p.sample_a,
                "sample_b": p.sample_b,
                "split_a": p.split_a,
                "split_b": p.split_b,
                "distance": p.distance,
            }
            for p in pairs
        ]
        audit_block["unreadable"] = unreadable
        audit_block["leakage_pairs"] = findings

    report["audit"] = audit_block
    _write_report(report, config.output_path)
    return AuditOutcome(report=report, has_findings=bool(findings))
