"""The ``screenkit`` command.

Subcommands: ``preprocess``, ``audit``, ``select-threshold``,
``evaluate``, and ``stats`` (with ``bootstrap``, ``fisherz``, ``kw``).
Exit codes: 0 clean, 2 input/configuration error, 3 audit findings.
``SCREENKIT_THREADS`` caps parallel fan-out (preprocessing and
bootstrap replicates); the default is single-threaded.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .errors import ScreenkitError, ValidationError
from .image_pipeline import PreprocessConfig, preprocess_record
from .metrics_core import read_score_table, screening_scores, severity_scores, tscore_pairs
from .report import RunConfig, _load_image, run_audit, run_develop, run_fixed
from .stats_inference import (
    BootstrapConfig,
    default_threads,
    fisher_z_ci,
    kruskal_wallis,
    paired_bootstrap_ci,
    resolve_metric,
    stratified_bootstrap_ci,
)
from .threshold_policy import DEFAULT_TAU, PolicyConfig, ThresholdGrid

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_AUDIT_FINDINGS = 3

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="seed for resampling (default 0)")
    parser.add_argument("--out", type=Path, default=None, help="write the JSON report here")
    parser.add_argument(
        "--format", choices=["json"], default="json", help="output format (json only)"
    )


def _parse_clip(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ValidationError(f"--clip expects 'low,high', got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_grid(text: str) -> ThresholdGrid:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValidationError(f"--grid expects 'start:end:step', got {text!r}")
    return ThresholdGrid(start=float(parts[0]), end=float(parts[1]), step=float(parts[2]))


def _emit(payload: dict, out: "Path | None") -> None:
    text = json.dumps(payload, indent=2)
    if out is not None:
        out.write_text(text + "\n", encoding="utf-8")
    print(text)


def _cmd_preprocess(args: argparse.Namespace) -> int:
    from PIL import Image

    source = Path(args.input)
    if source.is_dir():
        paths = sorted(p for p in source.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    elif source.exists():
        paths = [source]
    else:
        raise ValidationError(f"input not found: {source}")
    if not paths:
        raise ValidationError(f"no images under {source}")

    low, high = _parse_clip(args.clip)
    config = PreprocessConfig(
        margin_fraction=args.margin,
        fallback_area_fraction=args.fallback,
        clip_low_pct=low,
        clip_high_pct=high,
        target_size=args.size,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def process(path: Path) -> dict:
        try:
            image = _load_image(path)
        except Exception as exc:
            return {"input": str(path), "error": str(exc)}
        final, trace = preprocess_record(image, config)
        target = out_dir / (path.stem + ".png")
        Image.fromarray(final, mode="L").save(target, format="PNG")
        return {
            "input": str(path),
            "output": str(target),
            "bbox": [trace.bbox.x0, trace.bbox.y0, trace.bbox.x1, trace.bbox.y1],
            "used_fallback": trace.used_fallback,
            "otsu_threshold": trace.otsu_threshold,
            "otsu_degenerate": trace.otsu_degenerate,
            "p_lo": trace.p_lo,
            "p_hi": trace.p_hi,
        }

    workers = default_threads()
    if workers <= 1:
        entries = [process(p) for p in paths]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(process, paths))

    manifest_path = out_dir / "preprocess_manifest.jsonl"
    with manifest_path.open("w", encoding="utf-8") as handle:
        for entry in entries:
            handle.write(json.dumps(entry) + "\n")

    failures = [e for e in entries if "error" in e]
    for failure in failures:
        print(f"warning: {failure['input']}: {failure['error']}", file=sys.stderr)
    if len(failures) == len(entries):
        print("error: no image could be processed", file=sys.stderr)
        return EXIT_INPUT_ERROR
    return EXIT_OK


def _cmd_audit(args: argparse.Namespace) -> int:
    config = RunConfig(
        mode="develop",
        manifest_path=args.manifest,
        images_dir=args.images,
        max_distance=args.max_distance,
        hash_originals=args.hash_originals,
        bootstrap=BootstrapConfig(seed=args.seed),
        output_path=args.out or (str(args.manifest) + ".audit.json"),
    )
    outcome = run_audit(config)
    print(json.dumps(outcome.report["audit"], indent=2))
    return EXIT_AUDIT_FINDINGS if outcome.has_findings else EXIT_OK


def _cmd_select_threshold(args: argparse.Namespace) -> int:
    config = RunConfig(
        mode="develop",
        score_path=args.scores,
        split=args.split,
        policy=PolicyConfig(sensitivity_floor=args.floor, grid=_parse_grid(args.grid)),
        bootstrap=BootstrapConfig(replicates=args.replicates, seed=args.seed),
        output_path=args.out,
    )
    report = run_develop(config)
    print(json.dumps(report["policy"], indent=2))
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    config = RunConfig(
        mode=args.mode,
        score_path=args.scores,
        tau=args.tau,
        severity_tau=args.severity_tau,
        split=args.split,
        bootstrap=BootstrapConfig(replicates=args.replicates, seed=args.seed),
        output_path=args.out,
    )
    report = run_fixed(config)
    summary = {
        "tau": config.tau,
        "n": report["screening"]["n"],
        "auroc": report["screening"]["auroc"],
        "auprc": report["screening"]["auprc"],
        "operating_point": report["screening"]["operating_point"],
        "confusion": report["screening"]["confusion"],
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


REGRESSION_METRICS = ("mae", "rmse", "pearson_r")


def _cmd_stats_bootstrap(args: argparse.Namespace) -> int:
    rows = read_score_table(args.scores)
    config = BootstrapConfig(replicates=args.replicates, seed=args.seed, ci_level=args.level)

    if args.metric in REGRESSION_METRICS:
        pred, ref = tscore_pairs(rows, args.split)
        if pred.size == 0:
            raise ValidationError("no rows with both tscore_pred and tscore_ref")
        selected = [
            r
            for r in rows
            if r.tscore_pred is not None
            and r.tscore_ref is not None
            and (args.split is None or r.split == args.split)
        ]
        labels = np.array([1 if r.is_bone_loss else 0 for r in selected], dtype=np.int64)

        def metric(p: np.ndarray, q: np.ndarray) -> "float | None":
            diff = p - q
            if args.metric == "mae":
                return float(np.mean(np.abs(diff)))
            if args.metric == "rmse":
                return float(np.sqrt(np.mean(diff**2)))
            dp, dq = p - p.mean(), q - q.mean()
            denom = float(np.sqrt(np.sum(dp**2) * np.sum(dq**2)))
            return float(np.sum(dp * dq) / denom) if denom > 0 else None

        ci = paired_bootstrap_ci(
            pred, ref, metric, config, labels=labels, stratify=args.stratify
        )
    else:
        data = (
            severity_scores(rows, args.split)
            if args.target == "severity"
            else screening_scores(rows, args.split)
        )
        ci = stratified_bootstrap_ci(data, resolve_metric(args.metric, args.tau), config)

    _emit(
        {
            "metric": args.metric,
            "target": args.target,
            "replicates": config.replicates,
            "seed": config.seed,
            "ci_level": config.ci_level,
            **ci.as_dict(),
        },
        args.out,
    )
    return EXIT_OK


def _cmd_stats_fisherz(args: argparse.Namespace) -> int:
    ci = fisher_z_ci(args.r, args.n, args.level)
    _emit({"r": args.r, "n": args.n, "ci_level": args.level, **ci.as_dict()}, args.out)
    return EXIT_OK


def _cmd_stats_kw(args: argparse.Namespace) -> int:
    groups: dict[str, list[float]] = {}
    with Path(args.groups).open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or set(reader.fieldnames) != {"group", "value"}:
            raise ValidationError(
                f"{args.groups}: expected header group,value, got {reader.fieldnames}"
            )
        for row in reader:
            groups.setdefault(row["group"], []).append(float(row["value"]))
    result = kruskal_wallis(list(groups.values()))
    _emit(
        {"groups": {k: len(v) for k, v in groups.items()}, "h": result.h, "p": result.p},
        args.out,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="screenkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_pre = sub.add_parser("preprocess", help="normalize radiographs to square 8-bit PNGs")
    p_pre.add_argument("--in", dest="input", required=True, help="input image or directory")
    p_pre.add_argument("--out", dest="out_dir", required=True, help="output directory")
    p_pre.add_argument("--size", type=int, default=512)
    p_pre.add_argument("--margin", type=float, default=0.03)
    p_pre.add_argument("--fallback", type=float, default=0.10)
    p_pre.add_argument("--clip", default="1,99", help="percentile bounds, e.g. 1,99")
    p_pre.set_defaults(func=_cmd_preprocess)

    p_audit = sub.add_parser("audit", help="composition table and cross-split leakage scan")
    p_audit.add_argument("--manifest", required=True, type=Path)
    p_audit.add_argument("--images", type=Path, default=None)
    p_audit.add_argument("--max-distance", type=int, default=4)
    p_audit.add_argument(
        "--hash-originals",
        action="store_true",
        help="hash raw images instead of preprocessed ones",
    )
    _add_common(p_audit)
    p_audit.set_defaults(func=_cmd_audit)

    p_sel = sub.add_parser(
        "select-threshold", help="sensitivity-constrained grid search on validation rows"
    )
    p_sel.add_argument("--scores", required=True, type=Path)
    p_sel.add_argument("--floor", type=float, default=0.86)
    p_sel.add_argument("--grid", default="0.20:0.80:0.01")
    p_sel.add_argument("--split", default="val", help="rows to select on (default: val)")
    p_sel.add_argument("--B", dest="replicates", type=int, default=2000)
    _add_common(p_sel)
    p_sel.set_defaults(func=_cmd_select_threshold)

    p_eval = sub.add_parser("evaluate", help="fixed-threshold transfer evaluation")
    p_eval.add_argument("--scores", required=True, type=Path)
    p_eval.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p_eval.add_argument("--severity-tau", type=float, default=None)
    p_eval.add_argument("--split", default=None, help="optional split filter (default: all rows)")
    p_eval.add_argument("--mode", choices=["internal_test", "external"], default="internal_test")
    p_eval.add_argument("--B", dest="replicates", type=int, default=2000)
    _add_common(p_eval)
    p_eval.set_defaults(func=_cmd_evaluate)

    p_stats = sub.add_parser("stats", help="standalone statistical utilities")
    stats_sub = p_stats.add_subparsers(dest="stats_command", required=True)

    p_boot = stats_sub.add_parser("bootstrap", help="stratified bootstrap CI for one metric")
    p_boot.add_argument("--scores", required=True, type=Path)
    p_boot.add_argument("--metric", required=True)
    p_boot.add_argument("--tau", type=float, default=None)
    p_boot.add_argument("--target", choices=["screen", "severity"], default="screen")
    p_boot.add_argument("--split", default=None)
    p_boot.add_argument("--B", dest="replicates", type=int, default=2000)
    p_boot.add_argument("--level", type=float, default=0.95)
    p_boot.add_argument(
        "--no-stratify",
        dest="stratify",
        action="store_false",
        help="plain resampling for regression metrics",
    )
    _add_common(p_boot)
    p_boot.set_defaults(func=_cmd_stats_bootstrap)

    p_fz = stats_sub.add_parser("fisherz", help="Fisher-z CI for a Pearson correlation")
    p_fz.add_argument("--r", type=float, required=True)
    p_fz.add_argument("--n", type=int, required=True)
    p_fz.add_argument("--level", type=float, default=0.95)
    _add_common(p_fz)
    p_fz.set_defaults(func=_cmd_stats_fisherz)

    p_kw = stats_sub.add_parser("kw", help="Kruskal-Wallis test over a group,value CSV")
    p_kw.add_argument("--groups", required=True, type=Path)
    _add_common(p_kw)
    p_kw.set_defaults(func=_cmd_stats_kw)

    return parser


def main(argv: "list[str] | None" = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScreenkitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
