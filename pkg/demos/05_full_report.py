# End-to-end: write a synthetic score table, select a threshold on the
# validation rows, transfer it to the test rows, and inspect the report.
# The CLI equivalents are printed at the end.
import json
import tempfile
from pathlib import Path

import numpy as np

from screenkit import BootstrapConfig, ClassLabel, RunConfig, ScoreRow, run_develop, run_fixed
from screenkit.metrics_core import write_score_table

rng = np.random.default_rng(11)
rows = []
for split, n in (("val", 226), ("test", 224)):
    for i in range(n):
        positive = rng.random() < 0.73
        label = (
            ClassLabel.OSTEOPOROSIS if positive and rng.random() < 0.48
            else (ClassLabel.OSTEOPENIA if positive else ClassLabel.NORMAL)
        )
        screen = float(np.clip(0.55 + 0.28 * (positive - 0.5) + 0.18 * rng.standard_normal(), 0, 1))
        severe = None
        if label != ClassLabel.NORMAL:
            is_severe = label == ClassLabel.OSTEOPOROSIS
            severe = float(np.clip(0.5 + 0.3 * (is_severe - 0.5) + 0.2 * rng.standard_normal(), 0, 1))
        tscore_ref = tscore_pred = None
        if rng.random() < 0.14:  # a small labeled T-score subset
            tscore_ref = float(-2.2 + 1.1 * rng.standard_normal())
            tscore_pred = float(tscore_ref + 0.35 * rng.standard_normal())
        rows.append(ScoreRow(
            sample_id=f"{split}_{i:04d}", split=split, label_class=label,
            screen_prob=screen, severe_prob=severe,
            tscore_pred=tscore_pred, tscore_ref=tscore_ref,
        ))

workdir = Path(tempfile.mkdtemp(prefix="screenkit_demo_"))
scores_path = workdir / "scores.csv"
write_score_table(rows, scores_path)
print(f"score table: {scores_path} ({len(rows)} rows)")

bootstrap = BootstrapConfig(replicates=500, seed=42)  # 2000 in real runs

develop = run_develop(RunConfig(
    mode="develop", score_path=scores_path, bootstrap=bootstrap,
    output_path=workdir / "develop_report.json",
))
tau = develop["policy"]["tau_star"]
print(f"\nselected tau* = {tau} "
      f"(feasible: {develop['policy']['feasible']}, "
      f"feasible set size {develop['policy']['feasible_set_size']})")

fixed = run_fixed(RunConfig(
    mode="internal_test", score_path=scores_path, tau=tau, split="test",
    severity_tau=develop.get("severity_policy", {}).get("tau_star"),
    bootstrap=bootstrap, output_path=workdir / "test_report.json",
))
screening = fixed["screening"]
print(f"\ninternal test at tau*={tau}:")
print(f"  AUROC {screening['auroc']['point']:.3f} "
      f"({screening['auroc']['low']:.3f}-{screening['auroc']['high']:.3f})")
print(f"  AUPRC {screening['auprc']['point']:.3f} "
      f"({screening['auprc']['low']:.3f}-{screening['auprc']['high']:.3f})")
op = screening["operating_point"]
print(f"  sens {op['sensitivity']['point']:.3f} "
      f"({op['sensitivity']['low']:.3f}-{op['sensitivity']['high']:.3f}), "
      f"spec {op['specificity']['point']:.3f} "
      f"({op['specificity']['low']:.3f}-{op['specificity']['high']:.3f})")
print(f"  confusion: {screening['confusion']}")
if "severity" in fixed:
    print(f"  severity AUROC {fixed['severity']['auroc']['point']:.3f} "
          f"on {fixed['severity']['n']} Bone-Loss rows")
if "tscore" in fixed:
    t = fixed["tscore"]
    print(f"  T-score: MAE {t['mae']:.3f}, RMSE {t['rmse']:.3f}, "
          f"r {t['pearson_r']['point']:.3f}, n={t['n']}")

report = json.loads((workdir / "test_report.json").read_text())
print(f"\nreport blocks: {sorted(report.keys())}")
print(f"input digest: {report['run']['inputs']['scores']['sha256'][:16]}...")

print("\nCLI equivalents:")
print(f"  screenkit select-threshold --scores {scores_path} --out develop_report.json")
print(f"  screenkit evaluate --scores {scores_path} --tau {tau} --split test --out test_report.json")
