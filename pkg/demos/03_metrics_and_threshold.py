# Curves and operating points on synthetic screening scores, then the
# sensitivity-constrained threshold selection and its fixed transfer.
import numpy as np

from screenkit import (
    LabeledScores,
    PolicyConfig,
    brier,
    evaluate_at_fixed,
    feasible_set,
    pr_curve,
    roc_curve,
    select_threshold,
)

rng = np.random.default_rng(42)
n = 226
labels = (rng.random(n) < 0.73).astype(int)  # Bone-Loss-heavy prevalence
scores = np.clip(0.55 + 0.28 * (labels - 0.5) + 0.18 * rng.standard_normal(n), 0, 1)
validation = LabeledScores(labels=labels, scores=scores)

roc = roc_curve(validation)
pr = pr_curve(validation)
print(f"validation: n={n}, prevalence {validation.prevalence:.3f}")
print(f"AUROC {roc.auroc:.3f} ({len(roc.points)} curve points)")
print(f"AUPRC {pr.auprc:.3f} (chance level {pr.baseline:.3f})")
print(f"Brier {brier(validation):.3f}")

policy = PolicyConfig(sensitivity_floor=0.86)
feasible = feasible_set(validation, policy)
print(f"\nfeasible thresholds (Sens >= {policy.sensitivity_floor}): "
      f"{feasible[0]:.2f} .. {feasible[-1]:.2f} ({len(feasible)} of 61)")

selection = select_threshold(validation, policy)
m = selection.metrics_at_tau
print(f"selected tau* = {selection.tau_star:.2f} (feasible: {selection.feasible})")
print(f"at tau*: sens {m.sensitivity:.3f}, spec {m.specificity:.3f}, "
      f"J {m.youden_j:.3f}, MCC {m.mcc:.3f}")

# Transfer the frozen threshold to a drifted "external" cohort: no re-search.
m_ext = (rng.random(42) < 0.71).astype(int)
s_ext = np.clip(0.50 + 0.22 * (m_ext - 0.5) + 0.22 * rng.standard_normal(42), 0, 1)
external = LabeledScores(labels=m_ext, scores=s_ext)
fixed = evaluate_at_fixed(external, selection.tau_star)
c = fixed.confusion
print(f"\nexternal at fixed tau*: tp={c.tp} fn={c.fn} fp={c.fp} tn={c.tn}")
print(f"sens {fixed.metrics.sensitivity:.3f}, spec {fixed.metrics.specificity:.3f}")
