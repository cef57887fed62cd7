"""Shared synthetic fixtures: score tables, manifests, image corpora."""

import numpy as np
import pytest

from screenkit.dataset_audit import ClassLabel
from screenkit.metrics_core import ScoreRow, write_score_table


def make_external_rows():
    """42-row external cohort reproducing confusion (tp=24, fn=6, fp=3, tn=9) at tau=0.44.

    30 Bone-Loss rows (split between Osteopenia and Osteoporosis) and 12
    Normal rows; every row carries paired T-scores so the regression
    block is exercised too.
    """
    rows = []
    rng = np.random.default_rng(202)
    i = 0

    def add(label, screen_prob, n):
        nonlocal i
        for _ in range(n):
            severe = None
            if label != ClassLabel.NORMAL:
                severe = round(0.2 + 0.6 * (label == ClassLabel.OSTEOPOROSIS) + 0.1 * rng.random(), 6)
            ref = {
                ClassLabel.NORMAL: -0.4,
                ClassLabel.OSTEOPENIA: -1.8,
                ClassLabel.OSTEOPOROSIS: -2.9,
            }[label] + round(0.3 * rng.standard_normal(), 6)
            rows.append(
                ScoreRow(
                    sample_id=f"ext{i:03d}",
                    split="external",
                    label_class=label,
                    screen_prob=screen_prob,
                    severe_prob=severe,
                    tscore_pred=round(ref + 0.25 * rng.standard_normal(), 6),
                    tscore_ref=round(ref, 6),
                )
            )
            i += 1

    add(ClassLabel.OSTEOPENIA, 0.91, 12)  # true positives
    add(ClassLabel.OSTEOPOROSIS, 0.88, 12)  # true positives
    add(ClassLabel.OSTEOPENIA, 0.21, 4)  # false negatives
    add(ClassLabel.OSTEOPOROSIS, 0.30, 2)  # false negatives
    add(ClassLabel.NORMAL, 0.71, 3)  # false positives
    add(ClassLabel.NORMAL, 0.12, 9)  # true negatives
    return rows


def make_development_rows(n_val=40, n_test=60, seed=7):
    """Validation and test rows with separable screening scores."""
    rng = np.random.default_rng(seed)
    rows = []
    for split, n in (("val", n_val), ("test", n_test)):
        for i in range(n):
            positive = i % 2 == 0
            label = (
                ClassLabel.OSTEOPENIA
                if positive and i % 4 == 0
                else (ClassLabel.OSTEOPOROSIS if positive else ClassLabel.NORMAL)
            )
            screen = 0.9 if positive else 0.1
            severe = None
            if positive:
                severe = 0.8 if label == ClassLabel.OSTEOPOROSIS else 0.2
            tscore_ref = None
            tscore_pred = None
            if i % 3 == 0:
                tscore_ref = round(-2.0 + rng.standard_normal(), 6)
                tscore_pred = round(tscore_ref + 0.2 * rng.standard_normal(), 6)
            rows.append(
                ScoreRow(
                    sample_id=f"{split}{i:03d}",
                    split=split,
                    label_class=label,
                    screen_prob=screen,
                    severe_prob=severe,
                    tscore_pred=tscore_pred,
                    tscore_ref=tscore_ref,
                )
            )
    return rows


@pytest.fixture
def external_scores_path(tmp_path):
    path = tmp_path / "external_scores.csv"
    write_score_table(make_external_rows(), path)
    return path


@pytest.fixture
def development_scores_path(tmp_path):
    path = tmp_path / "development_scores.csv"
    write_score_table(make_development_rows(), path)
    return path
