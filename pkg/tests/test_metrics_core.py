"""Curves, operating-point metrics, regression and agreement summaries."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from screenkit.errors import (
    CurveUndefinedError,
    InsufficientDataError,
    ValidationError,
)
from screenkit.metrics_core import (
    ConfusionCounts,
    LabeledScores,
    bland_altman,
    brier,
    confusion_at,
    operating_point_metrics,
    pr_curve,
    regression_metrics,
    roc_curve,
)

from oracles import auroc_pair_counting, average_precision_bruteforce


def labeled(labels, scores):
    return LabeledScores(labels=np.asarray(labels), scores=np.asarray(scores))


def random_instance(rng, max_n=100, force_ties=True):
    n = int(rng.integers(4, max_n + 1))
    labels = rng.integers(0, 2, n)
    while labels.min() == labels.max():
        labels = rng.integers(0, 2, n)
    if force_ties and rng.random() < 0.7:
        # quantized scores make tied values common
        scores = rng.integers(0, 8, n) / 7.0
    else:
        scores = rng.random(n)
    return labeled(labels, scores)


class TestConfusionAt:
    def test_perfect_separation(self):
        assert confusion_at(labeled([1, 0], [0.9, 0.1]), 0.5) == ConfusionCounts(1, 0, 0, 1)

    def test_zero_threshold_predicts_everything_positive(self):
        counts = confusion_at(labeled([1, 0, 0], [0.0, 0.3, 0.9]), 0.0)
        assert counts.fn == 0 and counts.tn == 0
        assert counts.tp == 1 and counts.fp == 2

    def test_boundary_uses_greater_or_equal(self):
        counts = confusion_at(labeled([1, 1, 0], [0.44, 0.43, 0.44]), 0.44)
        assert (counts.tp, counts.fp, counts.fn, counts.tn) == (1, 1, 1, 0)

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(0)
        data = random_instance(rng)
        taus = np.linspace(0, 1, 21)
        counts = [confusion_at(data, t) for t in taus]
        for earlier, later in zip(counts, counts[1:]):
            assert later.tp <= earlier.tp
            assert later.fp <= earlier.fp

    def test_rejects_bad_tau(self):
        with pytest.raises(ValidationError):
            confusion_at(labeled([1], [0.5]), 1.5)


class TestOperatingPointMetrics:
    def test_external_cohort_counts(self):
        m = operating_point_metrics(ConfusionCounts(tp=24, fn=6, fp=3, tn=9))
        assert round(m.sensitivity, 3) == 0.800
        assert round(m.specificity, 3) == 0.750
        assert round(m.ppv, 3) == 0.889
        assert round(m.npv, 3) == 0.600
        assert round(m.accuracy, 3) == 0.786
        assert m.mcc == pytest.approx(198 / math.sqrt(145800), abs=1e-12)
        assert m.mcc == pytest.approx(0.5186, abs=1e-4)
        assert m.f1 == pytest.approx(0.8421, abs=5e-5)
        assert m.balanced_accuracy == pytest.approx(0.775)

    def test_youden_from_sensitivity_and_specificity(self):
        # counts engineered to sens 0.862..., spec 0.765 are unnecessary:
        # J is definitional, checked here on a round-number matrix
        m = operating_point_metrics(ConfusionCounts(tp=3, fn=1, fp=1, tn=3))
        assert m.youden_j == pytest.approx(m.sensitivity + m.specificity - 1.0)

    def test_zero_denominators_reported_as_undefined(self):
        m = operating_point_metrics(ConfusionCounts(tp=0, fn=0, fp=2, tn=3))
        assert m.sensitivity is None
        assert "sensitivity" in m.undefined
        assert m.specificity == 0.6
        assert m.youden_j is None and m.balanced_accuracy is None
        assert m.mcc is None

    def test_f1_undefined_when_no_predicted_or_actual_positive_hits(self):
        m = operating_point_metrics(ConfusionCounts(tp=0, fn=2, fp=3, tn=1))
        assert m.ppv == 0.0 and m.sensitivity == 0.0
        assert m.f1 is None  # 0/0 harmonic mean

    @settings(max_examples=100, deadline=None)
    @given(st.tuples(*(st.integers(1, 40) for _ in range(4))))
    def test_identities_when_everything_defined(self, counts):
        tp, fp, fn, tn = counts
        m = operating_point_metrics(ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn))
        assert m.balanced_accuracy == pytest.approx((m.sensitivity + m.specificity) / 2)
        assert m.youden_j == pytest.approx(m.sensitivity + m.specificity - 1.0)
        assert m.f1 == pytest.approx(
            2 * m.ppv * m.sensitivity / (m.ppv + m.sensitivity)
        )
        for name in ("sensitivity", "specificity", "ppv", "npv", "accuracy",
                     "balanced_accuracy", "f1"):
            value = getattr(m, name)
            assert 0.0 <= value <= 1.0
        assert -1.0 <= m.youden_j <= 1.0
        assert -1.0 <= m.mcc <= 1.0


class TestRocCurve:
    def test_perfect_separation(self):
        assert roc_curve(labeled([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9])).auroc == 1.0

    def test_all_tied_scores(self):
        assert roc_curve(labeled([0, 1, 0, 1], [0.5] * 4)).auroc == 0.5

    def test_known_example(self):
        assert roc_curve(labeled([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8])).auroc == 0.75

    def test_anchored_endpoints(self):
        curve = roc_curve(labeled([0, 1, 1], [0.3, 0.3, 0.9]))
        assert curve.points[0] == (0.0, 0.0)
        assert curve.points[-1] == (1.0, 1.0)

    def test_rejects_single_class(self):
        with pytest.raises(CurveUndefinedError):
            roc_curve(labeled([1, 1], [0.2, 0.3]))

    def test_equals_pair_counting_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            data = random_instance(rng, max_n=60)
            expected = auroc_pair_counting(data.labels.tolist(), data.scores.tolist())
            assert abs(roc_curve(data).auroc - expected) < 1e-12


class TestPrCurve:
    def test_positive_ranked_first(self):
        assert pr_curve(labeled([0, 1], [0.2, 0.9])).auprc == 1.0

    def test_positive_ranked_last(self):
        assert pr_curve(labeled([1, 0], [0.2, 0.9])).auprc == 0.5

    def test_all_tied_equals_prevalence(self):
        data = labeled([1, 0, 0, 1, 0], [0.4] * 5)
        curve = pr_curve(data)
        assert curve.auprc == pytest.approx(0.4)
        assert curve.baseline == pytest.approx(0.4)

    def test_rejects_zero_positives(self):
        with pytest.raises(CurveUndefinedError):
            pr_curve(labeled([0, 0], [0.2, 0.3]))

    def test_equals_bruteforce_average_precision(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            data = random_instance(rng, max_n=50)
            expected = average_precision_bruteforce(
                data.labels.tolist(), data.scores.tolist()
            )
            assert abs(pr_curve(data).auprc - expected) < 1e-12


class TestBrier:
    def test_perfect_confident_predictions(self):
        assert brier(labeled([1, 0, 1], [1.0, 0.0, 1.0])) == 0.0

    def test_uninformative_half_scores(self):
        assert brier(labeled([1, 0], [0.5, 0.5])) == 0.25

    def test_hand_computed(self):
        assert brier(labeled([1, 0], [0.8, 0.3])) == pytest.approx(0.065)

    def test_complement_predictions_score_one(self):
        assert brier(labeled([1, 0, 1], [0.0, 1.0, 0.0])) == 1.0


class TestRegressionMetrics:
    def test_perfect_agreement(self):
        m = regression_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert (m.mae, m.rmse, m.pearson_r) == (0.0, 0.0, 1.0)

    def test_constant_shift(self):
        m = regression_metrics([2.0, 3.0, 4.0], [1.0, 2.0, 3.0])
        assert m.mae == 1.0 and m.rmse == 1.0
        assert m.pearson_r == pytest.approx(1.0)

    def test_hand_computed_example(self):
        m = regression_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 4.0])
        assert m.mae == pytest.approx(1 / 3)
        assert m.rmse == pytest.approx(math.sqrt(1 / 3))
        assert m.pearson_r == pytest.approx(3 / math.sqrt(28 / 3), abs=1e-12)
        assert m.pearson_r == pytest.approx(0.9820, abs=5e-5)

    def test_zero_variance_flags_pearson(self):
        m = regression_metrics([1.0, 1.0], [0.0, 2.0])
        assert m.pearson_r is None
        assert m.undefined == ("pearson_r",)
        assert m.mae == 1.0

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(-50, 50), min_size=1, max_size=30),
        st.integers(0, 2**31),
    )
    def test_rmse_dominates_mae(self, values, seed):
        ref = np.random.default_rng(seed).uniform(-50, 50, len(values))
        m = regression_metrics(np.asarray(values), ref)
        assert m.rmse >= m.mae >= 0.0


class TestBlandAltman:
    def test_perfect_agreement(self):
        ba = bland_altman([1.0, 2.0], [1.0, 2.0])
        assert (ba.bias, ba.loa_low, ba.loa_high) == (0.0, 0.0, 0.0)

    def test_symmetric_differences(self):
        ba = bland_altman([1.0, -1.0], [0.0, 0.0])
        assert ba.bias == 0.0
        assert ba.loa_high == pytest.approx(1.96 * math.sqrt(2), abs=1e-12)
        assert ba.loa_high == pytest.approx(2.772, abs=5e-4)
        assert ba.loa_low == pytest.approx(-ba.loa_high)

    def test_constant_offset(self):
        ba = bland_altman([1.5, 2.5, 3.5], [1.0, 2.0, 3.0])
        assert ba.bias == pytest.approx(0.5)
        assert ba.loa_low == pytest.approx(0.5)
        assert ba.loa_high == pytest.approx(0.5)

    def test_needs_two_pairs(self):
        with pytest.raises(InsufficientDataError):
            bland_altman([1.0], [2.0])

    def test_bounds_bracket_bias(self):
        rng = np.random.default_rng(3)
        pred, ref = rng.normal(size=20), rng.normal(size=20)
        ba = bland_altman(pred, ref)
        assert ba.loa_low <= ba.bias <= ba.loa_high


class TestLabeledScoresValidation:
    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            labeled([], [])

    def test_rejects_out_of_range_scores(self):
        with pytest.raises(ValidationError):
            labeled([0, 1], [0.5, 1.5])

    def test_rejects_non_binary_labels(self):
        with pytest.raises(ValidationError):
            labeled([0, 2], [0.5, 0.5])

    def test_rejects_non_finite_scores(self):
        with pytest.raises(ValidationError):
            labeled([0, 1], [0.5, math.nan])
