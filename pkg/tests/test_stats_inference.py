"""Bootstrap CIs, Fisher-z, Kruskal-Wallis, chi-square, chi-square tail."""

import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from screenkit.errors import InferenceError, ValidationError
from screenkit.metrics_core import LabeledScores
from screenkit.stats_inference import (
    BootstrapConfig,
    chi2_sf,
    chi_square_test,
    fisher_z_ci,
    kruskal_wallis,
    paired_bootstrap_ci,
    resolve_metric,
    stratified_bootstrap_ci,
)

from oracles import chi2_sf_mp, fisher_z_ci_mp


def labeled(labels, scores):
    return LabeledScores(labels=np.asarray(labels), scores=np.asarray(scores))


def synthetic_data(n=60, seed=0):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, n)
    labels[:2] = (0, 1)
    scores = np.clip(0.5 + 0.3 * (labels - 0.5) + 0.2 * rng.standard_normal(n), 0, 1)
    return labeled(labels, scores)


class TestStratifiedBootstrap:
    def test_prevalence_is_invariant_under_stratification(self):
        data = synthetic_data()
        ci = stratified_bootstrap_ci(
            data, lambda d: d.prevalence, BootstrapConfig(replicates=100, seed=1)
        )
        assert ci.low == ci.high == ci.point == data.prevalence

    def test_constant_scores_collapse_the_interval(self):
        data = labeled([0, 1, 0, 1], [0.3, 0.3, 0.3, 0.3])
        ci = stratified_bootstrap_ci(
            data, lambda d: float(d.scores.mean()), BootstrapConfig(replicates=50, seed=2)
        )
        assert ci.low == ci.high == ci.point == pytest.approx(0.3)

    def test_same_seed_reproduces_interval(self):
        data = synthetic_data(seed=3)
        config = BootstrapConfig(replicates=300, seed=42)
        first = stratified_bootstrap_ci(data, "auroc", config)
        second = stratified_bootstrap_ci(data, "auroc", config)
        assert first == second

    def test_different_seed_changes_interval(self):
        data = synthetic_data(seed=3)
        a = stratified_bootstrap_ci(data, "auroc", BootstrapConfig(replicates=300, seed=1))
        b = stratified_bootstrap_ci(data, "auroc", BootstrapConfig(replicates=300, seed=2))
        assert (a.low, a.high) != (b.low, b.high)

    def test_parallel_equals_sequential(self):
        data = synthetic_data(seed=4, n=80)
        config = BootstrapConfig(replicates=200, seed=7)
        sequential = stratified_bootstrap_ci(data, "auprc", config, threads=1)
        parallel = stratified_bootstrap_ci(data, "auprc", config, threads=4)
        assert sequential == parallel

    def test_replicates_preserve_both_classes(self):
        # curve metrics stay defined in every replicate under stratification
        data = labeled([1, 0, 0, 1, 1], [0.9, 0.2, 0.4, 0.8, 0.7])
        ci = stratified_bootstrap_ci(data, "auroc", BootstrapConfig(replicates=500, seed=5))
        assert ci.undefined_replicates == 0

    def test_undefined_replicates_are_dropped_and_counted(self):
        data = synthetic_data(seed=6, n=30)
        calls = {"n": 0}

        def flaky(d):
            calls["n"] += 1
            return None if calls["n"] % 3 == 0 else float(d.scores.mean())

        ci = stratified_bootstrap_ci(data, flaky, BootstrapConfig(replicates=90, seed=8))
        assert ci.undefined_replicates == 30

    def test_all_undefined_raises(self):
        data = synthetic_data(seed=7, n=10)
        with pytest.raises(InferenceError):
            stratified_bootstrap_ci(
                data,
                lambda d: float(d.scores.mean()) if False else None,  # always undefined
                BootstrapConfig(replicates=10, seed=9),
            )

    def test_point_inside_interval_for_smooth_metric(self):
        data = synthetic_data(seed=8, n=120)
        ci = stratified_bootstrap_ci(data, "auroc", BootstrapConfig(replicates=600, seed=10))
        assert ci.low <= ci.point <= ci.high

    def test_single_class_rejected(self):
        with pytest.raises(ValidationError):
            stratified_bootstrap_ci(
                labeled([1, 1], [0.1, 0.9]), "auroc", BootstrapConfig(replicates=10, seed=0)
            )

    def test_named_operating_metric_requires_tau(self):
        with pytest.raises(ValidationError):
            resolve_metric("sensitivity")
        metric = resolve_metric("sensitivity", tau=0.5)
        assert metric(labeled([1, 0], [0.9, 0.1])) == 1.0


class TestPairedBootstrap:
    def test_stratified_requires_labels(self):
        with pytest.raises(ValidationError):
            paired_bootstrap_ci(
                np.array([1.0, 2.0]), np.array([1.0, 2.0]), lambda p, r: 0.0
            )

    def test_zero_error_metric_collapses(self):
        pred = np.array([-1.0, -2.0, -3.0, -0.5])
        labels = np.array([0, 1, 1, 0])
        ci = paired_bootstrap_ci(
            pred,
            pred.copy(),
            lambda p, r: float(np.mean(np.abs(p - r))),
            BootstrapConfig(replicates=50, seed=3),
            labels=labels,
        )
        assert ci.low == ci.high == ci.point == 0.0

    def test_unstratified_mode_runs_without_labels(self):
        rng = np.random.default_rng(11)
        pred = rng.normal(size=25)
        ref = pred + 0.1 * rng.normal(size=25)
        ci = paired_bootstrap_ci(
            pred,
            ref,
            lambda p, r: float(np.mean(np.abs(p - r))),
            BootstrapConfig(replicates=200, seed=4),
            stratify=False,
        )
        assert ci.low <= ci.point <= ci.high


class TestFisherZ:
    def test_null_correlation_interval(self):
        ci = fisher_z_ci(0.0, 103)
        expected = math.tanh(1.959963984540054 / 10.0)
        assert ci.high == pytest.approx(expected, abs=1e-9)
        assert ci.low == pytest.approx(-expected, abs=1e-9)
        assert ci.high == pytest.approx(0.194, abs=1e-3)

    def test_pilot_regression_interval(self):
        ci = fisher_z_ci(0.801, 31)
        low, high = fisher_z_ci_mp(0.801, 31)
        assert ci.low == pytest.approx(low, abs=1e-9)
        assert ci.high == pytest.approx(high, abs=1e-9)
        assert ci.low == pytest.approx(0.624, abs=1e-3)
        assert ci.high == pytest.approx(0.900, abs=1e-3)

    def test_large_n_collapses_to_point(self):
        ci = fisher_z_ci(0.5, 10_000_000)
        assert ci.low == pytest.approx(0.5, abs=1e-3)
        assert ci.high == pytest.approx(0.5, abs=1e-3)

    def test_rejects_degenerate_inputs(self):
        with pytest.raises(ValidationError):
            fisher_z_ci(1.0, 30)
        with pytest.raises(ValidationError):
            fisher_z_ci(0.5, 3)

    @settings(max_examples=80, deadline=None)
    @given(st.floats(-0.999, 0.999), st.integers(4, 10_000))
    def test_interval_contains_r_and_stays_open(self, r, n):
        ci = fisher_z_ci(r, n)
        assert ci.low <= r <= ci.high
        assert -1.0 < ci.low <= ci.high < 1.0


class TestKruskalWallis:
    def test_identical_groups_have_no_signal(self):
        result = kruskal_wallis([[5.0, 5.0], [5.0, 5.0, 5.0]])
        assert result == (0.0, 1.0)

    def test_hand_computed_example(self):
        result = kruskal_wallis([[1.0, 2.0], [3.0, 4.0]])
        assert result.h == pytest.approx(2.4, abs=1e-12)

    def test_permutation_of_group_contents(self):
        a = kruskal_wallis([[3.0, 1.0, 2.0], [6.0, 5.0]])
        b = kruskal_wallis([[1.0, 2.0, 3.0], [5.0, 6.0]])
        assert a == b

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(12)
        groups = [rng.normal(size=8).tolist(), rng.normal(1, 1, size=6).tolist()]
        before = kruskal_wallis(groups)
        after = kruskal_wallis([[math.exp(v) for v in g] for g in groups])
        assert before.h == pytest.approx(after.h, abs=1e-9)

    def test_matches_scipy_with_ties(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            k = int(rng.integers(2, 5))
            groups = [rng.integers(0, 6, rng.integers(2, 12)).astype(float) for _ in range(k)]
            pooled = np.concatenate(groups)
            if np.all(pooled == pooled[0]):
                continue
            ours = kruskal_wallis([g.tolist() for g in groups])
            theirs = scipy.stats.kruskal(*groups)
            assert ours.h == pytest.approx(theirs.statistic, rel=1e-10)
            assert ours.p == pytest.approx(theirs.pvalue, rel=1e-8)

    def test_rejects_empty_group(self):
        with pytest.raises(ValidationError):
            kruskal_wallis([[1.0], []])


class TestChiSquare:
    def test_perfect_independence(self):
        result = chi_square_test([[5, 5], [5, 5]])
        assert result.chi2 == 0.0
        assert result.p == 1.0

    def test_diagonal_table(self):
        result = chi_square_test([[10, 0], [0, 10]])
        assert result.chi2 == pytest.approx(20.0, abs=1e-12)
        assert result.df == 1

    def test_doubling_counts_doubles_statistic(self):
        base = chi_square_test([[8, 3], [2, 9]])
        doubled = chi_square_test([[16, 6], [4, 18]])
        assert doubled.chi2 == pytest.approx(2 * base.chi2, rel=1e-12)

    def test_row_and_column_permutation_invariance(self):
        a = chi_square_test([[8, 3, 1], [2, 9, 4]])
        b = chi_square_test([[2, 9, 4], [8, 3, 1]])
        c = chi_square_test([[1, 3, 8], [4, 9, 2]])
        assert a.chi2 == pytest.approx(b.chi2) == pytest.approx(c.chi2)

    def test_zero_margin_rejected(self):
        with pytest.raises(ValidationError):
            chi_square_test([[0, 0], [5, 5]])

    def test_matches_scipy_without_correction(self):
        rng = np.random.default_rng(14)
        for _ in range(30):
            table = rng.integers(1, 30, (rng.integers(2, 4), rng.integers(2, 4)))
            ours = chi_square_test(table.tolist())
            theirs = scipy.stats.chi2_contingency(table, correction=False)
            assert ours.chi2 == pytest.approx(theirs.statistic, rel=1e-12)
            assert ours.df == theirs.dof
            assert ours.p == pytest.approx(theirs.pvalue, rel=1e-10)


class TestChi2Sf:
    def test_at_zero(self):
        assert chi2_sf(0.0, 5) == 1.0

    def test_df2_closed_form(self):
        x = 2 * math.log(2)
        assert chi2_sf(x, 2) == pytest.approx(0.5, abs=1e-12)
        for x in (0.1, 1.0, 5.0, 20.0, 100.0):
            assert chi2_sf(x, 2) == pytest.approx(math.exp(-x / 2), abs=1e-12)

    def test_standard_normal_five_percent_point(self):
        assert chi2_sf(3.841459, 1) == pytest.approx(0.05, abs=1e-4)

    def test_monotone_decreasing_in_x(self):
        xs = np.linspace(0, 60, 200)
        values = [chi2_sf(float(x), 7) for x in xs]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_matches_mpmath_to_1e10(self):
        for df in (1, 2, 3, 5, 10, 25, 50):
            for x in (0.0, 0.5, 1.0, 3.0, 10.0, 40.0, 120.0, 200.0):
                assert chi2_sf(x, df) == pytest.approx(chi2_sf_mp(x, df), abs=1e-10)

    def test_rejects_bad_domain(self):
        with pytest.raises(ValidationError):
            chi2_sf(-1.0, 2)
        with pytest.raises(ValidationError):
            chi2_sf(1.0, 0)
