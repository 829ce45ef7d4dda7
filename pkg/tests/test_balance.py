import numpy as np
import pytest

from equipoise import (
    BalanceError,
    Dataset,
    DgpConfig,
    DomainError,
    Kind,
    WeightScheme,
    assert_exact_balance,
    balance_report,
    baseline_table,
    compute_weights,
    fit_binary_logistic,
    generate,
    oracle_fit,
    score_histogram,
    smd,
)


def test_identical_distributions_have_zero_smd():
    X = np.tile(np.array([[0.2, -1.0], [1.4, 0.5], [-0.6, 2.0]]), (2, 1))
    z = np.array([1, 1, 1, 0, 0, 0])
    ds = Dataset(covariates=X, covariate_names=("a", "b"), treatment=z, arms=2)
    np.testing.assert_allclose(smd(ds), 0.0, atol=1e-14)


def test_smd_definition():
    # Arm means differ by 0.5 and both arm variances are 1 -> SMD = 0.5.
    treated = np.array([0.5 - 1.0, 0.5, 0.5 + 1.0])
    control = np.array([-1.0, 0.0, 1.0])
    X = np.concatenate([treated, control]).reshape(-1, 1)
    z = np.array([1, 1, 1, 0, 0, 0])
    ds = Dataset(covariates=X, covariate_names=("x",), treatment=z, arms=2)
    assert smd(ds)[0] == pytest.approx(0.5, rel=1e-12)


def test_weighted_smd_matches_hand_arithmetic():
    X = np.array([[1.0], [2.0], [4.0], [0.0], [3.0], [5.0]])
    z = np.array([1, 1, 1, 0, 0, 0])
    w = np.array([2.0, 1.0, 1.0, 1.0, 1.0, 2.0])
    ds = Dataset(covariates=X, covariate_names=("x",), treatment=z, arms=2)
    fit = oracle_fit(np.full(6, 0.5))
    base = compute_weights(fit, ds, WeightScheme(Kind.IPTW))
    wv = type(base)(weights=w, scheme=base.scheme, kept=base.kept, ess_per_arm=base.ess_per_arm)
    # Hand: treated weighted mean = (2*1 + 1*2 + 1*4)/4 = 2.0
    #       control weighted mean = (1*0 + 1*3 + 2*5)/4 = 3.25
    #       unweighted arm variances (ddof=1): treated var([1,2,4]) = 7/3,
    #       control var([0,3,5]) = 19/3; pooled sd = sqrt(13/3).
    expect = (2.0 - 3.25) / np.sqrt((7.0 / 3.0 + 19.0 / 3.0) / 2.0)
    assert smd(ds, (1, 0), wv)[0] == pytest.approx(expect, rel=1e-12)


def test_zero_pooled_sd_handling():
    X = np.column_stack([np.ones(6), np.array([0.0, 1.0, 2.0, 5.0, 6.0, 7.0])])
    z = np.array([1, 1, 1, 0, 0, 0])
    ds = Dataset(covariates=X, covariate_names=("const", "x"), treatment=z, arms=2)
    values = smd(ds)
    assert values[0] == 0.0  # equal means on a zero-variance column
    X2 = np.column_stack([np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0]), X[:, 1]])
    ds2 = Dataset(covariates=X2, covariate_names=("c", "x"), treatment=z, arms=2)
    assert np.isnan(smd(ds2)[0])  # different means, zero within-arm variance


def test_exact_balance_on_random_datasets():
    for seed in range(30):
        ds = generate(DgpConfig(n=300, p=5, overlap_level=1.5, heterogeneity=1.0), 4000 + seed)
        fit = fit_binary_logistic(ds)
        assert assert_exact_balance(ds, fit) <= 1e-6


def test_exact_balance_needs_converged_binary_fit(small_sample):
    fit = oracle_fit(np.full(small_sample.n, 0.4))
    with pytest.raises(DomainError):
        assert_exact_balance(small_sample, fit)


def test_exact_balance_raises_when_violated():
    # A hand-made "fit" whose scores do not solve the score equations.
    ds = generate(DgpConfig(n=100, p=2, overlap_level=1.0), 3)
    good = fit_binary_logistic(ds)
    bad = type(good)(
        kind="binary-logistic",
        coefficients=good.coefficients,
        scores=np.column_stack([1.0 - np.clip(good.scores[:, 1] ** 2, 1e-6, 1 - 1e-6),
                                np.clip(good.scores[:, 1] ** 2, 1e-6, 1 - 1e-6)]),
        converged=True,
        iterations=good.iterations,
        final_gradient_norm=good.final_gradient_norm,
    )
    with pytest.raises(BalanceError):
        assert_exact_balance(ds, bad)


def test_intercept_only_balance_covers_modeled_columns_only():
    # With no covariates in the model the exact-balance guarantee is empty;
    # the returned gap is 0 even though raw covariates may be imbalanced.
    rng = np.random.default_rng(5)
    z = np.array([1] * 30 + [0] * 30)
    ds = Dataset(covariates=np.empty((60, 0)), covariate_names=(), treatment=z, arms=2)
    fit = fit_binary_logistic(ds)
    assert assert_exact_balance(ds, fit) == 0.0
    # and OW weights from that fit are constant within arm, so weighted
    # means on out-of-model columns equal raw arm means.
    extra = Dataset(
        covariates=rng.standard_normal((60, 2)) + np.where(z, 0.8, 0.0)[:, None],
        covariate_names=("a", "b"),
        treatment=z,
        arms=2,
    )
    w = compute_weights(fit, extra, WeightScheme(Kind.OVERLAP))
    report = balance_report(extra, w)
    for arm in (0, 1):
        np.testing.assert_allclose(
            report.weighted_means[arm], extra.covariates[z == arm].mean(axis=0), rtol=1e-12
        )


def test_iptw_weighted_smd_exceeds_ow_under_weak_overlap():
    wins = 0
    reps = 40
    for seed in range(reps):
        ds = generate(DgpConfig(n=500, p=5, overlap_level=3.0, heterogeneity=0.0), 6000 + seed)
        fit = fit_binary_logistic(ds)
        ow = compute_weights(fit, ds, WeightScheme(Kind.OVERLAP))
        ipw = compute_weights(fit, ds, WeightScheme(Kind.IPTW))
        gap_ow = np.max(np.abs(smd(ds, (1, 0), ow)))
        gap_ipw = np.max(np.abs(smd(ds, (1, 0), ipw)))
        if gap_ipw > gap_ow:
            wins += 1
    assert wins / reps >= 0.95


def test_baseline_table_equal_weights_is_raw_table(small_sample):
    fit = oracle_fit(np.full(small_sample.n, 0.5))
    w = compute_weights(fit, small_sample, WeightScheme(Kind.IPTW))
    rows = baseline_table(small_sample, w)
    X, z = small_sample.covariates, small_sample.treatment
    for i, name in enumerate(small_sample.covariate_names):
        assert rows[i]["covariate"] == name
        for arm in (0, 1):
            assert rows[i][f"mean_arm{arm}"] == pytest.approx(X[z == arm][:, i].mean(), rel=1e-12)
            assert rows[i][f"sd_arm{arm}"] == pytest.approx(X[z == arm][:, i].std(ddof=1), rel=1e-12)
    assert rows[-1]["covariate"] == "N"
    assert rows[-2]["covariate"] == "ESS"


def test_ow_baseline_table_means_match_across_arms():
    ds = generate(DgpConfig(n=400, p=4, overlap_level=2.0, heterogeneity=0.5), 17)
    fit = fit_binary_logistic(ds)
    w = compute_weights(fit, ds, WeightScheme(Kind.OVERLAP))
    rows = baseline_table(ds, w)
    for row in rows[: ds.p]:
        # standardize the raw-mean gap the same way the SMD does
        name_idx = ds.covariate_names.index(row["covariate"])
        sd = np.sqrt(
            0.5
            * (
                ds.covariates[ds.treatment == 1][:, name_idx].var(ddof=1)
                + ds.covariates[ds.treatment == 0][:, name_idx].var(ddof=1)
            )
        )
        assert abs(row["mean_arm1"] - row["mean_arm0"]) / sd <= 1e-6


def test_balance_never_reads_outcome(small_sample):
    no_y = small_sample.without_outcome()
    fit = fit_binary_logistic(no_y)
    w = compute_weights(fit, no_y, WeightScheme(Kind.OVERLAP))
    assert np.all(np.isfinite(smd(no_y, (1, 0), w)))
    assert baseline_table(no_y, w)
    assert assert_exact_balance(no_y, fit) <= 1e-6


def test_score_histogram_counts_sum_to_arm_sizes(small_sample):
    fit = fit_binary_logistic(small_sample)
    rows = score_histogram(fit, small_sample)
    counts = {0: 0, 1: 0}
    for row in rows:
        counts[row["arm"]] += row["count"]
    sizes = small_sample.arm_counts()
    assert counts[0] == sizes[0] and counts[1] == sizes[1]
    assert len(rows) == 20  # 10 bins per arm


def test_smd_invariant_to_affine_rescaling(small_sample):
    # ATT weights from a non-balancing score vector keep the weighted SMDs
    # well away from zero, so the invariance comparison is meaningful.
    fit = oracle_fit(np.linspace(0.2, 0.8, small_sample.n))
    w = compute_weights(fit, small_sample, WeightScheme(Kind.ATT))
    scaled = Dataset(
        covariates=small_sample.covariates * np.array([12.0, 0.05]) + np.array([3.0, -9.0]),
        covariate_names=small_sample.covariate_names,
        treatment=small_sample.treatment,
        arms=2,
        outcome=small_sample.outcome,
        outcome_family="continuous",
    )
    before = smd(small_sample, (1, 0), w)
    assert np.min(np.abs(before)) > 1e-3
    np.testing.assert_allclose(before, smd(scaled, (1, 0), w), rtol=1e-10)
    np.testing.assert_allclose(smd(small_sample), smd(scaled), rtol=1e-10)
