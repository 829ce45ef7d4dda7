import numpy as np
import pytest

from equipoise import (
    DgpConfig,
    DomainError,
    HarnessError,
    generate,
    replicate_seed,
    run_monte_carlo,
    true_estimands,
    true_scores,
    true_target,
    true_target_mc,
)


def test_perfect_overlap_scores_and_arm_sizes():
    cfg = DgpConfig(n=2000, p=4, overlap_level=0.0)
    ds = generate(cfg, 1)
    np.testing.assert_allclose(true_scores(cfg, ds.covariates), 0.5)
    n1 = int((ds.treatment == 1).sum())
    # binomial(2000, 1/2): 5 sigma band
    assert abs(n1 - 1000) < 5 * np.sqrt(2000 * 0.25)


def test_weak_overlap_calibration():
    cfg = DgpConfig(n=2000, p=5, overlap_level=3.0)
    ds = generate(cfg, 2)
    e = true_scores(cfg, ds.covariates)
    outside = np.mean((e < 0.05) | (e > 0.95))
    assert outside > 0.05


def test_generate_is_deterministic():
    cfg = DgpConfig(n=200, p=3, overlap_level=1.0, heterogeneity=1.0)
    a = generate(cfg, 99)
    b = generate(cfg, 99)
    np.testing.assert_array_equal(a.covariates, b.covariates)
    np.testing.assert_array_equal(a.treatment, b.treatment)
    np.testing.assert_array_equal(a.outcome, b.outcome)
    c = generate(cfg, 100)
    assert not np.array_equal(a.outcome, c.outcome)


def test_binary_family_outcomes():
    cfg = DgpConfig(n=300, p=3, overlap_level=1.0, outcome_family="binary")
    ds = generate(cfg, 5)
    assert set(np.unique(ds.outcome)) <= {0.0, 1.0}
    assert ds.outcome_family == "binary"


def test_config_validation():
    with pytest.raises(DomainError):
        DgpConfig(n=10, p=2, overlap_level=1.0)
    with pytest.raises(DomainError):
        DgpConfig(n=100, p=0, overlap_level=1.0)
    with pytest.raises(DomainError):
        DgpConfig(n=100, p=2, overlap_level=-1.0)
    with pytest.raises(DomainError):
        DgpConfig(n=100, p=2, overlap_level=1.0, outcome_family="count")


def test_homogeneous_effect_estimands_coincide():
    cfg = DgpConfig(n=100, p=4, overlap_level=2.0, heterogeneity=0.0, base_effect=1.7)
    ate, ato = true_estimands(cfg)
    assert ate == pytest.approx(1.7, abs=1e-12)
    assert ato == pytest.approx(1.7, abs=1e-10)


def test_perfect_overlap_estimands_coincide_any_heterogeneity():
    cfg = DgpConfig(n=100, p=4, overlap_level=0.0, heterogeneity=2.0, base_effect=0.3)
    ate, ato = true_estimands(cfg)
    assert ato == pytest.approx(ate, abs=1e-10)


def test_quadrature_oracle_agrees_with_monte_carlo_oracle():
    # Dual-route check on a config whose ATO is NOT trivially the base
    # effect (misspecified propensity breaks the score symmetry).
    cfg = DgpConfig(
        n=100, p=5, overlap_level=2.0, heterogeneity=1.0, base_effect=1.0,
        misspecified_propensity=True,
    )
    quad = true_target(cfg, "ato")
    mc = true_target_mc(cfg, "ato", n_draws=10**7)
    assert quad.method == "quadrature" and mc.method == "monte-carlo"
    assert quad.value != pytest.approx(1.0, abs=1e-3)
    assert mc.error <= 1e-3
    assert abs(quad.value - mc.value) <= 4 * mc.error
    assert quad.error <= 1e-8


def test_att_target_differs_under_heterogeneity():
    cfg = DgpConfig(n=100, p=5, overlap_level=2.0, heterogeneity=1.0, base_effect=1.0)
    att = true_target(cfg, "att")
    assert att.value > 1.0 + 1e-3  # treated lean toward positive alpha'X


def test_binary_family_oracle():
    cfg = DgpConfig(n=100, p=4, overlap_level=1.0, heterogeneity=1.0, outcome_family="binary")
    ate, ato = true_estimands(cfg)
    assert -1.0 < ate < 1.0 and -1.0 < ato < 1.0
    mc = true_target_mc(cfg, "ato", n_draws=4 * 10**6)
    assert abs(ato - mc.value) <= 4 * mc.error


def test_replicate_seed_is_stable_hash():
    assert replicate_seed(5, 0) == replicate_seed(5, 0)
    assert replicate_seed(5, 0) != replicate_seed(5, 1)
    assert replicate_seed(5, 0) != replicate_seed(6, 0)


def test_harness_reproducible_and_consistent():
    cfg = DgpConfig(n=120, p=3, overlap_level=1.0, heterogeneity=0.5)
    a = run_monte_carlo(cfg, ["iptw", "overlap"], replicates=120, seed=7)
    b = run_monte_carlo(cfg, ["iptw", "overlap"], replicates=120, seed=7)
    for name in ("iptw", "overlap"):
        np.testing.assert_array_equal(a.summaries[name].points, b.summaries[name].points)
    # bookkeeping identity rmse^2 = bias^2 + sd^2
    for name in ("iptw", "overlap"):
        s = a.summaries[name]
        assert s.rmse**2 == pytest.approx(s.bias**2 + s.empirical_sd**2, abs=1e-10)


def test_harness_sandwich_coverage_fields():
    cfg = DgpConfig(n=150, p=3, overlap_level=1.0, heterogeneity=0.5)
    res = run_monte_carlo(cfg, ["overlap"], replicates=100, seed=3, variance="sandwich")
    s = res.summaries["overlap"]
    assert np.isfinite(s.mean_se)
    assert 0.0 <= s.coverage <= 1.0
    assert np.all(np.isfinite(s.mean_ess_per_arm))


def test_harness_validation():
    cfg = DgpConfig(n=120, p=3, overlap_level=1.0)
    with pytest.raises(DomainError):
        run_monte_carlo(cfg, ["overlap"], replicates=50, seed=1)
    with pytest.raises(DomainError, match="unknown scheme"):
        run_monte_carlo(cfg, ["bogus"], replicates=100, seed=1)
    with pytest.raises(DomainError):
        run_monte_carlo(cfg, ["overlap"], replicates=100, seed=1, score_source="guessed")
    with pytest.raises(DomainError):
        run_monte_carlo(cfg, ["overlap"], replicates=100, seed=1,
                        score_source="true", variance="sandwich")


def test_harness_counts_failures():
    # n=50 with extreme overlap separation pressure: some replicates
    # separate, and the harness either reports them or aborts at >10%.
    cfg = DgpConfig(n=50, p=1, overlap_level=6.0)
    try:
        res = run_monte_carlo(cfg, ["overlap"], replicates=100, seed=13)
        assert res.summaries["overlap"].failures >= 0
    except HarnessError as exc:
        assert "limit 10%" in str(exc)


def test_true_scores_respect_misspecification_flag():
    cfg = DgpConfig(n=100, p=3, overlap_level=1.0, misspecified_propensity=True)
    plain = DgpConfig(n=100, p=3, overlap_level=1.0)
    X = generate(plain, 8).covariates
    assert not np.allclose(true_scores(cfg, X), true_scores(plain, X))


def test_heterogeneous_moderate_overlap_oracle_value():
    # The symmetric DGP pins the overlap-population estimand at the base
    # effect even under heterogeneity; the quadrature and Monte Carlo
    # routes must both land there.
    cfg = DgpConfig(n=100, p=5, overlap_level=2.0, heterogeneity=1.0, base_effect=1.0)
    quad = true_target(cfg, "ato")
    mc = true_target_mc(cfg, "ato", n_draws=2 * 10**6)
    assert quad.value == pytest.approx(1.0, abs=1e-10)
    assert abs(mc.value - quad.value) <= 4 * mc.error
