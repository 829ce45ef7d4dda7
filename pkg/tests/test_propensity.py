import itertools

import numpy as np
import pytest

from equipoise import (
    Dataset,
    DgpConfig,
    DomainError,
    SeparationError,
    SingularDesignError,
    fit_binary_logistic,
    fit_multinomial_logistic,
    generate,
    oracle_fit,
)
from equipoise.propensity import _fit_logistic_core


def _bernoulli_ll(beta, X, y):
    eta = np.column_stack([np.ones(len(y)), X]) @ beta
    return float(np.sum(y * eta) - np.sum(np.logaddexp(0.0, eta)))


def _grid_maximize(fn, center, radius, rounds=40, points=9):
    """Coarse-to-fine grid search oracle, independent of the Newton path."""
    center = np.asarray(center, dtype=float)
    dim = center.size
    for _ in range(rounds):
        axes = [np.linspace(c - radius, c + radius, points) for c in center]
        best_val = -np.inf
        best = center
        for combo in itertools.product(*axes):
            val = fn(np.asarray(combo))
            if val > best_val:
                best_val = val
                best = np.asarray(combo)
        center = best
        radius *= 0.5
    return center


def test_intercept_only_fit_gives_sample_proportion():
    ds = Dataset(
        covariates=np.empty((6, 0)),
        covariate_names=(),
        treatment=np.array([1, 1, 1, 0, 0, 0]),
        arms=2,
    )
    fit = fit_binary_logistic(ds)
    np.testing.assert_allclose(fit.scores[:, 1], 0.5, atol=1e-12)


def test_binary_fit_matches_grid_search_oracle():
    X = np.array([[-1.5], [-1.0], [-0.3], [0.1], [0.4], [0.9], [1.3], [2.0]])
    z = np.array([0, 0, 1, 0, 1, 0, 1, 1])
    ds = Dataset(covariates=X, covariate_names=("x",), treatment=z, arms=2)
    fit = fit_binary_logistic(ds)
    oracleterms = _grid_maximize(
        lambda b: _bernoulli_ll(b, X, z.astype(float)), center=[0.0, 0.0], radius=4.0
    )
    np.testing.assert_allclose(fit.coefficients[0], oracleterms, atol=1e-6)


def test_perfect_separation_raises():
    X = np.array([[-2.0], [-1.0], [-0.5], [0.5], [1.0], [2.0]])
    z = (X[:, 0] > 0).astype(int)
    ds = Dataset(covariates=X, covariate_names=("x",), treatment=z, arms=2)
    with pytest.raises(SeparationError):
        fit_binary_logistic(ds)


def test_ridge_workaround_fits_separated_data():
    X = np.array([[-2.0], [-1.0], [-0.5], [0.5], [1.0], [2.0]])
    z = (X[:, 0] > 0).astype(int)
    ds = Dataset(covariates=X, covariate_names=("x",), treatment=z, arms=2)
    fit = fit_binary_logistic(ds, ridge=0.5)
    assert fit.converged
    assert fit.ridge == 0.5


def test_rank_deficient_design():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(20)
    X = np.column_stack([x, 2.0 * x])
    z = (rng.random(20) < 0.5).astype(int)
    z[:2] = [0, 1]
    ds = Dataset(covariates=X, covariate_names=("a", "b"), treatment=z, arms=2)
    with pytest.raises(SingularDesignError):
        fit_binary_logistic(ds)
    const = Dataset(
        covariates=np.ones((20, 1)),
        covariate_names=("c",),
        treatment=z,
        arms=2,
    )
    with pytest.raises(SingularDesignError, match="'c'"):
        fit_binary_logistic(const)


def test_score_equations_hold_on_original_scale():
    for seed in range(20):
        ds = generate(DgpConfig(n=250, p=4, overlap_level=1.5, heterogeneity=1.0), seed)
        fit = fit_binary_logistic(ds)
        assert fit.converged
        assert fit.final_gradient_norm <= 1e-9
        design = np.column_stack([np.ones(ds.n), ds.covariates])
        resid = (ds.treatment == 1).astype(float) - fit.scores[:, 1]
        assert np.max(np.abs(design.T @ resid)) <= 1e-8


def test_scores_are_valid_probability_rows():
    ds = generate(DgpConfig(n=150, p=3, overlap_level=2.0), 3)
    for fit in (fit_binary_logistic(ds), fit_multinomial_logistic(ds)):
        assert np.all((fit.scores > 0) & (fit.scores < 1))
        assert np.max(np.abs(fit.scores.sum(axis=1) - 1.0)) <= 1e-12


def test_log_likelihood_non_decreasing():
    ds = generate(DgpConfig(n=300, p=5, overlap_level=2.5), 11)
    _, _, info = _fit_logistic_core(
        ds.covariates, (ds.treatment == 1).astype(float), ridge=0.0
    )
    path = np.asarray(info["ll_path"])
    diffs = np.diff(path)
    assert np.all(diffs >= -1e-12 * (1.0 + np.abs(path[:-1])))


def test_affine_rescaling_leaves_scores_invariant():
    ds = generate(DgpConfig(n=200, p=3, overlap_level=1.0), 21)
    scaled = Dataset(
        covariates=ds.covariates * np.array([100.0, 0.01, 1.0]) + np.array([5.0, -3.0, 0.0]),
        covariate_names=ds.covariate_names,
        treatment=ds.treatment,
        arms=2,
        outcome=ds.outcome,
        outcome_family=ds.outcome_family,
    )
    a = fit_binary_logistic(ds)
    b = fit_binary_logistic(scaled)
    assert np.max(np.abs(a.scores - b.scores)) <= 1e-10


def test_multinomial_intercept_only_gives_proportions():
    z = np.array([0] * 2 + [1] * 3 + [2] * 5)
    ds = Dataset(covariates=np.empty((10, 0)), covariate_names=(), treatment=z, arms=3)
    fit = fit_multinomial_logistic(ds)
    np.testing.assert_allclose(fit.scores, np.tile([0.2, 0.3, 0.5], (10, 1)), atol=1e-9)


def test_multinomial_agrees_with_binary_for_two_arms():
    ds = generate(DgpConfig(n=180, p=3, overlap_level=1.2, heterogeneity=0.5), 9)
    fb = fit_binary_logistic(ds)
    fm = fit_multinomial_logistic(ds)
    assert np.max(np.abs(fb.scores - fm.scores)) <= 1e-8


def test_multinomial_matches_grid_search_oracle():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((12, 1))
    z = np.array([0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2])
    ds = Dataset(covariates=X, covariate_names=("x",), treatment=z, arms=3)
    fit = fit_multinomial_logistic(ds)

    design = np.column_stack([np.ones(12), X])

    def ll(theta):
        b = theta.reshape(2, 2)
        logits = np.column_stack([np.zeros(12), design @ b.T])
        lse = np.log(np.exp(logits).sum(axis=1))
        return float(logits[np.arange(12), z].sum() - lse.sum())

    oracle = _grid_maximize(ll, center=[0.0, 0.0, 0.0, 0.0], radius=3.0, rounds=45, points=7)
    np.testing.assert_allclose(fit.coefficients.ravel(), oracle, atol=1e-5)


def test_oracle_fit_wraps_known_scores():
    fit = oracle_fit(np.full(10, 0.25))
    assert fit.kind == "oracle"
    assert fit.coefficients is None
    np.testing.assert_allclose(fit.scores[:, 1], 0.25)
    with pytest.raises(DomainError):
        oracle_fit(np.array([[0.5, 0.6], [0.5, 0.5]]))
