"""Point estimation of weighted treatment effects.

All weighting estimators are Hajek (self-normalized) contrasts of weighted
outcome means, so they are invariant to rescaling the weights within an
arm.  The augmented estimator combines an outcome regression with the
inverse-probability residual corrections under a tilting function, which
makes it consistent when either the propensity model or the outcome model
is right.  Fitting the outcome on the propensity score directly
(``ps_adjusted_regression``) is the classical comparator whose treatment
coefficient converges to the same overlap-population estimand.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset
from .errors import DomainError, SingularDesignError
from .propensity import PropensityFit, _fit_logistic_core
from .weights import Kind, TILTED_KINDS, WeightScheme, WeightVector, compute_weights, tilting_value


@dataclass(frozen=True)
class EffectEstimate:
    """An estimand-labelled point estimate, optionally with inference."""

    estimand_label: str
    contrast: tuple[int, int]
    point: float
    method: str = "hajek"
    variance_method: str = "none"
    se: float | None = None
    ci: tuple[float, float, float] | None = None  # (level, lower, upper)
    ato_equals_ate: bool = False

    def __post_init__(self):
        if self.se is not None and self.se < 0.0:
            raise DomainError("standard error must be nonnegative")
        if self.ci is not None:
            level, lower, upper = self.ci
            if not (lower <= self.point <= upper):
                raise DomainError("confidence interval must bracket the point estimate")
            if not (0.0 < level < 1.0):
                raise DomainError("confidence level must lie in (0, 1)")

    def with_inference(self, se: float, ci: tuple[float, float, float] | None, variance_method: str):
        return replace(self, se=se, ci=ci, variance_method=variance_method)


def _weighted_arm_mean(y, z, w: WeightVector, arm: int) -> float:
    mask = (z == arm) & w.kept
    total = float(w.weights[mask].sum())
    if total <= 0.0:
        raise DomainError(f"arm {arm} has zero total weight")
    return float((w.weights[mask] * y[mask]).sum() / total)


def _pairwise_label(scheme: WeightScheme, contrast: tuple[int, int]) -> str:
    if scheme.kind is Kind.GENERALIZED_OVERLAP:
        return f"pairwise-generalized-ATO({contrast[0]},{contrast[1]})"
    return scheme.estimand_label


def hajek_estimate(data: Dataset, w: WeightVector, contrast: tuple[int, int] = (1, 0)) -> EffectEstimate:
    """Difference of self-normalized weighted outcome means, arm j minus arm k."""
    j, k = contrast
    if j == k or not (0 <= j < data.arms) or not (0 <= k < data.arms):
        raise DomainError(f"contrast {contrast} is not a pair of distinct arms")
    y = data.require_outcome()
    point = _weighted_arm_mean(y, data.treatment, w, j) - _weighted_arm_mean(y, data.treatment, w, k)
    return EffectEstimate(
        estimand_label=_pairwise_label(w.scheme, contrast),
        contrast=(j, k),
        point=point,
        method="hajek",
    )


@dataclass(frozen=True)
class OutcomeModelFit:
    """Per-arm outcome regressions over (1, X) and their fitted values.

    ``fitted[i, k]`` is the arm-k model's prediction for unit i, for every
    unit regardless of its actual arm.
    """

    family: str
    coefficients: np.ndarray  # (K, p+1)
    fitted: np.ndarray        # (n, K)

    def __post_init__(self):
        if not np.all(np.isfinite(self.fitted)):
            raise DomainError("outcome model produced non-finite fitted values")
        if self.family == "logistic" and not np.all((self.fitted > 0) & (self.fitted < 1)):
            raise DomainError("logistic fitted values must lie in (0, 1)")


def fit_outcome_regression(data: Dataset, family: str) -> OutcomeModelFit:
    """Fit one outcome model per arm: least squares or logistic MLE.

    The logistic branch reuses the same damped-Newton machinery as the
    propensity fitter, so its error behavior (separation, rank deficiency)
    is identical.
    """
    y = data.require_outcome()
    if family not in ("linear", "logistic"):
        raise DomainError("outcome family must be 'linear' or 'logistic'")
    if family == "logistic" and not np.all(np.isin(y, (0.0, 1.0))):
        raise DomainError("logistic outcome regression needs a 0/1 outcome")

    n, p = data.n, data.p
    full_design = np.column_stack([np.ones(n), data.covariates])
    coefficients = np.empty((data.arms, p + 1))
    fitted = np.empty((n, data.arms))
    for arm in range(data.arms):
        idx = data.arm_indices(arm)
        X_arm = data.covariates[idx]
        y_arm = y[idx]
        if family == "linear":
            design = np.column_stack([np.ones(idx.size), X_arm])
            coef, _, rank, _ = np.linalg.lstsq(design, y_arm, rcond=None)
            if rank < p + 1:
                raise SingularDesignError(f"arm {arm} outcome design is rank deficient")
            coefficients[arm] = coef
            fitted[:, arm] = full_design @ coef
        else:
            coef, _, _ = _fit_logistic_core(X_arm, y_arm, ridge=0.0, names=data.covariate_names)
            coefficients[arm] = coef
            eta = full_design @ coef
            fitted[:, arm] = 0.5 * (1.0 + np.tanh(0.5 * eta))
    return OutcomeModelFit(family=family, coefficients=coefficients, fitted=fitted)


def augmented_estimate(
    data: Dataset,
    fit: PropensityFit,
    scheme: WeightScheme,
    om: OutcomeModelFit,
    contrast: tuple[int, int] = (1, 0),
) -> EffectEstimate:
    """Outcome-regression-augmented weighting estimator for a tilting scheme.

    point = sum_i h_i [ m1_i - m0_i + Z_i (Y_i - m1_i)/e_i
                        - (1-Z_i)(Y_i - m0_i)/(1-e_i) ] / sum_i h_i

    with h_i the tilting value at the fitted score.  For overlap weighting
    the residual corrections carry weights (1-e) on treated units and e on
    controls.  Consistent if either the propensity model or the outcome
    model is correctly specified.
    """
    if data.arms != 2 or fit.arms != 2:
        raise DomainError("augmented estimation requires a binary treatment")
    if fit.n != data.n:
        raise DomainError("propensity fit and dataset have different lengths")
    if scheme.kind not in TILTED_KINDS:
        raise DomainError(f"scheme {scheme.kind.value!r} has no tilting function to augment")
    if tuple(sorted(contrast)) != (0, 1):
        raise DomainError("augmented contrast must be (1, 0) or (0, 1)")
    y = data.require_outcome()
    z = (data.treatment == 1).astype(float)
    e = fit.scores[:, 1]
    h = tilting_value(e, scheme.kind)
    m1 = om.fitted[:, 1]
    m0 = om.fitted[:, 0]
    unit = m1 - m0 + z * (y - m1) / e - (1.0 - z) * (y - m0) / (1.0 - e)
    point = float((h * unit).sum() / h.sum())
    if contrast == (0, 1):
        point = -point
    return EffectEstimate(
        estimand_label=scheme.estimand_label,
        contrast=tuple(contrast),
        point=point,
        method="augmented",
    )


def ps_adjusted_regression(data: Dataset, fit: PropensityFit) -> EffectEstimate:
    """Least squares of Y on (1, Z, e-hat); the Z coefficient targets the
    overlap-population effect.

    Constant scores make e-hat collinear with the intercept; in that
    degenerate (trial-like) case the estimate falls back to the difference
    of arm means and is flagged ``ato_equals_ate``.
    """
    if data.arms != 2 or fit.arms != 2:
        raise DomainError("propensity-adjusted regression requires a binary treatment")
    if fit.n != data.n:
        raise DomainError("propensity fit and dataset have different lengths")
    y = data.require_outcome()
    z = (data.treatment == 1).astype(float)
    e = fit.scores[:, 1]
    degenerate = float(np.std(e)) <= 1e-10
    if degenerate:
        design = np.column_stack([np.ones(data.n), z])
    else:
        design = np.column_stack([np.ones(data.n), z, e])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        raise SingularDesignError("regression design (1, Z, e) is rank deficient")
    return EffectEstimate(
        estimand_label="ATO",
        contrast=(1, 0),
        point=float(coef[1]),
        method="ps_adjusted_regression",
        ato_equals_ate=degenerate,
    )


@dataclass(frozen=True)
class EstimationRecipe:
    """An end-to-end estimation pipeline: refit, reweight, re-estimate.

    The bootstrap replays the full recipe on each resample, so everything
    downstream of the data (propensity fit included) is re-estimated.
    """

    scheme: WeightScheme
    method: str = "hajek"  # hajek | augmented | ps_adjusted_regression
    contrast: tuple[int, int] = (1, 0)
    outcome_family: str | None = None  # for the augmented outcome model

    def __post_init__(self):
        if self.method not in ("hajek", "augmented", "ps_adjusted_regression"):
            raise DomainError(f"unknown estimation method {self.method!r}")

    def propensity_fit(self, data: Dataset) -> PropensityFit:
        from .propensity import fit_binary_logistic, fit_multinomial_logistic

        if data.arms == 2:
            return fit_binary_logistic(data)
        return fit_multinomial_logistic(data)

    def run(self, data: Dataset, fit: PropensityFit | None = None) -> EffectEstimate:
        if fit is None:
            fit = self.propensity_fit(data)
        if self.method == "ps_adjusted_regression":
            return ps_adjusted_regression(data, fit)
        if self.method == "augmented":
            family = self.outcome_family or (
                "logistic" if data.outcome_family == "binary" else "linear"
            )
            om = fit_outcome_regression(data, family)
            return augmented_estimate(data, fit, self.scheme, om, self.contrast)
        w = compute_weights(fit, data, self.scheme)
        return hajek_estimate(data, w, self.contrast)
