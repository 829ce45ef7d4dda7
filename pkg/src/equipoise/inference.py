"""Standard errors: stacked-estimating-equation sandwich and bootstrap.

The sandwich stacks three sets of estimating equations -- the logistic
score equations for the propensity coefficients beta, and one weighted
mean equation per arm:

    psi_beta_i = (Z_i - e_i) d_i                 d_i = (1, X_i)
    psi_mu1_i  = Z_i w_i(beta) (Y_i - mu1)
    psi_mu0_i  = (1 - Z_i) w_i(beta) (Y_i - mu0)

and reports the delta-method standard error of tau = mu1 - mu0 from
A^-1 B A^-T.  Because the weights are functions of beta, the bread picks
up analytic dw/dbeta terms; estimating the propensity model is therefore
accounted for rather than treated as known.

The bootstrap resamples units with replacement and replays the entire
estimation recipe (propensity refit included) on each resample.  Replicate
r draws from its own generator seeded by SeedSequence([seed, r]), so the
resulting standard error is bit-reproducible for a fixed seed no matter
how replicates are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DomainError, EquipoiseError, InferenceError
from .estimators import EffectEstimate, EstimationRecipe
from .propensity import PropensityFit
from .weights import Kind, WeightScheme, compute_weights

# Schemes whose weight derivative in beta is implemented for the sandwich.
SANDWICH_KINDS = (Kind.IPTW, Kind.OVERLAP, Kind.ATT, Kind.MATCHING, Kind.ENTROPY)


@dataclass(frozen=True)
class VarianceResult:
    se: float
    method: str  # sandwich | bootstrap
    replicates: int | None = None
    failed_replicates: int | None = None
    bread_condition: float | None = None

    def __post_init__(self):
        if self.se < 0.0:
            raise DomainError("standard error must be nonnegative")
        if self.method == "bootstrap" and (self.replicates is None or self.replicates < 1):
            raise DomainError("bootstrap result needs a positive replicate count")


def _dw_de(e: np.ndarray, treated: np.ndarray, kind: Kind) -> np.ndarray:
    """Derivative of the unit weight in the score e, by arm.

    Treated weight is h(e)/e, control weight h(e)/(1-e).  The matching
    tilting is piecewise linear; its kink at e = 1/2 has measure zero and
    the left branch is used there.
    """
    if kind is Kind.IPTW:
        return np.where(treated, -1.0 / e**2, 1.0 / (1.0 - e) ** 2)
    if kind is Kind.OVERLAP:
        return np.where(treated, -1.0, 1.0)
    if kind is Kind.ATT:
        return np.where(treated, 0.0, 1.0 / (1.0 - e) ** 2)
    if kind is Kind.MATCHING:
        low = e <= 0.5
        d_treated = np.where(low, 0.0, -1.0 / e**2)
        d_control = np.where(low, 1.0 / (1.0 - e) ** 2, 0.0)
        return np.where(treated, d_treated, d_control)
    if kind is Kind.ENTROPY:
        h = -e * np.log(e) - (1.0 - e) * np.log(1.0 - e)
        dh = np.log((1.0 - e) / e)
        d_treated = (dh * e - h) / e**2
        d_control = (dh * (1.0 - e) + h) / (1.0 - e) ** 2
        return np.where(treated, d_treated, d_control)
    raise DomainError(f"no weight derivative for scheme {kind.value!r}")


def weight_beta_jacobian(fit: PropensityFit, data: Dataset, scheme: WeightScheme) -> np.ndarray:
    """Analytic (n, p+1) Jacobian dw_i/dbeta on the original covariate scale.

    Chain rule through the logistic link: dw/dbeta = (dw/de) e(1-e) d_i.
    """
    if scheme.kind not in SANDWICH_KINDS:
        raise DomainError(f"scheme {scheme.kind.value!r} is not supported by the sandwich")
    e = fit.scores[:, 1]
    treated = data.treatment == 1
    design = np.column_stack([np.ones(data.n), data.covariates])
    slope = _dw_de(e, treated, scheme.kind) * e * (1.0 - e)
    return slope[:, None] * design


def sandwich_variance(
    data: Dataset,
    fit: PropensityFit,
    scheme: WeightScheme,
    estimate: EffectEstimate,
) -> VarianceResult:
    """M-estimation sandwich standard error for a Hajek contrast.

    Requires a converged binary logistic fit (the bread needs the fitted
    coefficients' estimating equations) and one of the schemes in
    SANDWICH_KINDS.  Trimmed, stabilized and multi-arm schemes go through
    the bootstrap instead.
    """
    if estimate.method != "hajek":
        raise DomainError("the sandwich covers Hajek estimates only")
    if fit.kind != "binary-logistic" or fit.coefficients is None:
        raise DomainError("sandwich variance needs a fitted binary logistic propensity model")
    if data.arms != 2:
        raise DomainError("sandwich variance requires binary treatment")
    if scheme.kind not in SANDWICH_KINDS:
        raise DomainError(
            f"no sandwich for scheme {scheme.kind.value!r}; use bootstrap_variance"
        )
    if tuple(sorted(estimate.contrast)) != (0, 1):
        raise DomainError("sandwich contrast must be (1, 0) or (0, 1)")

    y = data.require_outcome()
    z = (data.treatment == 1).astype(float)
    e = fit.scores[:, 1]
    w = compute_weights(fit, data, scheme).weights
    design = np.column_stack([np.ones(data.n), data.covariates])
    q = design.shape[1]

    mu1 = float((z * w * y).sum() / (z * w).sum())
    mu0 = float(((1.0 - z) * w * y).sum() / ((1.0 - z) * w).sum())

    psi = np.empty((data.n, q + 2))
    psi[:, :q] = (z - e)[:, None] * design
    psi[:, q] = z * w * (y - mu1)
    psi[:, q + 1] = (1.0 - z) * w * (y - mu0)

    jac = weight_beta_jacobian(fit, data, scheme)  # dw/dbeta, (n, q)
    bread = np.zeros((q + 2, q + 2))
    bread[:q, :q] = design.T @ (design * (e * (1.0 - e))[:, None])
    bread[q, :q] = -(z * (y - mu1)) @ jac
    bread[q + 1, :q] = -((1.0 - z) * (y - mu0)) @ jac
    bread[q, q] = (z * w).sum()
    bread[q + 1, q + 1] = ((1.0 - z) * w).sum()

    meat = psi.T @ psi
    condition = float(np.linalg.cond(bread))
    try:
        half = np.linalg.solve(bread, meat)
        variance = np.linalg.solve(bread, half.T).T
    except np.linalg.LinAlgError:
        raise InferenceError(
            f"singular bread matrix (condition number {condition:.3e})"
        ) from None
    tau_var = float(variance[q, q] - 2.0 * variance[q, q + 1] + variance[q + 1, q + 1])
    if not np.isfinite(tau_var) or tau_var < 0.0:
        raise InferenceError(
            f"sandwich produced an invalid variance (condition number {condition:.3e})"
        )
    return VarianceResult(se=float(np.sqrt(tau_var)), method="sandwich", bread_condition=condition)


def bootstrap_variance(data: Dataset, recipe: EstimationRecipe, b: int, seed: int) -> VarianceResult:
    """Unit-resampling bootstrap standard error of a recipe's point estimate.

    Each replicate refits the propensity model, recomputes weights and
    re-estimates.  Replicates whose fit fails (including resamples that
    lose an arm) are dropped and counted; more than 5% failures is an
    inference error.
    """
    if b < 100:
        raise DomainError("bootstrap needs at least 100 replicates")
    if seed < 0:
        raise DomainError("seed must be nonnegative")
    points = []
    failed = 0
    for r in range(b):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), r]))
        idx = rng.integers(0, data.n, size=data.n)
        try:
            resample = data.take(idx)
            points.append(recipe.run(resample).point)
        except EquipoiseError:
            failed += 1
    if failed > 0.05 * b:
        raise InferenceError(f"{failed} of {b} bootstrap replicates failed (limit 5%)")
    se = float(np.std(np.asarray(points), ddof=1))
    return VarianceResult(se=se, method="bootstrap", replicates=b, failed_replicates=failed)


def normal_quantile(p: float) -> float:
    """Standard normal quantile (inverse CDF), good to ~1e-15.

    Rational minimax approximations on three regions (the classic PPND16
    split at |p - 1/2| <= 0.425 and tail breakpoints at r = 5).
    """
    if not (0.0 < p < 1.0):
        raise DomainError("quantile argument must lie strictly in (0, 1)")
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    r = p if q < 0.0 else 1.0 - p
    r = float(np.sqrt(-np.log(r)))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    value = num / den
    return -value if q < 0.0 else value


def confidence_interval(point: float, se: float, level: float = 0.95) -> tuple[float, float]:
    """Wald interval point +/- z_{(1+level)/2} * se."""
    if not (0.0 < level < 1.0):
        raise DomainError("confidence level must lie in (0, 1)")
    if se < 0.0:
        raise DomainError("standard error must be nonnegative")
    z = normal_quantile(0.5 * (1.0 + level))
    return (point - z * se, point + z * se)
