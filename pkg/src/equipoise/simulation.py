"""Synthetic data generation and the Monte Carlo evaluation harness.

The data-generating process draws p independent standard-normal covariates
and assigns treatment with probability

    e(X) = sigmoid( gamma * (alpha'X [+ 0.5 (x1^2 - 1) if misspecified]) )

so ``overlap_level`` gamma sweeps from a randomized trial (gamma = 0, all
scores 1/2) to severe non-overlap.  Outcomes follow

    Y = tau(X) Z + beta'X [+ (x1^2 - 1) if misspecified] + noise,
    tau(X) = base_effect + heterogeneity * alpha_tilde'X,

with a Bernoulli draw through a logistic link on the same linear predictor
for the binary family.  The coefficient directions are fixed constants of
the configuration (never redrawn), so every estimand is a constant of the
config:

    alpha       = (1, ..., 1) / sqrt(p)
    alpha_tilde = (+1, -1, +1, ...) / sqrt(p)
    beta        = (1, ..., 1) / sqrt(p)

The misspecification flags add the quadratic terms to the *generated* data
only; fitted models always use the linear covariates, which is exactly the
omitted-term misspecification being studied.

True estimand values are constants of the config.  For the continuous
family the ATE is ``base_effect`` analytically, and tilted estimands
reduce to one- or two-dimensional Gaussian expectations evaluated by
Gauss-Hermite quadrature; a chunked 10^7-draw Monte Carlo integrator with
a reported standard error is also provided and serves as an independent
cross-check of the quadrature route.

Replicate r of a harness run uses the documented, stable derivation
``seed_r = SeedSequence([seed, r])`` (NumPy's SeedSequence hash), so
replicates are independent streams and results are bit-reproducible for a
fixed seed under any execution order; aggregation is by replicate index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import Dataset
from .errors import DomainError, EquipoiseError, HarnessError
from .estimators import (
    augmented_estimate,
    fit_outcome_regression,
    hajek_estimate,
    ps_adjusted_regression,
)
from .inference import SANDWICH_KINDS, confidence_interval, sandwich_variance
from .propensity import PropensityFit, fit_binary_logistic, oracle_fit
from .weights import Kind, WeightScheme, compute_weights

QUAD_PROPENSITY_COEF = 0.5
QUAD_OUTCOME_COEF = 1.0
_ORACLE_MC_SEED = 202306  # fixed: estimands are constants of the config


@dataclass(frozen=True)
class DgpConfig:
    """Configuration of the synthetic data-generating process."""

    n: int
    p: int
    overlap_level: float
    heterogeneity: float = 0.0
    base_effect: float = 1.0
    outcome_family: str = "continuous"
    noise_sd: float = 1.0
    misspecified_propensity: bool = False
    misspecified_outcome: bool = False

    def __post_init__(self):
        if self.n < 50:
            raise DomainError("DGP needs n >= 50")
        if self.p < 1:
            raise DomainError("DGP needs at least one covariate")
        if self.overlap_level < 0:
            raise DomainError("overlap_level must be >= 0")
        if self.noise_sd < 0:
            raise DomainError("noise_sd must be >= 0")
        if self.outcome_family not in ("continuous", "binary"):
            raise DomainError("outcome_family must be 'continuous' or 'binary'")


def _direction_vectors(p: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    alpha = np.ones(p) / np.sqrt(p)
    alpha_tilde = np.array([(-1.0) ** j for j in range(p)]) / np.sqrt(p)
    beta = np.ones(p) / np.sqrt(p)
    return alpha, alpha_tilde, beta


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def true_scores(config: DgpConfig, X: np.ndarray) -> np.ndarray:
    """The assignment probabilities the DGP actually used for these X."""
    alpha, _, _ = _direction_vectors(config.p)
    lin = X @ alpha
    if config.misspecified_propensity:
        lin = lin + QUAD_PROPENSITY_COEF * (X[:, 0] ** 2 - 1.0)
    return _sigmoid(config.overlap_level * lin)


def _unit_effect(config: DgpConfig, X: np.ndarray) -> np.ndarray:
    _, alpha_tilde, _ = _direction_vectors(config.p)
    return config.base_effect + config.heterogeneity * (X @ alpha_tilde)


def _outcome_baseline(config: DgpConfig, X: np.ndarray) -> np.ndarray:
    _, _, beta = _direction_vectors(config.p)
    base = X @ beta
    if config.misspecified_outcome:
        base = base + QUAD_OUTCOME_COEF * (X[:, 0] ** 2 - 1.0)
    return base


def replicate_seed(seed: int, r: int) -> int:
    """Stable per-replicate seed: the first state word of SeedSequence([seed, r])."""
    return int(np.random.SeedSequence([int(seed), int(r)]).generate_state(1, dtype=np.uint64)[0])


def generate(config: DgpConfig, seed: int) -> Dataset:
    """Draw one synthetic sample; deterministic given (config, seed)."""
    rng = np.random.default_rng(int(seed))
    X = rng.standard_normal((config.n, config.p))
    e = true_scores(config, X)
    z = (rng.random(config.n) < e).astype(np.int64)
    mean = _unit_effect(config, X) * z + _outcome_baseline(config, X)
    if config.outcome_family == "continuous":
        y = mean + config.noise_sd * rng.standard_normal(config.n)
    else:
        y = (rng.random(config.n) < _sigmoid(mean)).astype(float)
    return Dataset(
        covariates=X,
        covariate_names=tuple(f"x{j + 1}" for j in range(config.p)),
        treatment=z,
        arms=2,
        outcome=y,
        outcome_family=config.outcome_family,
    )


# ---------------------------------------------------------------------------
# True estimand oracle
# ---------------------------------------------------------------------------

_TILTINGS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "ate": lambda e: np.ones_like(e),
    "att": lambda e: e,
    "ato": lambda e: e * (1.0 - e),
    "matching": lambda e: np.minimum(e, 1.0 - e),
    "entropy": lambda e: -e * np.log(e) - (1.0 - e) * np.log(1.0 - e),
}


@dataclass(frozen=True)
class TargetValue:
    value: float
    error: float  # quadrature error proxy or Monte Carlo standard error
    method: str   # analytic | quadrature | monte-carlo


def _gauss_hermite(m: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.hermite_e.hermegauss(m)
    return x, w / np.sqrt(2.0 * np.pi)


def _continuous_tilted_value(config: DgpConfig, tilting: str, nodes: int) -> float:
    h_fn = _TILTINGS[tilting]
    alpha, alpha_tilde, _ = _direction_vectors(config.p)
    gamma, delta, tau0 = config.overlap_level, config.heterogeneity, config.base_effect
    if not config.misspecified_propensity:
        # e depends on u = alpha'X alone; E[tau | u] = tau0 + delta rho u.
        rho = float(alpha @ alpha_tilde)
        x, w = _gauss_hermite(nodes)
        h = h_fn(_sigmoid(gamma * x))
        total = float(w @ h)
        return tau0 + delta * rho * float(w @ (h * x)) / total
    # e depends on (x1, residual of u); condition tau on both.
    a1, at1 = alpha[0], alpha_tilde[0]
    var_res = max(1.0 - a1 * a1, 0.0)
    sd_res = np.sqrt(var_res)
    cov_res = float(alpha @ alpha_tilde) - a1 * at1
    x, w = _gauss_hermite(nodes)
    if sd_res <= 1e-12:
        lin = gamma * (a1 * x + QUAD_PROPENSITY_COEF * (x**2 - 1.0))
        h = h_fn(_sigmoid(lin))
        tau_bar = tau0 + delta * at1 * x
        return float((w * h * tau_bar).sum() / (w * h).sum())
    x1 = x[:, None]
    t = x[None, :]
    ww = w[:, None] * w[None, :]
    lin = gamma * (a1 * x1 + sd_res * t + QUAD_PROPENSITY_COEF * (x1**2 - 1.0))
    h = h_fn(_sigmoid(lin))
    tau_bar = tau0 + delta * (at1 * x1 + (cov_res / sd_res) * t)
    return float((ww * h * tau_bar).sum() / (ww * h).sum())


def _binary_tilted_value(config: DgpConfig, tilting: str, nodes: int) -> float:
    h_fn = _TILTINGS[tilting]
    alpha, alpha_tilde, beta = _direction_vectors(config.p)
    gamma, delta, tau0 = config.overlap_level, config.heterogeneity, config.base_effect
    # Decompose (u, v, l) into their x1 components plus a joint Gaussian
    # residual; integrate over x1 and the residual's principal directions.
    heads = np.array([alpha[0], alpha_tilde[0], beta[0]])
    cov = np.array(
        [
            [alpha @ alpha, alpha @ alpha_tilde, alpha @ beta],
            [alpha @ alpha_tilde, alpha_tilde @ alpha_tilde, alpha_tilde @ beta],
            [alpha @ beta, alpha_tilde @ beta, beta @ beta],
        ]
    ) - np.outer(heads, heads)
    eigval, eigvec = np.linalg.eigh(cov)
    keep = eigval > 1e-12
    load = eigvec[:, keep] * np.sqrt(eigval[keep])  # (3, k)
    k = load.shape[1]
    x, w = _gauss_hermite(nodes)
    grids = np.meshgrid(*([x] * (1 + k)), indexing="ij")
    weight = w
    for _ in range(k):
        weight = np.multiply.outer(weight, w)
    x1 = grids[0]
    res = np.zeros((3,) + x1.shape)
    for d in range(k):
        for comp in range(3):
            res[comp] += load[comp, d] * grids[1 + d]
    u = heads[0] * x1 + res[0]
    v = heads[1] * x1 + res[1]
    lin_base = heads[2] * x1 + res[2]
    if config.misspecified_propensity:
        u = u + QUAD_PROPENSITY_COEF * (x1**2 - 1.0)
    if config.misspecified_outcome:
        lin_base = lin_base + QUAD_OUTCOME_COEF * (x1**2 - 1.0)
    e = _sigmoid(gamma * u)
    tau_lin = tau0 + delta * v
    tau_unit = _sigmoid(lin_base + tau_lin) - _sigmoid(lin_base)
    h = h_fn(e)
    return float((weight * h * tau_unit).sum() / (weight * h).sum())


_target_cache: dict[tuple, TargetValue] = {}


def true_target(config: DgpConfig, tilting: str) -> TargetValue:
    """True value of the tilted estimand E[h(e)tau] / E[h(e)] for this DGP.

    Continuous-family ATE is analytic (the covariates are centered);
    everything else is Gauss-Hermite quadrature on the minimal Gaussian
    subspace, with the change between two node counts reported as the
    error proxy.
    """
    if tilting not in _TILTINGS:
        raise DomainError(f"unknown tilting {tilting!r}")
    key = (config, tilting)
    if key in _target_cache:
        return _target_cache[key]
    if config.outcome_family == "continuous":
        if tilting == "ate":
            result = TargetValue(config.base_effect, 0.0, "analytic")
        else:
            coarse = _continuous_tilted_value(config, tilting, 80)
            fine = _continuous_tilted_value(config, tilting, 120)
            result = TargetValue(fine, max(abs(fine - coarse), 1e-15), "quadrature")
    else:
        coarse = _binary_tilted_value(config, tilting, 24)
        fine = _binary_tilted_value(config, tilting, 32)
        result = TargetValue(fine, max(abs(fine - coarse), 1e-15), "quadrature")
    _target_cache[key] = result
    return result


def true_estimands(config: DgpConfig) -> tuple[float, float]:
    """(ATE, ATO) for this configuration."""
    return true_target(config, "ate").value, true_target(config, "ato").value


def true_target_mc(
    config: DgpConfig,
    tilting: str,
    n_draws: int = 10**7,
    seed: int = _ORACLE_MC_SEED,
    chunk: int = 10**6,
) -> TargetValue:
    """Monte Carlo integration of the tilted estimand, with standard error.

    Independent of the quadrature route: draws covariates directly and
    averages h and h*tau in chunks, so it doubles as a cross-check oracle.
    """
    if tilting not in _TILTINGS:
        raise DomainError(f"unknown tilting {tilting!r}")
    h_fn = _TILTINGS[tilting]
    rng = np.random.default_rng(int(seed))
    s_h = s_ht = s_hh = s_htht = s_h_ht = 0.0
    total = 0
    while total < n_draws:
        size = min(chunk, n_draws - total)
        X = rng.standard_normal((size, config.p))
        e = true_scores(config, X)
        if config.outcome_family == "continuous":
            tau = _unit_effect(config, X)
        else:
            base = _outcome_baseline(config, X)
            tau = _sigmoid(base + _unit_effect(config, X)) - _sigmoid(base)
        h = h_fn(e)
        ht = h * tau
        s_h += float(h.sum())
        s_ht += float(ht.sum())
        s_hh += float(h @ h)
        s_htht += float(ht @ ht)
        s_h_ht += float(h @ ht)
        total += size
    mean_h = s_h / total
    ratio = s_ht / s_h
    var_g = s_htht / total - 2.0 * ratio * (s_h_ht / total) + ratio * ratio * (s_hh / total)
    se = float(np.sqrt(max(var_g, 0.0) / total) / mean_h)
    return TargetValue(float(ratio), se, "monte-carlo")


# ---------------------------------------------------------------------------
# Monte Carlo harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _SchemeSpec:
    name: str
    target_tilting: str
    estimator: str  # hajek | augmented | ps_regression
    weight_kind: Kind | None
    sandwich_ok: bool


_SCHEME_SPECS = {
    "iptw": _SchemeSpec("iptw", "ate", "hajek", Kind.IPTW, True),
    "overlap": _SchemeSpec("overlap", "ato", "hajek", Kind.OVERLAP, True),
    "att": _SchemeSpec("att", "att", "hajek", Kind.ATT, True),
    "matching": _SchemeSpec("matching", "matching", "hajek", Kind.MATCHING, True),
    "entropy": _SchemeSpec("entropy", "entropy", "hajek", Kind.ENTROPY, True),
    "trimmed": _SchemeSpec("trimmed", "ate", "hajek", Kind.TRIMMED, False),
    "stabilized": _SchemeSpec("stabilized", "ate", "hajek", Kind.STABILIZED, False),
    "ps-regression": _SchemeSpec("ps-regression", "ato", "ps_regression", None, False),
    "augmented-overlap": _SchemeSpec("augmented-overlap", "ato", "augmented", Kind.OVERLAP, False),
}

HARNESS_SCHEMES = tuple(_SCHEME_SPECS)


@dataclass
class SchemeSummary:
    """Aggregated performance of one scheme against its own estimand."""

    name: str
    estimand_label: str
    target: float
    points: np.ndarray        # (R,), NaN where the replicate failed
    ses: np.ndarray           # (R,), NaN where unavailable
    covered: np.ndarray       # (R,), NaN where unavailable
    ess_per_arm: np.ndarray   # (R, K)
    failures: int
    bias: float = field(init=False)
    empirical_sd: float = field(init=False)
    rmse: float = field(init=False)
    mean_se: float = field(init=False)
    coverage: float = field(init=False)
    mean_ess_per_arm: np.ndarray = field(init=False)

    def __post_init__(self):
        ok = np.isfinite(self.points)
        pts = self.points[ok]
        self.bias = float(pts.mean() - self.target)
        self.empirical_sd = float(pts.std(ddof=0))
        self.rmse = float(np.sqrt(np.mean((pts - self.target) ** 2)))
        have_se = np.isfinite(self.ses)
        self.mean_se = float(self.ses[have_se].mean()) if have_se.any() else float("nan")
        have_cover = np.isfinite(self.covered)
        self.coverage = float(self.covered[have_cover].mean()) if have_cover.any() else float("nan")
        if np.isfinite(self.ess_per_arm).any():
            self.mean_ess_per_arm = np.nanmean(self.ess_per_arm, axis=0)
        else:
            self.mean_ess_per_arm = np.full(self.ess_per_arm.shape[1], np.nan)


@dataclass
class SimulationResult:
    config: DgpConfig
    schemes: tuple[str, ...]
    replicates: int
    seed: int
    score_source: str
    variance: str
    ci_level: float
    targets: dict[str, TargetValue]
    summaries: dict[str, SchemeSummary]
    true_ate: float
    true_ato: float


def run_monte_carlo(
    config: DgpConfig,
    schemes,
    replicates: int,
    seed: int,
    score_source: str = "fitted",
    variance: str = "none",
    ci_level: float = 0.95,
    trim_alpha: float = 0.1,
) -> SimulationResult:
    """Replicate the full pipeline and score every scheme against its own
    true estimand.

    Each replicate generates a fresh sample, fits the propensity model
    (or, with ``score_source='true'``, uses the generator's own scores),
    computes the weights of each requested scheme and the Hajek contrast.
    With ``variance='sandwich'`` the supported schemes also get a standard
    error and a Wald interval, scored for coverage against the scheme's
    target.  Failed replicates are skipped and counted; more than 10%
    failures for any scheme aborts the run.
    """
    schemes = tuple(schemes)
    if replicates < 100:
        raise DomainError("Monte Carlo needs at least 100 replicates")
    if not schemes:
        raise DomainError("no schemes requested")
    unknown = [s for s in schemes if s not in _SCHEME_SPECS]
    if unknown:
        raise DomainError(f"unknown scheme {unknown[0]!r}; expected one of {sorted(_SCHEME_SPECS)}")
    if score_source not in ("fitted", "true"):
        raise DomainError("score_source must be 'fitted' or 'true'")
    if variance not in ("none", "sandwich"):
        raise DomainError("variance must be 'none' or 'sandwich'")
    if variance == "sandwich" and score_source == "true":
        raise DomainError("sandwich variance needs fitted propensity scores")

    targets = {name: true_target(config, _SCHEME_SPECS[name].target_tilting) for name in schemes}
    r_count = replicates
    points = {name: np.full(r_count, np.nan) for name in schemes}
    ses = {name: np.full(r_count, np.nan) for name in schemes}
    covered = {name: np.full(r_count, np.nan) for name in schemes}
    ess = {name: np.full((r_count, 2), np.nan) for name in schemes}
    failures = {name: 0 for name in schemes}

    for r in range(r_count):
        try:
            data = generate(config, replicate_seed(seed, r))
            if score_source == "fitted":
                fit: PropensityFit = fit_binary_logistic(data)
            else:
                fit = oracle_fit(true_scores(config, data.covariates))
        except EquipoiseError:
            for name in schemes:
                failures[name] += 1
            continue
        for name in schemes:
            spec = _SCHEME_SPECS[name]
            try:
                estimate, weight_vec = _run_scheme(spec, data, fit, trim_alpha)
                points[name][r] = estimate.point
                if weight_vec is not None:
                    ess[name][r] = weight_vec.ess_per_arm
                if (
                    variance == "sandwich"
                    and spec.sandwich_ok
                    and spec.estimator == "hajek"
                ):
                    scheme_obj = WeightScheme(spec.weight_kind)
                    res = sandwich_variance(data, fit, scheme_obj, estimate)
                    ses[name][r] = res.se
                    lo, hi = confidence_interval(estimate.point, res.se, ci_level)
                    covered[name][r] = float(lo <= targets[name].value <= hi)
            except EquipoiseError:
                failures[name] += 1

    for name in schemes:
        if failures[name] > 0.10 * r_count:
            raise HarnessError(
                f"scheme {name!r} failed in {failures[name]} of {r_count} replicates (limit 10%)"
            )

    summaries = {
        name: SchemeSummary(
            name=name,
            estimand_label=_SCHEME_SPECS[name].target_tilting,
            target=targets[name].value,
            points=points[name],
            ses=ses[name],
            covered=covered[name],
            ess_per_arm=ess[name],
            failures=failures[name],
        )
        for name in schemes
    }
    ate, ato = true_estimands(config)
    return SimulationResult(
        config=config,
        schemes=schemes,
        replicates=r_count,
        seed=seed,
        score_source=score_source,
        variance=variance,
        ci_level=ci_level,
        targets=targets,
        summaries=summaries,
        true_ate=ate,
        true_ato=ato,
    )


def _run_scheme(spec: _SchemeSpec, data: Dataset, fit: PropensityFit, trim_alpha: float):
    if spec.estimator == "ps_regression":
        return ps_adjusted_regression(data, fit), None
    if spec.estimator == "augmented":
        family = "logistic" if data.outcome_family == "binary" else "linear"
        om = fit_outcome_regression(data, family)
        scheme = WeightScheme(spec.weight_kind)
        weight_vec = compute_weights(fit, data, scheme)
        return augmented_estimate(data, fit, scheme, om), weight_vec
    alpha = trim_alpha if spec.weight_kind is Kind.TRIMMED else None
    scheme = WeightScheme(spec.weight_kind, alpha)
    weight_vec = compute_weights(fit, data, scheme)
    return hajek_estimate(data, weight_vec), weight_vec
