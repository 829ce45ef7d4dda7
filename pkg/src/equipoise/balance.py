"""Covariate balance diagnostics: standardized mean differences, weighted
baseline tables, the exact-balance check for overlap weights, and the
propensity-score histogram data behind overlap displays.

Balance is a design-phase activity: every function here drops the outcome
vector on entry (``Dataset.without_outcome``), so diagnostics can never
peek at Y, and outcome-free files work end to end.

Weighted SMDs divide weighted mean differences by the *unweighted* pooled
standard deviation, so weighted and unweighted diagnostics share a scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import BalanceError, DomainError
from .propensity import PropensityFit
from .weights import Kind, WeightScheme, WeightVector, compute_weights


def _arm_stats(data: Dataset, arm: int, w: WeightVector | None):
    X = data.covariates
    if w is None:
        mask = data.treatment == arm
        if not np.any(mask):
            raise DomainError(f"arm {arm} is empty")
        means = X[mask].mean(axis=0)
    else:
        mask = (data.treatment == arm) & w.kept
        wt = w.weights[mask]
        if wt.size == 0 or wt.sum() <= 0.0:
            raise DomainError(f"arm {arm} has no kept units")
        means = (wt[:, None] * X[mask]).sum(axis=0) / wt.sum()
    return means, mask


def _pooled_sd(data: Dataset, j: int, k: int) -> np.ndarray:
    # Unweighted arm variances (ddof=1), pooled; the common SMD denominator.
    X = data.covariates
    var_j = X[data.treatment == j].var(axis=0, ddof=1)
    var_k = X[data.treatment == k].var(axis=0, ddof=1)
    return np.sqrt(0.5 * (var_j + var_k))


def smd(data: Dataset, contrast: tuple[int, int] = (1, 0), w: WeightVector | None = None) -> np.ndarray:
    """Per-covariate standardized mean differences, arm j minus arm k.

    Weighted means are self-normalized over kept units; the denominator is
    always the unweighted pooled SD.  A covariate with zero pooled SD gets
    an SMD of 0 when the arm means coincide and NaN (flagged non-finite)
    otherwise.
    """
    j, k = contrast
    data = data.without_outcome()
    mean_j, _ = _arm_stats(data, j, w)
    mean_k, _ = _arm_stats(data, k, w)
    denom = _pooled_sd(data, j, k)
    out = np.empty(data.p)
    for c in range(data.p):
        if denom[c] > 0.0:
            out[c] = (mean_j[c] - mean_k[c]) / denom[c]
        elif np.isclose(mean_j[c], mean_k[c], rtol=1e-12, atol=1e-12):
            out[c] = 0.0
        else:
            out[c] = np.nan
    return out


def assert_exact_balance(data: Dataset, fit: PropensityFit, tolerance: float = 1e-6) -> float:
    """Check the overlap-weight exact-balance identity on modeled covariates.

    A converged logistic fit satisfies sum((Z - e) [1, X]) = 0, which
    rearranges to sum_treated (1-e) x = sum_control e x: the overlap-
    weighted covariate means of the two arms are equal.  Returns the
    maximum absolute standardized weighted mean difference; raises
    BalanceError if it exceeds ``tolerance`` despite a converged fit.
    """
    if fit.kind != "binary-logistic":
        raise DomainError("exact balance holds for binary logistic fits")
    if not fit.converged:
        raise DomainError("exact balance requires a converged fit")
    data = data.without_outcome()
    w = compute_weights(fit, data, WeightScheme(Kind.OVERLAP))
    if data.p == 0:
        return 0.0
    gap = float(np.nanmax(np.abs(smd(data, (1, 0), w))))
    if gap > tolerance:
        raise BalanceError(
            f"overlap-weighted imbalance {gap:.3e} exceeds tolerance {tolerance:g} "
            f"(gradient norm {fit.final_gradient_norm:.3e})"
        )
    return gap


@dataclass(frozen=True)
class BalanceReport:
    """Balance diagnostics for one weighting scheme and contrast."""

    covariate_names: tuple[str, ...]
    contrast: tuple[int, int]
    unweighted_smd: np.ndarray
    weighted_smd: np.ndarray
    weighted_means: np.ndarray  # (K, p) weighted covariate means per arm
    ess_per_arm: np.ndarray
    scheme_label: str

    @property
    def max_abs_weighted_smd(self) -> float:
        finite = self.weighted_smd[np.isfinite(self.weighted_smd)]
        return float(np.max(np.abs(finite))) if finite.size else 0.0


def balance_report(data: Dataset, w: WeightVector, contrast: tuple[int, int] = (1, 0)) -> BalanceReport:
    data = data.without_outcome()
    means = np.empty((data.arms, data.p))
    for arm in range(data.arms):
        means[arm], _ = _arm_stats(data, arm, w)
    return BalanceReport(
        covariate_names=data.covariate_names,
        contrast=contrast,
        unweighted_smd=smd(data, contrast, None),
        weighted_smd=smd(data, contrast, w),
        weighted_means=means,
        ess_per_arm=w.ess_per_arm.copy(),
        scheme_label=w.scheme.kind.value,
    )


def baseline_table(data: Dataset, w: WeightVector) -> list[dict]:
    """Weighted baseline covariate table rows.

    One row per covariate with each arm's weighted mean and unweighted SD,
    then summary rows for the effective and raw sample sizes.  This is the
    design-step description of the weighted target population.
    """
    data = data.without_outcome()
    X = data.covariates
    rows = []
    means = {arm: _arm_stats(data, arm, w)[0] for arm in range(data.arms)}
    for c, name in enumerate(data.covariate_names):
        row = {"covariate": name}
        for arm in range(data.arms):
            sd = float(X[data.treatment == arm][:, c].std(ddof=1))
            row[f"mean_arm{arm}"] = float(means[arm][c])
            row[f"sd_arm{arm}"] = sd
        rows.append(row)
    ess_row = {"covariate": "ESS"}
    n_row = {"covariate": "N"}
    counts = data.arm_counts()
    for arm in range(data.arms):
        ess_row[f"mean_arm{arm}"] = float(w.ess_per_arm[arm])
        ess_row[f"sd_arm{arm}"] = ""
        n_row[f"mean_arm{arm}"] = int(counts[arm])
        n_row[f"sd_arm{arm}"] = ""
    rows.append(ess_row)
    rows.append(n_row)
    return rows


def score_histogram(fit: PropensityFit, data: Dataset, bins: int = 10) -> list[dict]:
    """Per-arm propensity-score histogram counts over equal-width bins.

    For two arms the binned score is e = P(Z=1|X) for every unit, which is
    the standard mirrored-histogram overlap display; for K > 2 each unit's
    own-arm score is binned.  Counts within an arm sum to that arm's n.
    """
    data = data.without_outcome()
    if fit.n != data.n:
        raise DomainError("propensity fit and dataset have different lengths")
    if fit.arms == 2:
        score = fit.scores[:, 1]
    else:
        score = fit.scores[np.arange(data.n), data.treatment]
    edges = np.linspace(0.0, 1.0, bins + 1)
    rows = []
    for arm in range(data.arms):
        counts, _ = np.histogram(score[data.treatment == arm], bins=edges)
        for b in range(bins):
            rows.append(
                {
                    "arm": arm,
                    "bin_low": float(edges[b]),
                    "bin_high": float(edges[b + 1]),
                    "count": int(counts[b]),
                }
            )
    return rows
