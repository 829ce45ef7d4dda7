"""Balancing-weight schemes: tilting functions and per-unit weights.

Every scheme in the family is the ratio h(e) / P(Z = z | X) for a
nonnegative tilting function h of the propensity score e:

    h(e) = 1            inverse probability of treatment (targets the ATE)
    h(e) = e            treated-population weighting (ATT)
    h(e) = e(1 - e)     overlap weighting (ATO)
    h(e) = min(e, 1-e)  matching weights
    h(e) = Bernoulli entropy of e   entropy weights

so for a two-arm sample the overlap weight is 1 - e for treated units and
e for controls: each unit is weighted by its propensity to receive the
opposite treatment.  Weights are reported unnormalized; estimators
self-normalize, so any within-arm rescaling is harmless.

Stabilization (marginal arm share in the numerator) is exposed for IPTW
only: for overlap weights it would merely rescale within arm and change
nothing downstream.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DomainError
from .propensity import PropensityFit


class Kind(enum.Enum):
    IPTW = "iptw"
    ATT = "att"
    OVERLAP = "overlap"
    MATCHING = "matching"
    ENTROPY = "entropy"
    TRIMMED = "trimmed"
    STABILIZED = "stabilized"
    GENERALIZED_OVERLAP = "generalized-overlap"


_ESTIMAND_LABELS = {
    Kind.IPTW: "ATE",
    Kind.ATT: "ATT",
    Kind.OVERLAP: "ATO",
    Kind.MATCHING: "matching",
    Kind.ENTROPY: "entropy",
    Kind.TRIMMED: "trimmed-ATE",
    Kind.STABILIZED: "ATE",
    Kind.GENERALIZED_OVERLAP: "generalized-ATO",
}

# Kinds with a scalar tilting function h(e) on a binary propensity score.
TILTED_KINDS = (Kind.IPTW, Kind.ATT, Kind.OVERLAP, Kind.MATCHING, Kind.ENTROPY)


@dataclass(frozen=True)
class WeightScheme:
    """A weighting scheme: the tilting kind plus any scheme parameters."""

    kind: Kind
    alpha: float | None = None

    def __post_init__(self):
        if self.kind is Kind.TRIMMED:
            if self.alpha is None or not (0.0 < self.alpha < 0.5):
                raise DomainError("trimming threshold alpha must lie in (0, 0.5)")
        elif self.alpha is not None:
            raise DomainError(f"alpha is only meaningful for trimmed IPTW, not {self.kind.value}")

    @classmethod
    def from_name(cls, name: str, alpha: float = 0.1) -> "WeightScheme":
        try:
            kind = Kind(name)
        except ValueError:
            valid = ", ".join(k.value for k in Kind)
            raise DomainError(f"unknown weighting scheme {name!r}; expected one of: {valid}") from None
        return cls(kind, alpha if kind is Kind.TRIMMED else None)

    @property
    def estimand_label(self) -> str:
        return _ESTIMAND_LABELS[self.kind]

    @property
    def binary_only(self) -> bool:
        return self.kind is not Kind.GENERALIZED_OVERLAP


def tilting_value(e, kind: Kind):
    """Evaluate the tilting function h(e) for a binary propensity score.

    Accepts scalars or arrays; every value must lie strictly in (0, 1).
    """
    e = np.asarray(e, dtype=float)
    if not np.all((e > 0.0) & (e < 1.0)):
        raise DomainError("propensity scores must lie strictly in (0, 1)")
    if kind is Kind.IPTW:
        h = np.ones_like(e)
    elif kind is Kind.ATT:
        h = e.copy()
    elif kind is Kind.OVERLAP:
        h = e * (1.0 - e)
    elif kind is Kind.MATCHING:
        h = np.minimum(e, 1.0 - e)
    elif kind is Kind.ENTROPY:
        h = -e * np.log(e) - (1.0 - e) * np.log(1.0 - e)
    else:
        raise DomainError(f"scheme {kind.value!r} has no scalar tilting function")
    return float(h) if h.ndim == 0 else h


@dataclass(frozen=True)
class WeightVector:
    """Per-unit weights for one scheme, plus trim flags and per-arm ESS."""

    weights: np.ndarray
    scheme: WeightScheme
    kept: np.ndarray
    ess_per_arm: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        kept = np.asarray(self.kept, dtype=bool)
        if w.ndim != 1 or kept.shape != w.shape:
            raise DomainError("weights and kept must be length-n vectors")
        if not np.all(np.isfinite(w)) or np.any(w < 0.0):
            raise DomainError("weights must be finite and nonnegative")
        if np.any(w[~kept] != 0.0):
            raise DomainError("trimmed-out units must have weight 0")
        w = w.copy()
        w.setflags(write=False)
        kept = kept.copy()
        kept.setflags(write=False)
        ess = np.asarray(self.ess_per_arm, dtype=float).copy()
        ess.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "kept", kept)
        object.__setattr__(self, "ess_per_arm", ess)


def _kish_ess(w: np.ndarray) -> float:
    total = w.sum()
    square = float(w @ w)
    return float(total * total / square)


def _finalize(weights: np.ndarray, kept: np.ndarray, scheme: WeightScheme, treatment, arms: int) -> WeightVector:
    ess = np.empty(arms)
    for arm in range(arms):
        in_arm = (treatment == arm) & kept
        w_arm = weights[in_arm]
        if w_arm.size == 0 or w_arm.sum() <= 0.0:
            raise DomainError(f"arm {arm} has no weight left under scheme {scheme.kind.value!r}")
        ess[arm] = _kish_ess(w_arm)
    return WeightVector(weights=weights, scheme=scheme, kept=kept, ess_per_arm=ess)


def _check_dimensions(fit: PropensityFit, data: Dataset):
    if fit.n != data.n:
        raise DomainError("propensity fit and dataset have different lengths")
    if fit.arms != data.arms:
        raise DomainError("propensity fit and dataset disagree on the arm count")


def compute_weights(fit: PropensityFit, data: Dataset, scheme: WeightScheme) -> WeightVector:
    """Build the per-unit weight vector for a scheme.

    Two-arm schemes use e = P(Z=1|X): IPTW assigns 1/e to treated and
    1/(1-e) to controls; overlap assigns 1-e and e; ATT assigns 1 and
    e/(1-e); matching and entropy divide their tilting value by the
    probability of the unit's own arm.  Stabilized IPTW multiplies each
    unit's IPTW weight by the marginal share of its own arm.
    """
    _check_dimensions(fit, data)
    if scheme.kind is Kind.GENERALIZED_OVERLAP:
        return generalized_overlap_weights(fit, data)
    if data.arms != 2:
        raise DomainError(
            f"scheme {scheme.kind.value!r} requires binary treatment; use generalized-overlap"
        )
    if scheme.kind is Kind.TRIMMED:
        return trim(fit, data, scheme.alpha)

    e = fit.scores[:, 1]
    z = data.treatment
    treated = z == 1
    if scheme.kind is Kind.STABILIZED:
        share = data.arm_counts() / data.n
        weights = np.where(treated, share[1] / e, share[0] / (1.0 - e))
    else:
        h = tilting_value(e, scheme.kind)
        weights = h / np.where(treated, e, 1.0 - e)
    if not np.all(np.isfinite(weights)):
        raise DomainError("internal error: non-finite weight from in-range scores")
    kept = np.ones(data.n, dtype=bool)
    return _finalize(weights, kept, scheme, z, data.arms)


def generalized_overlap_weights(fit: PropensityFit, data: Dataset) -> WeightVector:
    """Overlap weights for K >= 2 arms.

    Each unit's inverse-probability weight is scaled by the harmonic mean
    of its generalized propensity scores:

        w_i = (1 / e_{i, z_i}) / sum_k (1 / e_{ik})

    For K = 2 this reduces algebraically to e(1-e)/e_z, i.e. binary
    overlap weighting.
    """
    _check_dimensions(fit, data)
    inv = 1.0 / fit.scores
    own = fit.scores[np.arange(data.n), data.treatment]
    weights = (1.0 / own) / inv.sum(axis=1)
    kept = np.ones(data.n, dtype=bool)
    scheme = WeightScheme(Kind.GENERALIZED_OVERLAP)
    return _finalize(weights, kept, scheme, data.treatment, data.arms)


def trim(fit: PropensityFit, data: Dataset, alpha: float) -> WeightVector:
    """Symmetric trimming: drop units with e outside [alpha, 1 - alpha],
    then weight the survivors by IPTW computed from the original fit.

    No refitting happens here; trimming is the ad-hoc comparator that
    overlap weighting replaces, and refitting would mix the estimand shift
    with a model change.
    """
    _check_dimensions(fit, data)
    if data.arms != 2:
        raise DomainError("trimming requires binary treatment")
    if not (0.0 < alpha < 0.5):
        raise DomainError("trimming threshold alpha must lie in (0, 0.5)")
    e = fit.scores[:, 1]
    kept = (e >= alpha) & (e <= 1.0 - alpha)
    treated = data.treatment == 1
    weights = np.where(treated, 1.0 / e, 1.0 / (1.0 - e))
    weights = np.where(kept, weights, 0.0)
    scheme = WeightScheme(Kind.TRIMMED, alpha)
    for arm in range(2):
        if not np.any(kept & (data.treatment == arm)):
            raise DomainError(f"trimming at alpha={alpha:g} removed every unit in arm {arm}")
    return _finalize(weights, kept, scheme, data.treatment, data.arms)


def kish_ess(weights) -> float:
    """Kish effective sample size (sum w)^2 / sum w^2 of a weight vector."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or not np.any(w > 0.0):
        raise DomainError("effective sample size needs at least one positive weight")
    return _kish_ess(w)


def effective_sample_size(w: WeightVector, arm: int) -> float:
    """Effective sample size of one arm under a weight vector."""
    if not 0 <= arm < w.ess_per_arm.size:
        raise DomainError(f"arm {arm} does not exist")
    return float(w.ess_per_arm[arm])
