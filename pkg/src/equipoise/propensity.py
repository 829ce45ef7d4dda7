"""Propensity model fitting: binary and baseline-category multinomial logit.

Both fitters run damped Newton-Raphson (step-halving line search, gradient
fallback when the Hessian is numerically singular) on an internally
standardized design, then report coefficients on the original covariate
scale.  Convergence: gradient max-norm <= 1e-9, or relative log-likelihood
change <= 1e-12, within 100 iterations.  Separation is declared when the
linear predictor exceeds 30 in magnitude while the gradient is still large;
past that point fitted probabilities are within ~1e-13 of 0/1 and inverse
weights degenerate.

An optional ridge penalty (default 0, never applied to intercepts) is
available purely as a separation workaround and is echoed in the fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DomainError, NonConvergenceError, SeparationError, SingularDesignError

GRADIENT_TOL = 1e-9
LL_REL_TOL = 1e-12
MAX_ITER = 100
SEPARATION_BOUND = 30.0

_BINARY = "binary-logistic"
_MULTINOMIAL = "multinomial-logistic"
_ORACLE = "oracle"


@dataclass(frozen=True)
class PropensityFit:
    """A fitted treatment-assignment model.

    ``scores[i, k]`` estimates P(Z_i = k | X_i); rows sum to one and every
    entry is strictly inside (0, 1).  ``coefficients`` holds one
    (p+1)-vector per non-reference arm, intercept first, on the original
    covariate scale; it is None for oracle fits built from known scores.
    """

    kind: str
    coefficients: np.ndarray | None
    scores: np.ndarray
    converged: bool
    iterations: int
    final_gradient_norm: float
    ridge: float = 0.0

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        if scores.ndim != 2 or scores.shape[1] < 2:
            raise DomainError("scores must be an n x K matrix with K >= 2")
        if not np.all((scores > 0.0) & (scores < 1.0)):
            raise DomainError("scores must lie strictly inside (0, 1)")
        if np.max(np.abs(scores.sum(axis=1) - 1.0)) > 1e-12:
            raise DomainError("score rows must sum to 1 within 1e-12")
        scores = scores.copy()
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        if self.coefficients is not None:
            coef = np.asarray(self.coefficients, dtype=float).copy()
            coef.setflags(write=False)
            object.__setattr__(self, "coefficients", coef)

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    @property
    def arms(self) -> int:
        return self.scores.shape[1]


def oracle_fit(scores: np.ndarray) -> PropensityFit:
    """Wrap known assignment probabilities (e.g. a simulation's true scores)
    in the fit interface so weight construction can consume them."""
    scores = np.asarray(scores, dtype=float)
    if scores.ndim == 1:
        scores = np.column_stack([1.0 - scores, scores])
    return PropensityFit(
        kind=_ORACLE,
        coefficients=None,
        scores=scores,
        converged=True,
        iterations=0,
        final_gradient_norm=0.0,
    )


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * eta))


def _clip_unit_open(prob: np.ndarray) -> np.ndarray:
    # Pure floating-point guard: keeps probabilities strictly inside (0, 1)
    # when the linear predictor is large enough that 1-e rounds to 1.
    return np.clip(prob, 1e-300, np.nextafter(1.0, 0.0))


def _standardized_design(X: np.ndarray, names=None):
    """Return ([1, (X - m)/s], m, s); a constant column is a rank failure."""
    n, p = X.shape
    if p == 0:
        return np.ones((n, 1)), np.empty(0), np.empty(0)
    means = X.mean(axis=0)
    sds = X.std(axis=0)
    dead = np.nonzero(sds == 0.0)[0]
    if dead.size:
        label = names[dead[0]] if names is not None else f"column {int(dead[0])}"
        raise SingularDesignError(f"covariate {label!r} is constant; design is rank deficient")
    design = np.column_stack([np.ones(n), (X - means) / sds])
    if np.linalg.matrix_rank(design) < p + 1:
        raise SingularDesignError("design matrix [1, X] is rank deficient")
    return design, means, sds


def _unstandardize(coef_std: np.ndarray, means: np.ndarray, sds: np.ndarray) -> np.ndarray:
    coef = coef_std.copy()
    if means.size:
        coef[..., 1:] = coef_std[..., 1:] / sds
        coef[..., 0] = coef_std[..., 0] - (coef_std[..., 1:] * (means / sds)).sum(axis=-1)
    return coef


def _fit_logistic_core(X: np.ndarray, y: np.ndarray, ridge: float, names=None):
    """Newton-Raphson Bernoulli MLE on [1, X]; y must be 0/1.

    Returns (coefficients on the original scale, fitted probabilities,
    info dict with converged/iterations/gradient_norm/ll_path).
    """
    design, means, sds = _standardized_design(X, names)
    n, q = design.shape
    y = np.asarray(y, dtype=float)
    beta = np.zeros(q)

    def penalized_ll(b):
        eta = design @ b
        ll = float(np.sum(y * eta) - np.sum(np.logaddexp(0.0, eta)))
        if ridge:
            ll -= 0.5 * ridge * float(b[1:] @ b[1:])
        return ll

    ll_path = [penalized_ll(beta)]
    converged = False
    iterations = 0
    grad_norm = np.inf
    stalled = 0

    for _ in range(MAX_ITER):
        eta = design @ beta
        e = _sigmoid(eta)
        grad = design.T @ (y - e)
        if ridge:
            grad[1:] -= ridge * beta[1:]
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= GRADIENT_TOL:
            converged = True
            break
        if np.max(np.abs(eta)) > SEPARATION_BOUND:
            raise SeparationError(
                "separation detected: |linear predictor| exceeds "
                f"{SEPARATION_BOUND:g} while the gradient norm is {grad_norm:.3e}"
            )
        w = e * (1.0 - e)
        hess = design.T @ (design * w[:, None])
        if ridge:
            hess[1:, 1:] += ridge * np.eye(q - 1)
        try:
            direction = np.linalg.solve(hess, grad)
            if not np.all(np.isfinite(direction)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            direction = grad  # Hessian unusable; fall back to steepest ascent

        # Step-halving keeps the (penalized) log-likelihood non-decreasing.
        ll_old = ll_path[-1]
        slack = 1e-13 * (1.0 + abs(ll_old))  # float resolution of the LL sum
        step = 1.0
        accepted = False
        for _half in range(50):
            candidate = beta + step * direction
            ll_new = penalized_ll(candidate)
            if np.isfinite(ll_new) and ll_new >= ll_old - slack:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            raise NonConvergenceError(
                "line search stalled before reaching the gradient tolerance",
                last_coefficients=_unstandardize(beta, means, sds),
            )
        beta = candidate
        iterations += 1
        ll_path.append(ll_new)
        # Flat likelihood: let Newton polish the gradient for a few more
        # iterations before accepting the stall as convergence.
        if abs(ll_new - ll_old) <= LL_REL_TOL * (1.0 + abs(ll_old)):
            stalled += 1
            if stalled >= 3:
                eta = design @ beta
                grad = design.T @ (y - _sigmoid(eta))
                if ridge:
                    grad[1:] -= ridge * beta[1:]
                grad_norm = float(np.max(np.abs(grad)))
                converged = True
                break
        else:
            stalled = 0

    if not converged:
        raise NonConvergenceError(
            f"no convergence in {MAX_ITER} iterations (gradient norm {grad_norm:.3e})",
            last_coefficients=_unstandardize(beta, means, sds),
        )

    e = _clip_unit_open(_sigmoid(design @ beta))
    info = {
        "converged": converged,
        "iterations": iterations,
        "gradient_norm": grad_norm,
        "ll_path": tuple(ll_path),
    }
    return _unstandardize(beta, means, sds), e, info


def fit_binary_logistic(data: Dataset, ridge: float = 0.0) -> PropensityFit:
    """Maximum-likelihood logistic propensity model for a two-arm sample.

    At convergence the score equations sum((Z - e) * [1, X]) = 0 hold
    componentwise within the gradient tolerance; this is the identity that
    later gives overlap weights their exact mean balance.
    """
    if data.arms != 2:
        raise DomainError(f"binary logistic fit needs K = 2 arms, got K = {data.arms}")
    if ridge < 0:
        raise DomainError("ridge must be >= 0")
    y = (data.treatment == 1).astype(float)
    coef, e, info = _fit_logistic_core(data.covariates, y, ridge, data.covariate_names)
    scores = np.column_stack([_clip_unit_open(1.0 - e), e])
    return PropensityFit(
        kind=_BINARY,
        coefficients=coef[None, :],
        scores=scores,
        converged=info["converged"],
        iterations=info["iterations"],
        final_gradient_norm=info["gradient_norm"],
        ridge=ridge,
    )


def _fit_multinomial_core(X: np.ndarray, z: np.ndarray, arms: int, ridge: float, names=None):
    design, means, sds = _standardized_design(X, names)
    n, q = design.shape
    m = arms - 1  # coefficient blocks, arm 0 is the reference
    onehot = np.zeros((n, arms))
    onehot[np.arange(n), z] = 1.0
    coef = np.zeros((m, q))

    def score_matrix(b):
        logits = np.column_stack([np.zeros(n), design @ b.T])
        logits -= logits.max(axis=1, keepdims=True)
        expo = np.exp(logits)
        return expo / expo.sum(axis=1, keepdims=True)

    def penalized_ll(b):
        logits = np.column_stack([np.zeros(n), design @ b.T])
        shift = logits.max(axis=1)
        lse = shift + np.log(np.exp(logits - shift[:, None]).sum(axis=1))
        ll = float(np.sum(logits[np.arange(n), z]) - np.sum(lse))
        if ridge:
            ll -= 0.5 * ridge * float((b[:, 1:] ** 2).sum())
        return ll

    ll_path = [penalized_ll(coef)]
    converged = False
    iterations = 0
    grad_norm = np.inf
    stalled = 0

    for _ in range(MAX_ITER):
        probs = score_matrix(coef)
        resid = onehot[:, 1:] - probs[:, 1:]
        grad = (design.T @ resid).T  # (m, q), one score vector per arm
        if ridge:
            grad[:, 1:] -= ridge * coef[:, 1:]
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= GRADIENT_TOL:
            converged = True
            break
        eta_max = float(np.max(np.abs(design @ coef.T))) if m else 0.0
        if eta_max > SEPARATION_BOUND:
            raise SeparationError(
                "separation detected: |linear predictor| exceeds "
                f"{SEPARATION_BOUND:g} while the gradient norm is {grad_norm:.3e}"
            )
        # Fisher information in block form: I[k,l] = D' diag(e_k (1{k=l} - e_l)) D.
        info_matrix = np.empty((m * q, m * q))
        for k in range(m):
            ek = probs[:, k + 1]
            for l in range(k, m):
                el = probs[:, l + 1]
                w = ek * ((1.0 if k == l else 0.0) - el)
                block = design.T @ (design * w[:, None])
                info_matrix[k * q:(k + 1) * q, l * q:(l + 1) * q] = block
                info_matrix[l * q:(l + 1) * q, k * q:(k + 1) * q] = block.T
        if ridge:
            for k in range(m):
                for j in range(1, q):
                    info_matrix[k * q + j, k * q + j] += ridge
        try:
            direction = np.linalg.solve(info_matrix, grad.ravel()).reshape(m, q)
            if not np.all(np.isfinite(direction)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            direction = grad

        ll_old = ll_path[-1]
        slack = 1e-13 * (1.0 + abs(ll_old))
        step = 1.0
        accepted = False
        for _half in range(50):
            candidate = coef + step * direction
            ll_new = penalized_ll(candidate)
            if np.isfinite(ll_new) and ll_new >= ll_old - slack:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            raise NonConvergenceError(
                "line search stalled before reaching the gradient tolerance",
                last_coefficients=_unstandardize(coef, means, sds),
            )
        coef = candidate
        iterations += 1
        ll_path.append(ll_new)
        if abs(ll_new - ll_old) <= LL_REL_TOL * (1.0 + abs(ll_old)):
            stalled += 1
            if stalled >= 3:
                probs = score_matrix(coef)
                resid = onehot[:, 1:] - probs[:, 1:]
                grad = (design.T @ resid).T
                if ridge:
                    grad[:, 1:] -= ridge * coef[:, 1:]
                grad_norm = float(np.max(np.abs(grad)))
                converged = True
                break
        else:
            stalled = 0

    if not converged:
        raise NonConvergenceError(
            f"no convergence in {MAX_ITER} iterations (gradient norm {grad_norm:.3e})",
            last_coefficients=_unstandardize(coef, means, sds),
        )

    probs = _clip_unit_open(score_matrix(coef))
    info = {
        "converged": converged,
        "iterations": iterations,
        "gradient_norm": grad_norm,
        "ll_path": tuple(ll_path),
    }
    return _unstandardize(coef, means, sds), probs, info


def fit_multinomial_logistic(data: Dataset, ridge: float = 0.0) -> PropensityFit:
    """Baseline-category logit MLE with arm 0 as the reference.

    For K = 2 the fitted scores agree with :func:`fit_binary_logistic`
    to within 1e-8 (both solve the same score equations to 1e-9).
    """
    if ridge < 0:
        raise DomainError("ridge must be >= 0")
    coef, scores, info = _fit_multinomial_core(
        data.covariates, data.treatment, data.arms, ridge, data.covariate_names
    )
    return PropensityFit(
        kind=_MULTINOMIAL,
        coefficients=coef,
        scores=scores,
        converged=info["converged"],
        iterations=info["iterations"],
        final_gradient_norm=info["gradient_norm"],
        ridge=ridge,
    )
