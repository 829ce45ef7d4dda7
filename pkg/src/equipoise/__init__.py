"""Balancing-weight causal inference for observational treatment comparisons.

The package covers the full weighting workflow: ingest a delimited study
file, fit a (multinomial) logistic propensity model, construct balancing
weights (inverse-probability, treated-population, overlap, matching,
entropy, trimmed, stabilized, and the multi-arm generalized overlap
scheme), estimate weighted treatment effects with sandwich or bootstrap
inference, report covariate balance, and stress-test everything with a
seeded Monte Carlo harness.
"""

__version__ = "0.1.0"

from .balance import (
    BalanceReport,
    assert_exact_balance,
    balance_report,
    baseline_table,
    score_histogram,
    smd,
)
from .data import Dataset, IngestSchema, ingest, load_schema, write_csv
from .errors import (
    BalanceError,
    DomainError,
    EquipoiseError,
    FitError,
    HarnessError,
    InferenceError,
    IngestionError,
    NonConvergenceError,
    SchemaError,
    SeparationError,
    SingularDesignError,
)
from .estimators import (
    EffectEstimate,
    EstimationRecipe,
    OutcomeModelFit,
    augmented_estimate,
    fit_outcome_regression,
    hajek_estimate,
    ps_adjusted_regression,
)
from .inference import (
    VarianceResult,
    bootstrap_variance,
    confidence_interval,
    normal_quantile,
    sandwich_variance,
    weight_beta_jacobian,
)
from .propensity import PropensityFit, fit_binary_logistic, fit_multinomial_logistic, oracle_fit
from .simulation import (
    DgpConfig,
    SimulationResult,
    TargetValue,
    generate,
    replicate_seed,
    run_monte_carlo,
    true_estimands,
    true_scores,
    true_target,
    true_target_mc,
)
from .weights import (
    Kind,
    WeightScheme,
    WeightVector,
    compute_weights,
    effective_sample_size,
    generalized_overlap_weights,
    kish_ess,
    tilting_value,
    trim,
)

__all__ = [name for name in dir() if not name.startswith("_")]
