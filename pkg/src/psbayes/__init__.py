"""Bayesian principal-stratum risk-ratio analysis for randomized trials.

Estimates the causal risk ratio of a binary outcome within the latent
subgroup of subjects who would avoid a binary intercurrent event under
either arm, combining a Bernoulli-mixture posterior (gradient-based MCMC),
nonparametric identification bounds, monotonicity sensitivity analysis,
covariate standardization, and a ground-truth simulator for validation.
"""

from ._version import SCHEMA_VERSION, __version__
from .data_io import (
    CsvSchema,
    DataError,
    SubjectRecord,
    aggregate,
    emit_results,
    parse_dataset,
    render_summary,
    summarize,
    write_dataset,
)
from .diagnostics import ess, split_rhat
from .estimands import (
    BoundsResult,
    CovariateDistribution,
    EstimandError,
    EstimandSummary,
    MarginalDraws,
    QuantileSummary,
    marginalize,
    numerator_bounds,
    risk_ratio_summary,
    strata_proportions_identified,
)
from .model import (
    CellCounts,
    CellParams,
    MonotonicityMode,
    PriorConfig,
    PrincipalStratum,
    cell_mixture,
    expit,
    log_likelihood,
    log_posterior_and_gradient,
    log_prior,
    logit,
    softmax_strata,
)
from .pipeline import RunSettings, load_config, resolve_settings, run_bounds, run_fit
from .sampler import (
    PosteriorDraws,
    SamplerConfig,
    SamplingError,
    run_chains,
    rwm_reference,
)
from .sbc import SbcConfig, SbcResult, run_sbc
from .simulate import (
    EXAMPLE_TRIAL_T12,
    CellTruth,
    GroundTruth,
    complete_counts_from_summary,
    example_trial_records,
    example_trial_truth,
    gen_dataset,
    single_cell_truth,
)

__all__ = [
    "SCHEMA_VERSION",
    "__version__",
    "CsvSchema",
    "DataError",
    "SubjectRecord",
    "aggregate",
    "emit_results",
    "parse_dataset",
    "render_summary",
    "summarize",
    "write_dataset",
    "ess",
    "split_rhat",
    "BoundsResult",
    "CovariateDistribution",
    "EstimandError",
    "EstimandSummary",
    "MarginalDraws",
    "QuantileSummary",
    "marginalize",
    "numerator_bounds",
    "risk_ratio_summary",
    "strata_proportions_identified",
    "CellCounts",
    "CellParams",
    "MonotonicityMode",
    "PriorConfig",
    "PrincipalStratum",
    "cell_mixture",
    "expit",
    "log_likelihood",
    "log_posterior_and_gradient",
    "log_prior",
    "logit",
    "softmax_strata",
    "RunSettings",
    "load_config",
    "resolve_settings",
    "run_bounds",
    "run_fit",
    "PosteriorDraws",
    "SamplerConfig",
    "SamplingError",
    "run_chains",
    "rwm_reference",
    "SbcConfig",
    "SbcResult",
    "run_sbc",
    "EXAMPLE_TRIAL_T12",
    "CellTruth",
    "GroundTruth",
    "complete_counts_from_summary",
    "example_trial_records",
    "example_trial_truth",
    "gen_dataset",
    "single_cell_truth",
]
