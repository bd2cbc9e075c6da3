"""Active learning that warms up from logged observational data.

The package covers the full pipeline: sparse datasets and logging policies,
unbiased error estimators that combine logged and actively collected samples,
the disagreement-based learners (passive, active with one- and two-sample
weighting, and the debiasing variant that skips over-covered regions), exact
small-hypothesis-class and linear large-scale modes, a brute-force oracle for
verification, and a paired benchmark harness with CSV reports.
"""
from __future__ import annotations

from .data import (
    DataSplit,
    Example,
    FeatureVector,
    LabelSource,
    LoggedTriple,
    ParseError,
    SyntheticSpec,
    apply_logging,
    format_sparse_dataset,
    generate_synthetic,
    parse_sparse_dataset,
    split_dataset,
    to_dense_matrix,
)
from .estimators import (
    BoundConfig,
    WeightedSample,
    delta_bound,
    empirical_disagreement,
    is_error,
    mis_error,
    sigma,
)
from .harness import (
    DEFAULT_CAPACITY_GRID,
    DEFAULT_ETA_GRID,
    CurvePoint,
    DatasetSpec,
    ExperimentConfig,
    PolicySpec,
    ProtocolResult,
    RunRecord,
    auc,
    aggregate_curves,
    best_auc,
    report,
    run_protocol,
)
from .hypotheses import (
    CandidateSetExact,
    FiniteClass,
    LinearModel,
    classification_error,
    erm_weighted,
    ogd_stepsize,
    ogd_update,
    update_candidates,
)
from .learners import (
    ALGORITHMS,
    AlgoConfig,
    PartitionPlan,
    RunResult,
    TracePoint,
    debias_rule,
    plan_partition,
    run_dbalw,
    run_dbalwm,
    run_idbal,
    run_passive,
)
from .oracle import (
    DiscreteInstance,
    adjusted_dis_coefficient,
    concentration_rate,
    mc_unbiasedness,
    random_instance,
    run_verification_suite,
    theory_sequences,
    variance_compare,
)
from .policies import (
    CertaintyPolicy,
    IdenticalPolicy,
    LoggingPolicy,
    TablePolicy,
    UncertaintyPolicy,
    UniformGroupsPolicy,
    calibrate_scale,
    fit_coarse_model,
    policy_infimum,
    policy_prob,
)
from .rng import child_seed, derive_rng

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "AlgoConfig",
    "BoundConfig",
    "CandidateSetExact",
    "CertaintyPolicy",
    "CurvePoint",
    "DEFAULT_CAPACITY_GRID",
    "DEFAULT_ETA_GRID",
    "DataSplit",
    "DatasetSpec",
    "DiscreteInstance",
    "Example",
    "ExperimentConfig",
    "FeatureVector",
    "FiniteClass",
    "IdenticalPolicy",
    "LabelSource",
    "LinearModel",
    "LoggedTriple",
    "LoggingPolicy",
    "ParseError",
    "PartitionPlan",
    "PolicySpec",
    "ProtocolResult",
    "RunRecord",
    "RunResult",
    "SyntheticSpec",
    "TablePolicy",
    "TracePoint",
    "UncertaintyPolicy",
    "UniformGroupsPolicy",
    "WeightedSample",
    "adjusted_dis_coefficient",
    "aggregate_curves",
    "apply_logging",
    "auc",
    "best_auc",
    "calibrate_scale",
    "child_seed",
    "classification_error",
    "concentration_rate",
    "debias_rule",
    "delta_bound",
    "derive_rng",
    "empirical_disagreement",
    "erm_weighted",
    "fit_coarse_model",
    "format_sparse_dataset",
    "generate_synthetic",
    "is_error",
    "mc_unbiasedness",
    "mis_error",
    "ogd_stepsize",
    "ogd_update",
    "parse_sparse_dataset",
    "plan_partition",
    "policy_infimum",
    "policy_prob",
    "random_instance",
    "report",
    "run_dbalw",
    "run_dbalwm",
    "run_idbal",
    "run_passive",
    "run_protocol",
    "run_verification_suite",
    "sigma",
    "split_dataset",
    "theory_sequences",
    "to_dense_matrix",
    "update_candidates",
]
