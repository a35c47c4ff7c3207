"""CATE estimation under hidden confounding, regularized by outcome-only RCT
samples through adversarial marginal and projection balancing."""

from .balancing import AlphaSchedule, LossBreakdown, alpha_at
from .datagen import (
    CaseStudyDgp,
    MsmDgp,
    RctOutcomes,
    TabularDataset,
    complete_propensity,
    gen_case_study,
    gen_msm,
    gen_rct_outcomes,
    inject_confounding,
    load_csv,
    nominal_propensity,
    split_rct_by_covariate,
    standardize,
)
from .evaluation import (
    MetricsRecord,
    exact_pb_bound_check,
    factual_error,
    ideal_pb_oracle,
    mb_counterexample_check,
    sqrt_pehe,
)
from .trainer import (
    TrainConfig,
    TrainedModel,
    load_model,
    predict_cate,
    predict_potential_outcomes,
    save_model,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AlphaSchedule",
    "CaseStudyDgp",
    "LossBreakdown",
    "MetricsRecord",
    "MsmDgp",
    "RctOutcomes",
    "TabularDataset",
    "TrainConfig",
    "TrainedModel",
    "alpha_at",
    "complete_propensity",
    "exact_pb_bound_check",
    "factual_error",
    "gen_case_study",
    "gen_msm",
    "gen_rct_outcomes",
    "ideal_pb_oracle",
    "inject_confounding",
    "load_csv",
    "load_model",
    "mb_counterexample_check",
    "nominal_propensity",
    "predict_cate",
    "predict_potential_outcomes",
    "save_model",
    "split_rct_by_covariate",
    "sqrt_pehe",
    "standardize",
    "train",
]
