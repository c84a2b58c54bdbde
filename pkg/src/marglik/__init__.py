"""Exact marginal-likelihood inference for two-way tables observed through their margins."""

from .core_tables import (
    FreqTable,
    InvalidMarginsError,
    MarginPair,
    TableCollection,
    TableLimitError,
    enumerate_tables,
    fold_tables,
    log_factorial_sum,
    parse_margins,
)
from .estimators import (
    FisherOptions,
    FitResult,
    GoodmanResult,
    IdentificationError,
    RankDeficientError,
    fisher_scoring,
    goodman,
    independence_fit,
    ipf_adjust,
    metric_m,
    metric_me,
)
from .extreme_tables import (
    ExtremeTable,
    PermutationPair,
    XiLogOdds,
    build_extreme,
    enumerate_extremes,
    epsilon_complete,
    monotone_order_check,
)
from .likelihood import (
    EIDataset,
    ExpectedTable,
    ParamVector,
    ScoreSet,
    cond_expectations,
    dataset_loglik,
    dataset_score,
    empirical_information,
    inverse_link,
    link,
    marginal_loglik,
    unit_score,
    v_stat,
)

__version__ = "0.1.0"
