"""Gaussian Bayesian networks from related data sets.

Learns one network over grouped continuous data under three pooling
strategies: a single pooled model that ignores the grouping, an
independent model per group, and a partial-pooling model whose local
distributions are linear mixed-effects regressions. Includes BIC
hill-climbing structure search, exact and importance-sampling inference,
accuracy metrics against a known generating model, and a simulation
harness with a command-line front end.
"""

from .errors import ConfigError, DataError, LmebnError, NumericError
from .graph import ArcConstraints, Cpdag, Dag, Move, MoveRejected, apply_move, is_acyclic, to_cpdag, topological_order
from .infer import Evidence, classify_group, exact_conditional_mean, likelihood_weighting, predict_all
from .lme import LmeConfig, LmeFit, LmeProblem, fit_lme, lme_group_predict, profiled_deviance
from .metrics import gaussian_kl, macro_f1, model_kl, rmad, samples_per_parameter, shd
from .model import (
    BnModel,
    GroupedDataset,
    GroupJoint,
    MixedLocal,
    PerGroupLocal,
    PooledLocal,
    compile_joint,
    empirical_prior,
    fit_parameters,
    log_density,
    nparams,
    sample_model,
    with_group_prior,
)
from .score import NodeScore, ScoreCache, bic_node, bic_total
from .search import HillClimbResult, SearchConfig, hill_climb
from .simgen import (
    TrueBn,
    generate_dataset,
    group_sizes,
    make_homogeneous,
    random_connected_dag,
    sample_true_bn,
    with_group_node,
)

__version__ = "0.1.0"

__all__ = [
    "ArcConstraints", "BnModel", "ConfigError", "Cpdag", "Dag", "DataError",
    "Evidence", "GroupJoint", "GroupedDataset", "HillClimbResult", "LmeConfig",
    "LmeFit", "LmeProblem", "LmebnError", "MixedLocal", "Move", "MoveRejected",
    "NodeScore", "NumericError", "PerGroupLocal", "PooledLocal", "ScoreCache",
    "SearchConfig", "TrueBn", "apply_move", "bic_node", "bic_total",
    "classify_group", "compile_joint", "empirical_prior",
    "exact_conditional_mean", "fit_lme", "fit_parameters", "gaussian_kl",
    "generate_dataset", "group_sizes", "hill_climb", "is_acyclic",
    "likelihood_weighting", "lme_group_predict", "log_density", "macro_f1",
    "make_homogeneous", "model_kl", "nparams", "predict_all",
    "profiled_deviance", "random_connected_dag", "rmad", "sample_model",
    "sample_true_bn", "samples_per_parameter", "shd", "to_cpdag",
    "topological_order", "with_group_node", "with_group_prior",
]
