"""Shapley-value feature attribution.

Builds coalitional games from predictive models under several
feature-removal strategies, computes attributions with exact oracles and
model-specific algorithms, provides the family of unbiased stochastic
estimators, and benchmarks their convergence.
"""

from .coalitions import MAX_PLAYERS, Coalition
from .errors import BudgetError, ConfigError, DataError, NumericalError, ShaplabError
from .games import (
    AttributionVector,
    AxiomReport,
    CoalitionalGame,
    SetFunctionGame,
    additive_efficient_normalization,
    brute_force_shapley,
    check_axioms,
    kernel_weight,
    shapley_weight,
    value_table,
)
from .models import (
    GaussianDistribution,
    LinearModel,
    TrainConfig,
    Tree,
    TreeEnsemble,
    sample_gaussian,
    train_boosted_trees,
)
from .removal import (
    baseline_game,
    compose,
    conditional_gaussian_game,
    empirical_conditional_game,
    marginal_game,
    product_marginals_game,
    uniform_game,
)
from .exact import (
    CorrelatedLinearCoefficients,
    correlated_linear_shap,
    interventional_tree_shap,
    linear_shap,
    path_dependent_game,
    path_dependent_tree_shap,
)
from .estimators import (
    Budget,
    EstimateTrace,
    TraceSnapshot,
    WlsSystem,
    appro_shapley,
    detect_convergence,
    ime,
    kernel_shap,
    kernel_shap_exact,
    multilinear,
    sample_semivalue,
    sgd_shapley,
)
from .bench import ExperimentConfig, dummy_feature_stress, load_dataset, run_experiment
from .plots import emit_plots

__version__ = "0.1.0"

__all__ = [
    "MAX_PLAYERS",
    "Coalition",
    "ShaplabError",
    "BudgetError",
    "ConfigError",
    "DataError",
    "NumericalError",
    "AttributionVector",
    "AxiomReport",
    "CoalitionalGame",
    "SetFunctionGame",
    "additive_efficient_normalization",
    "brute_force_shapley",
    "check_axioms",
    "kernel_weight",
    "shapley_weight",
    "value_table",
    "GaussianDistribution",
    "LinearModel",
    "TrainConfig",
    "Tree",
    "TreeEnsemble",
    "sample_gaussian",
    "train_boosted_trees",
    "baseline_game",
    "compose",
    "conditional_gaussian_game",
    "empirical_conditional_game",
    "marginal_game",
    "product_marginals_game",
    "uniform_game",
    "CorrelatedLinearCoefficients",
    "correlated_linear_shap",
    "interventional_tree_shap",
    "linear_shap",
    "path_dependent_game",
    "path_dependent_tree_shap",
    "Budget",
    "EstimateTrace",
    "TraceSnapshot",
    "WlsSystem",
    "appro_shapley",
    "detect_convergence",
    "ime",
    "kernel_shap",
    "kernel_shap_exact",
    "multilinear",
    "sample_semivalue",
    "sgd_shapley",
    "ExperimentConfig",
    "dummy_feature_stress",
    "load_dataset",
    "run_experiment",
    "emit_plots",
]
