"""Recursive-reasoning Bayesian optimization for repeated games."""

from .acquisition import BetaSchedule, beta, c1_constant, ucb, ucb_slice, ucb_table
from .errors import BudgetError, ConfigurationError, InputError, NumericalError
from .game import (
    Arena,
    GameTrace,
    PayoffTable,
    build_game,
    external_regret,
    mean_regret,
    replay_audit,
    run_repeated_game,
)
from .gp import (
    ActionSpace,
    GPPosterior,
    KernelSpec,
    condition,
    kernel_eval,
    posterior_predict,
    sample_prior,
)
from .level0 import (
    Exp3State,
    GpMwState,
    Level0Config,
    MixedStrategy,
    RandomFeatureMap,
    build_feature_map,
    covariance_trace,
    exp3_step,
    gpmw_update,
    sample_action,
    uniform_strategy,
)
from .reasoning import (
    AgentSpec,
    ReasoningTrace,
    level1_select,
    levelk_select,
    multiagent_level1_select,
    multiagent_level2_select,
    r2b2_lite_select,
)

__all__ = [
    "ActionSpace",
    "AgentSpec",
    "Arena",
    "beta",
    "BetaSchedule",
    "BudgetError",
    "build_feature_map",
    "build_game",
    "c1_constant",
    "condition",
    "ConfigurationError",
    "covariance_trace",
    "exp3_step",
    "Exp3State",
    "external_regret",
    "GameTrace",
    "gpmw_update",
    "GpMwState",
    "GPPosterior",
    "InputError",
    "kernel_eval",
    "KernelSpec",
    "Level0Config",
    "level1_select",
    "levelk_select",
    "mean_regret",
    "MixedStrategy",
    "multiagent_level1_select",
    "multiagent_level2_select",
    "NumericalError",
    "PayoffTable",
    "posterior_predict",
    "r2b2_lite_select",
    "RandomFeatureMap",
    "ReasoningTrace",
    "replay_audit",
    "run_repeated_game",
    "sample_action",
    "sample_prior",
    "ucb",
    "ucb_slice",
    "ucb_table",
    "uniform_strategy",
]

__version__ = "0.1.0"
