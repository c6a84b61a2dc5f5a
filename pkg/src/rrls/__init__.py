"""Robust reinforcement learning suite: tabular robust solvers, parametric
environments with modifiable dynamics, baseline trainers and a worst-case
evaluation harness."""

from rrls.exceptions import BudgetExhaustedError, ConfigError, ContractError
from rrls.mdp import (
    FiniteMDP,
    bellman_backup,
    monte_carlo_return,
    policy_evaluation,
    q_from_v,
    value_iteration,
)
from rrls.robust import (
    KernelSet,
    dynamic_adversary_vi,
    game_operator_backup,
    pessimistic_policy_value,
    robust_bellman_backup,
    robust_value_iteration,
    static_dynamic_gap,
)
from rrls.spaces import ParamSpace, denormalize_params, normalize_params

__version__ = "0.1.0"

__all__ = [
    "BudgetExhaustedError",
    "ConfigError",
    "ContractError",
    "FiniteMDP",
    "KernelSet",
    "ParamSpace",
    "bellman_backup",
    "denormalize_params",
    "dynamic_adversary_vi",
    "game_operator_backup",
    "monte_carlo_return",
    "normalize_params",
    "pessimistic_policy_value",
    "policy_evaluation",
    "q_from_v",
    "robust_bellman_backup",
    "robust_value_iteration",
    "static_dynamic_gap",
    "value_iteration",
]
