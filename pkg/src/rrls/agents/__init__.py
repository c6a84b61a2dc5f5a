from rrls.agents.cem import GenerationRecord, OutOfBudget, StepBudget, TrainLog, cem_optimize
from rrls.agents.policy import ConstantPolicy, JointPolicy, MLPPolicy, TabularPolicy, policy_from_dict
from rrls.agents.trainers import (
    TrainConfig,
    TrainResult,
    reference_adversary,
    rollout,
    rollout_vs_adversary,
    tabular_robust_agent,
    train_action_robust,
    train_adversarial,
    train_dr,
    train_nominal,
    train_worstcase,
)

__all__ = [
    "ConstantPolicy",
    "GenerationRecord",
    "JointPolicy",
    "MLPPolicy",
    "OutOfBudget",
    "StepBudget",
    "TabularPolicy",
    "TrainConfig",
    "TrainLog",
    "TrainResult",
    "cem_optimize",
    "policy_from_dict",
    "reference_adversary",
    "rollout",
    "rollout_vs_adversary",
    "tabular_robust_agent",
    "train_action_robust",
    "train_adversarial",
    "train_dr",
    "train_nominal",
    "train_worstcase",
]
