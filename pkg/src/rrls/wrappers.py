"""Wrappers turning a parametric environment into a robust RL problem."""

from __future__ import annotations

from typing import Callable

import numpy as np

from rrls.env import ModifiedParamsEnv, StepResult, Wrapper, restrict
from rrls.exceptions import ContractError
from rrls.spaces import ParamSpace

Sampler = Callable[[np.random.Generator], np.ndarray]


class DomainRandomization(Wrapper):
    """Draws a fresh parameter vector from ``space`` at every reset.

    Without a ``sampler`` each dimension is drawn independently and uniformly.
    Parameters stay fixed for the whole episode.
    """

    def __init__(self, env: ModifiedParamsEnv, space: ParamSpace,
                 sampler: Sampler | None = None, seed: int | None = None):
        super().__init__(restrict(env, space))
        self.space = space
        self.sampler = sampler
        self.rng = np.random.default_rng(seed)

    def sample_params(self) -> np.ndarray:
        if self.sampler is None:
            return self.rng.uniform(self.space.low, self.space.high)
        return self.space.check(self.sampler(self.rng))

    def reset(self, seed: int | None = None) -> np.ndarray:
        self.env.set_params(self.sample_params())
        return self.env.reset(seed=seed)


class Adversarial(Wrapper):
    """Zero-sum game view: the action is ``(agent action, adversary action)``.

    The adversary part lives in ``[-1, 1]^d`` and is mapped affinely onto
    ``space`` (-1 to low, +1 to high), then written with ``set_params`` before
    every inner step. Agent and adversary act simultaneously. The adversary's
    reward, ``-r``, is reported in ``info["adversary_reward"]``.
    """

    def __init__(self, env: ModifiedParamsEnv, space: ParamSpace):
        if env.discrete:
            raise ContractError("adversarial wrapper needs a continuous-action environment")
        super().__init__(restrict(env, space))
        self.space = space
        self.agent_dim = env.action_dim
        self.adversary_dim = space.dim
        self.action_dim = env.action_dim + space.dim
        self.action_low = np.concatenate([env.action_low, -np.ones(space.dim)])
        self.action_high = np.concatenate([env.action_high, np.ones(space.dim)])

    def adversary_to_params(self, u) -> np.ndarray:
        u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
        return self.space.low + (u + 1.0) * 0.5 * self.space.width

    def reference_action(self) -> np.ndarray:
        """Adversary action whose image is exactly the reference parameters."""
        width = self.space.width
        safe = np.where(width > 0, width, 1.0)
        u = np.where(width > 0, 2.0 * (self.space.reference - self.space.low) / safe - 1.0, 0.0)
        # nudge by ulps where the affine round trip is inexact
        for i in range(u.size):
            for _ in range(64):
                got = self.adversary_to_params(u)[i]
                target = self.space.reference[i]
                if got == target:
                    break
                u[i] = np.nextafter(u[i], np.inf if got < target else -np.inf)
        return u

    def step(self, action) -> StepResult:
        action = np.asarray(action, dtype=float).reshape(-1)
        if action.size != self.action_dim:
            raise ContractError(f"joint action must have {self.action_dim} entries, got {action.size}")
        agent, adversary = action[:self.agent_dim], action[self.agent_dim:]
        params = self.adversary_to_params(adversary)
        self.env.set_params(params)
        result = self.env.step(agent)
        result.info["adversary_reward"] = -result.reward
        result.info["params"] = params
        return result


class ProbabilisticActionRobust(Wrapper):
    """The adversary shares the agent's action space; the applied action is
    ``alpha * a + (1 - alpha) * a_bar`` clipped to the action bounds."""

    def __init__(self, env: ModifiedParamsEnv, alpha: float):
        if env.discrete:
            raise ContractError("action-robust wrapper needs a continuous-action environment")
        if not 0.0 <= alpha <= 1.0:
            raise ContractError(f"alpha must lie in [0, 1], got {alpha}")
        super().__init__(env)
        self.alpha = float(alpha)
        self.agent_dim = env.action_dim
        self.adversary_dim = env.action_dim
        self.action_dim = 2 * env.action_dim
        self.action_low = np.concatenate([env.action_low, env.action_low])
        self.action_high = np.concatenate([env.action_high, env.action_high])

    def mix(self, agent, adversary) -> np.ndarray:
        mixed = self.alpha * np.asarray(agent, dtype=float) + (1.0 - self.alpha) * np.asarray(adversary, dtype=float)
        return np.clip(mixed, self.env.action_low, self.env.action_high)

    def step(self, action) -> StepResult:
        action = np.asarray(action, dtype=float).reshape(-1)
        if action.size != self.action_dim:
            raise ContractError(f"joint action must have {self.action_dim} entries, got {action.size}")
        applied = self.mix(action[:self.agent_dim], action[self.agent_dim:])
        result = self.env.step(applied)
        result.info["applied_action"] = applied
        result.info["adversary_reward"] = -result.reward
        return result


def wrap_domain_randomization(env, space, sampler=None, seed=None) -> DomainRandomization:
    return DomainRandomization(env, space, sampler, seed)


def wrap_adversarial(env, space) -> Adversarial:
    return Adversarial(env, space)


def wrap_action_robust(env, alpha) -> ProbabilisticActionRobust:
    return ProbabilisticActionRobust(env, alpha)
