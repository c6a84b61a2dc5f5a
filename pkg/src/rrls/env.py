"""Environment contract shared by every simulator and wrapper.

An environment exposes ``reset``/``step`` plus ``set_params``/``get_params``
so that the transition dynamics can be modified from outside, between
episodes or at every step.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from rrls.exceptions import ContractError
from rrls.spaces import ParamSpace


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminated: bool
    truncated: bool
    info: dict[str, Any] = field(default_factory=dict)


class ModifiedParamsEnv(abc.ABC):
    """Base class for environments whose physical parameters can be modified.

    Subclasses set ``obs_dim``, ``action_dim``, ``action_low``, ``action_high``
    and ``param_space`` (the default uncertainty set, whose reference point is
    the nominal parameter vector). Discrete-action environments also set
    ``n_discrete_actions``; their actions are plain integers. ``obs_scale``
    optionally gives a typical magnitude per observation entry;
    ``reward_floor`` is a lower bound on every per-step reward, if known.
    """

    obs_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    param_space: ParamSpace
    n_discrete_actions: int | None = None
    obs_scale: np.ndarray | None = None
    reward_floor: float | None = None

    @abc.abstractmethod
    def reset(self, seed: int | None = None) -> np.ndarray:
        ...

    @abc.abstractmethod
    def step(self, action) -> StepResult:
        ...

    @abc.abstractmethod
    def set_params(self, params) -> None:
        ...

    @abc.abstractmethod
    def get_params(self) -> np.ndarray:
        ...

    @property
    def unwrapped(self) -> "ModifiedParamsEnv":
        return self

    @property
    def discrete(self) -> bool:
        return self.n_discrete_actions is not None


class Wrapper(ModifiedParamsEnv):
    """Forwards every call to ``env``; subclasses override what they change."""

    def __init__(self, env: ModifiedParamsEnv):
        self.env = env
        self.obs_dim = env.obs_dim
        self.action_dim = env.action_dim
        self.action_low = env.action_low
        self.action_high = env.action_high
        self.param_space = env.param_space
        self.n_discrete_actions = env.n_discrete_actions
        self.obs_scale = env.obs_scale
        self.reward_floor = env.reward_floor

    def reset(self, seed: int | None = None) -> np.ndarray:
        return self.env.reset(seed=seed)

    def step(self, action) -> StepResult:
        return self.env.step(action)

    def set_params(self, params) -> None:
        self.env.set_params(params)

    def get_params(self) -> np.ndarray:
        return self.env.get_params()

    @property
    def unwrapped(self) -> ModifiedParamsEnv:
        return self.env.unwrapped


def check_space_matches(env: ModifiedParamsEnv, space: ParamSpace) -> None:
    if space.names != env.param_space.names:
        raise ContractError(
            f"uncertainty set parameters {space.names} do not match environment parameters "
            f"{env.param_space.names}")


class ParamSubspace(Wrapper):
    """Exposes only the parameters named by ``space``; the others stay at the
    environment's reference values."""

    def __init__(self, env: ModifiedParamsEnv, space: ParamSpace):
        super().__init__(env)
        names = env.param_space.names
        unknown = [n for n in space.names if n not in names]
        if unknown:
            raise ContractError(f"uncertainty set parameters {unknown} are not parameters of the "
                                f"environment {names}")
        self.param_space = space
        self._index = np.array([names.index(n) for n in space.names], dtype=int)
        self._full = env.param_space.reference.copy()
        self._params = space.reference.copy()
        self.set_params(space.reference)

    def set_params(self, params) -> None:
        p = np.array(params, dtype=float).reshape(-1)
        if p.size != self.param_space.dim:
            raise ContractError(f"expected {self.param_space.dim} parameters {self.param_space.names}")
        full = self._full.copy()
        full[self._index] = p
        self.env.set_params(full)
        self._params = p

    def get_params(self) -> np.ndarray:
        return self._params.copy()


def restrict(env: ModifiedParamsEnv, space: ParamSpace) -> ModifiedParamsEnv:
    """``env`` itself when ``space`` covers its parameters, else a :class:`ParamSubspace`."""
    if space.names == env.param_space.names:
        return env
    return ParamSubspace(env, space)
