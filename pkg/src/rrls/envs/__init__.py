"""Environment registry addressed by string id."""

from __future__ import annotations

from typing import Callable

from rrls.env import ModifiedParamsEnv
from rrls.envs.cartpole import CartPoleEnv, CartPoleParams, CartPoleState, cartpole_step
from rrls.envs.gridworld import GridworldEnv, GridworldParams, extract_tabular_kernel
from rrls.exceptions import ContractError

REGISTRY: dict[str, Callable[..., ModifiedParamsEnv]] = {
    "cartpole-masses": lambda **kw: CartPoleEnv("masses", **kw),
    "cartpole-forces": lambda **kw: CartPoleEnv("forces", **kw),
    "gridworld-slip": lambda **kw: GridworldEnv(**kw),
}

# uncertainty sets shipped with each registered environment
BUNDLED_SPACES = {
    "cartpole-masses": ["InvertedPendulum-1", "InvertedPendulum-2"],
    "cartpole-forces": ["InvertedPendulum-rarl"],
    "gridworld-slip": [],
}


def env_ids() -> list[str]:
    return sorted(REGISTRY)


def make(env_id: str, **kwargs) -> ModifiedParamsEnv:
    try:
        factory = REGISTRY[env_id]
    except KeyError:
        raise ContractError(f"unknown environment {env_id!r}; known: {', '.join(env_ids())}") from None
    return factory(**kwargs)


def cartpole_env(selection: str, **kwargs) -> CartPoleEnv:
    return CartPoleEnv(selection, **kwargs)


def gridworld_env(params: GridworldParams | None = None, width: int = 4, height: int = 4,
                  goal: tuple[int, int] | None = None, **kwargs) -> GridworldEnv:
    return GridworldEnv(params, width, height, goal, **kwargs)


__all__ = [
    "CartPoleEnv",
    "CartPoleParams",
    "CartPoleState",
    "GridworldEnv",
    "GridworldParams",
    "REGISTRY",
    "cartpole_env",
    "cartpole_step",
    "env_ids",
    "extract_tabular_kernel",
    "gridworld_env",
    "make",
]
