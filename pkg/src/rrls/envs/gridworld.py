"""Slippery gridworld with an exactly computable transition kernel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rrls.env import ModifiedParamsEnv, StepResult
from rrls.exceptions import ContractError
from rrls.mdp import FiniteMDP
from rrls.robust import KernelSet
from rrls.spaces import ParamSpace

# up, right, down, left as (dx, dy); y grows downwards
MOVES = ((0, -1), (1, 0), (0, 1), (-1, 0))
MAX_SLIP = 0.5


@dataclass(frozen=True)
class GridworldParams:
    slip: float = 0.1
    step_reward: float = -1.0
    goal_reward: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.slip <= MAX_SLIP:
            raise ContractError(f"slip must lie in [0, {MAX_SLIP}], got {self.slip}")


class GridworldEnv(ModifiedParamsEnv):
    """4-action gridworld. The intended move succeeds with probability
    ``1 - slip``; each perpendicular move happens with probability ``slip/2``.
    Moves into a wall leave the agent in place. Entering the goal pays
    ``goal_reward`` and ends the episode; every other step pays
    ``step_reward``.

    Observations are one-hot encodings of the agent's cell, indexed
    ``y * width + x``.
    """

    n_discrete_actions = 4
    action_dim = 1

    def __init__(self, params: GridworldParams | None = None, width: int = 4, height: int = 4,
                 goal: tuple[int, int] | None = None, start: tuple[int, int] = (0, 0),
                 gamma: float = 0.95, max_steps: int = 100):
        if width < 1 or height < 1 or width * height < 2:
            raise ContractError(f"grid must have at least two cells, got {width}x{height}")
        goal = (width - 1, height - 1) if goal is None else tuple(goal)
        for name, cell in (("goal", goal), ("start", tuple(start))):
            if not (0 <= cell[0] < width and 0 <= cell[1] < height):
                raise ContractError(f"{name} cell {cell} outside the {width}x{height} grid")
        if tuple(start) == goal:
            raise ContractError("start cell must differ from the goal")
        self.params = params or GridworldParams()
        self.width, self.height = width, height
        self.goal = goal
        self.start = tuple(start)
        self.gamma = gamma
        self.max_steps = max_steps
        self.n_states = width * height
        self.obs_dim = self.n_states
        self.action_low = np.array([0.0])
        self.action_high = np.array([3.0])
        self.param_space = ParamSpace(("slip",), [0.0], [MAX_SLIP], [self.params.slip])
        self._slip_vec = np.array([self.params.slip])
        self._rng = np.random.default_rng()
        self.cell: int | None = None
        self.steps = 0

    def index(self, cell: tuple[int, int]) -> int:
        return cell[1] * self.width + cell[0]

    def coords(self, index: int) -> tuple[int, int]:
        return index % self.width, index // self.width

    def _move(self, index: int, direction: int) -> int:
        x, y = self.coords(index)
        dx, dy = MOVES[direction]
        nx, ny = x + dx, y + dy
        if 0 <= nx < self.width and 0 <= ny < self.height:
            return self.index((nx, ny))
        return index

    def set_params(self, params) -> None:
        p = np.array(params, dtype=float).reshape(-1)
        if p.size != 1:
            raise ContractError(f"gridworld takes one parameter (slip), got {p.size}")
        self.params = GridworldParams(float(p[0]), self.params.step_reward, self.params.goal_reward)
        self._slip_vec = p

    def get_params(self) -> np.ndarray:
        return self._slip_vec.copy()

    def reset(self, seed: int | None = None) -> np.ndarray:
        self._rng = np.random.default_rng(seed)
        self.cell = self.index(self.start)
        self.steps = 0
        return self._obs(self.cell)

    def _obs(self, cell: int) -> np.ndarray:
        obs = np.zeros(self.n_states)
        obs[cell] = 1.0
        return obs

    def step(self, action) -> StepResult:
        if self.cell is None:
            raise ContractError("step() called before reset()")
        a = int(np.asarray(action).reshape(-1)[0])
        if not 0 <= a < 4:
            raise ContractError(f"action must be in 0..3, got {a}")
        slip = self.params.slip
        u = self._rng.random()
        if u < 1.0 - slip:
            direction = a
        elif u < 1.0 - slip / 2.0:
            direction = (a + 1) % 4
        else:
            direction = (a + 3) % 4
        nxt = self._move(self.cell, direction)
        self.steps += 1
        terminated = nxt == self.index(self.goal)
        reward = self.params.goal_reward if terminated else self.params.step_reward
        truncated = not terminated and self.steps >= self.max_steps
        self.cell = None if terminated or truncated else nxt
        return StepResult(self._obs(nxt), reward, terminated, truncated, {"state": nxt})

    def tabular_mdp(self, slip: float | None = None) -> FiniteMDP:
        """Exact MDP for a slip value (the current one by default).

        The goal is absorbing with zero reward, which makes the discounted
        value equal to the expected discounted return of an episode.
        """
        slip = self.params.slip if slip is None else float(slip)
        GridworldParams(slip)
        n = self.n_states
        goal = self.index(self.goal)
        kernel = np.zeros((n, 4, n))
        reward_sas = np.full((n, 4, n), self.params.step_reward)
        reward_sas[:, :, goal] = self.params.goal_reward
        for s in range(n):
            if s == goal:
                kernel[s, :, s] = 1.0
                reward_sas[s] = 0.0
                continue
            for a in range(4):
                for direction, prob in ((a, 1.0 - slip), ((a + 1) % 4, slip / 2.0),
                                        ((a + 3) % 4, slip / 2.0)):
                    kernel[s, a, self._move(s, direction)] += prob
        rho = np.zeros(n)
        rho[self.index(self.start)] = 1.0
        return FiniteMDP.from_sas_reward(kernel, reward_sas, self.gamma, rho)


def extract_tabular_kernel(env, params_list) -> KernelSet:
    """Exact kernels of a tabular environment for each parameter vector.

    The result is marked non-rectangular: one parameter vector drives every
    row of its kernel at once.
    """
    base = getattr(env, "unwrapped", env)
    if not isinstance(base, GridworldEnv):
        raise ContractError(f"{type(base).__name__} has no tabular kernel")
    params_list = [np.asarray(p, dtype=float).reshape(-1) for p in params_list]
    if not params_list:
        raise ContractError("parameter list must be non-empty")
    mdps = [base.tabular_mdp(p[0]) for p in params_list]
    return KernelSet.from_mdps(mdps, rectangular=False)
