"""Exact tabular MDP machinery.

Arrays follow the layout ``kernel[s, a, s']`` and ``reward[s, a]``. Value
vectors have shape ``(n_states,)``, policies ``(n_states, n_actions)`` and
Q-tables ``(n_states, n_actions)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Callable, NamedTuple

import numpy as np

from rrls.exceptions import BudgetExhaustedError, ContractError

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITERS = 100_000
STOCHASTIC_ATOL = 1e-12


def _check_distribution_rows(arr: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} has non-finite entries")
    if np.any(arr < 0):
        raise ContractError(f"{name} has negative entries")
    sums = arr.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > STOCHASTIC_ATOL):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise ContractError(f"{name} rows do not sum to 1 (max deviation {worst:.3e})")


@dataclass(frozen=True, eq=False)
class FiniteMDP:
    """Tabular discounted MDP ``(S, A, p, r, gamma, rho)``.

    Arrays are copied and made read-only on construction, so instances can be
    shared freely between solvers.
    """

    kernel: np.ndarray
    reward: np.ndarray
    gamma: float
    rho: np.ndarray

    def __post_init__(self):
        kernel = np.array(self.kernel, dtype=float)
        reward = np.array(self.reward, dtype=float)
        rho = np.array(self.rho, dtype=float)
        if kernel.ndim != 3 or kernel.shape[0] != kernel.shape[2]:
            raise ContractError(f"kernel must have shape (S, A, S), got {kernel.shape}")
        n_states, n_actions, _ = kernel.shape
        if reward.shape != (n_states, n_actions):
            raise ContractError(f"reward must have shape {(n_states, n_actions)}, got {reward.shape}")
        if rho.shape != (n_states,):
            raise ContractError(f"rho must have shape {(n_states,)}, got {rho.shape}")
        if not 0.0 <= self.gamma < 1.0:
            raise ContractError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not np.all(np.isfinite(reward)):
            raise ContractError("reward has non-finite entries")
        _check_distribution_rows(kernel, "kernel")
        _check_distribution_rows(rho, "rho")
        for arr in (kernel, reward, rho):
            arr.flags.writeable = False
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return self.kernel.shape[0]

    @property
    def n_actions(self) -> int:
        return self.kernel.shape[1]

    @classmethod
    def from_sas_reward(cls, kernel, reward_sas, gamma, rho) -> "FiniteMDP":
        """Build from an ``r(s, a, s')`` table by taking its expectation under ``p``."""
        kernel = np.asarray(kernel, dtype=float)
        reward = np.einsum("ijk,ijk->ij", kernel, np.asarray(reward_sas, dtype=float))
        return cls(kernel, reward, gamma, rho)

    def with_kernel(self, kernel) -> "FiniteMDP":
        return FiniteMDP(kernel, self.reward, self.gamma, self.rho)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "kernel": self.kernel.tolist(),
            "reward": self.reward.tolist(),
            "rho": self.rho.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "FiniteMDP":
        mdp = cls(doc["kernel"], doc["reward"], doc["gamma"], doc["rho"])
        if (mdp.n_states, mdp.n_actions) != (doc["n_states"], doc["n_actions"]):
            raise ContractError("declared n_states/n_actions disagree with array shapes")
        return mdp

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "FiniteMDP":
        return cls.from_dict(json.loads(text))


class VIResult(NamedTuple):
    values: np.ndarray
    policy: np.ndarray
    iterations: int
    residual: float


def _check_values(mdp: FiniteMDP, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (mdp.n_states,):
        raise ContractError(f"value vector must have shape ({mdp.n_states},), got {v.shape}")
    return v


def check_policy(mdp: FiniteMDP, pi) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (mdp.n_states, mdp.n_actions):
        raise ContractError(f"policy must have shape {(mdp.n_states, mdp.n_actions)}, got {pi.shape}")
    _check_distribution_rows(pi, "policy")
    return pi


def greedy_policy(q: np.ndarray) -> np.ndarray:
    """One-hot policy on the argmax of ``q``; ties go to the lowest action index."""
    pi = np.zeros_like(q, dtype=float)
    pi[np.arange(q.shape[0]), np.argmax(q, axis=1)] = 1.0
    return pi


def deterministic_policy(actions, n_actions: int) -> np.ndarray:
    actions = np.asarray(actions, dtype=int)
    pi = np.zeros((actions.size, n_actions))
    pi[np.arange(actions.size), actions] = 1.0
    return pi


def q_from_v(mdp: FiniteMDP, v) -> np.ndarray:
    v = _check_values(mdp, v)
    return mdp.reward + mdp.gamma * (mdp.kernel @ v)


def bellman_backup(mdp: FiniteMDP, v) -> np.ndarray:
    return q_from_v(mdp, v).max(axis=1)


def policy_backup(mdp: FiniteMDP, pi, v) -> np.ndarray:
    return np.sum(pi * q_from_v(mdp, v), axis=1)


def value_iteration(mdp: FiniteMDP, tol: float = DEFAULT_TOL,
                    max_iters: int = DEFAULT_MAX_ITERS) -> VIResult:
    """Iterate the optimal Bellman operator from zero until the sup-norm
    residual ``||T v - v||`` drops to ``tol``.

    The returned ``values`` are the iterate whose residual was checked, so the
    stopping condition holds for them exactly.
    """
    if tol <= 0:
        raise ContractError(f"tol must be positive, got {tol}")
    v = np.zeros(mdp.n_states)
    residual = np.inf
    for it in range(max_iters + 1):
        q = q_from_v(mdp, v)
        tv = q.max(axis=1)
        residual = float(np.max(np.abs(tv - v)))
        if residual <= tol:
            return VIResult(v, greedy_policy(q), it, residual)
        v = tv
    raise BudgetExhaustedError("value iteration did not converge", residual, max_iters)


def policy_evaluation(mdp: FiniteMDP, pi, tol: float = DEFAULT_TOL,
                      max_iters: int = DEFAULT_MAX_ITERS) -> np.ndarray:
    """Value of ``pi`` under ``mdp`` to within ``tol`` of the exact fixed point."""
    if tol <= 0:
        raise ContractError(f"tol must be positive, got {tol}")
    pi = check_policy(mdp, pi)
    r_pi = np.sum(pi * mdp.reward, axis=1)
    p_pi = np.einsum("sa,sat->st", pi, mdp.kernel)
    # ||T v - v|| <= (1 - gamma) tol  implies  ||T v - v*|| <= gamma tol
    stop = tol * (1.0 - mdp.gamma)
    v = np.zeros(mdp.n_states)
    residual = np.inf
    for it in range(max_iters):
        tv = r_pi + mdp.gamma * (p_pi @ v)
        residual = float(np.max(np.abs(tv - v)))
        v = tv
        if residual <= stop:
            return v
    raise BudgetExhaustedError("policy evaluation did not converge", residual, max_iters)


def monte_carlo_return(env, pi: Callable[[np.ndarray], Any], gamma: float,
                       horizon: int, seed: int | None) -> float:
    """Discounted return of a single seeded rollout of ``pi`` in ``env``."""
    if horizon < 1:
        raise ContractError(f"horizon must be >= 1, got {horizon}")
    obs = env.reset(seed=seed)
    total = 0.0
    discount = 1.0
    for t in range(horizon):
        try:
            result = env.step(pi(obs))
        except Exception as exc:
            raise RuntimeError(f"environment fault at step {t}: {exc}") from exc
        total += discount * result.reward
        if result.terminated or result.truncated:
            break
        discount *= gamma
        obs = result.observation
    return total
