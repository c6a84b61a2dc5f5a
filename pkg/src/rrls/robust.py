"""Robust dynamic programming over finite kernel sets.

A :class:`KernelSet` is a list of whole transition kernels sharing one reward,
discount and initial distribution. Two adversaries are modelled:

* dynamic: at every ``(s, a)`` the adversary picks any next-state row that
  appears at that ``(s, a)`` in some listed kernel (the rectangular hull);
  its policy is an ``(S, A)`` integer array of kernel indices.
* static: the adversary commits to one whole kernel for the entire episode;
  its policy is a single kernel index.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Any, NamedTuple

import numpy as np

from rrls.exceptions import BudgetExhaustedError, ContractError
from rrls.mdp import (
    DEFAULT_MAX_ITERS,
    DEFAULT_TOL,
    FiniteMDP,
    _check_distribution_rows,
    _check_values,
    check_policy,
    greedy_policy,
    policy_evaluation,
)

DEFAULT_ENUMERATION_CAP = 10**6


@dataclass(frozen=True, eq=False)
class KernelSet:
    base: FiniteMDP
    kernels: np.ndarray
    rectangular: bool = True

    def __post_init__(self):
        kernels = np.array(self.kernels, dtype=float)
        if kernels.size == 0 or kernels.ndim != 4:
            raise ContractError("kernel list must be a non-empty (K, S, A, S) array")
        if kernels.shape[1:] != self.base.kernel.shape:
            raise ContractError(
                f"kernels have shape {kernels.shape[1:]}, base MDP expects {self.base.kernel.shape}")
        _check_distribution_rows(kernels, "kernels")
        kernels.flags.writeable = False
        object.__setattr__(self, "kernels", kernels)
        object.__setattr__(self, "rectangular", bool(self.rectangular))

    @classmethod
    def from_mdps(cls, mdps, rectangular: bool = True) -> "KernelSet":
        mdps = list(mdps)
        if not mdps:
            raise ContractError("kernel list must be non-empty")
        return cls(mdps[0], np.stack([m.kernel for m in mdps]), rectangular)

    @property
    def n_kernels(self) -> int:
        return self.kernels.shape[0]

    @property
    def n_states(self) -> int:
        return self.base.n_states

    @property
    def n_actions(self) -> int:
        return self.base.n_actions

    def member(self, k: int) -> FiniteMDP:
        return self.base.with_kernel(self.kernels[k])

    def to_dict(self) -> dict[str, Any]:
        doc = self.base.to_dict()
        doc["kernels"] = self.kernels.tolist()
        doc["rectangular"] = self.rectangular
        return doc

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "KernelSet":
        return cls(FiniteMDP.from_dict(doc), doc["kernels"], doc.get("rectangular", True))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "KernelSet":
        return cls.from_dict(json.loads(text))


class RobustVIResult(NamedTuple):
    values: np.ndarray
    policy: np.ndarray
    adversary: np.ndarray
    iterations: int
    residual: float


def _candidate_q(ks: KernelSet, v: np.ndarray) -> np.ndarray:
    """``Q_k(s, a) = r(s, a) + gamma * p_k(.|s, a) . v`` for every listed kernel."""
    return ks.base.reward[None] + ks.base.gamma * (ks.kernels @ v)


def _robust_q(ks: KernelSet, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cand = _candidate_q(ks, v)
    # argmin returns the first minimiser, i.e. the lowest kernel index
    adversary = np.argmin(cand, axis=0)
    return np.take_along_axis(cand, adversary[None], axis=0)[0], adversary


def robust_bellman_backup(ks: KernelSet, v) -> tuple[np.ndarray, np.ndarray]:
    """One max-min backup; returns new values and the minimising kernel index per ``(s, a)``."""
    v = _check_values(ks.base, v)
    q, adversary = _robust_q(ks, v)
    return q.max(axis=1), adversary


def robust_value_iteration(ks: KernelSet, tol: float = DEFAULT_TOL,
                           max_iters: int = DEFAULT_MAX_ITERS) -> RobustVIResult:
    if tol <= 0:
        raise ContractError(f"tol must be positive, got {tol}")
    v = np.zeros(ks.n_states)
    residual = np.inf
    for it in range(max_iters + 1):
        q, adversary = _robust_q(ks, v)
        tv = q.max(axis=1)
        residual = float(np.max(np.abs(tv - v)))
        if residual <= tol:
            return RobustVIResult(v, greedy_policy(q), adversary, it, residual)
        v = tv
    raise BudgetExhaustedError("robust value iteration did not converge", residual, max_iters)


def pessimistic_policy_value(ks: KernelSet, pi, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, int]:
    """Static-model pessimistic value of ``pi``.

    Returns the per-state minimum over listed kernels of the policy value and,
    separately, the index of the kernel with the lowest rho-weighted value.
    """
    pi = check_policy(ks.base, pi)
    values = np.stack([policy_evaluation(ks.member(k), pi, tol) for k in range(ks.n_kernels)])
    scores = values @ ks.base.rho
    return values.min(axis=0), int(np.argmin(scores))


def _adversary_rows(ks: KernelSet, adv) -> np.ndarray:
    adv = np.asarray(adv)
    if adv.ndim == 0:
        adv = np.full((ks.n_states, ks.n_actions), int(adv))
    if adv.shape != (ks.n_states, ks.n_actions):
        raise ContractError(f"adversary must be a kernel index or an {(ks.n_states, ks.n_actions)} array")
    if not np.issubdtype(adv.dtype, np.integer) or adv.min() < 0 or adv.max() >= ks.n_kernels:
        raise ContractError(f"adversary indices must be integers in [0, {ks.n_kernels})")
    s_idx, a_idx = np.indices(adv.shape)
    return ks.kernels[adv, s_idx, a_idx]


def game_operator_backup(ks: KernelSet, pi, adv, v) -> np.ndarray:
    """Zero-sum Markov game backup for a fixed agent policy and adversary."""
    v = _check_values(ks.base, v)
    pi = check_policy(ks.base, pi)
    rows = _adversary_rows(ks, adv)
    q = ks.base.reward + ks.base.gamma * (rows @ v)
    return np.sum(pi * q, axis=1)


def _hull_rows(ks: KernelSet) -> list[list[tuple[int, np.ndarray]]]:
    """Distinct candidate rows per (s, a), each tagged with its lowest kernel index."""
    rows = []
    for s in range(ks.n_states):
        per_action = []
        for a in range(ks.n_actions):
            seen: list[tuple[int, np.ndarray]] = []
            for k in range(ks.n_kernels):
                row = ks.kernels[k, s, a]
                if not any(np.array_equal(row, other) for _, other in seen):
                    seen.append((k, row))
            per_action.append(seen)
        rows.append(per_action)
    return rows


def dynamic_adversary_vi(ks: KernelSet, tol: float = DEFAULT_TOL,
                         max_iters: int = DEFAULT_MAX_ITERS) -> RobustVIResult:
    """Value iteration on the two-player game operator.

    Each sweep computes the adversary's best response row at every ``(s, a)``
    and the agent's greedy reply, then applies the game operator for that
    pair of policies.
    """
    if tol <= 0:
        raise ContractError(f"tol must be positive, got {tol}")
    hull = _hull_rows(ks)
    n_s, n_a = ks.n_states, ks.n_actions
    v = np.zeros(n_s)
    residual = np.inf
    for it in range(max_iters + 1):
        adversary = np.zeros((n_s, n_a), dtype=int)
        q = np.empty((n_s, n_a))
        for s in range(n_s):
            for a in range(n_a):
                best_k, best = hull[s][a][0][0], np.inf
                for k, row in hull[s][a]:
                    val = row @ v
                    if val < best:
                        best_k, best = k, val
                adversary[s, a] = best_k
                q[s, a] = ks.base.reward[s, a] + ks.base.gamma * best
        agent = greedy_policy(q)
        tv = game_operator_backup(ks, agent, adversary, v)
        residual = float(np.max(np.abs(tv - v)))
        if residual <= tol:
            return RobustVIResult(v, agent, adversary, it, residual)
        v = tv
    raise BudgetExhaustedError("game value iteration did not converge", residual, max_iters)


def _batched_policy_values(ks: KernelSet, actions: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Exact values for a batch of deterministic agent/adversary pairs.

    ``actions`` is ``(N, S)``; ``rows`` is ``(N, S, S)``, the next-state row
    applied at ``(s, actions[n, s])``.
    """
    n_s = ks.n_states
    r = ks.base.reward[np.arange(n_s)[None], actions]
    lhs = np.eye(n_s)[None] - ks.base.gamma * rows
    return np.linalg.solve(lhs, r[..., None])[..., 0]


def _static_pessimistic_scores(ks: KernelSet, policies: np.ndarray, hull: bool) -> np.ndarray:
    """rho-weighted per-state pessimistic value for each deterministic policy in ``policies``."""
    s_idx = np.arange(ks.n_states)
    scores = np.empty(len(policies))
    for i, acts in enumerate(policies):
        if hull:
            choices = itertools.product(range(ks.n_kernels), repeat=ks.n_states)
            ks_idx = np.array(list(choices), dtype=int)
            rows = ks.kernels[ks_idx, s_idx[None], acts[None]]
        else:
            rows = ks.kernels[:, s_idx, acts]
        acts_b = np.broadcast_to(acts, (len(rows), ks.n_states))
        values = _batched_policy_values(ks, acts_b, rows)
        scores[i] = values.min(axis=0) @ ks.base.rho
    return scores


def static_dynamic_gap(ks: KernelSet, tol: float = DEFAULT_TOL,
                       cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """Best static max-min value minus the static value of the dynamic-game policy.

    The static side enumerates every deterministic stationary agent policy.
    With ``ks.rectangular`` the static adversary may pick any kernel from the
    rectangular hull; otherwise it is limited to the listed kernels. The
    result is non-negative up to ``tol`` and zero for rectangular sets.
    """
    n_s, n_a = ks.n_states, ks.n_actions
    n_adv = ks.n_kernels ** n_s if ks.rectangular else ks.n_kernels
    if n_a ** n_s * n_adv > cap:
        raise ContractError(
            f"enumeration of {n_a}^{n_s} policies x {n_adv} adversaries exceeds cap {cap}")
    policies = np.array(list(itertools.product(range(n_a), repeat=n_s)), dtype=int)
    v_static = float(np.max(_static_pessimistic_scores(ks, policies, ks.rectangular)))
    dyn = dynamic_adversary_vi(ks, tol)
    dyn_actions = np.argmax(dyn.policy, axis=1)[None]
    v_dyn_policy = float(_static_pessimistic_scores(ks, dyn_actions, ks.rectangular)[0])
    return v_static - v_dyn_policy
