"""Policies: a small tanh MLP parameterised by a flat vector, and tabular policies."""

from __future__ import annotations

from typing import Any

import numpy as np

from rrls.exceptions import ContractError


class MLPPolicy:
    """Deterministic one-hidden-layer tanh network.

    Continuous outputs are squashed into ``[low, high]``; with
    ``n_discrete`` set the network emits one logit per action and acts
    greedily. Observations are divided by ``obs_scale`` when given. The
    parameter vector is laid out as ``W1, b1, W2, b2``.
    """

    def __init__(self, obs_dim: int, action_dim: int, hidden: int = 16,
                 low=None, high=None, n_discrete: int | None = None, params=None,
                 obs_scale=None):
        self.obs_dim = int(obs_dim)
        self.obs_scale = None if obs_scale is None else np.asarray(obs_scale, dtype=float).reshape(self.obs_dim)
        self.hidden = int(hidden)
        self.n_discrete = n_discrete
        self.action_dim = int(action_dim)
        self.out_dim = n_discrete if n_discrete is not None else self.action_dim
        if n_discrete is None:
            self.low = np.broadcast_to(np.asarray(-1.0 if low is None else low, dtype=float), (self.out_dim,)).copy()
            self.high = np.broadcast_to(np.asarray(1.0 if high is None else high, dtype=float), (self.out_dim,)).copy()
            self._mid = 0.5 * (self.low + self.high)
            self._half = 0.5 * (self.high - self.low)
        else:
            self.low = self.high = None
        self.set_params(np.zeros(self.n_params) if params is None else params)

    @property
    def n_params(self) -> int:
        return self.obs_dim * self.hidden + self.hidden + self.hidden * self.out_dim + self.out_dim

    def set_params(self, params) -> None:
        params = np.asarray(params, dtype=float).reshape(-1)
        if params.size != self.n_params:
            raise ContractError(f"expected {self.n_params} parameters, got {params.size}")
        if not np.all(np.isfinite(params)):
            raise ContractError("policy parameters must be finite")
        self.params = params.copy()
        i = 0
        h, o = self.hidden, self.out_dim
        self._w1 = self.params[i:i + h * self.obs_dim].reshape(h, self.obs_dim)
        i += h * self.obs_dim
        self._b1 = self.params[i:i + h]
        i += h
        self._w2 = self.params[i:i + o * h].reshape(o, h)
        i += o * h
        self._b2 = self.params[i:i + o]

    def with_params(self, params) -> "MLPPolicy":
        clone = MLPPolicy(self.obs_dim, self.action_dim, self.hidden,
                          self.low, self.high, self.n_discrete, obs_scale=self.obs_scale)
        clone.set_params(params)
        return clone

    def __call__(self, obs):
        if self.obs_scale is not None:
            obs = obs / self.obs_scale
        z = self._w2 @ np.tanh(self._w1 @ obs + self._b1) + self._b2
        if self.n_discrete is not None:
            return int(np.argmax(z))
        return self._mid + self._half * np.tanh(z)

    def arch(self) -> dict[str, Any]:
        return {
            "kind": "mlp",
            "hidden": self.hidden,
            "obs_dim": self.obs_dim,
            "action_dim": self.action_dim,
            "n_discrete": self.n_discrete,
            "low": None if self.low is None else self.low.tolist(),
            "high": None if self.high is None else self.high.tolist(),
            "obs_scale": None if self.obs_scale is None else self.obs_scale.tolist(),
        }

    @classmethod
    def from_arch(cls, arch: dict[str, Any], params) -> "MLPPolicy":
        return cls(arch["obs_dim"], arch["action_dim"], arch["hidden"],
                   arch.get("low"), arch.get("high"), arch.get("n_discrete"), params,
                   arch.get("obs_scale"))

    @classmethod
    def for_env(cls, env, hidden: int = 16, params=None) -> "MLPPolicy":
        return cls(env.obs_dim, env.action_dim, hidden, env.action_low, env.action_high,
                   env.n_discrete_actions, params, getattr(env, "obs_scale", None))


class TabularPolicy:
    """Acts greedily on a ``(S, A)`` policy table given one-hot observations."""

    def __init__(self, table):
        self.table = np.asarray(table, dtype=float)
        self._actions = np.argmax(self.table, axis=1)

    def __call__(self, obs) -> int:
        return int(self._actions[int(np.argmax(obs))])

    def arch(self) -> dict[str, Any]:
        n_s, n_a = self.table.shape
        return {"kind": "tabular", "n_states": n_s, "n_actions": n_a}

    @property
    def params(self) -> np.ndarray:
        return self.table.reshape(-1)

    @classmethod
    def from_arch(cls, arch: dict[str, Any], params) -> "TabularPolicy":
        return cls(np.asarray(params, dtype=float).reshape(arch["n_states"], arch["n_actions"]))


class JointPolicy:
    """Concatenates agent and adversary actions for the game wrappers."""

    def __init__(self, agent, adversary):
        self.agent = agent
        self.adversary = adversary

    def __call__(self, obs) -> np.ndarray:
        return np.concatenate([np.atleast_1d(self.agent(obs)), np.atleast_1d(self.adversary(obs))])


class ConstantPolicy:
    def __init__(self, action):
        self.action = np.asarray(action, dtype=float)

    def __call__(self, obs) -> np.ndarray:
        return self.action


def policy_from_dict(doc: dict[str, Any]):
    arch = doc["arch"]
    if arch.get("kind", "mlp") == "tabular":
        return TabularPolicy.from_arch(arch, doc["params"])
    return MLPPolicy.from_arch(arch, doc["params"])
