"""Box uncertainty sets over named environment parameters."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Any

import numpy as np

from rrls.exceptions import ContractError


@dataclass(frozen=True, eq=False)
class ParamSpace:
    """Ordered box ``[low_i, high_i]`` of named parameters with a nominal point.

    ``low == high`` is allowed on any dimension; such point dimensions describe
    parameters that are not uncertain at all.
    """

    names: tuple[str, ...]
    low: np.ndarray
    high: np.ndarray
    reference: np.ndarray

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        low = np.array(self.low, dtype=float).reshape(-1)
        high = np.array(self.high, dtype=float).reshape(-1)
        ref = np.array(self.reference, dtype=float).reshape(-1)
        if not (len(names) == low.size == high.size == ref.size):
            raise ContractError("names, low, high and reference must have equal length")
        if len(set(names)) != len(names):
            raise ContractError(f"duplicate parameter names in {names}")
        for name, lo, hi, r in zip(names, low, high, ref):
            if not lo <= hi:
                raise ContractError(f"{name}: low {lo} exceeds high {hi}")
            if not lo <= r <= hi:
                raise ContractError(f"{name}: reference {r} outside [{lo}, {hi}]")
        for arr in (low, high, ref):
            arr.flags.writeable = False
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)
        object.__setattr__(self, "reference", ref)

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def width(self) -> np.ndarray:
        return self.high - self.low

    def __eq__(self, other):
        if not isinstance(other, ParamSpace):
            return NotImplemented
        return (self.names == other.names and np.array_equal(self.low, other.low)
                and np.array_equal(self.high, other.high)
                and np.array_equal(self.reference, other.reference))

    def check(self, params) -> np.ndarray:
        """Validate a parameter vector against the box; returns it as a float array."""
        p = np.array(params, dtype=float).reshape(-1)
        if p.size != self.dim:
            raise ContractError(f"expected {self.dim} parameters {self.names}, got {p.size}")
        for name, lo, hi, x in zip(self.names, self.low, self.high, p):
            if not lo <= x <= hi:
                raise ContractError(f"{name}: value {x} outside [{lo}, {hi}]")
        return p

    def point(self, params=None) -> "ParamSpace":
        """Degenerate space collapsed onto ``params`` (the reference by default)."""
        p = self.reference if params is None else self.check(params)
        return ParamSpace(self.names, p, p, p)

    def to_dict(self) -> dict[str, Any]:
        return {
            "dims": [{"name": n, "low": float(lo), "high": float(hi)}
                     for n, lo, hi in zip(self.names, self.low, self.high)],
            "reference": self.reference.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ParamSpace":
        try:
            dims = doc["dims"]
            names = [d["name"] for d in dims]
            low = [d["low"] for d in dims]
            high = [d["high"] for d in dims]
            ref = doc["reference"]
        except (KeyError, TypeError) as exc:
            raise ContractError(f"malformed parameter space document: {exc!r}") from exc
        return cls(tuple(names), low, high, ref)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ParamSpace":
        return cls.from_dict(json.loads(text))


def denormalize_params(space: ParamSpace, u) -> np.ndarray:
    """Map a point of the unit cube onto the box: ``low + u * (high - low)``."""
    u = np.array(u, dtype=float).reshape(-1)
    if u.size != space.dim:
        raise ContractError(f"expected {space.dim} coordinates, got {u.size}")
    if np.any(~np.isfinite(u)) or np.any(u < 0) or np.any(u > 1):
        raise ContractError(f"unit coordinates must lie in [0, 1], got {u}")
    return space.low + u * space.width


def normalize_params(space: ParamSpace, params) -> np.ndarray:
    """Inverse of :func:`denormalize_params`; point dimensions map to 0."""
    p = space.check(params)
    width = space.width
    safe = np.where(width > 0, width, 1.0)
    return np.where(width > 0, (p - space.low) / safe, 0.0)


@lru_cache(maxsize=None)
def _bundled() -> dict[str, dict]:
    text = resources.files("rrls.data").joinpath("spaces.json").read_text()
    return json.loads(text)


def bundled_space_names() -> list[str]:
    return list(_bundled())


def bundled_space(name: str) -> ParamSpace:
    """Shipped uncertainty set, e.g. ``"InvertedPendulum-2"`` or ``"Hopper-rarl"``."""
    try:
        return ParamSpace.from_dict(_bundled()[name])
    except KeyError:
        raise ContractError(
            f"unknown bundled space {name!r}; available: {', '.join(bundled_space_names())}") from None
