"""Experiment configuration: one JSON document per run."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from rrls.agents.trainers import TrainConfig
from rrls.envs import env_ids, make
from rrls.evaluation import DEFAULT_EPISODES_PER_SEED, DEFAULT_EVAL_SEEDS, default_nb_mesh_dim
from rrls.exceptions import ConfigError, ContractError
from rrls.spaces import ParamSpace, bundled_space, bundled_space_names

ALGORITHMS = ("nominal", "dr", "worstcase", "adversarial", "action-robust", "tabular-robust")


@dataclass
class EvaluationConfig:
    nb_mesh_dim: int | None = None
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_EVAL_SEEDS))
    episodes_per_seed: int = DEFAULT_EPISODES_PER_SEED
    horizon: int | None = None
    # discounted returns when set; undiscounted otherwise
    gamma: float | None = None


@dataclass
class ExperimentConfig:
    env_id: str
    algorithm: str
    budget: int
    seeds: list[int]
    space: ParamSpace
    output_dir: Path
    env_kwargs: dict[str, Any] = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    space_source: Any = None

    @property
    def nb_mesh_dim(self) -> int:
        n = self.evaluation.nb_mesh_dim
        return default_nb_mesh_dim(self.space.dim) if n is None else n

    def make_env(self):
        return make(self.env_id, **self.env_kwargs)

    def to_dict(self) -> dict[str, Any]:
        """Fully resolved snapshot; loading it back gives an equal config."""
        return {
            "env_id": self.env_id,
            "env_kwargs": self.env_kwargs,
            "algorithm": self.algorithm,
            "budget": self.budget,
            "seeds": list(self.seeds),
            "space": self.space.to_dict(),
            "train": self.train.to_dict(),
            "evaluation": {**asdict(self.evaluation), "nb_mesh_dim": self.nb_mesh_dim},
            "output_dir": str(self.output_dir),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _require(doc: dict, key: str):
    if key not in doc:
        raise ConfigError(key, "missing required field")
    return doc[key]


def _int(value, name: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(name, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(name, f"must be >= {minimum}, got {value}")
    return value


def _seeds(value, name: str) -> list[int]:
    if not isinstance(value, list) or not value:
        raise ConfigError(name, "expected a non-empty list of integer seeds")
    return [_int(s, name, 0) for s in value]


def _space(value, env, base_dir: Path) -> ParamSpace:
    # accepted forms: bundled name, inline {"dims", "reference"}, or {"file": path}
    try:
        if value is None:
            return env.param_space
        if isinstance(value, str):
            if value not in bundled_space_names():
                raise ConfigError("space", f"unknown bundled space {value!r}; known: "
                                           f"{', '.join(bundled_space_names())}")
            return bundled_space(value)
        if isinstance(value, dict) and "file" in value:
            path = Path(value["file"])
            if not path.is_absolute():
                path = base_dir / path
            try:
                return ParamSpace.from_json(path.read_text())
            except OSError as exc:
                raise ConfigError("space", f"cannot read space file {path}: {exc}") from None
        if isinstance(value, dict):
            return ParamSpace.from_dict(value)
    except (ContractError, KeyError, TypeError) as exc:
        raise ConfigError("space", str(exc)) from None
    raise ConfigError("space", f"expected a bundled space name, an inline space or {{'file': ...}}, got {value!r}")


def _overrides(cls, value, name: str):
    if value is None:
        return cls()
    if not isinstance(value, dict):
        raise ConfigError(name, "expected an object")
    known = {f.name for f in fields(cls)}
    for key in value:
        if key not in known:
            raise ConfigError(f"{name}.{key}", f"unknown option; known: {', '.join(sorted(known))}")
    return cls(**value)


def parse_config(doc: dict[str, Any], base_dir: Path | str = ".") -> ExperimentConfig:
    """Validate a config document; raises :class:`ConfigError` naming the bad field."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    base_dir = Path(base_dir)
    env_id = _require(doc, "env_id")
    if env_id not in env_ids():
        raise ConfigError("env_id", f"unknown environment {env_id!r}; known: {', '.join(env_ids())}")
    algorithm = _require(doc, "algorithm")
    if algorithm not in ALGORITHMS:
        raise ConfigError("algorithm", f"unknown algorithm {algorithm!r}; valid: {', '.join(ALGORITHMS)}")
    budget = _int(_require(doc, "budget"), "budget", 1)
    seeds = _seeds(_require(doc, "seeds"), "seeds")
    env_kwargs = doc.get("env_kwargs") or {}
    if not isinstance(env_kwargs, dict):
        raise ConfigError("env_kwargs", "expected an object")
    try:
        env = make(env_id, **env_kwargs)
    except (TypeError, ContractError, ValueError) as exc:
        raise ConfigError("env_kwargs", str(exc)) from None
    space = _space(doc.get("space"), env, base_dir)
    unknown = [n for n in space.names if n not in env.param_space.names]
    if unknown:
        raise ConfigError("space", f"parameters {unknown} are not parameters of {env_id} "
                                   f"{list(env.param_space.names)}")
    if algorithm == "tabular-robust" and not hasattr(env, "tabular_mdp"):
        raise ConfigError("algorithm", f"tabular-robust needs a tabular environment; {env_id} is not one")
    train = _overrides(TrainConfig, doc.get("train"), "train")
    evaluation = _overrides(EvaluationConfig, doc.get("evaluation"), "evaluation")
    if evaluation.nb_mesh_dim is not None:
        _int(evaluation.nb_mesh_dim, "evaluation.nb_mesh_dim", 2)
    evaluation.seeds = _seeds(evaluation.seeds, "evaluation.seeds")
    _int(evaluation.episodes_per_seed, "evaluation.episodes_per_seed", 1)
    if evaluation.gamma is not None and not 0.0 < evaluation.gamma <= 1.0:
        raise ConfigError("evaluation.gamma", f"must lie in (0, 1], got {evaluation.gamma}")
    out = Path(doc.get("output_dir", "runs"))
    if not out.is_absolute():
        out = base_dir / out
    return ExperimentConfig(env_id, algorithm, budget, seeds, space, out, env_kwargs, train, evaluation,
                            doc.get("space"))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"{path} is not valid JSON: {exc}") from None
    return parse_config(doc, path.parent)
