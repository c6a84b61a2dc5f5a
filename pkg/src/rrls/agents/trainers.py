"""Baseline trainers built on CEM.

Every trainer is deterministic given ``(seed, config)`` and never consumes
more environment steps than its budget. Within a CEM generation all
candidates are scored on the same episode seeds (and, for domain
randomisation, the same parameter draws).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Callable

import numpy as np

from rrls.agents.cem import OutOfBudget, StepBudget, TrainLog, cem_optimize
from rrls.agents.policy import ConstantPolicy, JointPolicy, MLPPolicy
from rrls.env import ModifiedParamsEnv, restrict
from rrls.envs import make
from rrls.evaluation import generate_evaluation_set
from rrls.exceptions import ContractError
from rrls.robust import KernelSet, robust_value_iteration
from rrls.spaces import ParamSpace
from rrls.wrappers import Adversarial, DomainRandomization, ProbabilisticActionRobust

MAX_GENERATIONS = 10**6


@dataclass
class TrainConfig:
    population: int = 64
    elite_frac: float = 0.125
    hidden: int = 16
    episodes: int = 3
    horizon: int | None = None
    init_std: float = 1.0
    extra_std: float = 0.02
    rounds: int = 5
    alpha: float = 0.9
    mesh: int = 2

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class TrainResult:
    policy: MLPPolicy
    log: TrainLog
    steps_used: int
    episodes: int
    adversary: MLPPolicy | None = None
    extras: dict[str, Any] = field(default_factory=dict)


def _episode_seed(seed: int, phase: int, generation: int, episode: int) -> int:
    return int(np.random.SeedSequence([seed, phase, generation, episode]).generate_state(1)[0])


def rollout(env: ModifiedParamsEnv, policy: Callable, seed: int, budget: StepBudget | None = None,
            horizon: int | None = None, stop_at: float | None = None) -> float:
    """Undiscounted return of one episode, charged to ``budget``.

    Raises :class:`OutOfBudget` (after charging the steps taken) when the
    budget runs dry before the episode ends. With ``stop_at`` the episode is
    cut as soon as the running return reaches that value.
    """
    obs = env.reset(seed=seed)
    total, t = 0.0, 0
    cap = budget.remaining if budget is not None else None
    while True:
        if cap is not None and t >= cap:
            budget.charge(t)
            raise OutOfBudget
        result = env.step(policy(obs))
        total += result.reward
        t += 1
        if result.terminated or result.truncated or (horizon is not None and t >= horizon):
            break
        if stop_at is not None and total >= stop_at:
            break
        obs = result.observation
    if budget is not None:
        budget.charge(t)
    return total


class _Scorer:
    """Mean return over ``episodes`` seeded episodes, with per-generation seeds."""

    def __init__(self, seed: int, episodes: int, budget: StepBudget, horizon: int | None, phase: int = 0):
        self.seed, self.episodes, self.budget, self.horizon = seed, episodes, budget, horizon
        self.phase = phase
        self.generation = 0

    def set_generation(self, g: int) -> None:
        self.generation = g

    def seeds(self) -> list[int]:
        return [_episode_seed(self.seed, self.phase, self.generation, j) for j in range(self.episodes)]

    def mean_return(self, env, policy, below: float | None = None) -> float:
        """Mean return; with ``below`` set (non-negative rewards only) stops
        early and returns ``inf`` once the mean provably cannot fall under it."""
        if below is None:
            return float(np.mean([rollout(env, policy, s, self.budget, self.horizon) for s in self.seeds()]))
        target = below * self.episodes
        total = 0.0
        for s in self.seeds():
            total += rollout(env, policy, s, self.budget, self.horizon, stop_at=target - total)
            if total >= target:
                return np.inf
        return total / self.episodes


def _resolve(env_id: str, space: ParamSpace | None) -> tuple[ModifiedParamsEnv, ParamSpace]:
    env = make(env_id)
    if space is None:
        return env, env.param_space
    return restrict(env, space), space


def _check_budget(budget: int, config: TrainConfig) -> None:
    if budget < config.population * config.episodes:
        raise ContractError(
            f"budget {budget} cannot cover one generation ({config.population} x {config.episodes} episodes)")


def _run_cem(fitness, template: MLPPolicy, scorer: _Scorer, budget: StepBudget, config: TrainConfig,
             seed: int, init_mean=None, phase: str = "agent", step_offset: int = 0):
    return cem_optimize(
        fitness, template.n_params, config.population, config.elite_frac, MAX_GENERATIONS, seed,
        init_mean=init_mean, init_std=config.init_std, extra_std=config.extra_std,
        on_generation=scorer.set_generation,
        step_counter=lambda: step_offset + budget.used, phase=phase)


def train_nominal(env_id: str, budget: int, seed: int, config: TrainConfig | None = None) -> TrainResult:
    """CEM on the reference parameters."""
    config = config or TrainConfig()
    env, space = _resolve(env_id, None)
    return _train_on_cells(env, np.array([space.reference]), budget, seed, config)


def mesh_fitness(env, template: MLPPolicy, cells: np.ndarray, scorer: _Scorer,
                 lazy: bool | None = None) -> Callable[[np.ndarray], float]:
    """Fitness: the lowest mean return over ``cells``.

    With non-negative rewards (``env.reward_floor == 0``) rollouts in a cell
    stop as soon as its mean provably cannot undercut the running minimum;
    the returned value is the same, only fewer steps are spent.
    """
    if lazy is None:
        lazy = getattr(env, "reward_floor", None) == 0.0
    hardest = [0]

    def fitness(x):
        # the cell that was hardest last time goes first so the running
        # minimum is tight early; the minimum itself is unaffected
        policy = template.with_params(x)
        order = [hardest[0]] + [i for i in range(len(cells)) if i != hardest[0]]
        worst, worst_idx = np.inf, hardest[0]
        for i in order:
            env.set_params(cells[i])
            score = scorer.mean_return(env, policy, below=worst if lazy and np.isfinite(worst) else None)
            if score < worst:
                worst, worst_idx = score, i
        hardest[0] = worst_idx
        return worst

    return fitness


def _train_on_cells(env, cells: np.ndarray, budget: int, seed: int, config: TrainConfig) -> TrainResult:
    _check_budget(budget, config)
    template = MLPPolicy.for_env(env, config.hidden)
    counter = StepBudget(budget)
    scorer = _Scorer(seed, config.episodes, counter, config.horizon)
    best, log = _run_cem(mesh_fitness(env, template, cells, scorer), template, scorer, counter, config, seed)
    return TrainResult(template.with_params(best), log, counter.used, counter.episodes)


def train_dr(env_id: str, space: ParamSpace | None, budget: int, seed: int,
             config: TrainConfig | None = None) -> TrainResult:
    """CEM on the average return over parameters drawn uniformly per episode."""
    config = config or TrainConfig()
    env, space = _resolve(env_id, space)
    _check_budget(budget, config)
    template = MLPPolicy.for_env(env, config.hidden)
    counter = StepBudget(budget)
    scorer = _Scorer(seed, config.episodes, counter, config.horizon)

    def fitness(x):
        # same parameter draws for every candidate of a generation
        wrapped = DomainRandomization(env, space, seed=_episode_seed(seed, 1, scorer.generation, 0))
        return scorer.mean_return(wrapped, template.with_params(x))

    best, log = _run_cem(fitness, template, scorer, counter, config, seed)
    return TrainResult(template.with_params(best), log, counter.used, counter.episodes)


def train_worstcase(env_id: str, space: ParamSpace | None, budget: int, seed: int, mesh: int | None = None,
                    config: TrainConfig | None = None) -> TrainResult:
    """Explicit max-min: a candidate's fitness is its lowest mean return over
    an ``mesh``-points-per-dimension grid of the uncertainty set."""
    config = config or TrainConfig()
    mesh = config.mesh if mesh is None else mesh
    if mesh < 2:
        raise ContractError(f"adversary mesh size must be >= 2, got {mesh}")
    env, space = _resolve(env_id, space)
    cells = generate_evaluation_set(space, mesh).unique_cells()
    return _train_on_cells(env, cells, budget, seed, config)


def _alternate(env, agent_template: MLPPolicy, adversary_template: MLPPolicy, budget: int, seed: int,
               config: TrainConfig) -> TrainResult:
    rounds = config.rounds
    phase_budget = budget // (2 * rounds)
    if phase_budget < config.population * config.episodes:
        raise ContractError(
            f"budget {budget} too small for {rounds} rounds: each of the {2 * rounds} phases needs "
            f">= {config.population * config.episodes} steps")
    agent_x = np.zeros(agent_template.n_params)
    adv_x = np.zeros(adversary_template.n_params)
    log = TrainLog()
    used = episodes = 0
    for k in range(rounds):
        for role in ("agent", "adversary"):
            counter = StepBudget(phase_budget)
            phase_id = 2 * k + (role == "adversary")
            scorer = _Scorer(seed, config.episodes, counter, config.horizon, phase=phase_id)
            if role == "agent":
                frozen = adversary_template.with_params(adv_x)

                def fitness(x, frozen=frozen):
                    return scorer.mean_return(env, JointPolicy(agent_template.with_params(x), frozen))
                init = agent_x
            else:
                frozen = agent_template.with_params(agent_x)

                def fitness(x, frozen=frozen):
                    return -scorer.mean_return(env, JointPolicy(frozen, adversary_template.with_params(x)))
                init = adv_x
            best, phase_log = _run_cem(fitness, agent_template if role == "agent" else adversary_template,
                                       scorer, counter, config, _episode_seed(seed, phase_id, 0, 99),
                                       init_mean=init, phase=role, step_offset=used)
            log.extend(phase_log)
            used += counter.used
            episodes += counter.episodes
            if role == "agent":
                agent_x = best
            else:
                adv_x = best
    return TrainResult(agent_template.with_params(agent_x), log, used, episodes,
                       adversary=adversary_template.with_params(adv_x))


def train_adversarial(env_id: str, space: ParamSpace | None, budget: int, seed: int,
                      config: TrainConfig | None = None) -> TrainResult:
    """Alternating best responses between the agent and a parameter adversary
    acting through :class:`~rrls.wrappers.Adversarial` at every step."""
    config = config or TrainConfig()
    env, space = _resolve(env_id, space)
    game = Adversarial(env, space)
    agent = MLPPolicy.for_env(env, config.hidden)
    adversary = MLPPolicy(env.obs_dim, space.dim, config.hidden, -1.0, 1.0)
    return _alternate(game, agent, adversary, budget, seed, config)


def train_action_robust(env_id: str, alpha: float | None, budget: int, seed: int,
                        config: TrainConfig | None = None) -> TrainResult:
    """Alternating best responses on :class:`~rrls.wrappers.ProbabilisticActionRobust`."""
    config = config or TrainConfig()
    alpha = config.alpha if alpha is None else alpha
    if not 0.0 < alpha <= 1.0:
        raise ContractError(f"alpha must lie in (0, 1], got {alpha}")
    env = make(env_id)
    game = ProbabilisticActionRobust(env, alpha)
    agent = MLPPolicy.for_env(env, config.hidden)
    adversary = MLPPolicy.for_env(env, config.hidden)
    result = _alternate(game, agent, adversary, budget, seed, config)
    result.extras["alpha"] = alpha
    return result


def rollout_vs_adversary(result: TrainResult, env_id: str, *, space: ParamSpace | None = None,
                         alpha: float | None = None, episodes: int = 10, seed: int = 0) -> list[float]:
    """Returns of the trained agent playing against its own trained adversary."""
    if result.adversary is None:
        raise ContractError("training result has no adversary")
    env = make(env_id)
    if alpha is not None:
        game = ProbabilisticActionRobust(env, alpha)
    else:
        game = Adversarial(env, env.param_space if space is None else space)
    joint = JointPolicy(result.policy, result.adversary)
    return [rollout(game, joint, _episode_seed(seed, 10**6, 0, e)) for e in range(episodes)]


def reference_adversary(env_id: str, space: ParamSpace | None = None) -> ConstantPolicy:
    """Adversary that always plays the reference parameters."""
    env, space = _resolve(env_id, space)
    return ConstantPolicy(Adversarial(env, space).reference_action())


def tabular_robust_agent(ks: KernelSet, tol: float = 1e-8) -> np.ndarray:
    """Greedy policy of robust value iteration."""
    return robust_value_iteration(ks, tol).policy
