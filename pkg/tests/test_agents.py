import itertools
import logging

import numpy as np
import pytest

from helpers import enumerate_robust_value, linear_policy_value, random_kernel_set
from rrls import ContractError, KernelSet, pessimistic_policy_value, value_iteration
from rrls.agents import (
    MLPPolicy,
    OutOfBudget,
    StepBudget,
    TrainConfig,
    TrainLog,
    cem_optimize,
    policy_from_dict,
    reference_adversary,
    rollout,
    rollout_vs_adversary,
    tabular_robust_agent,
    train_action_robust,
    train_adversarial,
    train_dr,
    train_nominal,
    train_worstcase,
)
from rrls.agents.cem import GenerationRecord
from rrls.agents.trainers import _Scorer, mesh_fitness
from rrls.envs import CartPoleEnv, GridworldEnv, extract_tabular_kernel, make
from rrls.evaluation import generate_evaluation_set
from rrls.spaces import bundled_space

SMALL = TrainConfig(population=16, episodes=2)
PENDULUM = bundled_space("InvertedPendulum-2")


class TestCEM:
    def test_finds_quadratic_optimum(self):
        c = np.array([1.0, -2.0, 0.5, 3.0, -1.5])
        # a small noise floor keeps the search from collapsing before it arrives
        for seed in range(5):
            best, log = cem_optimize(lambda x: -np.sum((x - c) ** 2), 5, iters=200, seed=seed, extra_std=1e-2)
            assert np.max(np.abs(best - c)) < 1e-2
            assert len(log) == 200

    def test_constant_fitness_zero_spread(self):
        best, log = cem_optimize(lambda x: 3.0, 4, iters=5, seed=1)
        assert best.shape == (4,)
        assert all(r.std_fitness == 0.0 and r.mean_fitness == 3.0 for r in log.records)

    def test_equal_seeds_bitwise_equal(self):
        f = lambda x: -np.sum(np.sin(x) ** 2)
        a, la = cem_optimize(f, 6, iters=20, seed=42)
        b, lb = cem_optimize(f, 6, iters=20, seed=42)
        assert a.tobytes() == b.tobytes()
        # wall time is excluded from record equality
        assert la.records == lb.records

    @pytest.mark.parametrize("population, elite_frac", [(3, 0.1), (10, 0.0), (10, 0.6)])
    def test_preconditions(self, population, elite_frac):
        with pytest.raises(ContractError):
            cem_optimize(lambda x: 0.0, 2, population, elite_frac)

    def test_non_finite_fitness_discarded(self, caplog):
        calls = itertools.count()

        def f(x):
            return np.nan if next(calls) % 3 == 0 else -float(x @ x)

        with caplog.at_level(logging.WARNING, logger="rrls.agents.cem"):
            best, log = cem_optimize(f, 3, iters=3, seed=0)
        assert "non-finite" in caplog.text
        assert np.all(np.isfinite(best)) and len(log) == 3

    def test_out_of_budget_stops(self):
        calls = itertools.count()

        def f(x):
            if next(calls) >= 70:
                raise OutOfBudget
            return -float(x @ x)

        _, log = cem_optimize(f, 2, population=32, iters=100, seed=0)
        assert len(log) == 2

    def test_log_steps_monotone(self):
        log = TrainLog()
        log.append(GenerationRecord(0, 10, 0.0, 0.0, 0.0))
        with pytest.raises(ContractError):
            log.append(GenerationRecord(1, 5, 0.0, 0.0, 0.0))

    def test_log_csv_round_trip(self, tmp_path):
        _, log = cem_optimize(lambda x: -float(x @ x), 3, iters=4, seed=0)
        log.write_csv(tmp_path / "log.csv")
        back = TrainLog.read_csv(tmp_path / "log.csv")
        assert back.records == log.records


class TestPolicy:
    def test_output_within_bounds(self):
        pol = MLPPolicy(4, 1, 8, -10.0, 10.0, params=np.random.default_rng(0).normal(scale=10, size=MLPPolicy(4, 1, 8).n_params))
        for obs in np.random.default_rng(1).normal(scale=100, size=(50, 4)):
            assert -10.0 <= pol(obs)[0] <= 10.0

    def test_rejects_wrong_size_and_non_finite(self):
        pol = MLPPolicy(4, 1, 8)
        with pytest.raises(ContractError):
            pol.set_params(np.zeros(3))
        with pytest.raises(ContractError):
            pol.set_params(np.full(pol.n_params, np.nan))

    def test_dict_round_trip(self):
        env = CartPoleEnv()
        pol = MLPPolicy.for_env(env, 16, np.random.default_rng(2).normal(size=MLPPolicy.for_env(env, 16).n_params))
        back = policy_from_dict({"arch": pol.arch(), "params": pol.params.tolist()})
        obs = np.array([0.1, -0.05, 0.3, 0.2])
        assert back(obs).tobytes() == pol(obs).tobytes()

    def test_discrete_acts_with_argmax(self):
        pol = MLPPolicy(16, 1, 4, n_discrete=4, params=np.random.default_rng(3).normal(size=MLPPolicy(16, 1, 4, n_discrete=4).n_params))
        assert pol(np.eye(16)[0]) in range(4)


class TestBudgetAndDeterminism:
    @pytest.mark.parametrize("trainer", [
        lambda b, s: train_nominal("cartpole-masses", b, s, SMALL),
        lambda b, s: train_dr("cartpole-masses", None, b, s, SMALL),
        lambda b, s: train_worstcase("cartpole-masses", None, b, s, config=SMALL),
        lambda b, s: train_adversarial("cartpole-masses", None, b, s, SMALL),
        lambda b, s: train_action_robust("cartpole-forces", 0.8, b, s, SMALL),
    ], ids=["nominal", "dr", "worstcase", "adversarial", "action-robust"])
    def test_budget_respected_and_reproducible(self, trainer):
        a = trainer(5000, 3)
        b = trainer(5000, 3)
        assert a.steps_used <= 5000
        assert a.policy.params.tobytes() == b.policy.params.tobytes()
        assert a.log.records == b.log.records
        steps = [r.env_steps for r in a.log.records]
        assert steps == sorted(steps) and (not steps or steps[-1] <= a.steps_used)

    def test_step_counter_equals_rollout_lengths(self):
        env = CartPoleEnv()
        budget = StepBudget(10**6)
        pol = MLPPolicy.for_env(env, 4)
        lengths = []
        for s in range(5):
            before = budget.used
            rollout(env, pol, s, budget)
            lengths.append(budget.used - before)
        assert budget.used == sum(lengths) and budget.episodes == 5

    def test_rollout_raises_when_budget_runs_out(self):
        env = CartPoleEnv()
        env.set_params([1.0, 11.0])
        budget = StepBudget(10)
        with pytest.raises(OutOfBudget):
            rollout(env, lambda o: np.zeros(1), 0, budget)
        assert budget.used == 10

    def test_budget_below_one_generation(self):
        with pytest.raises(ContractError, match="budget"):
            train_nominal("cartpole-masses", 10, 0, SMALL)

    def test_unknown_env(self):
        with pytest.raises(ContractError):
            train_nominal("hopper", 1000, 0)


class TestDegenerateSpaces:
    def test_point_space_dr_equals_nominal(self):
        nominal = train_nominal("cartpole-masses", 8000, 5, SMALL)
        dr = train_dr("cartpole-masses", PENDULUM.point(), 8000, 5, SMALL)
        assert nominal.policy.params.tobytes() == dr.policy.params.tobytes()
        assert nominal.log.records == dr.log.records

    def test_point_space_worstcase_equals_nominal(self):
        nominal = train_nominal("cartpole-masses", 8000, 5, SMALL)
        wc = train_worstcase("cartpole-masses", PENDULUM.point(), 8000, 5, config=SMALL)
        assert nominal.policy.params.tobytes() == wc.policy.params.tobytes()

    def test_mesh_below_two_rejected(self):
        with pytest.raises(ContractError, match="mesh"):
            train_worstcase("cartpole-masses", None, 8000, 0, mesh=1)

    def test_zero_width_adversary_is_irrelevant(self):
        res = train_adversarial("cartpole-masses", PENDULUM.point(), 8000, 0, TrainConfig(population=8, episodes=1, rounds=2))
        adversary_phases = res.log.phase("adversary").records
        assert adversary_phases and all(r.std_fitness == 0.0 for r in adversary_phases)

    def test_alpha_one_adversary_is_irrelevant(self):
        res = train_action_robust("cartpole-forces", 1.0, 8000, 0, TrainConfig(population=8, episodes=1, rounds=2))
        assert all(r.std_fitness == 0.0 for r in res.log.phase("adversary").records)

    @pytest.mark.parametrize("alpha", [0.0, 1.5])
    def test_alpha_range(self, alpha):
        with pytest.raises(ContractError):
            train_action_robust("cartpole-forces", alpha, 8000, 0)

    def test_adversarial_budget_too_small(self):
        with pytest.raises(ContractError, match="rounds"):
            train_adversarial("cartpole-masses", None, 300, 0, SMALL)


class TestMeshFitness:
    def _scorer(self):
        return _Scorer(seed=0, episodes=3, budget=StepBudget(10**9), horizon=None)

    def test_lazy_minimum_equals_full_minimum(self):
        env = CartPoleEnv()
        template = MLPPolicy.for_env(env, 8)
        cells = generate_evaluation_set(PENDULUM, 3).cells
        lazy = mesh_fitness(env, template, cells, self._scorer(), lazy=True)
        full = mesh_fitness(env, template, cells, self._scorer(), lazy=False)
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.normal(scale=2.0, size=template.n_params)
            assert lazy(x) == full(x)

    def test_min_below_mean(self):
        env = CartPoleEnv()
        template = MLPPolicy.for_env(env, 8)
        cells = generate_evaluation_set(PENDULUM, 3).cells
        scorer = self._scorer()
        worst = mesh_fitness(env, template, cells, scorer, lazy=False)
        rng = np.random.default_rng(1)
        for _ in range(10):
            x = rng.normal(scale=2.0, size=template.n_params)
            pol = template.with_params(x)
            per_cell = []
            for c in cells:
                env.set_params(c)
                per_cell.append(scorer.mean_return(env, pol))
            assert worst(x) == min(per_cell) <= np.mean(per_cell)


class TestAdversarialRollouts:
    def test_reference_feasibility(self):
        res = train_adversarial("cartpole-masses", None, 40000, 0, TrainConfig(population=16, episodes=2, rounds=2))
        vs_adv = rollout_vs_adversary(res, "cartpole-masses")
        assert len(vs_adv) == 10
        env = make("cartpole-masses")
        at_ref = [rollout(env, res.policy, 10**6 + e) for e in range(10)]
        # the adversary can always play the reference point; 10% slack for episode noise
        assert np.mean(vs_adv) <= np.mean(at_ref) * 1.1 + 10

    def test_reference_adversary_maps_to_reference(self):
        from rrls.wrappers import Adversarial
        adv = reference_adversary("cartpole-masses")
        np.testing.assert_array_equal(Adversarial(CartPoleEnv(), PENDULUM).adversary_to_params(adv(None)), PENDULUM.reference)

    def test_requires_adversary(self):
        res = train_nominal("cartpole-masses", 5000, 0, SMALL)
        with pytest.raises(ContractError):
            rollout_vs_adversary(res, "cartpole-masses")


class TestTabularRobustAgent:
    def test_singleton_gives_nominal_optimal(self):
        mdp = random_kernel_set(np.random.default_rng(0), 5, 3, 1).base
        ks = KernelSet(mdp, mdp.kernel[None])
        np.testing.assert_array_equal(tabular_robust_agent(ks), value_iteration(mdp).policy)

    @pytest.mark.parametrize("shape", [(2, 2), (2, 3), (3, 2)])
    def test_gridworld_matches_enumeration(self, shape):
        env = GridworldEnv(width=shape[0], height=shape[1], gamma=0.9)
        ks = extract_tabular_kernel(env, [[0.0], [0.5]])
        pol = tabular_robust_agent(ks, 1e-11)
        rect = KernelSet(ks.base, ks.kernels, rectangular=True)
        from rrls import robust_value_iteration
        assert float(robust_value_iteration(rect, 1e-11).values @ ks.base.rho) == pytest.approx(enumerate_robust_value(rect), abs=1e-8)
        # against whole kernels the agent is no worse than any deterministic policy
        mine = float(pessimistic_policy_value(ks, pol, 1e-11)[0] @ ks.base.rho)
        for acts in itertools.product(range(4), repeat=ks.n_states):
            acts = np.array(acts)
            v = np.minimum(*[linear_policy_value(ks.kernels[k], ks.base.reward, 0.9, acts) for k in range(2)])
            assert mine >= float(v @ ks.base.rho) - 1e-8
