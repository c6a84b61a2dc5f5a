"""Random instance builders and independent oracles shared by the tests."""

import itertools

import numpy as np
from hypothesis import strategies as st

from rrls.mdp import FiniteMDP
from rrls.robust import KernelSet


def random_stochastic(rng, shape):
    raw = rng.random(shape) + 1e-3
    # sparsify some rows so deterministic transitions get exercised too
    raw = np.where(rng.random(shape) < 0.3, 0.0, raw)
    raw[..., 0] += 1e-3
    return raw / raw.sum(axis=-1, keepdims=True)


def random_mdp(rng, n_states, n_actions, gamma=None):
    gamma = float(rng.uniform(0.0, 0.95)) if gamma is None else gamma
    kernel = random_stochastic(rng, (n_states, n_actions, n_states))
    reward = rng.uniform(-1.0, 1.0, (n_states, n_actions))
    rho = random_stochastic(rng, (n_states,))
    return FiniteMDP(kernel, reward, gamma, rho)


def random_kernel_set(rng, n_states, n_actions, n_kernels, rectangular=True, gamma=None):
    base = random_mdp(rng, n_states, n_actions, gamma)
    kernels = np.stack([random_stochastic(rng, base.kernel.shape) for _ in range(n_kernels)])
    return KernelSet(base, kernels, rectangular)


@st.composite
def mdps(draw, max_states=8, max_actions=4):
    seed = draw(st.integers(0, 2**32 - 1))
    n_s = draw(st.integers(1, max_states))
    n_a = draw(st.integers(1, max_actions))
    return random_mdp(np.random.default_rng(seed), n_s, n_a)


@st.composite
def kernel_sets(draw, max_states=8, max_actions=4, max_kernels=4):
    seed = draw(st.integers(0, 2**32 - 1))
    n_s = draw(st.integers(1, max_states))
    n_a = draw(st.integers(1, max_actions))
    n_k = draw(st.integers(1, max_kernels))
    return random_kernel_set(np.random.default_rng(seed), n_s, n_a, n_k)


def linear_policy_value(kernel, reward, gamma, actions):
    """Exact value of a deterministic policy by a direct linear solve."""
    s = np.arange(len(actions))
    p = kernel[s, actions]
    r = reward[s, actions]
    return np.linalg.solve(np.eye(len(actions)) - gamma * p, r)


def enumerate_robust_value(ks):
    """max over deterministic policies of min over per-state row choices, rho-weighted.

    Brute force over A^S policies and K^S adversary choices (only the rows at
    the policy's own actions matter).
    """
    base = ks.base
    n_s, n_a, n_k = ks.n_states, ks.n_actions, ks.n_kernels
    best = -np.inf
    for actions in itertools.product(range(n_a), repeat=n_s):
        actions = np.array(actions)
        worst = np.full(n_s, np.inf)
        for choice in itertools.product(range(n_k), repeat=n_s):
            kernel = base.kernel.copy()
            for s in range(n_s):
                kernel[s, actions[s]] = ks.kernels[choice[s], s, actions[s]]
            worst = np.minimum(worst, linear_policy_value(kernel, base.reward, base.gamma, actions))
        best = max(best, float(worst @ base.rho))
    return best


def two_state_chain(gamma=0.5):
    """s0 -> s1 surely, s1 absorbing; r = (0, 1); one action."""
    kernel = np.array([[[0.0, 1.0]], [[0.0, 1.0]]])
    return FiniteMDP(kernel, np.array([[0.0], [1.0]]), gamma, np.array([1.0, 0.0]))


def two_kernel_example(rectangular=True):
    """p1: s0->s1, s1->s1; p2: s0->s0, s1->s0; r = (0, 1), gamma 0.5."""
    p1 = np.array([[[0.0, 1.0]], [[0.0, 1.0]]])
    p2 = np.array([[[1.0, 0.0]], [[1.0, 0.0]]])
    base = FiniteMDP(p1, np.array([[0.0], [1.0]]), 0.5, np.array([0.5, 0.5]))
    return KernelSet(base, np.stack([p1, p2]), rectangular)


def coupled_instance():
    """Non-rectangular set where the static adversary is weaker than the recombining one.

    States: 0 start, 1 A, 2 B, 3 C, 4 W (reward 1), 5 Z (absorbing, reward 0).
    Start: action 0 -> A (reward 0), action 1 -> Z (reward 0.3).
    Kernel 1: A->B, B->W, C->Z. Kernel 2: A->C, B->Z, C->W.
    Any whole kernel lets the agent reach W, so the static value of action 0
    is gamma^3 = 0.729 > 0.3; row recombination can route A->B->Z, which is
    what the dynamic game plans against, so its policy takes the 0.3 exit.
    """
    n_s, n_a = 6, 2
    S0, A, B, C, W, Z = range(6)

    def kernel(route):
        k = np.zeros((n_s, n_a, n_s))
        k[S0, 0, A] = 1.0
        k[S0, 1, Z] = 1.0
        for s, nxt in route.items():
            k[s, :, nxt] = 1.0
        k[W, :, Z] = 1.0
        k[Z, :, Z] = 1.0
        return k

    k1 = kernel({A: B, B: W, C: Z})
    k2 = kernel({A: C, B: Z, C: W})
    reward = np.zeros((n_s, n_a))
    reward[S0, 1] = 0.3
    reward[W, :] = 1.0
    rho = np.zeros(n_s)
    rho[S0] = 1.0
    base = FiniteMDP(k1, reward, 0.9, rho)
    return KernelSet(base, np.stack([k1, k2]), rectangular=False)


def random_dyadic_kernel_set(rng, n_states, n_actions, n_kernels):
    """Instance whose backups are computed without rounding.

    Kernel entries are multiples of 1/8, rewards multiples of 1/4 and gamma a
    short dyadic, so every product and sum is exactly representable and the
    contraction inequality can be checked with zero slack.
    """
    def kernel():
        return rng.multinomial(8, np.full(n_states, 1.0 / n_states), size=(n_states, n_actions)) / 8.0
    gamma = float(rng.choice([0.0, 0.25, 0.5, 0.75, 0.875]))
    reward = rng.integers(-16, 17, (n_states, n_actions)) / 4.0
    rho = np.full(n_states, 1.0 / n_states)
    base = FiniteMDP(kernel(), reward, gamma, rho)
    return KernelSet(base, np.stack([kernel() for _ in range(n_kernels)]))


def dyadic_values(rng, n_states):
    return rng.integers(-160, 161, n_states) / 4.0
