"""Finite tabular MDPs: construction, simulation, and exact policy evaluation.

Conventions used repo-wide:
  * ``transition[s, a, s']`` is the probability of moving to ``s'`` from ``s``
    under action ``a``; the last axis sums to 1.
  * Induced chains are row-stochastic: ``chain[s, s']`` is the mass leaving
    ``s`` for ``s'``.  Distributions therefore evolve as ``p' = chain.T @ p``.
  * Rewards depend on the current state only, ``r_t = reward[s_t]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import as_generator

PROB_ATOL = 1e-12


def _check_distribution(name: str, rows: np.ndarray, atol: float = PROB_ATOL) -> None:
    if np.any(rows < 0):
        raise ValueError(f"{name} has negative entries")
    sums = rows.sum(axis=-1)
    dev = float(np.abs(sums - 1.0).max())
    if dev > atol:
        raise ValueError(f"{name} rows must sum to 1 (max deviation {dev:.3g})")


def _frozen_array(x, dtype=np.float64) -> np.ndarray:
    arr = np.array(x, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TabularMdp:
    """Finite MDP with state-only rewards and a vector embedding per state.

    The embedding maps each state into R^D; the embedded state sequence is the
    signal whose discounted spectrum the rest of the package studies.  The
    default embedding is one-hot (D = number of states).
    """

    transition: np.ndarray      # (S, A, S)
    reward: np.ndarray          # (S,)
    initial_dist: np.ndarray    # (S,)
    gamma: float
    embedding: np.ndarray       # (S, D)
    r_max: float = field(default=0.0)

    def __post_init__(self):
        transition = _frozen_array(self.transition)
        reward = _frozen_array(self.reward)
        initial_dist = _frozen_array(self.initial_dist)
        if transition.ndim != 3 or transition.shape[0] != transition.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {transition.shape}")
        n_states = transition.shape[0]
        if reward.shape != (n_states,):
            raise ValueError(f"reward must have shape ({n_states},), got {reward.shape}")
        if initial_dist.shape != (n_states,):
            raise ValueError(f"initial_dist must have shape ({n_states},), got {initial_dist.shape}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        _check_distribution("transition", transition)
        _check_distribution("initial_dist", initial_dist)
        embedding = self.embedding
        if embedding is None:
            embedding = np.eye(n_states)
        embedding = _frozen_array(embedding)
        if embedding.ndim != 2 or embedding.shape[0] != n_states:
            raise ValueError(f"embedding must have shape ({n_states}, D), got {embedding.shape}")
        r_max = float(self.r_max) if self.r_max else float(np.abs(reward).max(initial=0.0))
        if np.abs(reward).max(initial=0.0) > r_max + PROB_ATOL:
            raise ValueError(f"|reward| exceeds declared r_max={r_max}")
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "initial_dist", initial_dist)
        object.__setattr__(self, "embedding", embedding)
        object.__setattr__(self, "r_max", r_max)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def dim(self) -> int:
        return self.embedding.shape[1]


@dataclass(frozen=True)
class TabularPolicy:
    """Stochastic policy: probs[s, a] is the probability of action a in state s."""

    probs: np.ndarray  # (S, A)

    def __post_init__(self):
        probs = _frozen_array(self.probs)
        if probs.ndim != 2:
            raise ValueError(f"policy probs must be 2-d, got shape {probs.shape}")
        _check_distribution("policy", probs)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "TabularPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions, n_actions: int) -> "TabularPolicy":
        actions = np.asarray(actions, dtype=np.int64)
        probs = np.zeros((actions.shape[0], n_actions))
        probs[np.arange(actions.shape[0]), actions] = 1.0
        return cls(probs)


@dataclass(frozen=True)
class Trajectory:
    """A sampled run.  states has one more entry than actions; rewards[i] is
    the state-only reward collected at states[i], so len(rewards) == len(actions)."""

    states: np.ndarray   # (T+1,) int
    actions: np.ndarray  # (T,) int
    rewards: np.ndarray  # (T,) float

    def __post_init__(self):
        states = _frozen_array(self.states, dtype=np.int64)
        actions = _frozen_array(self.actions, dtype=np.int64)
        rewards = _frozen_array(self.rewards)
        if states.shape[0] != actions.shape[0] + 1:
            raise ValueError("states must contain exactly one more entry than actions")
        if rewards.shape[0] != actions.shape[0]:
            raise ValueError("rewards must align with actions")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "rewards", rewards)

    def __len__(self) -> int:
        return self.actions.shape[0]


def _check_match(mdp: TabularMdp, policy: TabularPolicy) -> None:
    if policy.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(
            f"policy shape {policy.probs.shape} does not match MDP "
            f"({mdp.n_states} states, {mdp.n_actions} actions)"
        )


def induced_chain(mdp: TabularMdp, policy: TabularPolicy) -> np.ndarray:
    """Row-stochastic state chain obtained by averaging transitions over the policy.

    chain[s, s'] = sum_a policy[s, a] * transition[s, a, s'].
    """
    _check_match(mdp, policy)
    return np.einsum("sa,sat->st", policy.probs, mdp.transition)


def discounted_state_distribution(mdp: TabularMdp, policy: TabularPolicy) -> np.ndarray:
    """Discounted occupancy (1 - gamma) * sum_t gamma^t P(s_t = s), as a probability vector."""
    chain = induced_chain(mdp, policy)
    n = mdp.n_states
    d = (1.0 - mdp.gamma) * np.linalg.solve(np.eye(n) - mdp.gamma * chain.T, mdp.initial_dist)
    total = float(d.sum())
    if abs(total - 1.0) > 1e-10 or d.min() < -1e-12:
        raise AssertionError(f"discounted distribution left the simplex (sum={total})")
    return d


def policy_performance(mdp: TabularMdp, policy: TabularPolicy) -> float:
    """Expected discounted return J = E[sum_t gamma^t reward[s_t]].

    Computed from the state value function and cross-checked against the
    discounted-occupancy identity J = <d, reward> / (1 - gamma).
    """
    chain = induced_chain(mdp, policy)
    n = mdp.n_states
    values = np.linalg.solve(np.eye(n) - mdp.gamma * chain, mdp.reward)
    j = float(mdp.initial_dist @ values)
    d = discounted_state_distribution(mdp, policy)
    j_occupancy = float(d @ mdp.reward) / (1.0 - mdp.gamma)
    if abs(j - j_occupancy) > 1e-9 * max(1.0, abs(j)):
        raise AssertionError(
            f"performance identity violated: value route {j} vs occupancy route {j_occupancy}"
        )
    return j


def sample_trajectory(
    mdp: TabularMdp,
    policy: TabularPolicy,
    horizon: int,
    rng: int | np.random.Generator,
) -> Trajectory:
    """Roll out `horizon` steps; reproducible for a given seed or stream."""
    _check_match(mdp, policy)
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    gen = as_generator(rng)
    policy_cdf = np.cumsum(policy.probs, axis=1)
    trans_cdf = np.cumsum(mdp.transition, axis=2)
    states = np.empty(horizon + 1, dtype=np.int64)
    actions = np.empty(horizon, dtype=np.int64)
    s = int(np.searchsorted(np.cumsum(mdp.initial_dist), gen.random(), side="right"))
    states[0] = s
    for t in range(horizon):
        a = int(np.searchsorted(policy_cdf[s], gen.random(), side="right"))
        a = min(a, mdp.n_actions - 1)
        s_next = int(np.searchsorted(trans_cdf[s, a], gen.random(), side="right"))
        s_next = min(s_next, mdp.n_states - 1)
        actions[t] = a
        states[t + 1] = s_next
        s = s_next
    rewards = mdp.reward[states[:-1]]
    return Trajectory(states=states, actions=actions, rewards=rewards)
