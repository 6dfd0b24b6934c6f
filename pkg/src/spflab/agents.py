"""Minimal reference agents consuming detached representations.

tabular_q is plain Q-learning on state indices.  gaussian_actor_critic pairs
a TD-trained Q critic on joint (state, action) representations with an
advantage-weighted regression step for a Gaussian policy on state
representations; exploration noise follows a linear schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import autodiff as ad
from .nn.autodiff import ParamTree, Tensor, backward, zero_grad
from .nn.layers import LayerSpec, forward, forward_data, init_params
from .nn.optim import Adam, ema_update


@dataclass(frozen=True)
class AgentSpec:
    """kind: tabular_q | gaussian_actor_critic.

    discount must equal the auxiliary-task gamma (single source of truth,
    enforced by the training loop)."""

    kind: str
    discount: float
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    lr_q: float = 0.1
    hidden: int = 64
    max_action: float = 2.0
    sigma_start: float = 1.0
    sigma_end: float = 0.15
    sigma_decay_steps: int = 15_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 5_000
    awr_beta: float = 1.0
    awr_weight_cap: float = 20.0
    critic_tau: float = 0.01

    def __post_init__(self):
        if self.kind not in ("tabular_q", "gaussian_actor_critic"):
            raise ValueError(f"unknown agent kind {self.kind!r}")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")


class TabularQAgent:
    """Epsilon-greedy Q-learning over state/action indices."""

    def __init__(self, spec: AgentSpec, n_states: int, n_actions: int):
        self.spec = spec
        self.q = np.zeros((n_states, n_actions))

    def epsilon(self, step: int) -> float:
        s = self.spec
        frac = min(1.0, step / max(1, s.epsilon_decay_steps))
        return s.epsilon_start + frac * (s.epsilon_end - s.epsilon_start)

    def act(self, state_index: int, rng: np.random.Generator, step: int) -> int:
        if rng.random() < self.epsilon(step):
            return int(rng.integers(self.q.shape[1]))
        return int(np.argmax(self.q[state_index]))

    def greedy_action(self, state_index: int) -> int:
        return int(np.argmax(self.q[state_index]))

    def update(self, batch: dict) -> dict:
        lr = self.spec.lr_q
        if lr == 0.0:
            return {"q_delta": 0.0}
        gamma = self.spec.discount
        total = 0.0
        for s, a, r, s2 in zip(
            batch["state_index"], batch["action_index"], batch["reward"],
            batch["next_state_index"],
        ):
            target = r + gamma * self.q[s2].max()
            delta = target - self.q[s, a]
            self.q[s, a] += lr * delta
            total += abs(delta)
        return {"q_delta": total / max(1, len(batch["reward"]))}

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {"agent/q": self.q}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.q[...] = arrays["agent/q"]


class GaussianActorCritic:
    """Continuous-action actor-critic on detached representations.

    The critic runs one TD step on joint representations; the actor runs one
    advantage-weighted regression step toward replayed actions, with the
    advantage measured against the critic's value of the current policy mean.
    """

    def __init__(self, spec: AgentSpec, rep_dim: int, joint_dim: int, action_dim: int,
                 rng: np.random.Generator):
        self.spec = spec
        self.action_dim = action_dim
        h = spec.hidden
        self.actor_stack = (
            LayerSpec("dense", h, "relu"),
            LayerSpec("dense", h, "relu"),
            LayerSpec("dense", action_dim, "tanh"),
        )
        self.critic_stack = (
            LayerSpec("dense", h, "relu"),
            LayerSpec("dense", h, "relu"),
            LayerSpec("dense", 1),
        )
        self.actor = init_params(self.actor_stack, rep_dim, "actor", rng)
        self.critic = init_params(self.critic_stack, joint_dim, "critic", rng)
        self.critic_target = self.critic.copy_values()
        self.opt_actor = Adam(self.actor, lr=spec.lr_actor)
        self.opt_critic = Adam(self.critic, lr=spec.lr_critic)

    def sigma(self, step: int) -> float:
        s = self.spec
        frac = min(1.0, step / max(1, s.sigma_decay_steps))
        return s.sigma_start + frac * (s.sigma_end - s.sigma_start)

    def entropy(self, step: int) -> float:
        return 0.5 * self.action_dim * float(np.log(2.0 * np.pi * np.e * self.sigma(step) ** 2))

    def mean_action(self, reps: np.ndarray) -> np.ndarray:
        """Deterministic policy mean for a batch of representations."""
        out = forward_data(self.actor_stack, self.actor, reps, "actor")
        return self.spec.max_action * out

    def act(self, rep: np.ndarray, rng: np.random.Generator, step: int) -> np.ndarray:
        mean = self.mean_action(rep)[0]
        noisy = mean + self.sigma(step) * rng.standard_normal(self.action_dim)
        return np.clip(noisy, -self.spec.max_action, self.spec.max_action)

    def q_values(self, joint: np.ndarray, target: bool = False) -> np.ndarray:
        params = self.critic_target if target else self.critic
        return forward_data(self.critic_stack, params, joint, "critic")[:, 0]

    def update(self, batch: dict, joint_fn, step: int) -> dict:
        """One critic TD step and one advantage-weighted actor step.

        batch supplies detached representations: "rep" (B, rep_dim) for s,
        "rep_next" for s', "joint" (B, joint_dim) for (s, a), plus "action"
        and "reward".  joint_fn(reps, actions) builds detached joint
        representations for fresh policy actions.
        """
        spec = self.spec
        reps = batch["rep"]
        rewards = batch["reward"]

        next_mean = self.mean_action(batch["rep_next"])
        joint_next = joint_fn(batch["rep_next"], next_mean)
        target_q = rewards + spec.discount * self.q_values(joint_next, target=True)

        critic_loss_value = 0.0
        if spec.lr_critic > 0.0:
            q_pred = forward(self.critic_stack, self.critic, Tensor(batch["joint"]), "critic")
            err = q_pred - Tensor(target_q[:, None])
            critic_loss = ad.mean(err * err)
            zero_grad(self.critic)
            backward(critic_loss, self.critic)
            self.opt_critic.step()
            ema_update(self.critic, self.critic_target, spec.critic_tau)
            critic_loss_value = critic_loss.item()

        actor_loss_value = 0.0
        if spec.lr_actor > 0.0:
            cur_mean = self.mean_action(reps)
            joint_mean = joint_fn(reps, cur_mean)
            advantage = self.q_values(batch["joint"]) - self.q_values(joint_mean)
            weights = np.minimum(np.exp(advantage / spec.awr_beta), spec.awr_weight_cap)
            mean_t = forward(self.actor_stack, self.actor, Tensor(reps), "actor") * spec.max_action
            diff = mean_t - Tensor(batch["action"])
            weighted = Tensor(weights[:, None]) * diff * diff
            actor_loss = ad.mean(ad.sum_(weighted, axis=1))
            zero_grad(self.actor)
            backward(actor_loss, self.actor)
            self.opt_actor.step()
            actor_loss_value = actor_loss.item()

        return {"critic_loss": critic_loss_value, "actor_loss": actor_loss_value}

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name, p in self.actor.items():
            out[f"agent/actor/{name}"] = p.data
        for name, p in self.critic.items():
            out[f"agent/critic/{name}"] = p.data
        for name, p in self.critic_target.items():
            out[f"agent/critic_target/{name}"] = p.data
        out.update(self.opt_actor.state_arrays("agent/opt_actor"))
        out.update(self.opt_critic.state_arrays("agent/opt_critic"))
        out["agent/opt_steps"] = np.array(
            [self.opt_actor.step_count, self.opt_critic.step_count], dtype=np.int64
        )
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.actor.items():
            p.data[...] = arrays[f"agent/actor/{name}"]
        for name, p in self.critic.items():
            p.data[...] = arrays[f"agent/critic/{name}"]
        for name, p in self.critic_target.items():
            p.data[...] = arrays[f"agent/critic_target/{name}"]
        steps = arrays["agent/opt_steps"]
        self.opt_actor.load_state_arrays("agent/opt_actor", arrays, int(steps[0]))
        self.opt_critic.load_state_arrays("agent/opt_critic", arrays, int(steps[1]))
