"""Interleaved training loop: act, store, auxiliary step, agent step, sync.

The loop is single-threaded and deterministic given (config, seed); only the
evaluation episodes run on snapshot parameters in worker threads, which does
not affect results.  Checkpoints capture parameters, optimiser moments, the
replay buffer, environment state, and generator states, so a resumed run
continues bit-identically.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .agents import AgentSpec, GaussianActorCritic, TabularQAgent
from .envs import EnvSpec, build_env
from .mdp import TabularMdp
from .nn.checkpoint import load_arrays, save_arrays
from .nn.optim import Adam
from .rng import ROLE_AGENT, ROLE_BUFFER, ROLE_ENV, ROLE_EVAL, ROLE_INIT, stream
from .trainer import (
    FreqlossConfig,
    NetConfig,
    ReplayBuffer,
    SpfNetworks,
    auxiliary_step,
    joint_representation,
    one_hot,
    representation,
    target_sync,
)

METRIC_COLUMNS = ("step", "L_pred", "raw_lo_term", "mid_term", "raw_hi_term", "episodic_return")


@dataclass(frozen=True)
class TrainerConfig:
    """Full schedule for one training run.  The desk profile is sized for
    minutes-scale runs; the paper profile keeps the published settings."""

    env_kind: str = "pendulum"
    profile: str = "desk"
    gamma: float = 0.99
    n_freq: int = 128
    total_steps: int = 20_000
    batch_size: int = 64
    buffer_capacity: int = 20_000
    target_tau: float = 0.01
    target_interval: int = 200
    lr_aux: float = 3e-4
    pretrain_collect: int = 1_000
    pretrain_steps: int = 1_000
    eval_interval: int = 2_000
    eval_episodes: int = 5
    log_interval: int = 50
    episode_horizon: int = 200
    k_lo: int = 8
    k_hi: int = 8
    w_lo: float = 1.0
    w_mid: float = 1.0
    w_hi: float = 1.0
    distance: str = "one_minus_cosine"
    encoder_blocks: int = 4
    encoder_growth: int = 16
    encoder_activation: str = "swish"
    encoder_norm: bool = True
    predictor_hidden: int = 128
    proj_hidden: int = 128
    proj_dim: int = 64
    cycle_period: int = 3
    agent_kind: str = "gaussian_actor_critic"
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    lr_q: float = 0.1
    agent_hidden: int = 64
    sigma_start: float = 1.0
    sigma_end: float = 0.15
    awr_beta: float = 1.0


PROFILES = {
    "desk": {},
    "paper": {
        "batch_size": 256,
        "buffer_capacity": 100_000,
        "target_interval": 1_000,
        "pretrain_collect": 10_000,
        "pretrain_steps": 10_000,
        "encoder_blocks": 6,
        "encoder_growth": 40,
        "predictor_hidden": 1024,
        "proj_hidden": 512,
        "proj_dim": 512,
        "lr_aux": 3e-4,
    },
}


def apply_profile(cfg: TrainerConfig) -> TrainerConfig:
    overrides = PROFILES.get(cfg.profile)
    if overrides is None:
        raise ValueError(f"unknown profile {cfg.profile!r}")
    return replace(cfg, **overrides)


class TrainerState:
    """Everything a run mutates, bundled for checkpointing."""

    def __init__(self, cfg: TrainerConfig, seed: int, mdp: TabularMdp | None = None):
        cfg = apply_profile(cfg)
        self.cfg = cfg
        self.seed = seed
        self.mdp = mdp
        self.env_rng = stream(seed, ROLE_ENV)
        self.agent_rng = stream(seed, ROLE_AGENT)
        init_rng = stream(seed, ROLE_INIT)

        if cfg.env_kind == "pendulum":
            env_spec = EnvSpec(kind="pendulum", horizon=cfg.episode_horizon)
        elif cfg.env_kind == "cycle_walk":
            env_spec = EnvSpec(kind="cycle_walk", horizon=cfg.episode_horizon,
                               period=cfg.cycle_period)
        elif cfg.env_kind == "tabular_from_mdp":
            if mdp is None:
                raise ValueError("tabular_from_mdp requires an MDP definition")
            env_spec = EnvSpec(kind="tabular_from_mdp", horizon=cfg.episode_horizon, mdp=mdp)
        else:
            raise ValueError(f"unknown env kind {cfg.env_kind!r}")
        self.env_spec = env_spec
        self.env = build_env(env_spec, self.env_rng)

        self.discrete = self.env.discrete_actions > 0
        action_dim = self.env.discrete_actions if self.discrete else self.env.action_dim
        self.net_cfg = NetConfig(
            state_dim=self.env.state_dim,
            action_dim=action_dim,
            n_freq=cfg.n_freq,
            encoder_blocks=cfg.encoder_blocks,
            encoder_growth=cfg.encoder_growth,
            encoder_activation=cfg.encoder_activation,
            encoder_norm=cfg.encoder_norm,
            predictor_hidden=cfg.predictor_hidden,
            proj_hidden=cfg.proj_hidden,
            proj_dim=cfg.proj_dim,
            k_lo=cfg.k_lo,
            k_hi=cfg.k_hi,
        )
        self.nets = SpfNetworks(self.net_cfg, init_rng)
        self.loss_cfg = FreqlossConfig(
            k_lo=cfg.k_lo, k_hi=cfg.k_hi, distance=cfg.distance,
            w_lo=cfg.w_lo, w_mid=cfg.w_mid, w_hi=cfg.w_hi,
        )
        self.opt = Adam(self.nets.online, lr=cfg.lr_aux)
        self.buffer = ReplayBuffer(
            cfg.buffer_capacity, self.env.state_dim, action_dim, stream(seed, ROLE_BUFFER)
        )

        agent_spec = AgentSpec(
            kind=cfg.agent_kind,
            discount=cfg.gamma,
            lr_actor=cfg.lr_actor,
            lr_critic=cfg.lr_critic,
            lr_q=cfg.lr_q,
            hidden=cfg.agent_hidden,
            sigma_start=cfg.sigma_start,
            sigma_end=cfg.sigma_end,
            awr_beta=cfg.awr_beta,
        )
        if self.discrete:
            n_states = mdp.n_states if mdp is not None else cfg.cycle_period
            self.agent = TabularQAgent(
                replace(agent_spec, kind="tabular_q"), n_states, self.env.discrete_actions
            )
        else:
            self.agent = GaussianActorCritic(
                agent_spec, self.nets.rep_dim, self.nets.joint_dim,
                self.env.action_dim, init_rng,
            )
        self.env_step = 0
        self.aux_step = 0
        self.obs = self.env.reset()
        self.episode_return = 0.0
        self.last_eval = None
        self.rows: list[dict] = []

    # --- action plumbing -------------------------------------------------

    def act(self, explore: bool = True) -> tuple[np.ndarray, dict]:
        """Action for the current observation, via detached representations."""
        if self.discrete:
            state_index = self._current_state_index()
            if explore:
                a = self.agent.act(state_index, self.agent_rng, self.env_step)
            else:
                a = self.agent.greedy_action(state_index)
            return np.array([float(a)]), {"vector": one_hot([a], self.net_cfg.action_dim)[0]}
        rep = representation(self.nets, self.obs)[0]
        if explore:
            action = self.agent.act(rep, self.agent_rng, self.env_step)
        else:
            action = self.agent.mean_action(rep)[0]
        return action, {"vector": action}

    def _current_state_index(self) -> int:
        return int(self.env._state)  # tabular and cycle envs expose the index

    def policy_actions_for(self, batch: dict) -> np.ndarray:
        """Actions the current policy would take at the batch's next states."""
        if self.discrete:
            greedy = np.array(
                [self.agent.greedy_action(int(s)) for s in batch["next_state_index"]]
            )
            return one_hot(greedy, self.net_cfg.action_dim)
        reps = representation(self.nets, batch["next_state"])
        return self.agent.mean_action(reps)

    def random_action(self) -> tuple[np.ndarray, dict]:
        if self.discrete:
            a = int(self.agent_rng.integers(self.env.discrete_actions))
            return np.array([float(a)]), {"vector": one_hot([a], self.net_cfg.action_dim)[0]}
        action = self.agent_rng.uniform(
            -self.env.max_action, self.env.max_action, size=self.env.action_dim
        )
        return action, {"vector": action}

    # --- environment interaction -----------------------------------------

    def env_transition(self, action, vector) -> None:
        next_obs, reward, done, info = self.env.step(action)
        self.buffer.add(self.obs, vector, next_obs, reward, info)
        self.episode_return += reward
        self.obs = self.env.reset() if done else next_obs
        if done:
            self.episode_return = 0.0
        self.env_step += 1

    def agent_update(self) -> dict:
        if len(self.buffer) < self.cfg.batch_size:
            return {}
        batch = self.buffer.sample(self.cfg.batch_size)
        if self.discrete:
            return self.agent.update(batch)
        reps = representation(self.nets, batch["state"])
        reps_next = representation(self.nets, batch["next_state"])
        joint = joint_representation(self.nets, reps, batch["action"])

        def joint_fn(r, a):
            return joint_representation(self.nets, r, a)

        return self.agent.update(
            {"rep": reps, "rep_next": reps_next, "joint": joint,
             "action": batch["action"], "reward": batch["reward"]},
            joint_fn,
            self.env_step,
        )

    # --- evaluation -------------------------------------------------------

    def evaluate(self, n_episodes: int, tag: int) -> float:
        """Mean return of greedy/mean-action episodes on fresh env instances."""

        def run_one(i: int) -> float:
            rng = stream(self.seed, ROLE_EVAL, tag, i)
            env = build_env(self.env_spec, rng)
            obs = env.reset()
            total = 0.0
            done = False
            while not done:
                if self.discrete:
                    a = self.agent.greedy_action(int(env._state))
                    action = np.array([float(a)])
                else:
                    rep = representation(self.nets, obs)[0]
                    action = self.agent.mean_action(rep)[0]
                obs, reward, done, _ = env.step(action)
                total += reward
            return total

        max_workers = int(os.environ.get("SPF_LAB_THREADS", "0")) or min(4, n_episodes)
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            returns = list(pool.map(run_one, range(n_episodes)))
        return float(np.mean(returns))

    # --- persistence --------------------------------------------------------

    def state_arrays(self) -> tuple[dict[str, np.ndarray], dict]:
        arrays = {}
        arrays.update(self.nets.state_arrays())
        arrays.update(self.buffer.state_arrays())
        arrays.update(self.agent.state_arrays())
        arrays.update(self.opt.state_arrays("opt_aux"))
        from dataclasses import asdict

        extra = {
            "env_step": self.env_step,
            "aux_step": self.aux_step,
            "opt_aux_steps": self.opt.step_count,
            "episode_return": self.episode_return,
            "last_eval": self.last_eval,
            "env_snapshot": self.env.state_snapshot(),
            "net_cfg": asdict(self.net_cfg),
            "obs": self.obs.tolist(),
            "rng": {
                "env": _rng_state(self.env_rng),
                "agent": _rng_state(self.agent_rng),
                "buffer": _rng_state(self.buffer.rng),
            },
        }
        return arrays, extra

    def save(self, base: str | Path) -> tuple[Path, Path]:
        arrays, extra = self.state_arrays()
        return save_arrays(base, arrays, step=self.env_step, extra=extra)

    def restore(self, base: str | Path) -> None:
        arrays, _, extra = load_arrays(base)
        self.nets.load_state_arrays(arrays)
        self.buffer.load_state_arrays(arrays)
        self.agent.load_state_arrays(arrays)
        self.opt.load_state_arrays("opt_aux", arrays, int(extra["opt_aux_steps"]))
        self.env_step = int(extra["env_step"])
        self.aux_step = int(extra["aux_step"])
        self.episode_return = float(extra["episode_return"])
        self.last_eval = extra["last_eval"]
        self.env.restore_snapshot(extra["env_snapshot"])
        self.obs = np.asarray(extra["obs"], dtype=np.float64)
        _set_rng_state(self.env_rng, extra["rng"]["env"])
        _set_rng_state(self.agent_rng, extra["rng"]["agent"])
        _set_rng_state(self.buffer.rng, extra["rng"]["buffer"])


def _rng_state(gen: np.random.Generator) -> dict:
    state = gen.bit_generator.state
    return {
        "counter": [int(v) for v in state["state"]["counter"]],
        "key": [int(v) for v in state["state"]["key"]],
        "buffer": [int(v) for v in state["buffer"]],
        "buffer_pos": int(state["buffer_pos"]),
        "has_uint32": int(state["has_uint32"]),
        "uinteger": int(state["uinteger"]),
    }


def _set_rng_state(gen: np.random.Generator, payload: dict) -> None:
    state = gen.bit_generator.state
    state["state"]["counter"] = np.array(payload["counter"], dtype=np.uint64)
    state["state"]["key"] = np.array(payload["key"], dtype=np.uint64)
    state["buffer"] = np.array(payload["buffer"], dtype=np.uint64)
    state["buffer_pos"] = payload["buffer_pos"]
    state["has_uint32"] = payload["has_uint32"]
    state["uinteger"] = payload["uinteger"]
    gen.bit_generator.state = state


@dataclass
class TrainRun:
    rows: list[dict]
    eval_returns: list[tuple[int, float]]
    final_step: int


def training_loop(state: TrainerState, steps: int | None = None) -> TrainRun:
    """Run (or continue) a training schedule on a TrainerState.

    Per environment step: act, store the transition, one auxiliary update,
    resample and run one agent update on detached representations, then
    target sync by counter.  Evaluation episodes run at the configured
    interval; metric rows accumulate at the log interval.
    """
    cfg = state.cfg
    # steps is relative (run this many more); the config total is absolute,
    # so resuming a finished schedule is a no-op
    total = steps if steps is not None else max(cfg.total_steps - state.env_step, 0)
    eval_returns: list[tuple[int, float]] = []
    start_step = state.env_step

    if start_step == 0 and total > 0:
        for _ in range(cfg.pretrain_collect):
            action, extra = state.random_action()
            state.env_transition(action, extra["vector"])
        state.env_step = 0  # collection does not count toward the schedule
        for _ in range(cfg.pretrain_steps):
            state.aux_step += 1
            auxiliary_step(
                state.nets, state.buffer, cfg.batch_size, state.opt,
                state.loss_cfg, state.policy_actions_for, cfg.gamma,
            )
            target_sync(state.nets, cfg.target_tau, state.aux_step, cfg.target_interval)

    end_step = start_step + total
    while state.env_step < end_step:
        action, extra = state.act(explore=True)
        state.env_transition(action, extra["vector"])
        state.aux_step += 1
        metrics = auxiliary_step(
            state.nets, state.buffer, cfg.batch_size, state.opt,
            state.loss_cfg, state.policy_actions_for, cfg.gamma,
        )
        state.agent_update()
        target_sync(state.nets, cfg.target_tau, state.aux_step, cfg.target_interval)
        if cfg.eval_interval > 0 and state.env_step % cfg.eval_interval == 0:
            state.last_eval = state.evaluate(cfg.eval_episodes, tag=state.env_step)
            eval_returns.append((state.env_step, state.last_eval))
        if state.env_step % cfg.log_interval == 0:
            row = {
                "step": state.env_step,
                "L_pred": metrics["loss"] if metrics else float("nan"),
                "raw_lo_term": metrics["raw_lo_term"] if metrics else float("nan"),
                "mid_term": metrics["mid_term"] if metrics else float("nan"),
                "raw_hi_term": metrics["raw_hi_term"] if metrics else float("nan"),
                "episodic_return": state.last_eval,
            }
            state.rows.append(row)
    return TrainRun(rows=state.rows, eval_returns=eval_returns, final_step=state.env_step)


def random_policy_baseline(cfg: TrainerConfig, seed: int, n_episodes: int = 100,
                           mdp: TabularMdp | None = None) -> tuple[float, float]:
    """Mean and standard deviation of random-policy episode returns."""
    cfg = apply_profile(cfg)
    if cfg.env_kind == "pendulum":
        env_spec = EnvSpec(kind="pendulum", horizon=cfg.episode_horizon)
    elif cfg.env_kind == "cycle_walk":
        env_spec = EnvSpec(kind="cycle_walk", horizon=cfg.episode_horizon,
                           period=cfg.cycle_period)
    else:
        env_spec = EnvSpec(kind="tabular_from_mdp", horizon=cfg.episode_horizon, mdp=mdp)
    returns = []
    for i in range(n_episodes):
        rng = stream(seed, ROLE_EVAL, 999_000, i)
        env = build_env(env_spec, rng)
        env.reset()
        total = 0.0
        done = False
        while not done:
            if env.discrete_actions > 0:
                action = np.array([float(rng.integers(env.discrete_actions))])
            else:
                action = rng.uniform(-env.max_action, env.max_action, size=env.action_dim)
            _, reward, done, _ = env.step(action)
            total += reward
        returns.append(total)
    return float(np.mean(returns)), float(np.std(returns))
