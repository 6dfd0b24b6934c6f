"""Built-in environments: tabular MDP wrapper, deterministic cycle walk, pendulum.

Each environment holds its own mutable state and random stream; use one
instance per thread.  step() returns (observation, reward, done, info) and
done is raised purely by the episode horizon.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp import TabularMdp
from .rng import as_generator

# Pendulum constants: rod of mass m and length l in gravity g, torque-limited,
# integrated at dt. theta is measured from upright.
PENDULUM_G = 10.0
PENDULUM_L = 1.0
PENDULUM_M = 1.0
PENDULUM_DT = 0.05
PENDULUM_MAX_TORQUE = 2.0
PENDULUM_MAX_SPEED = 8.0


@dataclass(frozen=True)
class EnvSpec:
    """kind: tabular_from_mdp | cycle_walk | pendulum."""

    kind: str
    horizon: int
    mdp: TabularMdp | None = None
    period: int = 3
    embedding: np.ndarray | None = None   # cycle_walk state embeddings, default scalar index
    integrator: str = "euler"             # pendulum: euler (semi-implicit) | verlet
    dt: float = PENDULUM_DT
    fixed_start: int | None = None        # cycle_walk / tabular deterministic start

    def __post_init__(self):
        if self.kind not in ("tabular_from_mdp", "cycle_walk", "pendulum"):
            raise ValueError(f"unknown env kind {self.kind!r}")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if self.kind == "tabular_from_mdp" and self.mdp is None:
            raise ValueError("tabular_from_mdp needs an mdp")
        if self.kind == "pendulum" and self.integrator not in ("euler", "verlet"):
            raise ValueError(f"unknown integrator {self.integrator!r}")


def build_env(spec: EnvSpec, rng: int | np.random.Generator):
    gen = as_generator(rng)
    if spec.kind == "tabular_from_mdp":
        return TabularEnv(spec, gen)
    if spec.kind == "cycle_walk":
        return CycleWalkEnv(spec, gen)
    return PendulumEnv(spec, gen)


class TabularEnv:
    """Presents a tabular MDP through its state embeddings; actions are discrete
    indices (a length-1 float action is rounded and clipped)."""

    def __init__(self, spec: EnvSpec, rng: np.random.Generator):
        self.spec = spec
        self.mdp = spec.mdp
        self.rng = rng
        self.state_dim = self.mdp.dim
        self.action_dim = 1
        self.discrete_actions = self.mdp.n_actions
        self._state = 0
        self._t = 0

    def reset(self) -> np.ndarray:
        if self.spec.fixed_start is not None:
            self._state = int(self.spec.fixed_start)
        else:
            cdf = np.cumsum(self.mdp.initial_dist)
            self._state = int(np.searchsorted(cdf, self.rng.random(), side="right"))
        self._t = 0
        return self.mdp.embedding[self._state].copy()

    def step(self, action) -> tuple[np.ndarray, float, bool, dict]:
        a = int(np.clip(np.rint(np.asarray(action).ravel()[0]), 0, self.mdp.n_actions - 1))
        reward = float(self.mdp.reward[self._state])
        cdf = np.cumsum(self.mdp.transition[self._state, a])
        s_next = int(np.searchsorted(cdf, self.rng.random(), side="right"))
        s_next = min(s_next, self.mdp.n_states - 1)
        info = {"state_index": self._state, "action_index": a, "next_state_index": s_next}
        self._state = s_next
        self._t += 1
        done = self._t >= self.spec.horizon
        return self.mdp.embedding[s_next].copy(), reward, done, info

    def state_snapshot(self) -> dict:
        return {"state": self._state, "t": self._t}

    def restore_snapshot(self, snap: dict) -> None:
        self._state = int(snap["state"])
        self._t = int(snap["t"])


class CycleWalkEnv:
    """Deterministic walk around a cycle of known period; autonomous, the
    action is ignored.  Default embedding of state i is the scalar i."""

    def __init__(self, spec: EnvSpec, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        if spec.embedding is not None:
            self.embedding = np.asarray(spec.embedding, dtype=np.float64)
            if self.embedding.shape[0] != spec.period:
                raise ValueError("cycle embedding must have one row per state")
        else:
            self.embedding = np.arange(spec.period, dtype=np.float64)[:, None]
        self.state_dim = self.embedding.shape[1]
        self.action_dim = 1
        self.discrete_actions = 1
        self._state = 0
        self._t = 0

    def reset(self) -> np.ndarray:
        if self.spec.fixed_start is not None:
            self._state = int(self.spec.fixed_start) % self.spec.period
        else:
            self._state = int(self.rng.integers(self.spec.period))
        self._t = 0
        return self.embedding[self._state].copy()

    def step(self, action) -> tuple[np.ndarray, float, bool, dict]:
        info = {"state_index": self._state, "action_index": 0}
        self._state = (self._state + 1) % self.spec.period
        info["next_state_index"] = self._state
        self._t += 1
        done = self._t >= self.spec.horizon
        return self.embedding[self._state].copy(), 0.0, done, info

    def state_snapshot(self) -> dict:
        return {"state": self._state, "t": self._t}

    def restore_snapshot(self, snap: dict) -> None:
        self._state = int(snap["state"])
        self._t = int(snap["t"])


class PendulumEnv:
    """Torque-limited rod pendulum; observation (cos th, sin th, thdot).

    Dynamics thddot = -(3 g / 2 l) sin(th + pi) + (3 / m l^2) u, reward
    -(wrapped th^2 + 0.1 thdot^2 + 0.001 u^2).  The default integrator is
    semi-implicit Euler; "verlet" (velocity Verlet, no speed clamp) is
    provided for energy-conservation checks.
    """

    def __init__(self, spec: EnvSpec, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        self.state_dim = 3
        self.action_dim = 1
        self.discrete_actions = 0
        self.max_action = PENDULUM_MAX_TORQUE
        self.clip_count = 0
        self._th = 0.0
        self._thdot = 0.0
        self._t = 0

    def reset(self, state: tuple[float, float] | None = None) -> np.ndarray:
        if state is not None:
            self._th, self._thdot = float(state[0]), float(state[1])
        else:
            self._th = self.rng.uniform(-np.pi, np.pi)
            self._thdot = self.rng.uniform(-1.0, 1.0)
        self._t = 0
        return self._obs()

    def _obs(self) -> np.ndarray:
        return np.array([np.cos(self._th), np.sin(self._th), self._thdot])

    @staticmethod
    def _accel(th: float, u: float) -> float:
        return (
            -3.0 * PENDULUM_G / (2.0 * PENDULUM_L) * np.sin(th + np.pi)
            + 3.0 / (PENDULUM_M * PENDULUM_L**2) * u
        )

    def step(self, action) -> tuple[np.ndarray, float, bool, dict]:
        raw = float(np.asarray(action).ravel()[0])
        u = float(np.clip(raw, -PENDULUM_MAX_TORQUE, PENDULUM_MAX_TORQUE))
        if u != raw:
            self.clip_count += 1
        th_wrapped = ((self._th + np.pi) % (2.0 * np.pi)) - np.pi
        reward = -(th_wrapped**2 + 0.1 * self._thdot**2 + 0.001 * u**2)
        dt = self.spec.dt
        if self.spec.integrator == "euler":
            self._thdot += self._accel(self._th, u) * dt
            self._thdot = float(np.clip(self._thdot, -PENDULUM_MAX_SPEED, PENDULUM_MAX_SPEED))
            self._th += self._thdot * dt
        else:
            a0 = self._accel(self._th, u)
            self._th += self._thdot * dt + 0.5 * a0 * dt**2
            a1 = self._accel(self._th, u)
            self._thdot += 0.5 * (a0 + a1) * dt
        self._t += 1
        done = self._t >= self.spec.horizon
        return self._obs(), reward, done, {"torque": u, "clipped": u != raw}

    def energy(self) -> float:
        """Mechanical energy of the free rod (zero-torque invariant)."""
        kinetic = PENDULUM_M * PENDULUM_L**2 * self._thdot**2 / 6.0
        potential = PENDULUM_M * PENDULUM_G * (PENDULUM_L / 2.0) * np.cos(self._th)
        return float(kinetic + potential)

    def state_snapshot(self) -> dict:
        return {"th": self._th, "thdot": self._thdot, "t": self._t, "clip_count": self.clip_count}

    def restore_snapshot(self, snap: dict) -> None:
        self._th = float(snap["th"])
        self._thdot = float(snap["thdot"])
        self._t = int(snap["t"])
        self.clip_count = int(snap.get("clip_count", 0))
