import numpy as np
import pytest

from spflab.agents import AgentSpec, GaussianActorCritic, TabularQAgent
from spflab.envs import EnvSpec, build_env
from spflab.mdp import TabularMdp
from spflab.rng import stream


def pendulum(horizon=200, integrator="euler", dt=0.05):
    return build_env(EnvSpec(kind="pendulum", horizon=horizon, integrator=integrator,
                             dt=dt), stream(0))


class TestPendulum:
    def test_upright_rest_is_an_equilibrium(self):
        env = pendulum()
        env.reset(state=(0.0, 0.0))
        obs, _, _, _ = env.step(np.zeros(1))
        assert abs(obs[1]) < 1e-6 and abs(obs[2]) < 1e-6  # sin th, thdot stay tiny

    def test_observation_on_unit_circle(self):
        env = pendulum()
        obs = env.reset()
        for _ in range(50):
            assert abs(np.hypot(obs[0], obs[1]) - 1.0) < 1e-9
            obs, _, _, _ = env.step(stream(3).uniform(-2, 2, 1))

    def test_reward_at_rest_bottom(self):
        env = pendulum()
        env.reset(state=(np.pi, 0.0))
        _, reward, _, _ = env.step(np.zeros(1))
        assert abs(reward + np.pi**2) < 1e-9

    def test_torque_clipping_logged(self):
        env = pendulum()
        env.reset(state=(1.0, 0.0))
        _, _, _, info = env.step(np.array([5.0]))
        assert info["clipped"] and info["torque"] == 2.0
        assert env.clip_count == 1

    def test_energy_conserved_with_verlet(self):
        env = pendulum(horizon=1500, integrator="verlet", dt=0.01)
        env.reset(state=(2.0, 0.5))
        previous = env.energy()
        for _ in range(1000):
            env.step(np.zeros(1))
            current = env.energy()
            assert abs(current - previous) < 1e-4
            previous = current

    def test_horizon_raises_done(self):
        env = pendulum(horizon=3)
        env.reset()
        flags = [env.step(np.zeros(1))[2] for _ in range(3)]
        assert flags == [False, False, True]


class TestCycleWalk:
    def test_period_three_sequence(self):
        env = build_env(EnvSpec(kind="cycle_walk", horizon=10, period=3, fixed_start=0),
                        stream(0))
        env.reset()
        visited = [env.step(None)[0][0] for _ in range(5)]
        assert visited == [1.0, 2.0, 0.0, 1.0, 2.0]

    def test_action_is_ignored(self):
        env = build_env(EnvSpec(kind="cycle_walk", horizon=10, period=4, fixed_start=1),
                        stream(0))
        env.reset()
        a_path = [env.step(np.array([9.9]))[0][0] for _ in range(4)]
        env.reset()
        b_path = [env.step(np.array([-3.0]))[0][0] for _ in range(4)]
        assert a_path == b_path


def two_state_deterministic():
    # action 0 stays, action 1 swaps; reward 1 only in state 1
    transition = np.zeros((2, 2, 2))
    transition[0, 0, 0] = transition[1, 0, 1] = 1.0
    transition[0, 1, 1] = transition[1, 1, 0] = 1.0
    return TabularMdp(
        transition=transition,
        reward=np.array([0.0, 1.0]),
        initial_dist=np.array([1.0, 0.0]),
        gamma=0.9,
        embedding=None,
    )


def q_value_iteration(mdp, tol=1e-12):
    q = np.zeros((mdp.n_states, mdp.n_actions))
    while True:
        v = q.max(axis=1)
        new = np.array([
            [mdp.reward[s] + mdp.gamma * mdp.transition[s, a] @ v
             for a in range(mdp.n_actions)]
            for s in range(mdp.n_states)
        ])
        if np.abs(new - q).max() < tol:
            return new
        q = new


class TestTabularQ:
    def test_converges_to_value_iteration(self):
        mdp = two_state_deterministic()
        spec = AgentSpec(kind="tabular_q", discount=0.9, lr_q=0.5,
                         epsilon_start=1.0, epsilon_end=1.0)
        agent = TabularQAgent(spec, 2, 2)
        rng = stream(4)
        env = build_env(EnvSpec(kind="tabular_from_mdp", horizon=50, mdp=mdp), stream(5))
        env.reset()
        for step in range(10_000):
            s = env._state
            a = agent.act(s, rng, step)
            _, r, done, info = env.step(np.array([float(a)]))
            agent.update({
                "state_index": [info["state_index"]],
                "action_index": [info["action_index"]],
                "reward": [r],
                "next_state_index": [info["next_state_index"]],
            })
            if done:
                env.reset()
        assert np.abs(agent.q - q_value_iteration(mdp)).max() < 1e-6

    def test_zero_learning_rate_freezes_agent(self):
        spec = AgentSpec(kind="tabular_q", discount=0.9, lr_q=0.0)
        agent = TabularQAgent(spec, 2, 2)
        agent.update({"state_index": [0], "action_index": [1], "reward": [5.0],
                      "next_state_index": [1]})
        assert np.array_equal(agent.q, np.zeros((2, 2)))


class TestGaussianActorCritic:
    def make_agent(self, lr_actor=1e-3, lr_critic=1e-3):
        spec = AgentSpec(kind="gaussian_actor_critic", discount=0.99,
                         lr_actor=lr_actor, lr_critic=lr_critic, hidden=16)
        return GaussianActorCritic(spec, rep_dim=4, joint_dim=5, action_dim=1,
                                   rng=stream(6))

    def fake_batch(self, rng):
        return {
            "rep": rng.normal(size=(8, 4)),
            "rep_next": rng.normal(size=(8, 4)),
            "joint": rng.normal(size=(8, 5)),
            "action": rng.normal(size=(8, 1)),
            "reward": rng.normal(size=8),
        }

    def test_zero_learning_rates_leave_parameters(self):
        agent = self.make_agent(lr_actor=0.0, lr_critic=0.0)
        actor_before = {k: p.data.copy() for k, p in agent.actor.items()}
        critic_before = {k: p.data.copy() for k, p in agent.critic.items()}
        rng = stream(7)
        agent.update(self.fake_batch(rng), lambda r, a: np.concatenate([r, a], axis=1),
                     step=0)
        assert all(np.array_equal(agent.actor[k].data, v) for k, v in actor_before.items())
        assert all(np.array_equal(agent.critic[k].data, v) for k, v in critic_before.items())

    def test_updates_change_parameters(self):
        agent = self.make_agent()
        before = {k: p.data.copy() for k, p in agent.critic.items()}
        rng = stream(8)
        info = agent.update(self.fake_batch(rng),
                            lambda r, a: np.concatenate([r, a], axis=1), step=0)
        assert info["critic_loss"] > 0
        assert any(not np.array_equal(agent.critic[k].data, v) for k, v in before.items())

    def test_exploration_entropy_decreases_over_schedule(self):
        agent = self.make_agent()
        early = agent.entropy(0)
        late = agent.entropy(agent.spec.sigma_decay_steps)
        assert late < early

    def test_actions_respect_bounds(self):
        agent = self.make_agent()
        rng = stream(9)
        for step in (0, 100, 10_000):
            a = agent.act(rng.normal(size=4), rng, step)
            assert np.all(np.abs(a) <= agent.spec.max_action)
