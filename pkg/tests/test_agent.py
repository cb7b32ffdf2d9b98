"""Local training: rollouts, returns, advantages, policy-gradient loss."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collabrl import envs, nn
from collabrl.agent import (
    AgentConfig,
    AgentProfile,
    Trajectory,
    advantages,
    collect_rollout,
    discounted_returns,
    local_train_round,
    pg_loss_and_grad,
)
from collabrl.errors import DomainError, ShapeError
from collabrl.orchestrator import family_shapes
from collabrl.rng import STREAM_TRAIN, rng_for


def make_agent(seed=0, env="cartpole", hidden=(16, 16), lr=1e-3):
    spec = envs.spec_for(env)
    params = nn.init_params(family_shapes(spec, hidden), seed)
    return AgentProfile(0, spec, 1, seed, AgentConfig(), params,
                        nn.init_adam(params, lr=lr))


def synthetic_trajectory(rng, n_actions=3, obs_dim=4, length=6, values=None):
    states = rng.normal(size=(length, obs_dim))
    actions = rng.integers(0, n_actions, size=length)
    rewards = rng.normal(size=length)
    if values is None:
        values = rng.normal(size=length)
    return Trajectory(
        states=states,
        actions=actions,
        rewards=rewards,
        values=np.asarray(values, dtype=np.float64),
        bootstrap_value=float(rng.normal()),
        terminal=bool(rng.integers(2)),
    )


class TestCollectRollout:
    def test_horizon_one_gives_single_transition(self):
        agent = make_agent()
        traj = collect_rollout(agent, agent.env_spec, 1, np.random.default_rng(0))
        assert len(traj) == 1
        assert not traj.terminal  # cartpole never ends after one step

    def test_horizon_validation(self):
        agent = make_agent()
        with pytest.raises(DomainError):
            collect_rollout(agent, agent.env_spec, 0, np.random.default_rng(0))

    def test_seeded_rollout_replays_identically(self):
        agent = make_agent(seed=3)
        a = collect_rollout(agent, agent.env_spec, 200, np.random.default_rng(5))
        b = collect_rollout(agent, agent.env_spec, 200, np.random.default_rng(5))
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.actions, b.actions)
        assert a.bootstrap_value == b.bootstrap_value

    def test_episode_cap_respected_over_1000_runs(self):
        agent = make_agent(seed=4)
        rng = np.random.default_rng(6)
        for _ in range(1000):
            traj = collect_rollout(agent, agent.env_spec, 200, rng)
            assert 1 <= len(traj) <= 200

    def test_nonterminal_cut_records_bootstrap(self):
        agent = make_agent(seed=5)
        traj = collect_rollout(agent, agent.env_spec, 3, np.random.default_rng(2))
        assert not traj.terminal
        # The bootstrap must be the value head of the next observation.
        assert traj.bootstrap_value != 0.0


class TestDiscountedReturns:
    def test_hand_computed_example(self):
        traj = Trajectory(
            states=np.zeros((3, 1)), actions=np.zeros(3, dtype=np.int64),
            rewards=np.array([1.0, 1.0, 1.0]), values=np.zeros(3),
            bootstrap_value=0.0, terminal=True,
        )
        assert np.allclose(discounted_returns(traj, 0.5), [1.75, 1.5, 1.0], atol=1e-15)

    def test_single_terminal_reward(self):
        traj = Trajectory(
            states=np.zeros((1, 1)), actions=np.zeros(1, dtype=np.int64),
            rewards=np.array([3.25]), values=np.zeros(1),
            bootstrap_value=0.0, terminal=True,
        )
        assert discounted_returns(traj, 0.9)[0] == 3.25

    @given(st.integers(1, 64), st.floats(0.05, 0.99), st.integers(0, 2**31), st.booleans())
    @settings(max_examples=100, deadline=None)
    def test_matches_double_loop_oracle(self, length, gamma, seed, terminal):
        rng = np.random.default_rng(seed)
        traj = synthetic_trajectory(rng, length=length)
        traj.terminal = terminal
        got = discounted_returns(traj, gamma)
        tail = 0.0 if terminal else traj.bootstrap_value
        for t in range(length):
            expect = sum(gamma**i * traj.rewards[t + i] for i in range(length - t))
            expect += gamma ** (length - t) * tail
            assert got[t] == pytest.approx(expect, rel=1e-12, abs=1e-12)

    def test_gamma_domain(self):
        traj = synthetic_trajectory(np.random.default_rng(0))
        with pytest.raises(DomainError):
            discounted_returns(traj, 1.0)


class TestAdvantages:
    def test_perfect_critic_gives_zero(self):
        rng = np.random.default_rng(1)
        traj = synthetic_trajectory(rng)
        returns = discounted_returns(traj, 0.9)
        traj.values = returns.copy()
        assert np.all(advantages(traj, returns) == 0.0)

    def test_zero_critic_gives_returns(self):
        rng = np.random.default_rng(2)
        traj = synthetic_trajectory(rng, values=np.zeros(6))
        returns = discounted_returns(traj, 0.9)
        assert np.array_equal(advantages(traj, returns), returns)

    def test_elementwise_subtraction_oracle(self):
        rng = np.random.default_rng(3)
        traj = synthetic_trajectory(rng)
        returns = discounted_returns(traj, 0.8)
        got = advantages(traj, returns)
        for t in range(len(traj)):
            assert got[t] == returns[t] - traj.values[t]

    def test_length_mismatch(self):
        traj = synthetic_trajectory(np.random.default_rng(4))
        with pytest.raises(ShapeError):
            advantages(traj, np.zeros(len(traj) + 1))


class TestPolicyGradientLoss:
    def _traj_on_net(self, params, rng, length=5):
        """Trajectory whose values come from the net (needed for exactness)."""
        obs_dim = int(params.ins[0])
        n_actions = int(params.outs[-1]) - 1
        states = rng.normal(size=(length, obs_dim))
        outs = nn.forward_batch(params, states)
        return Trajectory(
            states=states,
            actions=rng.integers(0, n_actions, size=length),
            rewards=rng.normal(size=length),
            values=outs[:, -1].copy(),
            bootstrap_value=float(rng.normal()),
            terminal=bool(rng.integers(2)),
        )

    def test_zero_advantage_zero_coefficients(self):
        rng = np.random.default_rng(10)
        params = nn.init_params([(4, 8), (8, 4)], 1)
        cfg = AgentConfig(entropy_coef=0.0, value_coef=0.0)
        traj = self._traj_on_net(params, rng)
        # Make the critic exact: values == returns => advantages == 0.
        traj.values = discounted_returns(traj, cfg.gamma)
        loss, grad = pg_loss_and_grad(params, traj, cfg)
        # Value term and entropy term are disabled; actor term has A == 0.
        assert loss == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(grad.data, 0.0, atol=1e-12)

    def test_single_step_uniform_logits_closed_form(self):
        # Zero parameters give logits [0, 0]: actor loss is -log(0.5).
        params = nn.ParamSet.from_arrays(
            [np.zeros((3, 2))], [np.zeros(3)]
        )
        traj = Trajectory(
            states=np.array([[0.3, -0.7]]),
            actions=np.array([0]),
            rewards=np.array([1.0]),
            values=np.array([0.0]),
            bootstrap_value=0.0,
            terminal=True,
        )
        cfg = AgentConfig(gamma=0.5, entropy_coef=0.0, value_coef=0.0)
        loss, _ = pg_loss_and_grad(params, traj, cfg)
        assert loss == pytest.approx(-np.log(0.5), rel=1e-12)

    def test_gradient_matches_finite_differences_100_instances(self):
        rng = np.random.default_rng(77)
        h = 1e-5
        for _ in range(100):
            dims = [int(rng.integers(2, 6)) for _ in range(rng.integers(2, 4))]
            dims.append(int(rng.integers(2, 5)))  # action_count+1 >= 2
            shapes = [(dims[k], dims[k + 1]) for k in range(len(dims) - 1)]
            params = nn.init_params(shapes, int(rng.integers(2**31)))
            params = nn.ParamSet(params.data + rng.normal(scale=0.2, size=params.data.size),
                                 params.outs, params.ins)
            cfg = AgentConfig(
                gamma=float(rng.uniform(0.5, 0.99)),
                entropy_coef=float(rng.uniform(0.0, 0.05)),
                value_coef=float(rng.uniform(0.0, 1.0)),
            )
            traj = self._traj_on_net(params, rng, length=int(rng.integers(1, 7)))
            _, grad = pg_loss_and_grad(params, traj, cfg)
            idx = rng.choice(params.data.size, size=min(10, params.data.size), replace=False)
            for j in idx:
                up = params.data.copy()
                up[j] += h
                dn = params.data.copy()
                dn[j] -= h
                lu, _ = pg_loss_and_grad(nn.ParamSet(up, params.outs, params.ins), traj, cfg)
                ld, _ = pg_loss_and_grad(nn.ParamSet(dn, params.outs, params.ins), traj, cfg)
                fd = (lu - ld) / (2.0 * h)
                assert grad.data[j] == pytest.approx(fd, rel=1e-4, abs=1e-6)


class TestLocalTrainRound:
    def test_zero_learning_rate_is_noop(self):
        agent = make_agent(seed=1, lr=0.0)
        before = agent.params.data.copy()
        _, ret, loss = local_train_round(agent, agent.config, np.random.default_rng(3))
        assert np.array_equal(agent.params.data, before)
        assert np.isfinite(ret) and np.isfinite(loss)

    def test_seeded_run_reproducible(self):
        results = []
        for _ in range(2):
            agent = make_agent(seed=2)
            stream = [local_train_round(agent, agent.config, np.random.default_rng(100 + m))
                      for m in range(5)]
            results.append([(r, l) for _, r, l in stream])
        assert results[0] == results[1]

    def test_multiple_episodes_per_round(self):
        agent = make_agent(seed=3)
        cfg = AgentConfig(episodes_per_round=3, rollout_len=None)
        _, ret, _ = local_train_round(agent, cfg, np.random.default_rng(4))
        assert np.isfinite(ret)
        # Whole-episode mode takes exactly one optimizer step per episode.
        assert agent.opt.step == 3

    def test_chunked_updates_step_per_chunk(self):
        agent = make_agent(seed=3)
        cfg = AgentConfig(episodes_per_round=1, rollout_len=8)
        local_train_round(agent, cfg, np.random.default_rng(4))
        assert agent.opt.step >= 2  # several chunks per episode

    @pytest.mark.slow
    def test_learning_progress_cartpole(self):
        # 500 rounds of single-agent training must beat the first-10 mean in
        # at least 4 of 5 seeds.
        wins = 0
        for seed in range(1, 6):
            spec = envs.cartpole_spec()
            params = nn.init_params(family_shapes(spec, (128, 128)), seed)
            agent = AgentProfile(0, spec, 1, seed, AgentConfig(), params,
                                 nn.init_adam(params, lr=1e-3))
            rets = []
            for m in range(1, 501):
                _, ret, _ = local_train_round(agent, agent.config,
                                              rng_for(seed, STREAM_TRAIN, 0, m))
                rets.append(ret)
            wins += np.mean(rets[-10:]) > np.mean(rets[:10])
        assert wins >= 4
