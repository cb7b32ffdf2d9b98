"""Advantage actor-critic local training.

Agents learn on-policy with bootstrapped rollout chunks: an episode is
played in segments of at most ``rollout_len`` steps, and after each
segment one Adam step is taken on

    mean_t [ -A_t log pi(a_t|s_t) + c_v (R_t - V(s_t))^2 - c_e H(pi(.|s_t)) ]

where the returns are seeded with the critic's value of the next state
whenever the segment ended before the episode did. The advantage is
treated as a constant built from the value estimates recorded during
collection, so the loss is an exact function of the parameters for
gradient checking. ``rollout_len=None`` recovers whole-episode
Monte-Carlo updates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import envs, kernels, nn
from .errors import DomainError, ShapeError

_LOG_FLOOR = 1e-300  # keeps entropy arithmetic finite when probs underflow


@dataclass
class AgentConfig:
    gamma: float = 0.95
    rollout_len: int | None = 8   # update chunk size; None: whole episodes
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    episodes_per_round: int = 1
    normalize_advantages: bool = True  # False recovers the literal loss
    max_grad_norm: float | None = 0.5  # global-norm clip; None disables

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise DomainError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.rollout_len is not None and self.rollout_len < 1:
            raise DomainError("rollout_len must be >= 1")
        if self.episodes_per_round < 1:
            raise DomainError("episodes_per_round must be >= 1")
        if self.max_grad_norm is not None and self.max_grad_norm <= 0:
            raise DomainError("max_grad_norm must be positive or None")


@dataclass
class AgentProfile:
    """One agent: its task binding, model complexity level, and live state."""

    agent_id: int
    env_spec: envs.EnvSpec
    level: int
    seed: int
    config: AgentConfig
    params: nn.ParamSet
    opt: nn.AdamState


@dataclass
class Trajectory:
    states: np.ndarray        # (T, obs_dim) observations fed to the policy
    actions: np.ndarray       # (T,) int
    rewards: np.ndarray       # (T,)
    values: np.ndarray        # (T,) critic estimates recorded at collection
    bootstrap_value: float    # value of the next state when cut non-terminally
    terminal: bool

    def __len__(self):
        return len(self.actions)


def _chunk(params: nn.ParamSet, env_spec: envs.EnvSpec, coords, start_step: int,
           horizon: int, rng):
    """One fused rollout segment; tests pin its exact equivalence to the
    step-by-step ``envs.step`` / ``nn.forward`` composition."""
    out = kernels.episode_chunk(
        params.data, params.outs, params.ins, envs.env_kind(env_spec), rng,
        np.asarray(coords, dtype=np.float64), start_step, env_spec.max_steps, horizon,
    )
    states, actions, rewards, values, terminal, final_obs, final_coords = out
    bootstrap = 0.0
    if not terminal:
        _, bootstrap = nn.forward(params, final_obs)
    traj = Trajectory(
        states=states,
        actions=actions,
        rewards=rewards,
        values=values,
        bootstrap_value=bootstrap,
        terminal=terminal,
    )
    return traj, tuple(final_coords)


def collect_rollout(agent: AgentProfile, env_spec: envs.EnvSpec, horizon: int, rng) -> Trajectory:
    """Roll the agent's current policy until terminal or ``horizon`` steps."""
    if horizon < 1:
        raise DomainError("horizon must be >= 1")
    coords = envs.reset(env_spec, rng).coords
    traj, _ = _chunk(agent.params, env_spec, coords, 0, horizon, rng)
    return traj


def discounted_returns(traj: Trajectory, gamma: float) -> np.ndarray:
    """R_t = r_t + gamma R_{t+1}, seeded with the bootstrap value if cut."""
    if not 0.0 < gamma < 1.0:
        raise DomainError(f"gamma must lie in (0, 1), got {gamma}")
    acc = 0.0 if traj.terminal else traj.bootstrap_value
    out = np.empty(len(traj), dtype=np.float64)
    for t in range(len(traj) - 1, -1, -1):
        acc = traj.rewards[t] + gamma * acc
        out[t] = acc
    return out


def advantages(traj: Trajectory, returns: np.ndarray) -> np.ndarray:
    """A_t = R_t - V(s_t), the n-step return standing in for the action value."""
    if len(returns) != len(traj):
        raise ShapeError("returns length does not match trajectory")
    return returns - traj.values


def pg_loss_and_grad(params: nn.ParamSet, traj: Trajectory, cfg: AgentConfig):
    """Mean-over-steps actor-critic loss and its exact parameter gradient.

    With ``normalize_advantages`` the advantage vector is standardized per
    chunk; it is still a constant w.r.t. the parameters, so the returned
    gradient stays the exact derivative of the returned loss.
    """
    n_actions = int(params.outs[-1]) - 1
    returns = discounted_returns(traj, cfg.gamma)
    adv = advantages(traj, returns)
    if cfg.normalize_advantages and len(adv) > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    outs = nn.forward_batch(params, traj.states)
    logits = outs[:, :n_actions]
    values = outs[:, -1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    probs = ex / ex.sum(axis=1, keepdims=True)
    logp = np.log(np.maximum(probs, _LOG_FLOOR))
    entropy = -(probs * logp).sum(axis=1)

    T = len(traj)
    idx = np.arange(T)
    actor = -(adv * logp[idx, traj.actions]).mean()
    value_term = cfg.value_coef * ((returns - values) ** 2).mean()
    entropy_term = cfg.entropy_coef * entropy.mean()
    loss = actor + value_term - entropy_term

    head = np.zeros_like(outs)
    head[:, :n_actions] = probs * adv[:, None]
    head[idx, traj.actions] -= adv
    if cfg.entropy_coef != 0.0:
        head[:, :n_actions] += cfg.entropy_coef * probs * (logp + entropy[:, None])
    head[:, -1] = -2.0 * cfg.value_coef * (returns - values)
    head /= T

    grad = nn.traj_backward(params, traj.states, head)
    return float(loss), grad


def local_train_round(agent: AgentProfile, cfg: AgentConfig, rng):
    """One communication round of local training on the agent's own task.

    Runs ``cfg.episodes_per_round`` full episodes, taking one Adam step per
    rollout chunk (chunks bootstrap from the critic when the episode
    continues past them). Mutates the profile's params/optimizer in place
    and returns the updated params, the mean undiscounted episode return,
    and the last chunk's loss.
    """
    spec = agent.env_spec
    horizon = cfg.rollout_len if cfg.rollout_len is not None else spec.max_steps
    episode_returns = []
    last_loss = float("nan")
    for _ in range(cfg.episodes_per_round):
        coords = envs.reset(spec, rng).coords
        step = 0
        total = 0.0
        while True:
            traj, coords = _chunk(agent.params, spec, coords, step, horizon, rng)
            last_loss, grad = pg_loss_and_grad(agent.params, traj, cfg)
            if cfg.max_grad_norm is not None:
                norm = float(np.linalg.norm(grad.data))
                if norm > cfg.max_grad_norm:
                    grad = nn.Gradient(grad.data * (cfg.max_grad_norm / norm),
                                       grad.outs, grad.ins, validate=False)
            agent.params, agent.opt = nn.adam_step(agent.params, grad, agent.opt)
            total += float(traj.rewards.sum())
            step += len(traj)
            if traj.terminal:
                break
        episode_returns.append(total)
    return agent.params, float(np.mean(episode_returns)), last_loss
