"""Self-contained classic-control environments behind one MDP interface.

Both tasks are re-implemented from the canonical dynamics so the simulator
has no external RL-environment dependency:

* cart-pole: 4-dim observation (cart position, cart velocity, pole angle,
  pole angular velocity), actions {0: push left, 1: push right}, +1 reward
  per step, episode ends when the pole tips past 12 degrees, the cart
  leaves +-2.4, or after 200 steps.
* acrobot: two-link pendulum actuated at the middle joint, observation
  (cos q1, sin q1, cos q2, sin q2, dq1, dq2), actions {0, 1, 2} mapped to
  torques {-1, 0, +1}, -1 reward per step, episode ends when the free end
  swings at least one link above the pivot (-cos q1 - cos(q1+q2) > 1) or
  after 500 steps. Both links start pointing down (angles near zero).

Reaching the step cap counts as terminal. ``step`` is a pure function of
(state, action); all randomness enters through ``reset``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError

CARTPOLE_THETA_LIMIT = 12.0 * math.pi / 180.0
CARTPOLE_X_LIMIT = 2.4
CARTPOLE_MAX_STEPS = 200
CARTPOLE_RESET_BOUND = 0.05

ACROBOT_MAX_STEPS = 500
ACROBOT_RESET_BOUND = 0.1
ACROBOT_TORQUES = (-1.0, 0.0, 1.0)


@dataclass(frozen=True)
class EnvSpec:
    kind: str
    state_dim: int
    action_count: int
    max_steps: int
    reward_tag: str


@dataclass(frozen=True)
class EnvState:
    """Internal physical coordinates plus the elapsed step counter.

    cart-pole coords: (x, x_dot, theta, theta_dot);
    acrobot coords: (q1, q2, dq1, dq2).
    """

    coords: tuple
    steps: int


@dataclass(frozen=True)
class StepResult:
    state: EnvState
    obs: np.ndarray
    reward: float
    terminal: bool


def cartpole_spec() -> EnvSpec:
    return EnvSpec("cartpole", 4, 2, CARTPOLE_MAX_STEPS, "per_step_plus1")


def acrobot_spec() -> EnvSpec:
    return EnvSpec("acrobot", 6, 3, ACROBOT_MAX_STEPS, "per_step_minus1")


_SPECS = {"cartpole": cartpole_spec, "acrobot": acrobot_spec}


def spec_for(name: str) -> EnvSpec:
    try:
        return _SPECS[name]()
    except KeyError:
        raise DomainError(f"unknown environment {name!r}") from None


def env_kind(spec: EnvSpec) -> int:
    """Integer tag consumed by the fused episode kernels."""
    return kernels.ENV_CARTPOLE if spec.kind == "cartpole" else kernels.ENV_ACROBOT


def reset(spec: EnvSpec, rng) -> EnvState:
    """Draw the initial physical state (uniform small perturbations)."""
    if spec.kind == "cartpole":
        coords = tuple(rng.uniform(-CARTPOLE_RESET_BOUND, CARTPOLE_RESET_BOUND, size=4))
    else:
        coords = tuple(rng.uniform(-ACROBOT_RESET_BOUND, ACROBOT_RESET_BOUND, size=4))
    return EnvState(coords=coords, steps=0)


def observe(spec: EnvSpec, state: EnvState) -> np.ndarray:
    if spec.kind == "cartpole":
        return np.array(state.coords, dtype=np.float64)
    q1, q2, dq1, dq2 = state.coords
    return np.array(
        [math.cos(q1), math.sin(q1), math.cos(q2), math.sin(q2), dq1, dq2],
        dtype=np.float64,
    )


def step(state: EnvState, action: int, spec: EnvSpec) -> StepResult:
    """Advance one time step; pure in (state, action)."""
    if not 0 <= action < spec.action_count:
        raise DomainError(f"action {action} outside [0, {spec.action_count}) for {spec.kind}")
    steps = state.steps + 1
    if spec.kind == "cartpole":
        force = 10.0 if action == 1 else -10.0
        coords = kernels.cartpole_step(*state.coords, force)
        x, _, theta, _ = coords
        failed = abs(x) > CARTPOLE_X_LIMIT or abs(theta) > CARTPOLE_THETA_LIMIT
        terminal = failed or steps >= spec.max_steps
        reward = 1.0
    else:
        coords = kernels.acrobot_step(*state.coords, ACROBOT_TORQUES[action])
        q1, q2, _, _ = coords
        goal = -math.cos(q1) - math.cos(q1 + q2) > 1.0
        terminal = goal or steps >= spec.max_steps
        reward = -1.0
    new_state = EnvState(coords=coords, steps=steps)
    return StepResult(state=new_state, obs=observe(spec, new_state), reward=reward, terminal=terminal)
