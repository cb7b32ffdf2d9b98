"""Pure NumPy / pure Python implementations of the hot numerical kernels.

This is the fallback backend used when the compiled extension is not
available. Both backends expose the same functions with the same
semantics; ``tests/test_kernels.py`` checks their numerical agreement and
``benchmarks/bench_kernels.py`` compares their speed.

Dense-network kernels operate on the packed parameter layout: one flat
float64 array holding, per layer, the row-major ``(out_dim, in_dim)``
weight matrix followed by the ``(out_dim,)`` bias vector; ``outs``/``ins``
are int64 arrays of per-layer dimensions. Every layer applies tanh except
the last, which stays linear.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND_NAME = "reference"

# Cart-pole physics (de-facto standard constants).
CP_GRAVITY = 9.8
CP_CART_MASS = 1.0
CP_POLE_MASS = 0.1
CP_TOTAL_MASS = CP_CART_MASS + CP_POLE_MASS
CP_HALF_LENGTH = 0.5
CP_POLEMASS_LENGTH = CP_POLE_MASS * CP_HALF_LENGTH
CP_DT = 0.02

# Acrobot physics (de-facto standard constants, unit links).
AB_M1 = 1.0
AB_M2 = 1.0
AB_L1 = 1.0
AB_LC1 = 0.5
AB_LC2 = 0.5
AB_I1 = 1.0
AB_I2 = 1.0
AB_G = 9.8
AB_DT = 0.2
AB_MAX_VEL1 = 4.0 * math.pi
AB_MAX_VEL2 = 9.0 * math.pi


def layer_views(packed, outs, ins):
    """Zero-copy per-layer (weight, bias) views into a packed array."""
    views = []
    off = 0
    for k in range(len(outs)):
        o = int(outs[k])
        i = int(ins[k])
        w = packed[off : off + o * i].reshape(o, i)
        off += o * i
        b = packed[off : off + o]
        off += o
        views.append((w, b))
    return views


def mlp_forward(packed, outs, ins, x):
    """Single-state forward pass; returns the final linear layer output."""
    h = x
    last = len(outs) - 1
    for k, (w, b) in enumerate(layer_views(packed, outs, ins)):
        h = w @ h + b
        if k != last:
            np.tanh(h, out=h)
    return h


def mlp_forward_batch(packed, outs, ins, states):
    """Forward pass over a batch of states (rows); returns (T, out) outputs."""
    h = states
    last = len(outs) - 1
    for k, (w, b) in enumerate(layer_views(packed, outs, ins)):
        h = h @ w.T + b
        if k != last:
            np.tanh(h, out=h)
    return h


def mlp_traj_backward(packed, outs, ins, states, head_grads):
    """Exact gradient of sum_t <head_grads[t], net(states[t])> in all parameters.

    Recomputes the forward activations for the whole batch, then runs
    reverse-mode accumulation. Returns a packed gradient array congruent
    with ``packed``, summed over the batch rows.
    """
    views = layer_views(packed, outs, ins)
    acts = [states]
    h = states
    for w, b in views[:-1]:
        h = np.tanh(h @ w.T + b)
        acts.append(h)
    grad = np.empty_like(packed)
    gviews = layer_views(grad, outs, ins)
    delta = head_grads
    for k in range(len(views) - 1, -1, -1):
        gw, gb = gviews[k]
        gw[:] = delta.T @ acts[k]
        gb[:] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ views[k][0]) * (1.0 - acts[k] * acts[k])
    return grad


def adam_update(param, grad, m, v, step, lr, beta1, beta2, eps):
    """One bias-corrected Adam update, in place on param/m/v (flat arrays)."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1**step)
    vhat = v / (1.0 - beta2**step)
    param -= lr * mhat / (np.sqrt(vhat) + eps)


def cartpole_step(x, x_dot, theta, theta_dot, force):
    """One Euler step of the cart-pole dynamics under a signed push force."""
    cos_t = math.cos(theta)
    sin_t = math.sin(theta)
    temp = (force + CP_POLEMASS_LENGTH * theta_dot * theta_dot * sin_t) / CP_TOTAL_MASS
    theta_acc = (CP_GRAVITY * sin_t - cos_t * temp) / (
        CP_HALF_LENGTH * (4.0 / 3.0 - CP_POLE_MASS * cos_t * cos_t / CP_TOTAL_MASS)
    )
    x_acc = temp - CP_POLEMASS_LENGTH * theta_acc * cos_t / CP_TOTAL_MASS
    return (
        x + CP_DT * x_dot,
        x_dot + CP_DT * x_acc,
        theta + CP_DT * theta_dot,
        theta_dot + CP_DT * theta_acc,
    )


def _acrobot_dsdt(th1, th2, dth1, dth2, torque):
    c2 = math.cos(th2)
    s2 = math.sin(th2)
    d1 = (
        AB_M1 * AB_LC1 * AB_LC1
        + AB_M2 * (AB_L1 * AB_L1 + AB_LC2 * AB_LC2 + 2.0 * AB_L1 * AB_LC2 * c2)
        + AB_I1
        + AB_I2
    )
    d2 = AB_M2 * (AB_LC2 * AB_LC2 + AB_L1 * AB_LC2 * c2) + AB_I2
    phi2 = AB_M2 * AB_LC2 * AB_G * math.cos(th1 + th2 - math.pi / 2.0)
    phi1 = (
        -AB_M2 * AB_L1 * AB_LC2 * dth2 * dth2 * s2
        - 2.0 * AB_M2 * AB_L1 * AB_LC2 * dth2 * dth1 * s2
        + (AB_M1 * AB_LC1 + AB_M2 * AB_L1) * AB_G * math.cos(th1 - math.pi / 2.0)
        + phi2
    )
    ddth2 = (
        torque + d2 / d1 * phi1 - AB_M2 * AB_L1 * AB_LC2 * dth1 * dth1 * s2 - phi2
    ) / (AB_M2 * AB_LC2 * AB_LC2 + AB_I2 - d2 * d2 / d1)
    ddth1 = -(d2 * ddth2 + phi1) / d1
    return dth1, dth2, ddth1, ddth2


def _wrap_pi(x):
    x = math.fmod(x + math.pi, 2.0 * math.pi)
    if x < 0.0:
        x += 2.0 * math.pi
    return x - math.pi


ENV_CARTPOLE = 0
ENV_ACROBOT = 1

CP_THETA_LIMIT = 12.0 * math.pi / 180.0
CP_X_LIMIT = 2.4
CP_RESET_BOUND = 0.05
AB_RESET_BOUND = 0.1


def _reset_coords(env_kind, rng):
    bound = CP_RESET_BOUND if env_kind == ENV_CARTPOLE else AB_RESET_BOUND
    return rng.uniform(-bound, bound, 4)


def _obs_of(env_kind, coords):
    if env_kind == ENV_CARTPOLE:
        return np.asarray(coords, dtype=np.float64)
    q1, q2, dq1, dq2 = coords
    return np.array(
        [math.cos(q1), math.sin(q1), math.cos(q2), math.sin(q2), dq1, dq2],
        dtype=np.float64,
    )


def _sample_with(logits, u):
    """Softmax draw from one pre-drawn uniform (max-subtraction, scaled walk)."""
    zs = [float(v) for v in logits]
    zmax = max(zs)
    es = [math.exp(v - zmax) for v in zs]
    scaled = u * sum(es)
    acc = 0.0
    for idx, e in enumerate(es):
        acc += e
        if scaled < acc:
            return idx
    return len(es) - 1


def episode_chunk(packed, outs, ins, env_kind, rng, coords, start_step, cap, horizon):
    """Advance one policy-rollout chunk from the given physical coords.

    Consumes exactly ``horizon`` variates from ``rng`` (one block of
    per-step action uniforms; the caller owns the reset draw). Returns
    (states, actions, rewards, values, terminal, final_obs, final_coords);
    ``terminal`` is False only when the horizon cut the chunk before the
    environment ended the episode.
    """
    coords = tuple(float(c) for c in coords)
    u = rng.random(horizon)
    n_act = int(outs[-1]) - 1
    states, actions, rewards, values = [], [], [], []
    terminal = False
    for t in range(horizon):
        obs = _obs_of(env_kind, coords)
        out = mlp_forward(packed, outs, ins, obs)
        action = _sample_with(out[:n_act], u[t])
        states.append(obs)
        actions.append(action)
        values.append(float(out[n_act]))
        if env_kind == ENV_CARTPOLE:
            force = 10.0 if action == 1 else -10.0
            coords = cartpole_step(*coords, force)
            rewards.append(1.0)
            failed = abs(coords[0]) > CP_X_LIMIT or abs(coords[2]) > CP_THETA_LIMIT
            terminal = failed or start_step + t + 1 >= cap
        else:
            coords = acrobot_step(*coords, float(action - 1))
            rewards.append(-1.0)
            goal = -math.cos(coords[0]) - math.cos(coords[0] + coords[1]) > 1.0
            terminal = goal or start_step + t + 1 >= cap
        if terminal:
            break
    return (
        np.asarray(states, dtype=np.float64),
        np.asarray(actions, dtype=np.int64),
        np.asarray(rewards, dtype=np.float64),
        np.asarray(values, dtype=np.float64),
        terminal,
        _obs_of(env_kind, coords),
        np.asarray(coords, dtype=np.float64),
    )


def episode_return(packed, outs, ins, env_kind, rng, cap):
    """Total undiscounted return of one full episode (no recording).

    Consumes exactly 4 + cap variates from ``rng``, like episode_collect
    at horizon == cap.
    """
    coords = tuple(_reset_coords(env_kind, rng))
    u = rng.random(cap)
    n_act = int(outs[-1]) - 1
    total = 0.0
    for t in range(cap):
        obs = _obs_of(env_kind, coords)
        out = mlp_forward(packed, outs, ins, obs)
        action = _sample_with(out[:n_act], u[t])
        if env_kind == ENV_CARTPOLE:
            force = 10.0 if action == 1 else -10.0
            coords = cartpole_step(*coords, force)
            total += 1.0
            if abs(coords[0]) > CP_X_LIMIT or abs(coords[2]) > CP_THETA_LIMIT or t + 1 >= cap:
                break
        else:
            coords = acrobot_step(*coords, float(action - 1))
            total += -1.0
            if -math.cos(coords[0]) - math.cos(coords[0] + coords[1]) > 1.0 or t + 1 >= cap:
                break
    return total


def acrobot_step(th1, th2, dth1, dth2, torque):
    """One classical RK4 step of the two-link underactuated dynamics.

    Angles are wrapped to [-pi, pi] and angular velocities clipped to the
    standard bounds after integration.
    """
    h = AB_DT
    k1 = _acrobot_dsdt(th1, th2, dth1, dth2, torque)
    k2 = _acrobot_dsdt(
        th1 + 0.5 * h * k1[0],
        th2 + 0.5 * h * k1[1],
        dth1 + 0.5 * h * k1[2],
        dth2 + 0.5 * h * k1[3],
        torque,
    )
    k3 = _acrobot_dsdt(
        th1 + 0.5 * h * k2[0],
        th2 + 0.5 * h * k2[1],
        dth1 + 0.5 * h * k2[2],
        dth2 + 0.5 * h * k2[3],
        torque,
    )
    k4 = _acrobot_dsdt(
        th1 + h * k3[0],
        th2 + h * k3[1],
        dth1 + h * k3[2],
        dth2 + h * k3[3],
        torque,
    )
    th1 = th1 + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    th2 = th2 + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    dth1 = dth1 + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    dth2 = dth2 + h / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
    th1 = _wrap_pi(th1)
    th2 = _wrap_pi(th2)
    dth1 = min(max(dth1, -AB_MAX_VEL1), AB_MAX_VEL1)
    dth2 = min(max(dth2, -AB_MAX_VEL2), AB_MAX_VEL2)
    return th1, th2, dth1, dth2
