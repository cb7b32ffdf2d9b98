# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the per-step and per-episode hot kernels.

Mirrors ``reference.py``: same constants, same update formulas, same
packed parameter layout (per layer: row-major (out, in) weights, then the
bias vector), and the same RNG consumption contract for episode kernels
(4 reset variates plus one block of per-step uniforms). Batched
trajectory math stays in the shared NumPy path (see ``kernels/__init__``).
"""

from libc.math cimport tanh, sin, cos, fmod, sqrt, exp, fabs, M_PI
from libc.stdlib cimport malloc, free

import numpy as np

BACKEND_NAME = "compiled"

# Cart-pole physics (must match reference.py).
cdef double CP_GRAVITY = 9.8
cdef double CP_CART_MASS = 1.0
cdef double CP_POLE_MASS = 0.1
cdef double CP_TOTAL_MASS = CP_CART_MASS + CP_POLE_MASS
cdef double CP_HALF_LENGTH = 0.5
cdef double CP_POLEMASS_LENGTH = CP_POLE_MASS * CP_HALF_LENGTH
cdef double CP_DT = 0.02
cdef double CP_THETA_LIMIT = 12.0 * M_PI / 180.0
cdef double CP_X_LIMIT = 2.4
cdef double CP_RESET_BOUND = 0.05

# Acrobot physics (must match reference.py).
cdef double AB_M1 = 1.0
cdef double AB_M2 = 1.0
cdef double AB_L1 = 1.0
cdef double AB_LC1 = 0.5
cdef double AB_LC2 = 0.5
cdef double AB_I1 = 1.0
cdef double AB_I2 = 1.0
cdef double AB_G = 9.8
cdef double AB_DT = 0.2
cdef double AB_MAX_VEL1 = 4.0 * M_PI
cdef double AB_MAX_VEL2 = 9.0 * M_PI
cdef double AB_RESET_BOUND = 0.1

ENV_CARTPOLE = 0
ENV_ACROBOT = 1


# --- dense forward ---------------------------------------------------------

cdef Py_ssize_t _forward_scratch(const double* packed, const long* outs,
                                 const long* ins, Py_ssize_t n_layers,
                                 double* cur, double* nxt) nogil:
    """Run all layers on the input already in ``cur``; result ends in ``cur``.

    Layer chaining is a ParamSet invariant, validated at construction.
    """
    cdef Py_ssize_t k, i, o, n_in, n_out
    cdef double a0, a1, a2, a3
    cdef const double* row
    cdef const double* bias
    cdef double* swap
    n_in = ins[0]
    for k in range(n_layers):
        n_out = outs[k]
        bias = packed + n_out * n_in
        for o in range(n_out):
            row = packed + o * n_in
            a0 = 0.0
            a1 = 0.0
            a2 = 0.0
            a3 = 0.0
            i = 0
            while i + 4 <= n_in:
                a0 += row[i] * cur[i]
                a1 += row[i + 1] * cur[i + 1]
                a2 += row[i + 2] * cur[i + 2]
                a3 += row[i + 3] * cur[i + 3]
                i += 4
            while i < n_in:
                a0 += row[i] * cur[i]
                i += 1
            a0 = bias[o] + ((a0 + a1) + (a2 + a3))
            if k != n_layers - 1:
                nxt[o] = tanh(a0)
            else:
                nxt[o] = a0
        packed = bias + n_out
        swap = cur
        cur = nxt
        nxt = swap
        n_in = n_out
    # After an odd number of swaps the result is in the caller's ``nxt``;
    # copy it back so the output is always in ``cur``.
    if n_layers % 2 == 1:
        for i in range(n_in):
            nxt[i] = cur[i]
    return n_in


cdef Py_ssize_t _max_width(long[::1] outs, long[::1] ins):
    cdef Py_ssize_t maxd = ins[0]
    cdef Py_ssize_t k
    for k in range(outs.shape[0]):
        if outs[k] > maxd:
            maxd = outs[k]
    return maxd


def mlp_forward(double[::1] packed, long[::1] outs, long[::1] ins, double[::1] x):
    """Single-state forward pass; returns the final linear layer output."""
    cdef Py_ssize_t maxd = _max_width(outs, ins)
    cdef Py_ssize_t i, n_out
    cdef double[::1] ov
    cdef double* cur = <double*> malloc(maxd * sizeof(double))
    cdef double* nxt = <double*> malloc(maxd * sizeof(double))
    if cur == NULL or nxt == NULL:
        free(cur)
        free(nxt)
        raise MemoryError()
    try:
        if x.shape[0] != ins[0]:
            raise ValueError("input length mismatch in mlp_forward")
        for i in range(x.shape[0]):
            cur[i] = x[i]
        n_out = _forward_scratch(&packed[0], &outs[0], &ins[0], outs.shape[0], cur, nxt)
        out = np.empty(n_out, dtype=np.float64)
        ov = out
        for i in range(n_out):
            ov[i] = cur[i]
        return out
    finally:
        free(cur)
        free(nxt)


# --- optimizer -------------------------------------------------------------

def adam_update(double[::1] param, double[::1] grad, double[::1] m,
                double[::1] v, long step, double lr, double beta1,
                double beta2, double eps):
    """One bias-corrected Adam update, in place on param/m/v (flat arrays)."""
    cdef Py_ssize_t n = param.shape[0]
    cdef Py_ssize_t i
    cdef double c1 = 1.0 - beta1 ** step
    cdef double c2 = 1.0 - beta2 ** step
    cdef double g
    for i in range(n):
        g = grad[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * g
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
        param[i] -= lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)


# --- environment physics ---------------------------------------------------

cdef void _cartpole_c(double* s, double force) nogil:
    cdef double cos_t = cos(s[2])
    cdef double sin_t = sin(s[2])
    cdef double temp = (force + CP_POLEMASS_LENGTH * s[3] * s[3] * sin_t) / CP_TOTAL_MASS
    cdef double theta_acc = (CP_GRAVITY * sin_t - cos_t * temp) / (
        CP_HALF_LENGTH * (4.0 / 3.0 - CP_POLE_MASS * cos_t * cos_t / CP_TOTAL_MASS)
    )
    cdef double x_acc = temp - CP_POLEMASS_LENGTH * theta_acc * cos_t / CP_TOTAL_MASS
    s[0] = s[0] + CP_DT * s[1]
    s[1] = s[1] + CP_DT * x_acc
    s[2] = s[2] + CP_DT * s[3]
    s[3] = s[3] + CP_DT * theta_acc


cdef void _acrobot_dsdt(double th1, double th2, double dth1, double dth2,
                        double torque, double* out) nogil:
    cdef double c2 = cos(th2)
    cdef double s2 = sin(th2)
    cdef double d1 = (
        AB_M1 * AB_LC1 * AB_LC1
        + AB_M2 * (AB_L1 * AB_L1 + AB_LC2 * AB_LC2 + 2.0 * AB_L1 * AB_LC2 * c2)
        + AB_I1
        + AB_I2
    )
    cdef double d2 = AB_M2 * (AB_LC2 * AB_LC2 + AB_L1 * AB_LC2 * c2) + AB_I2
    cdef double phi2 = AB_M2 * AB_LC2 * AB_G * cos(th1 + th2 - M_PI / 2.0)
    cdef double phi1 = (
        -AB_M2 * AB_L1 * AB_LC2 * dth2 * dth2 * s2
        - 2.0 * AB_M2 * AB_L1 * AB_LC2 * dth2 * dth1 * s2
        + (AB_M1 * AB_LC1 + AB_M2 * AB_L1) * AB_G * cos(th1 - M_PI / 2.0)
        + phi2
    )
    cdef double ddth2 = (
        torque + d2 / d1 * phi1 - AB_M2 * AB_L1 * AB_LC2 * dth1 * dth1 * s2 - phi2
    ) / (AB_M2 * AB_LC2 * AB_LC2 + AB_I2 - d2 * d2 / d1)
    cdef double ddth1 = -(d2 * ddth2 + phi1) / d1
    out[0] = dth1
    out[1] = dth2
    out[2] = ddth1
    out[3] = ddth2


cdef inline double _wrap_pi(double x) nogil:
    x = fmod(x + M_PI, 2.0 * M_PI)
    if x < 0.0:
        x += 2.0 * M_PI
    return x - M_PI


cdef inline double _clip(double x, double lo, double hi) nogil:
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


cdef void _acrobot_c(double* s, double torque) nogil:
    cdef double h = AB_DT
    cdef double k1[4]
    cdef double k2[4]
    cdef double k3[4]
    cdef double k4[4]
    _acrobot_dsdt(s[0], s[1], s[2], s[3], torque, k1)
    _acrobot_dsdt(s[0] + 0.5 * h * k1[0], s[1] + 0.5 * h * k1[1],
                  s[2] + 0.5 * h * k1[2], s[3] + 0.5 * h * k1[3], torque, k2)
    _acrobot_dsdt(s[0] + 0.5 * h * k2[0], s[1] + 0.5 * h * k2[1],
                  s[2] + 0.5 * h * k2[2], s[3] + 0.5 * h * k2[3], torque, k3)
    _acrobot_dsdt(s[0] + h * k3[0], s[1] + h * k3[1],
                  s[2] + h * k3[2], s[3] + h * k3[3], torque, k4)
    s[0] = _wrap_pi(s[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]))
    s[1] = _wrap_pi(s[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]))
    s[2] = _clip(s[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
                 -AB_MAX_VEL1, AB_MAX_VEL1)
    s[3] = _clip(s[3] + h / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
                 -AB_MAX_VEL2, AB_MAX_VEL2)


def cartpole_step(double x, double x_dot, double theta, double theta_dot,
                  double force):
    """One Euler step of the cart-pole dynamics under a signed push force."""
    cdef double s[4]
    s[0] = x
    s[1] = x_dot
    s[2] = theta
    s[3] = theta_dot
    _cartpole_c(s, force)
    return s[0], s[1], s[2], s[3]


def acrobot_step(double th1, double th2, double dth1, double dth2,
                 double torque):
    """One classical RK4 step of the two-link underactuated dynamics.

    Angles are wrapped to [-pi, pi] and angular velocities clipped to the
    standard bounds after integration.
    """
    cdef double s[4]
    s[0] = th1
    s[1] = th2
    s[2] = dth1
    s[3] = dth2
    _acrobot_c(s, torque)
    return s[0], s[1], s[2], s[3]


# --- fused episode loops ---------------------------------------------------

cdef inline Py_ssize_t _obs_c(int env_kind, double* coords, double* out) nogil:
    if env_kind == 0:
        out[0] = coords[0]
        out[1] = coords[1]
        out[2] = coords[2]
        out[3] = coords[3]
        return 4
    out[0] = cos(coords[0])
    out[1] = sin(coords[0])
    out[2] = cos(coords[1])
    out[3] = sin(coords[1])
    out[4] = coords[2]
    out[5] = coords[3]
    return 6


cdef inline Py_ssize_t _sample_c(double* logits, Py_ssize_t n, double u) nogil:
    cdef double zmax = logits[0]
    cdef double total = 0.0
    cdef double acc = 0.0
    cdef double scaled
    cdef Py_ssize_t j
    for j in range(1, n):
        if logits[j] > zmax:
            zmax = logits[j]
    for j in range(n):
        total += exp(logits[j] - zmax)
    scaled = u * total
    for j in range(n):
        acc += exp(logits[j] - zmax)
        if scaled < acc:
            return j
    return n - 1


cdef inline bint _env_advance(int env_kind, double* coords, Py_ssize_t action,
                              Py_ssize_t t, long cap, double* reward) nogil:
    """Apply one action; returns the terminal flag after step t (0-based)."""
    if env_kind == 0:
        _cartpole_c(coords, 10.0 if action == 1 else -10.0)
        reward[0] = 1.0
        if fabs(coords[0]) > CP_X_LIMIT or fabs(coords[2]) > CP_THETA_LIMIT:
            return True
        return t + 1 >= cap
    _acrobot_c(coords, <double> action - 1.0)
    reward[0] = -1.0
    if -cos(coords[0]) - cos(coords[0] + coords[1]) > 1.0:
        return True
    return t + 1 >= cap


def episode_chunk(double[::1] packed, long[::1] outs, long[::1] ins,
                  int env_kind, object rng, double[::1] coords_in,
                  long start_step, long cap, long horizon):
    """Advance one policy-rollout chunk from the given physical coords.

    Consumes exactly ``horizon`` variates from ``rng`` (one block of
    per-step action uniforms; the caller owns the reset draw). Returns
    (states, actions, rewards, values, terminal, final_obs, final_coords);
    ``terminal`` is False only when the horizon cut the chunk before the
    environment ended the episode.
    """
    uniforms = rng.random(horizon)
    cdef double[::1] uv = uniforms
    cdef Py_ssize_t obs_dim = ins[0]
    cdef Py_ssize_t n_act = outs[outs.shape[0] - 1] - 1
    cdef Py_ssize_t maxd = _max_width(outs, ins)
    cdef Py_ssize_t t, n_steps, i, width
    cdef double coords[4]
    cdef double reward
    cdef bint terminal = False
    cdef double* cur = <double*> malloc(maxd * sizeof(double))
    cdef double* nxt = <double*> malloc(maxd * sizeof(double))
    if cur == NULL or nxt == NULL:
        free(cur)
        free(nxt)
        raise MemoryError()

    states = np.empty((horizon, obs_dim), dtype=np.float64)
    actions = np.empty(horizon, dtype=np.int64)
    rewards = np.empty(horizon, dtype=np.float64)
    values = np.empty(horizon, dtype=np.float64)
    final_obs = np.empty(obs_dim, dtype=np.float64)
    final_coords = np.empty(4, dtype=np.float64)
    cdef double[:, ::1] sv = states
    cdef long[::1] av = actions
    cdef double[::1] rwv = rewards
    cdef double[::1] vv = values
    cdef double[::1] fv = final_obs
    cdef double[::1] fc = final_coords

    try:
        with nogil:
            for i in range(4):
                coords[i] = coords_in[i]
            n_steps = 0
            for t in range(horizon):
                _obs_c(env_kind, coords, &sv[t, 0])
                for i in range(obs_dim):
                    cur[i] = sv[t, i]
                width = _forward_scratch(&packed[0], &outs[0], &ins[0], outs.shape[0], cur, nxt)
                vv[t] = cur[n_act]
                av[t] = _sample_c(cur, n_act, uv[t])
                terminal = _env_advance(env_kind, coords, av[t], start_step + t, cap, &reward)
                rwv[t] = reward
                n_steps = t + 1
                if terminal:
                    break
            _obs_c(env_kind, coords, &fv[0])
            for i in range(4):
                fc[i] = coords[i]
    finally:
        free(cur)
        free(nxt)
    return (
        states[:n_steps].copy(),
        actions[:n_steps].copy(),
        rewards[:n_steps].copy(),
        values[:n_steps].copy(),
        bool(terminal),
        final_obs,
        final_coords,
    )


def episode_return(double[::1] packed, long[::1] outs, long[::1] ins,
                   int env_kind, object rng, long cap):
    """Total undiscounted return of one full episode (no recording).

    Consumes exactly 4 + cap variates from ``rng``, like episode_collect
    at horizon == cap.
    """
    cdef double bound = CP_RESET_BOUND if env_kind == 0 else AB_RESET_BOUND
    reset = rng.uniform(-bound, bound, 4)
    uniforms = rng.random(cap)
    cdef double[::1] rv = reset
    cdef double[::1] uv = uniforms
    cdef Py_ssize_t obs_dim = ins[0]
    cdef Py_ssize_t n_act = outs[outs.shape[0] - 1] - 1
    cdef Py_ssize_t maxd = _max_width(outs, ins)
    cdef Py_ssize_t t, i, width, action
    cdef double coords[4]
    cdef double obs[8]
    cdef double reward
    cdef double total = 0.0
    cdef bint terminal = False
    cdef double* cur = <double*> malloc(maxd * sizeof(double))
    cdef double* nxt = <double*> malloc(maxd * sizeof(double))
    if cur == NULL or nxt == NULL:
        free(cur)
        free(nxt)
        raise MemoryError()
    try:
        with nogil:
            for i in range(4):
                coords[i] = rv[i]
            for t in range(cap):
                _obs_c(env_kind, coords, obs)
                for i in range(obs_dim):
                    cur[i] = obs[i]
                width = _forward_scratch(&packed[0], &outs[0], &ins[0], outs.shape[0], cur, nxt)
                action = _sample_c(cur, n_act, uv[t])
                terminal = _env_advance(env_kind, coords, action, t, cap, &reward)
                total += reward
                if terminal:
                    break
    finally:
        free(cur)
        free(nxt)
    return total
