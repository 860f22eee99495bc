"""Jitted single-step dynamics shared by the Python env classes and the trainer.

Each function is pure: state in, state out. Stochastic draws are passed in as
arguments so the same code path serves seeded Python-level rollouts and the
compiled training loop.
"""
import numpy as np
from numba import njit

ENV_PREREQ = 0
ENV_POTHOLE = 1
ENV_CARTPOLE = 2

# cart-pole physics (standard benchmark constants)
_GRAVITY = 9.8
_CART_MASS = 1.0
_POLE_MASS = 0.1
_TOTAL_MASS = _CART_MASS + _POLE_MASS
_POLE_HALF_LEN = 0.5
_POLEMASS_LEN = _POLE_MASS * _POLE_HALF_LEN
_FORCE = 10.0
_DT = 0.02
_THETA_LIMIT = 15.0 * np.pi / 180.0
_X_LIMIT = 2.4
CARTPOLE_MAX_STEPS = 200


@njit(cache=True)
def prereq_step_into(flags, action, prereq_mask, goal_item, out):
    """Attempt to produce item `action`; writes the next flag vector to `out`.

    Returns (reward, terminal). If any prerequisite is missing the state is
    unchanged ("the action has no effect").
    """
    m = flags.shape[0]
    for j in range(m):
        out[j] = flags[j]
    ok = True
    for j in range(m):
        if prereq_mask[action, j] == 1 and flags[j] == 0.0:
            ok = False
            break
    if ok:
        for j in range(m):
            if prereq_mask[action, j] == 1:
                out[j] = 0.0
        out[action] = 1.0
        if action == goal_item:
            return 0.0, True
    return -1.0, False


@njit(cache=True)
def prereq_step(flags, action, prereq_mask, goal_item):
    """Allocating wrapper: returns (new_flags, reward, terminal)."""
    out = np.empty(flags.shape[0])
    reward, terminal = prereq_step_into(flags, action, prereq_mask, goal_item,
                                        out)
    return out, reward, terminal


@njit(cache=True)
def pothole_step(position, action, advance, lane2, lane3, road_length,
                 lane1_discount, penalty):
    """Advance along the road. Returns (new_position, reward, terminal).

    `advance` is the Unif(0.5, 1) draw. Reward equals distance actually moved
    (the final step is capped at the road end), discounted for lane 1 and
    penalized when a pothole of the chosen lane lies in (position, new_position].
    """
    nxt = position + advance
    if nxt > road_length:
        nxt = road_length
    moved = nxt - position
    if action == 0:
        reward = lane1_discount * moved
    else:
        lane = lane2 if action == 1 else lane3
        reward = moved
        i = np.searchsorted(lane, position, side="right")
        if i < lane.shape[0] and lane[i] <= nxt:
            reward -= penalty
    return nxt, reward, nxt >= road_length


@njit(cache=True)
def cartpole_step_into(state, action, t, out):
    """Euler-integrated cart-pole; writes the next raw state to `out`.

    state is [cart position, cart velocity, pole angle, pole angular velocity]
    in raw physical units; t is the 0-based step index before this step.
    Returns (reward, terminal).
    """
    x, x_dot, theta, theta_dot = state[0], state[1], state[2], state[3]
    force = _FORCE if action == 1 else -_FORCE
    cos_t = np.cos(theta)
    sin_t = np.sin(theta)
    temp = (force + _POLEMASS_LEN * theta_dot * theta_dot * sin_t) / _TOTAL_MASS
    theta_acc = (_GRAVITY * sin_t - cos_t * temp) / (
        _POLE_HALF_LEN * (4.0 / 3.0 - _POLE_MASS * cos_t * cos_t / _TOTAL_MASS))
    x_acc = temp - _POLEMASS_LEN * theta_acc * cos_t / _TOTAL_MASS
    out[0] = x + _DT * x_dot
    out[1] = x_dot + _DT * x_acc
    out[2] = theta + _DT * theta_dot
    out[3] = theta_dot + _DT * theta_acc
    terminal = (np.abs(out[2]) > _THETA_LIMIT or np.abs(out[0]) > _X_LIMIT
                or t + 1 >= CARTPOLE_MAX_STEPS)
    return 1.0, terminal


@njit(cache=True)
def cartpole_step(state, action, t):
    """Allocating wrapper: returns (new_state, reward, terminal)."""
    out = np.empty(4)
    reward, terminal = cartpole_step_into(state, action, t, out)
    return out, reward, terminal


@njit(cache=True)
def normalize_into(raw, lo, hi, out):
    n = raw.shape[0]
    for i in range(n):
        v = raw[i]
        if v < lo[i]:
            v = lo[i]
        elif v > hi[i]:
            v = hi[i]
        out[i] = (v - lo[i]) / (hi[i] - lo[i])


@njit(cache=True)
def normalize_features(raw, lo, hi):
    out = np.empty(raw.shape[0])
    normalize_into(raw, lo, hi, out)
    return out
