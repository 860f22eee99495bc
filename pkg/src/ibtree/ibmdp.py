"""Iterative bounding wrapper around a base environment.

A wrapped state carries the base state plus per-feature lower/upper bounds
that tighten as split actions are taken. Split actions compare a feature
against a value projected into its current bound interval; base actions step
the underlying environment and reset all bounds. A policy that sees only the
bounds is exactly a decision tree over the base features.

Action encoding: indices ``0 .. n_base_actions-1`` are base actions; index
``n_base_actions + c*p + (j-1)`` is the split on feature ``c`` at grid value
``j/(p+1)`` for ``j`` in ``1..p``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import BaseState


@dataclass(frozen=True)
class IbmdpConfig:
    """Wrapper parameters: split grid size, split penalty, dual discounts,
    optional per-decision split budget, and a wrapped-episode step cap."""

    p: int = 1
    zeta: float = -0.01
    gamma_b: float = 1.0
    gamma_w: float = 1.0
    depth_limit: int | None = None
    max_wrapped_steps: int = 1000

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.zeta > 0:
            raise ValueError("zeta must be <= 0")
        for g in (self.gamma_b, self.gamma_w):
            if not 0 < g <= 1:
                raise ValueError("discounts must lie in (0, 1]")
        if self.depth_limit is not None and self.depth_limit < 0:
            raise ValueError("depth_limit must be >= 0 when present")
        if self.max_wrapped_steps < 1:
            raise ValueError("max_wrapped_steps must be >= 1")


@dataclass(frozen=True)
class WrappedState:
    """Base state plus bracketing bound vectors (lower <= features <= upper)."""

    base: BaseState
    lower: np.ndarray
    upper: np.ndarray
    splits_since_base: int = 0

    def is_root(self):
        return bool(np.all(self.lower == 0.0) and np.all(self.upper == 1.0))


@dataclass(frozen=True)
class Observation:
    """The masked view of a wrapped state: bound vectors only."""

    lower: np.ndarray
    upper: np.ndarray

    def key(self):
        return np.concatenate([self.lower, self.upper])


class ActionSpace:
    """Maps between wrapped-action indices and (base | split) meanings."""

    def __init__(self, n_features, n_base_actions, p):
        self.n_features = n_features
        self.n_base_actions = n_base_actions
        self.p = p
        self.n_actions = n_base_actions + n_features * p

    def is_base(self, action):
        return action < self.n_base_actions

    def split_action(self, feature, value_index):
        """Wrapped index of the split on `feature` at grid index `value_index`
        (1-based, value = value_index / (p+1))."""
        if not 0 <= feature < self.n_features:
            raise ValueError("feature index out of range")
        if not 1 <= value_index <= self.p:
            raise ValueError("value index must be in 1..p")
        return self.n_base_actions + feature * self.p + (value_index - 1)

    def split_params(self, action):
        """Decode a split action into (feature, value in (0,1))."""
        if action < self.n_base_actions or action >= self.n_actions:
            raise ValueError(f"not a split action: {action}")
        rel = action - self.n_base_actions
        feature, j = divmod(rel, self.p)
        return feature, (j + 1) / (self.p + 1)


def project_value(v, lower_c, upper_c):
    """Project a normalized split value into the current bound interval."""
    if not lower_c < upper_c:
        raise ValueError(
            f"degenerate bound interval [{lower_c}, {upper_c}]")
    if not 0.0 < v < 1.0:
        raise ValueError("split value must lie strictly inside (0, 1)")
    return v * (upper_c - lower_c) + lower_c


def wrap_reset(env, rng):
    """Start a wrapped episode: base start state with extreme bounds."""
    base = env.reset(rng)
    n = env.spec.n_features
    return WrappedState(base=base, lower=np.zeros(n), upper=np.ones(n))


def wrap_step(env, state, action, config, rng):
    """Apply a wrapped action. Returns (next_state, reward, terminal).

    Splits tighten exactly one bound of one feature and cost ``zeta``; base
    actions step the underlying environment and reset every bound.
    """
    space = ActionSpace(env.spec.n_features, env.spec.n_base_actions, config.p)
    if not 0 <= action < space.n_actions:
        raise ValueError(f"invalid wrapped action {action}")
    if space.is_base(action):
        result = env.step(state.base, action, rng)
        n = env.spec.n_features
        nxt = WrappedState(base=result.next_state, lower=np.zeros(n),
                           upper=np.ones(n), splits_since_base=0)
        return nxt, result.reward, result.terminal
    c, v = space.split_params(action)
    v_p = project_value(v, state.lower[c], state.upper[c])
    lower = state.lower.copy()
    upper = state.upper.copy()
    if state.base.features[c] <= v_p:
        upper[c] = min(upper[c], v_p)
    else:
        lower[c] = max(lower[c], v_p)
    nxt = WrappedState(base=state.base, lower=lower, upper=upper,
                       splits_since_base=state.splits_since_base + 1)
    return nxt, config.zeta, False


def splits_allowed(splits_since_base, config):
    return config.depth_limit is None or splits_since_base < config.depth_limit


def legal_actions(splits_since_base, config, space):
    """Wrapped actions available after `splits_since_base` consecutive splits.

    Base actions are always legal; split actions are withdrawn once the
    depth budget is spent.
    """
    if splits_since_base < 0:
        raise ValueError("splits_since_base must be >= 0")
    if splits_allowed(splits_since_base, config):
        return list(range(space.n_actions))
    return list(range(space.n_base_actions))


def mask(state):
    """Project a wrapped state onto its policy-visible observation."""
    return Observation(lower=state.lower.copy(), upper=state.upper.copy())
