"""Factored base environments: PrereqWorld, PotholeWorld and CartPole.

All three expose the same functional interface: ``reset(rng)`` returns a
start ``BaseState`` and ``step(state, action, rng)`` returns a ``StepResult``.
Environment instances hold no mutable episode state, so independent episodes
can run concurrently as long as each has its own RNG.

Feature vectors are kept in two forms: ``raw`` (native units, used by the
dynamics) and ``features`` (normalized to [0, 1], the representation seen by
wrappers and policies).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _envs_impl
from ._envs_impl import (
    ENV_CARTPOLE,
    ENV_POTHOLE,
    ENV_PREREQ,
    CARTPOLE_MAX_STEPS,
    cartpole_step,
    normalize_features,
    pothole_step,
    prereq_step,
)

# Item prerequisites for the 10-item production task, in
# `item: [required items]` form. Lower-numbered items depend only on
# higher-numbered ones (topological order).
DEFAULT_PREREQS = {
    0: [1, 2],
    1: [5],
    2: [4],
    3: [6, 7],
    4: [],
    5: [7],
    6: [7, 9],
    7: [8],
    8: [],
    9: [],
}

# Pothole coordinates of the evaluation road, per lane. Lane 1 is pothole-free.
LANE2_POTHOLES = [3.09, 5.97, 7.33, 8.874, 9.98, 11.70, 12.83, 14.62, 16.33,
                  19.55, 27.56, 31.28, 33.07, 36.30, 37.81, 39.14, 44.21,
                  46.81, 49.05]
LANE3_POTHOLES = [0, 1.30, 4.53, 17.45, 18.47, 21.42, 23.34, 24.42, 25.70,
                  29.41, 34.46, 40.45, 42.39, 45.30, 47.87]

CARTPOLE_LOWER = [-2.0, -2.0, -0.14, -1.4]
CARTPOLE_UPPER = [2.0, 2.0, 0.14, 1.4]


@dataclass(frozen=True)
class EnvSpec:
    """Static description of a base environment."""

    n_features: int
    n_base_actions: int
    feature_lower_bounds: np.ndarray
    feature_upper_bounds: np.ndarray
    max_episode_steps: int

    def __post_init__(self):
        lo = np.asarray(self.feature_lower_bounds, dtype=float)
        hi = np.asarray(self.feature_upper_bounds, dtype=float)
        object.__setattr__(self, "feature_lower_bounds", lo)
        object.__setattr__(self, "feature_upper_bounds", hi)
        if lo.shape != (self.n_features,) or hi.shape != (self.n_features,):
            raise ValueError("bound vectors must have length n_features")
        if not np.all(lo < hi):
            raise ValueError("feature_lower_bounds must be < feature_upper_bounds")


@dataclass(frozen=True)
class BaseState:
    """Environment state: normalized features plus the raw values behind them."""

    features: np.ndarray
    raw: np.ndarray
    t: int = 0


@dataclass(frozen=True)
class StepResult:
    next_state: BaseState
    reward: float
    terminal: bool


@dataclass(frozen=True)
class PrereqSpec:
    """Production-task structure: item count, prerequisite lists, goal item."""

    m: int
    prerequisites: tuple
    goal_item: int = 0

    def __post_init__(self):
        if self.m < 1 or len(self.prerequisites) != self.m:
            raise ValueError("need one prerequisite list per item")
        if not 0 <= self.goal_item < self.m:
            raise ValueError("goal_item out of range")
        for i, reqs in enumerate(self.prerequisites):
            for j in reqs:
                if not (i < j < self.m):
                    raise ValueError(
                        f"item {i} prerequisite {j} breaks topological order")


@dataclass(frozen=True)
class PotholeSpec:
    """Three-lane road description."""

    road_length: float = 50.0
    lane2_potholes: tuple = tuple(LANE2_POTHOLES)
    lane3_potholes: tuple = tuple(LANE3_POTHOLES)
    lane1_discount: float = 0.9
    pothole_penalty: float = 5.0
    advance_low: float = 0.5
    advance_high: float = 1.0

    def __post_init__(self):
        for lane in (self.lane2_potholes, self.lane3_potholes):
            arr = np.asarray(lane, dtype=float)
            if arr.size and (arr.min() < 0 or arr.max() > self.road_length):
                raise ValueError("pothole positions must lie within the road")
            if arr.size and np.any(np.diff(arr) < 0):
                raise ValueError("pothole lists must be sorted")


def derive_prereq_spec(m, goal_item=0):
    """Build the m-item variant by dropping items >= m from the base task."""
    if not 1 <= m <= 10:
        raise ValueError("derived variants support 1 <= m <= 10")
    prereqs = tuple(
        tuple(j for j in DEFAULT_PREREQS[i] if j < m) for i in range(m))
    return PrereqSpec(m=m, prerequisites=prereqs, goal_item=goal_item)


class PrereqWorld:
    """Produce a goal item whose prerequisites form a fixed dependency DAG.

    State is a vector of m binary item-present flags; action i attempts to
    produce item i, consuming its prerequisites when they are all present and
    doing nothing otherwise. Producing the goal item ends the episode with
    reward 0; every other action costs -1.
    """

    name = "prereqworld"
    env_kind = ENV_PREREQ

    def __init__(self, m=10, prerequisites=None, goal_item=0,
                 max_episode_steps=200):
        if prerequisites is None:
            self.prereq_spec = derive_prereq_spec(m, goal_item)
        else:
            self.prereq_spec = PrereqSpec(
                m=m, prerequisites=tuple(tuple(p) for p in prerequisites),
                goal_item=goal_item)
        self.spec = EnvSpec(
            n_features=m,
            n_base_actions=m,
            feature_lower_bounds=np.zeros(m),
            feature_upper_bounds=np.ones(m),
            max_episode_steps=max_episode_steps,
        )
        mask = np.zeros((m, m), dtype=np.uint8)
        for i, reqs in enumerate(self.prereq_spec.prerequisites):
            for j in reqs:
                mask[i, j] = 1
        self.prereq_mask = mask

    def reset(self, rng):
        raw = np.zeros(self.spec.n_features)
        return BaseState(features=raw.copy(), raw=raw, t=0)

    def step(self, state, action, rng):
        self._check_action(action)
        flags, reward, terminal = prereq_step(
            state.raw, action, self.prereq_mask, self.prereq_spec.goal_item)
        nxt = BaseState(features=flags.copy(), raw=flags, t=state.t + 1)
        return StepResult(nxt, reward, terminal)

    def normalize(self, raw):
        return normalize_features(np.asarray(raw, dtype=float),
                                  self.spec.feature_lower_bounds,
                                  self.spec.feature_upper_bounds)

    def denormalize(self, features):
        return np.asarray(features, dtype=float).copy()

    def _check_action(self, action):
        if not 0 <= action < self.spec.n_base_actions:
            raise ValueError(f"invalid action index {action}")


class PotholeWorld:
    """Traverse a 50-unit three-lane road, trading lane-1 reward discount
    against pothole penalties in lanes 2 and 3."""

    name = "potholeworld"
    env_kind = ENV_POTHOLE

    def __init__(self, spec=None, max_episode_steps=200):
        self.pothole_spec = spec if spec is not None else PotholeSpec()
        road = self.pothole_spec.road_length
        self.spec = EnvSpec(
            n_features=1,
            n_base_actions=3,
            feature_lower_bounds=np.zeros(1),
            feature_upper_bounds=np.array([road]),
            max_episode_steps=max_episode_steps,
        )
        self.lane2 = np.asarray(self.pothole_spec.lane2_potholes, dtype=float)
        self.lane3 = np.asarray(self.pothole_spec.lane3_potholes, dtype=float)

    def reset(self, rng):
        raw = np.zeros(1)
        return BaseState(features=np.zeros(1), raw=raw, t=0)

    def step(self, state, action, rng):
        self._check_action(action)
        u = self.draw_advance(rng)
        return self.step_with_advance(state, action, u)

    def step_with_advance(self, state, action, advance):
        """Deterministic step for a given advance draw (used by tests)."""
        self._check_action(action)
        s = self.pothole_spec
        pos, reward, terminal = pothole_step(
            state.raw[0], action, advance, self.lane2, self.lane3,
            s.road_length, s.lane1_discount, s.pothole_penalty)
        raw = np.array([pos])
        nxt = BaseState(features=self.normalize(raw), raw=raw, t=state.t + 1)
        return StepResult(nxt, reward, terminal)

    def draw_advance(self, rng):
        s = self.pothole_spec
        return s.advance_low + rng.random() * (s.advance_high - s.advance_low)

    def normalize(self, raw):
        return normalize_features(np.asarray(raw, dtype=float),
                                  self.spec.feature_lower_bounds,
                                  self.spec.feature_upper_bounds)

    def denormalize(self, features):
        f = np.asarray(features, dtype=float)
        lo = self.spec.feature_lower_bounds
        hi = self.spec.feature_upper_bounds
        return lo + f * (hi - lo)

    def _check_action(self, action):
        if not 0 <= action < self.spec.n_base_actions:
            raise ValueError(f"invalid action index {action}")


class CartPole:
    """Pole balancing with Euler dynamics; +1 per step, 200-step episodes.

    Raw features are clamped to fixed boxes before normalization, so the
    normalized view saturates at the box edges while the dynamics keep
    evolving the raw state.
    """

    name = "cartpole"
    env_kind = ENV_CARTPOLE

    def __init__(self):
        self.spec = EnvSpec(
            n_features=4,
            n_base_actions=2,
            feature_lower_bounds=np.array(CARTPOLE_LOWER),
            feature_upper_bounds=np.array(CARTPOLE_UPPER),
            max_episode_steps=CARTPOLE_MAX_STEPS,
        )

    def reset(self, rng):
        raw = rng.uniform(-0.05, 0.05, size=4)
        return BaseState(features=self.normalize(raw), raw=raw, t=0)

    def step(self, state, action, rng):
        if not 0 <= action < 2:
            raise ValueError(f"invalid action index {action}")
        raw, reward, terminal = cartpole_step(state.raw, action, state.t)
        nxt = BaseState(features=self.normalize(raw), raw=raw, t=state.t + 1)
        return StepResult(nxt, reward, terminal)

    def normalize(self, raw):
        return normalize_features(np.asarray(raw, dtype=float),
                                  self.spec.feature_lower_bounds,
                                  self.spec.feature_upper_bounds)

    def denormalize(self, features):
        f = np.asarray(features, dtype=float)
        lo = self.spec.feature_lower_bounds
        hi = self.spec.feature_upper_bounds
        return lo + f * (hi - lo)


def make_env(name, **params):
    """Instantiate an environment by registry name."""
    key = name.lower().replace("_", "").replace("-", "")
    if key == "prereqworld":
        return PrereqWorld(**params)
    if key == "potholeworld":
        lane2 = params.pop("lane2_potholes", None)
        lane3 = params.pop("lane3_potholes", None)
        if lane2 is not None or lane3 is not None:
            kwargs = {}
            if lane2 is not None:
                kwargs["lane2_potholes"] = tuple(lane2)
            if lane3 is not None:
                kwargs["lane3_potholes"] = tuple(lane3)
            params["spec"] = PotholeSpec(**kwargs)
        return PotholeWorld(**params)
    if key == "cartpole":
        return CartPole(**params)
    raise ValueError(f"unknown environment '{name}'")
