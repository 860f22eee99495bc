"""Masked + omniscient Q-learning over wrapped environments.

A single agent trains two nearest-neighbor Q-functions toward the same
target: the masked function (keyed on bound vectors only) drives action
selection and tree extraction, while the omniscient function (keyed on the
full wrapped state) supplies bootstrap values. The bootstrap for a
transition is the omniscient value of the next state at the action the
masked function would pick there, so reward signal propagates to early
traversal levels without simulating the next leaf.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _train
from ._rng import seed_state
from .ibmdp import ActionSpace, splits_allowed
from .memory import DenseQMemory, QMemory
from .tree import extract_tree, tree_metrics

DEFAULT_CAPACITY = 200_000
# Termination guards for extracting arbitrary policies: a policy that
# prefers splits everywhere expands 2^cap nodes, so the cap must stay well
# clear of exponential blowup while exceeding any tree depth the trained
# policies actually reach. Mid-training (learning-curve) extractions use the
# tighter cap since half-trained value estimates split eagerly off-policy.
EXTRACT_DEPTH_CAP = 16
CURVE_DEPTH_CAP = 12


@dataclass(frozen=True)
class LearnerConfig:
    """Episodic-control learner parameters.

    epsilon decays linearly from epsilon_start to epsilon_end over
    epsilon_decay_episodes (half the budget when unset), then stays flat.
    """

    k: int = 9
    alpha_b: float = 0.1
    alpha_o: float = 0.7
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_episodes: int | None = None
    episodes: int = 10_000
    eval_every: int | None = None
    eval_episodes: int = 100
    capacity: int = DEFAULT_CAPACITY

    def __post_init__(self):
        if not 0 < self.alpha_b <= self.alpha_o <= 1:
            raise ValueError("need 0 < alpha_b <= alpha_o <= 1")
        for e in (self.epsilon_start, self.epsilon_end):
            if not 0 <= e <= 1:
                raise ValueError("epsilon values must lie in [0, 1]")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if self.eval_episodes < 1:
            raise ValueError("eval_episodes must be >= 1")
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")

    def decay_episodes(self):
        if self.epsilon_decay_episodes is not None:
            return self.epsilon_decay_episodes
        return self.episodes // 2

    def eval_interval(self):
        if self.eval_every is not None:
            return self.eval_every
        return max(self.episodes // 10, 1)


@dataclass(frozen=True)
class Transition:
    """One wrapped step: state, action, reward, next state, terminal flag and
    the split counter at the next state (for affordance-aware targets)."""

    s_w: object
    a: int
    r: float
    s_w_next: object
    terminal: bool
    splits_since_base_next: int


@dataclass
class CurvePoint:
    episode: int
    mean_reward: float
    reward_std: float
    tree_depth: int
    tree_nodes: int


@dataclass
class TrainResult:
    masked: DenseQMemory
    omniscient: QMemory
    tree: object
    curve: list
    space: ActionSpace
    episodes: int
    total_steps: int


def masked_key(state):
    return np.concatenate([state.lower, state.upper])


def full_key(state):
    return np.concatenate([state.base.features, state.lower, state.upper])


def legal_action_count(splits_since_base, config, space):
    if splits_allowed(splits_since_base, config):
        return space.n_actions
    return space.n_base_actions


def compute_target(transition, q_masked, q_omni, config):
    """Shared one-step target for both memories.

    The next-state action is the masked argmax over the actions legal there;
    its omniscient value is the bootstrap. Base actions discount with
    gamma_b (terminal transitions take the raw reward), splits pay zeta and
    discount with gamma_w.
    """
    t = transition
    space = _space_of(q_masked, t, config)
    is_base = space.is_base(t.a)
    if is_base and t.terminal:
        return float(t.r)
    nleg = legal_action_count(t.splits_since_base_next, config, space)
    key_next = masked_key(t.s_w_next)
    vals = [q_masked.estimate(key_next, a) for a in range(nleg)]
    a_star = int(np.argmax(vals))
    bootstrap = q_omni.estimate(full_key(t.s_w_next), a_star)
    if is_base:
        return float(t.r + config.gamma_b * bootstrap)
    return float(config.zeta + config.gamma_w * bootstrap)


def _space_of(q_masked, transition, config):
    n = transition.s_w.lower.shape[0]
    n_base = q_masked.n_actions - n * config.p
    return ActionSpace(n, n_base, config.p)


def learn_transition(transition, q_masked, q_omni, config, alpha_b, alpha_o):
    """Compute the shared target and update both memories toward it."""
    target = compute_target(transition, q_masked, q_omni, config)
    q_masked.update(masked_key(transition.s_w), transition.a, target, alpha_b)
    q_omni.update(full_key(transition.s_w), transition.a, target, alpha_o)
    return target


def select_action(q_masked, observation_key, legal, epsilon, rng):
    """Epsilon-greedy over the legal wrapped actions; greedy ties break to
    the lowest action index."""
    if not legal:
        raise ValueError("legal action set must be nonempty")
    if rng.random() < epsilon:
        return legal[rng.integers(len(legal))]
    vals = [q_masked.estimate(observation_key, a) for a in legal]
    return legal[int(np.argmax(vals))]


def make_memories(env, ibmdp_config, learner_config):
    n = env.spec.n_features
    space = ActionSpace(n, env.spec.n_base_actions, ibmdp_config.p)
    masked = DenseQMemory(2 * n, space.n_actions, k=learner_config.k,
                          capacity=learner_config.capacity)
    omni = QMemory(3 * n, space.n_actions, k=learner_config.k,
                   capacity=learner_config.capacity)
    return space, masked, omni


def greedy_policy(masked_memory, space):
    """Masked greedy policy in the form extract_tree expects."""

    def policy(lower, upper):
        key = np.concatenate([lower, upper])
        vals = masked_memory.estimate_all(key)
        a = int(np.argmax(vals))
        if space.is_base(a):
            return ("base", a)
        c, v = space.split_params(a)
        return ("split", c, v)

    return policy


def greedy_base_fallback(masked_memory, space):
    def fallback(lower, upper):
        key = np.concatenate([lower, upper])
        vals = masked_memory.estimate_all(key)
        return int(np.argmax(vals[:space.n_base_actions]))

    return fallback


def extract_greedy_tree(masked_memory, space, ibmdp_config,
                        depth_cap=EXTRACT_DEPTH_CAP):
    """Extract the decision tree of the current greedy masked policy.

    With a depth limit configured, the extraction cap is the limit itself and
    the forced leaf mirrors the affordance (base actions only); otherwise a
    safety cap guards against non-terminating split policies.
    """
    if ibmdp_config.depth_limit is not None:
        depth_cap = ibmdp_config.depth_limit
    return extract_tree(greedy_policy(masked_memory, space),
                        space.n_features, depth_cap,
                        greedy_base_fallback(masked_memory, space))


def greedy_rollout_action(masked_memory, space, ibmdp_config, features,
                          depth_cap=EXTRACT_DEPTH_CAP):
    """Base action the greedy masked policy reaches for one base state by
    walking split actions from the root observation (the tree-equivalence
    oracle path: no tree involved)."""
    if ibmdp_config.depth_limit is not None:
        depth_cap = ibmdp_config.depth_limit
    n = space.n_features
    lower = np.zeros(n)
    upper = np.ones(n)
    depth = 0
    while True:
        key = np.concatenate([lower, upper])
        vals = masked_memory.estimate_all(key)
        if depth >= depth_cap:
            return int(np.argmax(vals[:space.n_base_actions]))
        a = int(np.argmax(vals))
        if space.is_base(a):
            return a
        c, v = space.split_params(a)
        v_p = v * (upper[c] - lower[c]) + lower[c]
        if features[c] <= v_p:
            upper[c] = v_p
        else:
            lower[c] = v_p
        depth += 1


def evaluate_tree(tree, env, episodes, rng):
    """Mean and sample std of per-episode return for a tree run on the base
    environment (split penalties never appear here)."""
    from .tree import tree_act

    returns = np.empty(episodes)
    for i in range(episodes):
        state = env.reset(rng)
        total = 0.0
        for _ in range(env.spec.max_episode_steps):
            action = tree_act(tree, state.features)
            result = env.step(state, action, rng)
            total += result.reward
            state = result.next_state
            if result.terminal:
                break
        returns[i] = total
    std = float(returns.std(ddof=1)) if episodes > 1 else 0.0
    return float(returns.mean()), std


def _env_kernel_args(env):
    n = env.spec.n_features
    if env.env_kind == _train.ENV_PREREQ:
        prereq_mask = env.prereq_mask
        goal = env.prereq_spec.goal_item
        lane2 = np.empty(0)
        lane3 = np.empty(0)
        consts = np.zeros(5)
    elif env.env_kind == _train.ENV_POTHOLE:
        prereq_mask = np.zeros((1, 1), np.uint8)
        goal = 0
        lane2 = env.lane2
        lane3 = env.lane3
        s = env.pothole_spec
        consts = np.array([s.road_length, s.lane1_discount, s.pothole_penalty,
                           s.advance_low, s.advance_high])
    else:
        prereq_mask = np.zeros((1, 1), np.uint8)
        goal = 0
        lane2 = np.empty(0)
        lane3 = np.empty(0)
        consts = np.zeros(5)
    return (env.env_kind, goal, prereq_mask, lane2, lane3, consts,
            env.spec.feature_lower_bounds, env.spec.feature_upper_bounds, n)


def train(env, ibmdp_config, learner_config, seed=0, on_eval=None):
    """Run seeded epsilon-greedy training; returns memories, the final
    extracted tree and the learning curve."""
    space, masked, omni = make_memories(env, ibmdp_config, learner_config)
    cfg = learner_config
    ib = ibmdp_config
    (env_kind, goal, prereq_mask, lane2, lane3, consts, lo, hi,
     n) = _env_kernel_args(env)

    rng_state = np.zeros(1, np.uint64)
    seed_state(rng_state, seed)
    meta = np.zeros(8, np.int64)
    depth_limit = -1 if ib.depth_limit is None else ib.depth_limit
    eval_interval = cfg.eval_interval()
    decay = cfg.decay_episodes()
    curve = []

    next_eval = min(eval_interval, cfg.episodes)
    while True:
        code = _train.run_chunk(
            env_kind, goal, prereq_mask, lane2, lane3, consts, lo, hi,
            n, space.n_base_actions, ib.p, space.n_actions,
            ib.zeta, ib.gamma_b, ib.gamma_w, depth_limit,
            ib.max_wrapped_steps,
            cfg.k, cfg.alpha_b, cfg.alpha_o,
            cfg.epsilon_start, cfg.epsilon_end, decay,
            next_eval, masked.capacity, omni.capacity,
            masked.dkeys, masked.dq, masked.dbits, masked.dkdbits,
            masked.dtouch, masked.dhash, masked.dmeta, masked.dcount,
            masked.devict, masked.akd_row, masked.akd_l, masked.akd_r,
            masked.akd_dim, masked.akd_root, masked.akd_meta,
            omni.keys, omni.vals, omni.napp, omni.hasht, omni.kdl, omni.kdr,
            omni.kdd, omni.kroot, omni.flags, omni.built,
            masked.scratch.qstack, masked.scratch.kb_d, masked.scratch.kb_v,
            omni.scratch.idxbuf, omni.scratch.bstack,
            masked.scratch.idxbuf, masked.scratch.bstack,
            rng_state, meta)
        if code == _train.CHUNK_GROW:
            masked.service(int(masked.dmeta[0]) + ib.max_wrapped_steps + 2,
                           int(masked.akd_meta[0]) + ib.max_wrapped_steps + 2)
            continue
        episodes_done = int(meta[0])
        cap = (EXTRACT_DEPTH_CAP if episodes_done >= cfg.episodes
               else CURVE_DEPTH_CAP)
        tree = extract_greedy_tree(masked, space, ib, depth_cap=cap)
        metrics = tree_metrics(tree)
        eval_rng = np.random.default_rng(
            np.random.SeedSequence([seed, episodes_done]))
        mean, std = evaluate_tree(tree, env, cfg.eval_episodes, eval_rng)
        point = CurvePoint(episode=episodes_done, mean_reward=mean,
                           reward_std=std, tree_depth=metrics.depth,
                           tree_nodes=metrics.node_count)
        curve.append(point)
        if on_eval is not None:
            on_eval(point)
        if episodes_done >= cfg.episodes:
            break
        next_eval = min(episodes_done + eval_interval, cfg.episodes)

    return TrainResult(masked=masked, omniscient=omni, tree=tree, curve=curve,
                       space=space, episodes=int(meta[0]),
                       total_steps=int(meta[1]))
