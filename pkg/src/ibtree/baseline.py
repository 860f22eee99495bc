"""Backward-induction expert and tree-imitation baseline.

The expert solves an exact finite model (PrereqWorld enumerated over flag
combinations; PotholeWorld discretized on a position grid) by sweeping the
Bellman optimality update to a fixed point. The imitation loop ("VIPER-lite")
aggregates expert-labeled states from rollouts of the evolving tree and fits
a depth-limited CART on Q-range sample weights, returning the best tree by
evaluated reward.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import CartPole, PotholeWorld, PrereqWorld
from .learner import evaluate_tree
from .tree import TreeNode

TIE_TOL = 1e-9


@dataclass
class FiniteMdp:
    """Explicit finite MDP: transitions[s][a] is a list of
    (probability, next_state, reward, terminal) branches."""

    n_states: int
    n_actions: int
    transitions: list
    start: int
    state_features: np.ndarray

    def __post_init__(self):
        for s in range(self.n_states):
            for a in range(self.n_actions):
                total = sum(p for p, _, _, _ in self.transitions[s][a])
                if abs(total - 1.0) > 1e-9:
                    raise ValueError(
                        f"transition probabilities at ({s}, {a}) sum to {total}")


@dataclass
class ExpertPolicy:
    """Optimal Q table plus the tie-breaking rule used for greedy rollouts."""

    q_values: np.ndarray
    tie_break: str = "random"

    def value(self, state):
        return float(self.q_values[state].max())

    def tied_actions(self, state):
        row = self.q_values[state]
        return np.flatnonzero(row >= row.max() - TIE_TOL)

    def greedy_action(self, state, rng=None, previous=None):
        ties = self.tied_actions(state)
        if len(ties) == 1:
            return int(ties[0])
        if self.tie_break == "favor-previous":
            if previous is not None and previous in ties:
                return int(previous)
            return int(ties[0])
        if rng is None:
            return int(ties[0])
        return int(ties[rng.integers(len(ties))])


def backward_induction(mdp, gamma, tol=1e-10, max_sweeps=100_000,
                       tie_break="random"):
    """Sweep the Bellman optimality update to a fixed point.

    Raises on non-convergence (non-episodic structure with gamma = 1 and no
    cost on cycles cannot terminate)."""
    q = np.zeros((mdp.n_states, mdp.n_actions))
    v = np.zeros(mdp.n_states)
    for _ in range(max_sweeps):
        delta = 0.0
        for s in range(mdp.n_states):
            for a in range(mdp.n_actions):
                total = 0.0
                for prob, nxt, reward, terminal in mdp.transitions[s][a]:
                    total += prob * (reward + (0.0 if terminal
                                               else gamma * v[nxt]))
                change = abs(total - q[s, a])
                if change > delta:
                    delta = change
                q[s, a] = total
            v[s] = q[s].max()
        if delta < tol:
            return ExpertPolicy(q_values=q, tie_break=tie_break)
    raise RuntimeError(
        f"backward induction did not converge within {max_sweeps} sweeps; "
        "supply a terminating MDP or a horizon cap")


def enumerate_prereq(env):
    """Exact finite model of a PrereqWorld instance (states = flag bitmasks)."""
    m = env.spec.n_features
    n_states = 1 << m
    features = np.zeros((n_states, m))
    for s in range(n_states):
        for i in range(m):
            features[s, i] = (s >> i) & 1
    transitions = []
    for s in range(n_states):
        flags = features[s]
        row = []
        for a in range(m):
            from ._envs_impl import prereq_step
            nxt_flags, reward, terminal = prereq_step(
                flags, a, env.prereq_mask, env.prereq_spec.goal_item)
            nxt = 0
            for i in range(m):
                if nxt_flags[i]:
                    nxt |= 1 << i
            row.append([(1.0, nxt, float(reward), bool(terminal))])
        transitions.append(row)
    return FiniteMdp(n_states=n_states, n_actions=m, transitions=transitions,
                     start=0, state_features=features)


def prereq_state_index(state):
    idx = 0
    for i, f in enumerate(state.features):
        if f:
            idx |= 1 << i
    return idx


def discretize_pothole(env, resolution=0.01):
    """Grid model of PotholeWorld: states are positions i*resolution; the
    advance distribution is integrated exactly against cell boundaries and
    the (at most one) pothole reachable within a step."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    spec = env.pothole_spec
    road = spec.road_length
    n_cells = int(round(road / resolution))
    n_states = n_cells + 1  # the last state is the terminal road end
    lanes = [np.empty(0), env.lane2, env.lane3]
    lo_u, hi_u = spec.advance_low, spec.advance_high
    span = hi_u - lo_u

    transitions = []
    for s in range(n_states):
        x = s * resolution
        row = []
        if s == n_cells:
            for a in range(3):
                row.append([(1.0, s, 0.0, True)])
            transitions.append(row)
            continue
        for a in range(3):
            lane = lanes[a]
            # pothole threshold: crossing happens once u >= q - x
            i = np.searchsorted(lane, x, side="right")
            q_pos = lane[i] if i < len(lane) else np.inf
            branches = {}

            def add(prob, nxt, reward, terminal, branches=branches):
                if prob <= 0:
                    return
                key = (nxt, terminal)
                p0, r0 = branches.get(key, (0.0, 0.0))
                branches[key] = (p0 + prob, r0 + prob * reward)

            # integrate u over [lo_u, hi_u) split at cell edges, the road end
            # and the pothole threshold
            cuts = {lo_u, hi_u}
            u_end = road - x
            if lo_u < u_end < hi_u:
                cuts.add(u_end)
            if lo_u < q_pos - x < hi_u:
                cuts.add(q_pos - x)
            j0 = int(np.floor((x + lo_u) / resolution + 0.5))
            j1 = int(np.floor((x + hi_u) / resolution + 0.5))
            for j in range(j0, j1 + 1):
                edge = (j + 0.5) * resolution - x
                if lo_u < edge < hi_u:
                    cuts.add(edge)
            cut_list = sorted(cuts)
            for u0, u1 in zip(cut_list[:-1], cut_list[1:]):
                prob = (u1 - u0) / span
                if prob <= 0:
                    continue
                mid = 0.5 * (u0 + u1)
                if x + mid >= road:
                    moved = road - x
                    nxt, terminal = n_cells, True
                else:
                    moved = mid
                    nxt = int(np.floor((x + mid) / resolution + 0.5))
                    nxt = min(nxt, n_cells)
                    terminal = nxt == n_cells
                reward = moved * (spec.lane1_discount if a == 0 else 1.0)
                if a != 0 and mid >= q_pos - x:
                    reward -= spec.pothole_penalty
                add(prob, nxt, reward, terminal)
            out = []
            for (nxt, terminal), (p, pr) in sorted(branches.items()):
                out.append((p, nxt, pr / p, terminal))
            total = sum(b[0] for b in out)
            out = [(p / total, nxt, r, t) for p, nxt, r, t in out]
            row.append(out)
        transitions.append(row)

    features = np.arange(n_states, dtype=float)[:, None] * resolution / road
    return FiniteMdp(n_states=n_states, n_actions=3, transitions=transitions,
                     start=0, state_features=np.minimum(features, 1.0))


def pothole_state_index(state, resolution, n_cells):
    return min(int(np.floor(state.raw[0] / resolution + 0.5)), n_cells)


# ---------------------------------------------------------------------------
# weighted CART on expert labels
# ---------------------------------------------------------------------------

def _majority(y, w, n_actions):
    scores = np.bincount(y, weights=w, minlength=n_actions)
    return int(scores.argmax())


def _impurity(y, w, n_actions):
    scores = np.bincount(y, weights=w, minlength=n_actions)
    return float(scores.sum() - scores.max())


def fit_cart(X, y, w, n_actions, max_depth=None):
    """Greedy binary tree minimizing weighted misclassification.

    Split candidates are midpoints between consecutive distinct sorted
    feature values. When no split reduces weighted misclassification but the
    node is still impure (label noise aside), the first value-separating
    split is forced so recursion can continue to purity.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    w = np.asarray(w, dtype=float)
    if len(y) == 0:
        raise ValueError("empty sample set")

    def build(idx, depth):
        yy, ww = y[idx], w[idx]
        node_imp = _impurity(yy, ww, n_actions)
        if node_imp <= 0 or (max_depth is not None and depth >= max_depth):
            return TreeNode.leaf(_majority(yy, ww, n_actions))
        best = None  # (gain, feature, threshold, mask)
        forced = None
        for f in range(X.shape[1]):
            vals = X[idx, f]
            distinct = np.unique(vals)
            if len(distinct) < 2:
                continue
            for t in (distinct[:-1] + distinct[1:]) / 2.0:
                left = vals <= t
                gain = node_imp - _impurity(yy[left], ww[left], n_actions) \
                    - _impurity(yy[~left], ww[~left], n_actions)
                if best is None or gain > best[0] + 1e-12:
                    best = (gain, f, t, left)
            if forced is None:
                t = (distinct[0] + distinct[1]) / 2.0
                forced = (0.0, f, t, vals <= t)
        if best is None:
            # identical feature rows: no split can separate the labels
            return TreeNode.leaf(_majority(yy, ww, n_actions))
        if best[0] <= 1e-12:
            best = forced
        _, f, t, left = best
        left_node = build(idx[left], depth + 1)
        right_node = build(idx[~left], depth + 1)
        return TreeNode.internal(f, t, left_node, right_node)

    return build(np.arange(len(y)), 0)


# ---------------------------------------------------------------------------
# imitation loop
# ---------------------------------------------------------------------------

def make_expert(env, gamma=1.0, resolution=0.01):
    """Backward-induction expert for the finite-model environments."""
    if isinstance(env, PrereqWorld):
        mdp = enumerate_prereq(env)
        policy = backward_induction(mdp, gamma, tie_break="random")
        index_fn = prereq_state_index
    elif isinstance(env, PotholeWorld):
        mdp = discretize_pothole(env, resolution)
        policy = backward_induction(mdp, gamma, tie_break="favor-previous")
        n_cells = mdp.n_states - 1
        index_fn = lambda s: pothole_state_index(s, resolution, n_cells)
    elif isinstance(env, CartPole):
        raise ValueError("no tractable backward-induction expert for CartPole")
    else:
        raise ValueError(f"unsupported environment {env!r}")
    return mdp, policy, index_fn


def _rollout_samples(env, policy, index_fn, act_fn, rng):
    """One episode; returns per-visited-state (features, expert label, weight)."""
    feats, labels, weights = [], [], []
    state = env.reset(rng)
    previous = None
    for _ in range(env.spec.max_episode_steps):
        s_idx = index_fn(state)
        expert_a = policy.greedy_action(s_idx, rng, previous)
        row = policy.q_values[s_idx]
        feats.append(state.features.copy())
        labels.append(expert_a)
        weights.append(float(row.max() - row.min()))
        action = act_fn(state, expert_a)
        previous = action
        result = env.step(state, action, rng)
        state = result.next_state
        if result.terminal:
            break
    return feats, labels, weights


def fit_tree_imitation(expert, env, index_fn, max_depth, dagger_iters=10,
                       rollouts_per_iter=20, rng=None, eval_episodes=30):
    """Iterative imitation of a backward-induction expert.

    Iteration 0 rolls out the expert itself; later iterations roll out the
    current tree while labeling visited states with the expert's greedy
    action. Samples are weighted by the expert's Q-range and aggregated
    across iterations; the best tree by evaluated reward is returned.
    """
    from .tree import tree_act

    if rng is None:
        rng = np.random.default_rng(0)
    if dagger_iters < 1:
        raise ValueError("dagger_iters must be >= 1")
    feats, labels, weights = [], [], []
    best_tree, best_reward = None, -np.inf
    tree = None
    for it in range(dagger_iters):
        if tree is None:
            act_fn = lambda state, expert_a: expert_a
        else:
            act_fn = lambda state, expert_a: tree_act(tree, state.features)
        for _ in range(rollouts_per_iter):
            f, l, w2 = _rollout_samples(env, expert, index_fn, act_fn, rng)
            feats.extend(f)
            labels.extend(l)
            weights.extend(w2)
        if not feats:
            raise ValueError("empty sample set")
        tree = fit_cart(np.array(feats), np.array(labels), np.array(weights),
                        env.spec.n_base_actions, max_depth)
        mean, _ = evaluate_tree(tree, env, eval_episodes, rng)
        if mean > best_reward:
            best_reward = mean
            best_tree = tree
    return best_tree
