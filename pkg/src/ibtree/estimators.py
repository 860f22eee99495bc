"""Scikit-learn style estimator facade.

Both estimators fit on an environment instance (rather than an (X, y) pair)
and afterwards behave like classifiers over normalized base-state feature
matrices: ``predict(X)`` routes each row through the learned decision tree.
Hyperparameters follow the usual sklearn convention (set in ``__init__``,
``get_params``/``set_params`` supported, fitted attributes carry a trailing
underscore).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .baseline import fit_tree_imitation, make_expert
from .harness import BaselineConfig
from .ibmdp import IbmdpConfig
from .learner import LearnerConfig, evaluate_tree, train
from .tree import tree_act, tree_metrics


def validate_state_matrix(X, n_features):
    """Coerce X to a 2-D float array of normalized feature rows."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ValueError(
            f"expected a (n_samples, {n_features}) state matrix, "
            f"got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("state matrix contains non-finite values")
    return X


class _TreePolicyMixin:
    def _check_fitted(self):
        if getattr(self, "tree_", None) is None:
            raise NotFittedError(
                f"this {type(self).__name__} instance is not fitted yet; "
                "call fit(env) first")

    def predict(self, X):
        """Tree actions for rows of normalized base-state features."""
        self._check_fitted()
        X = validate_state_matrix(X, self.n_features_in_)
        return np.array([tree_act(self.tree_, row) for row in X], dtype=int)

    def score(self, env, episodes=100, seed=0):
        """Mean per-episode return of the fitted tree on a base environment."""
        self._check_fitted()
        rng = np.random.default_rng(seed)
        mean, _ = evaluate_tree(self.tree_, env, episodes, rng)
        return mean


class CustardMfec(_TreePolicyMixin, BaseEstimator):
    """Decision-tree policy learner: episodic-control Q-learning on the
    iterative bounding wrapper of a base environment.

    Parameters mirror the wrapper and learner configs; `fit(env)` trains the
    masked/omniscient memories and extracts the greedy tree.

    Attributes (after fit): ``tree_``, ``q_memory_``, ``omniscient_memory_``,
    ``learning_curve_``, ``n_features_in_``, ``depth_``, ``node_count_``.
    """

    def __init__(self, p=1, zeta=-0.01, gamma_b=1.0, gamma_w=1.0,
                 depth_limit=None, max_wrapped_steps=1000, k=9, alpha_b=0.1,
                 alpha_o=0.7, epsilon_start=1.0, epsilon_end=0.05,
                 epsilon_decay_episodes=None, episodes=10_000,
                 eval_every=None, eval_episodes=100, capacity=200_000,
                 random_state=0):
        self.p = p
        self.zeta = zeta
        self.gamma_b = gamma_b
        self.gamma_w = gamma_w
        self.depth_limit = depth_limit
        self.max_wrapped_steps = max_wrapped_steps
        self.k = k
        self.alpha_b = alpha_b
        self.alpha_o = alpha_o
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.epsilon_decay_episodes = epsilon_decay_episodes
        self.episodes = episodes
        self.eval_every = eval_every
        self.eval_episodes = eval_episodes
        self.capacity = capacity
        self.random_state = random_state

    def _configs(self):
        ib = IbmdpConfig(p=self.p, zeta=self.zeta, gamma_b=self.gamma_b,
                         gamma_w=self.gamma_w, depth_limit=self.depth_limit,
                         max_wrapped_steps=self.max_wrapped_steps)
        lc = LearnerConfig(
            k=self.k, alpha_b=self.alpha_b, alpha_o=self.alpha_o,
            epsilon_start=self.epsilon_start, epsilon_end=self.epsilon_end,
            epsilon_decay_episodes=self.epsilon_decay_episodes,
            episodes=self.episodes, eval_every=self.eval_every,
            eval_episodes=self.eval_episodes, capacity=self.capacity)
        return ib, lc

    def fit(self, env, y=None):
        ib, lc = self._configs()
        result = train(env, ib, lc, seed=self.random_state)
        self.n_features_in_ = env.spec.n_features
        self.tree_ = result.tree
        self.q_memory_ = result.masked
        self.omniscient_memory_ = result.omniscient
        self.learning_curve_ = result.curve
        metrics = tree_metrics(result.tree)
        self.depth_ = metrics.depth
        self.node_count_ = metrics.node_count
        return self


class ViperBi(_TreePolicyMixin, BaseEstimator):
    """Imitation baseline: depth-limited CART distilled from a
    backward-induction expert via iterative rollout relabeling.

    Attributes (after fit): ``tree_``, ``expert_q_``, ``n_features_in_``,
    ``depth_``, ``node_count_``.
    """

    def __init__(self, max_depth=None, dagger_iters=10, rollouts_per_iter=20,
                 gamma=1.0, resolution=0.01, eval_episodes=30,
                 random_state=0):
        self.max_depth = max_depth
        self.dagger_iters = dagger_iters
        self.rollouts_per_iter = rollouts_per_iter
        self.gamma = gamma
        self.resolution = resolution
        self.eval_episodes = eval_episodes
        self.random_state = random_state

    def fit(self, env, y=None):
        BaselineConfig(dagger_iters=self.dagger_iters,
                       rollouts_per_iter=self.rollouts_per_iter,
                       gamma=self.gamma, resolution=self.resolution)
        rng = np.random.default_rng(self.random_state)
        _, policy, index_fn = make_expert(env, gamma=self.gamma,
                                          resolution=self.resolution)
        self.tree_ = fit_tree_imitation(
            policy, env, index_fn, max_depth=self.max_depth,
            dagger_iters=self.dagger_iters,
            rollouts_per_iter=self.rollouts_per_iter, rng=rng,
            eval_episodes=self.eval_episodes)
        self.expert_q_ = policy.q_values
        self.n_features_in_ = env.spec.n_features
        metrics = tree_metrics(self.tree_)
        self.depth_ = metrics.depth
        self.node_count_ = metrics.node_count
        return self
