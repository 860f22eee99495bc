"""Decision-tree policies: extraction from masked policies, execution,
metrics and JSON serialization.

Convention throughout: at an internal node, states with
``features[feature] <= threshold`` go left.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TreeNode:
    """Internal node (feature, threshold, children) or leaf (action).

    Thresholds are stored in normalized [0, 1] units.
    """

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    action: int = -1

    @property
    def is_leaf(self):
        return self.left is None

    @staticmethod
    def leaf(action):
        return TreeNode(action=int(action))

    @staticmethod
    def internal(feature, threshold, left, right):
        return TreeNode(feature=int(feature), threshold=float(threshold),
                        left=left, right=right)


@dataclass(frozen=True)
class TreeMetrics:
    depth: int
    node_count: int


def extract_tree(policy, n_features, depth_cap, fallback_base_action=None):
    """Transcribe a masked policy into its equivalent decision tree.

    `policy` maps (lower, upper) bound vectors to a wrapped action, returned
    as either ``("base", action)`` or ``("split", feature, value)`` with the
    normalized value in (0, 1). The recursion queries the policy, emits a leaf
    for base actions, and otherwise projects the split value into the current
    interval and recurses on both child observations.

    `depth_cap` bounds the recursion for policies that never stop splitting;
    when it is hit, `fallback_base_action(lower, upper)` chooses the leaf.
    A trained depth-limited policy never reaches the fallback because split
    actions are illegal at the depth limit.
    """
    if depth_cap < 0:
        raise ValueError("depth_cap must be >= 0")

    def build(lower, upper, depth):
        decision = policy(lower, upper) if depth < depth_cap else None
        if decision is None or decision[0] == "base":
            if decision is not None:
                return TreeNode.leaf(decision[1])
            if fallback_base_action is None:
                raise ValueError(
                    "depth_cap reached but no fallback_base_action given")
            return TreeNode.leaf(fallback_base_action(lower, upper))
        _, c, v = decision
        v_p = v * (upper[c] - lower[c]) + lower[c]
        left_upper = upper.copy()
        left_upper[c] = v_p
        right_lower = lower.copy()
        right_lower[c] = v_p
        left = build(lower, left_upper, depth + 1)
        right = build(right_lower, upper, depth + 1)
        return TreeNode.internal(c, v_p, left, right)

    return build(np.zeros(n_features), np.ones(n_features), 0)


def tree_act(tree, features):
    """Traverse the tree for a normalized feature vector; returns the action."""
    node = tree
    while not node.is_leaf:
        node = node.left if features[node.feature] <= node.threshold else node.right
    return node.action


def tree_metrics(tree):
    """Depth (internal nodes on the longest root-leaf path) and node count."""
    if tree.is_leaf:
        return TreeMetrics(depth=0, node_count=1)
    left = tree_metrics(tree.left)
    right = tree_metrics(tree.right)
    return TreeMetrics(depth=1 + max(left.depth, right.depth),
                       node_count=1 + left.node_count + right.node_count)


def tree_to_dict(tree):
    if tree.is_leaf:
        return {"type": "leaf", "action": tree.action}
    return {
        "type": "internal",
        "feature": tree.feature,
        "threshold": tree.threshold,
        "left": tree_to_dict(tree.left),
        "right": tree_to_dict(tree.right),
    }


def tree_serialize(tree):
    """Render a tree as its canonical JSON document."""
    return json.dumps(tree_to_dict(tree), indent=2)


class TreeParseError(ValueError):
    """Malformed tree document; the message names the offending node path."""


def _parse_node(obj, path):
    if not isinstance(obj, dict):
        raise TreeParseError(f"{path}: expected an object")
    kind = obj.get("type")
    if kind == "leaf":
        if not isinstance(obj.get("action"), int):
            raise TreeParseError(f"{path}: leaf needs an integer 'action'")
        return TreeNode.leaf(obj["action"])
    if kind == "internal":
        for key in ("feature", "threshold", "left", "right"):
            if key not in obj:
                raise TreeParseError(f"{path}: internal node missing '{key}'")
        if not isinstance(obj["feature"], int):
            raise TreeParseError(f"{path}: 'feature' must be an integer")
        if not isinstance(obj["threshold"], (int, float)):
            raise TreeParseError(f"{path}: 'threshold' must be a number")
        left = _parse_node(obj["left"], path + ".left")
        right = _parse_node(obj["right"], path + ".right")
        return TreeNode.internal(obj["feature"], obj["threshold"], left, right)
    raise TreeParseError(f"{path}: unknown node type {kind!r}")


def tree_deserialize(text):
    """Parse the JSON tree format back into a TreeNode."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TreeParseError(f"invalid JSON: {exc}") from exc
    return _parse_node(obj, "root")


def format_tree(tree, env=None, feature_names=None, action_names=None, indent=0):
    """Human-readable rendering; thresholds are denormalized when an env
    with feature bounds is supplied."""
    pad = "  " * indent
    if tree.is_leaf:
        name = (action_names[tree.action] if action_names
                else f"action {tree.action}")
        return f"{pad}-> {name}\n"
    fname = (feature_names[tree.feature] if feature_names
             else f"f{tree.feature}")
    thr = tree.threshold
    if env is not None:
        lo = env.spec.feature_lower_bounds[tree.feature]
        hi = env.spec.feature_upper_bounds[tree.feature]
        thr = lo + thr * (hi - lo)
    out = f"{pad}if {fname} <= {thr:.6g}:\n"
    out += format_tree(tree.left, env, feature_names, action_names, indent + 1)
    out += f"{pad}else:\n"
    out += format_tree(tree.right, env, feature_names, action_names, indent + 1)
    return out
