import json

import numpy as np
import pytest

from ibtree import (
    TreeNode,
    TreeParseError,
    extract_tree,
    tree_act,
    tree_deserialize,
    tree_metrics,
    tree_serialize,
)
from ibtree.tree import format_tree


def leaf(a):
    return TreeNode.leaf(a)


def internal(f, t, l, r):
    return TreeNode.internal(f, t, l, r)


def test_extract_constant_policy_is_leaf():
    tree = extract_tree(lambda lo, hi: ("base", 2), n_features=3, depth_cap=5)
    assert tree.is_leaf and tree.action == 2


def test_extract_single_split():
    def policy(lower, upper):
        if upper[0] <= 0.5:
            return ("base", 0)
        if lower[0] >= 0.5:
            return ("base", 1)
        return ("split", 0, 0.5)

    tree = extract_tree(policy, n_features=1, depth_cap=5)
    assert not tree.is_leaf
    assert tree.feature == 0 and tree.threshold == pytest.approx(0.5)
    assert tree.left.action == 0 and tree.right.action == 1
    assert tree_metrics(tree).depth == 1


def test_extract_nested_split_projects_threshold():
    def policy(lower, upper):
        width = upper[0] - lower[0]
        if width > 0.3:
            return ("split", 0, 0.5)
        return ("base", 0)

    tree = extract_tree(policy, n_features=1, depth_cap=5)
    # root threshold 0.5; left child splits [0, 0.5] at v=0.5 -> 0.25
    assert tree.threshold == pytest.approx(0.5)
    assert tree.left.threshold == pytest.approx(0.25)
    assert tree.right.threshold == pytest.approx(0.75)


def test_extract_depth_cap_forces_leaf():
    calls = []

    def policy(lower, upper):
        calls.append(1)
        return ("split", 0, 0.5)

    tree = extract_tree(policy, n_features=1, depth_cap=3,
                        fallback_base_action=lambda lo, hi: 7)
    metrics = tree_metrics(tree)
    assert metrics.depth == 3
    assert metrics.node_count == 2 ** 4 - 1
    # all leaves come from the fallback
    def check(node):
        if node.is_leaf:
            assert node.action == 7
        else:
            check(node.left)
            check(node.right)
    check(tree)


def test_extract_depth_cap_without_fallback_raises():
    with pytest.raises(ValueError):
        extract_tree(lambda lo, hi: ("split", 0, 0.5), 1, 2)


def test_tree_act_examples():
    assert tree_act(leaf(1), np.array([0.9])) == 1
    t = internal(0, 0.5, leaf(0), leaf(1))
    assert tree_act(t, np.array([0.5])) == 0  # ties go left
    assert tree_act(t, np.array([0.51])) == 1


def test_tree_act_depth_two_all_regions():
    t = internal(0, 0.5,
                 internal(1, 0.5, leaf(0), leaf(1)),
                 internal(1, 0.25, leaf(2), leaf(3)))
    # brute-force oracle over a grid of the four regions
    for x in np.linspace(0, 1, 23):
        for y in np.linspace(0, 1, 23):
            if x <= 0.5:
                expected = 0 if y <= 0.5 else 1
            else:
                expected = 2 if y <= 0.25 else 3
            assert tree_act(t, np.array([x, y])) == expected


def test_tree_metrics():
    assert tree_metrics(leaf(0)) == tree_metrics(leaf(5))
    assert tree_metrics(leaf(0)).depth == 0
    assert tree_metrics(leaf(0)).node_count == 1
    t1 = internal(0, 0.5, leaf(0), leaf(1))
    assert tree_metrics(t1).depth == 1
    assert tree_metrics(t1).node_count == 3
    t2 = internal(0, 0.5, t1, internal(1, 0.3, leaf(0), leaf(2)))
    assert tree_metrics(t2).depth == 2
    assert tree_metrics(t2).node_count == 7


def test_serialize_leaf_format():
    assert json.loads(tree_serialize(leaf(0))) == {"type": "leaf", "action": 0}


def test_serialize_internal_format():
    t = internal(1, 0.25, leaf(0), leaf(2))
    obj = json.loads(tree_serialize(t))
    assert obj == {"type": "internal", "feature": 1, "threshold": 0.25,
                   "left": {"type": "leaf", "action": 0},
                   "right": {"type": "leaf", "action": 2}}


def _random_tree(rng, depth=0):
    if depth >= 4 or rng.random() < 0.4:
        return leaf(int(rng.integers(5)))
    return internal(int(rng.integers(3)), float(np.round(rng.random(), 6)),
                    _random_tree(rng, depth + 1), _random_tree(rng, depth + 1))


def test_serialize_roundtrip_random_trees():
    rng = np.random.default_rng(5)
    for _ in range(50):
        t = _random_tree(rng)
        assert tree_deserialize(tree_serialize(t)) == t


def test_deserialize_unknown_type_errors_with_path():
    bad = json.dumps({"type": "internal", "feature": 0, "threshold": 0.5,
                      "left": {"type": "leaf", "action": 0},
                      "right": {"type": "oak"}})
    with pytest.raises(TreeParseError, match="root.right"):
        tree_deserialize(bad)


def test_deserialize_missing_field_errors():
    with pytest.raises(TreeParseError, match="missing"):
        tree_deserialize(json.dumps({"type": "internal", "feature": 0,
                                     "threshold": 0.5,
                                     "left": {"type": "leaf", "action": 0}}))
    with pytest.raises(TreeParseError):
        tree_deserialize("{not json")
    with pytest.raises(TreeParseError):
        tree_deserialize(json.dumps({"type": "leaf", "action": "north"}))


def test_extracted_thresholds_inside_ancestor_intervals():
    rng = np.random.default_rng(9)
    n = 3

    def random_policy(lower, upper):
        h = hash((tuple(np.round(lower, 6)), tuple(np.round(upper, 6))))
        local = np.random.default_rng(abs(h) % (2**32))
        if local.random() < 0.55:
            return ("split", int(local.integers(n)),
                    float(local.uniform(0.2, 0.8)))
        return ("base", int(local.integers(2)))

    for _ in range(10):
        tree = extract_tree(random_policy, n, depth_cap=6,
                            fallback_base_action=lambda lo, hi: 0)

        def walk(node, lower, upper):
            if node.is_leaf:
                return
            c = node.feature
            assert lower[c] < node.threshold < upper[c]
            lo2 = lower.copy()
            hi2 = upper.copy()
            hi2[c] = node.threshold
            walk(node.left, lower, hi2)
            lo2[c] = node.threshold
            walk(node.right, lo2, upper)

        walk(tree, np.zeros(n), np.ones(n))


def test_format_tree_denormalizes():
    from ibtree import PotholeWorld

    t = internal(0, 0.5, leaf(0), leaf(1))
    text = format_tree(t, env=PotholeWorld())
    assert "25" in text  # 0.5 of a 50-unit road
