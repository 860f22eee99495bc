import numpy as np
import pytest

from ibtree import BaseState, CartPole, PotholeWorld, PrereqSpec, PrereqWorld, make_env
from ibtree.envs import derive_prereq_spec


def test_prereq_reset_all_items_absent():
    env = PrereqWorld(m=7)
    state = env.reset(np.random.default_rng(0))
    assert state.features.shape == (7,)
    assert np.all(state.features == 0.0)


def test_prereq_default_list_matches_base_task():
    env = PrereqWorld(m=10)
    expected = {0: [1, 2], 1: [5], 2: [4], 3: [6, 7], 4: [], 5: [7],
                6: [7, 9], 7: [8], 8: [], 9: []}
    for i, reqs in enumerate(env.prereq_spec.prerequisites):
        assert list(reqs) == expected[i]


def test_prereq_make_unlocked_item():
    env = PrereqWorld(m=10)
    rng = np.random.default_rng(0)
    state = env.reset(rng)
    result = env.step(state, 4, rng)
    assert result.next_state.features[4] == 1.0
    assert result.reward == -1.0
    assert not result.terminal


def test_prereq_unmet_prerequisites_noop():
    env = PrereqWorld(m=10)
    rng = np.random.default_rng(0)
    state = env.reset(rng)
    result = env.step(state, 0, rng)
    assert np.array_equal(result.next_state.features, state.features)
    assert result.reward == -1.0
    assert not result.terminal


def test_prereq_goal_production_terminates_with_zero_reward():
    env = PrereqWorld(m=7)
    rng = np.random.default_rng(0)
    state = env.reset(rng)
    total = 0.0
    for action in [5, 1, 4, 2, 0]:
        result = env.step(state, action, rng)
        total += result.reward
        state = result.next_state
    assert result.terminal
    assert total == -4.0


def test_prereq_consumes_prerequisites():
    env = PrereqWorld(m=7)
    rng = np.random.default_rng(0)
    state = env.reset(rng)
    state = env.step(state, 5, rng).next_state
    result = env.step(state, 1, rng)
    assert result.next_state.features[1] == 1.0
    assert result.next_state.features[5] == 0.0


def test_prereq_topological_order_enforced():
    with pytest.raises(ValueError):
        PrereqSpec(m=3, prerequisites=((), (0,), ()), goal_item=0)


def test_prereq_derived_variant_drops_high_items():
    spec = derive_prereq_spec(7)
    assert spec.m == 7
    assert list(spec.prerequisites[3]) == [6]
    assert list(spec.prerequisites[5]) == []
    assert list(spec.prerequisites[6]) == []


def test_prereq_invalid_action_rejected():
    env = PrereqWorld(m=4)
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        env.step(env.reset(rng), 4, rng)


def test_pothole_reset_at_zero():
    env = PotholeWorld()
    state = env.reset(np.random.default_rng(0))
    assert state.raw[0] == 0.0
    assert state.features[0] == 0.0


def test_pothole_lane2_crossing_penalty():
    env = PotholeWorld()
    state = BaseState(features=np.array([2.8 / 50]), raw=np.array([2.8]))
    result = env.step_with_advance(state, 1, 0.6)
    assert result.next_state.raw[0] == pytest.approx(3.4)
    assert result.reward == pytest.approx(0.6 - 5.0)


def test_pothole_lane1_discounted_never_penalized():
    env = PotholeWorld()
    state = BaseState(features=np.array([10.0 / 50]), raw=np.array([10.0]))
    result = env.step_with_advance(state, 0, 0.8)
    assert result.reward == pytest.approx(0.72)


def test_pothole_start_position_pothole_not_rehit():
    # lane 3 has a pothole exactly at 0; the interval (0, next] excludes it
    env = PotholeWorld()
    state = env.reset(np.random.default_rng(0))
    result = env.step_with_advance(state, 2, 0.9)
    assert result.reward == pytest.approx(0.9)


def test_pothole_terminal_at_road_end_caps_reward():
    env = PotholeWorld()
    state = BaseState(features=np.array([49.7 / 50]), raw=np.array([49.7]))
    result = env.step_with_advance(state, 0, 0.9)
    assert result.terminal
    assert result.next_state.raw[0] == 50.0
    assert result.reward == pytest.approx(0.9 * 0.3)


def test_pothole_rollout_invariants():
    env = PotholeWorld()
    rng = np.random.default_rng(42)
    for _ in range(50):
        state = env.reset(rng)
        steps = 0
        while True:
            prev = state.raw[0]
            action = int(rng.integers(3))
            u = env.draw_advance(rng)
            assert 0.5 <= u < 1.0
            result = env.step_with_advance(state, action, u)
            assert result.next_state.raw[0] >= prev
            if action == 0:
                moved = result.next_state.raw[0] - prev
                assert result.reward == pytest.approx(0.9 * moved)
            state = result.next_state
            steps += 1
            if result.terminal:
                break
        assert steps <= 100


def test_cartpole_reset_within_band():
    env = CartPole()
    rng = np.random.default_rng(7)
    for _ in range(20):
        state = env.reset(rng)
        assert np.all(np.abs(state.raw) <= 0.05)


def test_cartpole_episode_capped_at_200():
    env = CartPole()
    rng = np.random.default_rng(3)
    state = env.reset(rng)
    steps = 0
    while True:
        action = steps % 2  # alternating keeps the pole up a long time
        result = env.step(state, action, rng)
        steps += 1
        state = result.next_state
        if result.terminal:
            break
    assert steps <= 200


def test_cartpole_single_step_matches_euler_oracle():
    env = CartPole()
    raw = np.array([0.01, -0.02, 0.03, 0.04])
    state = BaseState(features=env.normalize(raw), raw=raw)
    result = env.step(state, 1, np.random.default_rng(0))
    # independent Euler integration of the standard dynamics
    g, mc, mp, half, force, dt = 9.8, 1.0, 0.1, 0.5, 10.0, 0.02
    total = mc + mp
    x, xd, th, thd = raw
    tmp = (force + mp * half * thd**2 * np.sin(th)) / total
    thacc = (g * np.sin(th) - np.cos(th) * tmp) / (
        half * (4.0 / 3.0 - mp * np.cos(th) ** 2 / total))
    xacc = tmp - mp * half * thacc * np.cos(th) / total
    expected = np.array([x + dt * xd, xd + dt * xacc, th + dt * thd,
                         thd + dt * thacc])
    assert np.allclose(result.next_state.raw, expected)
    assert result.reward == 1.0


def test_cartpole_terminates_on_angle():
    env = CartPole()
    raw = np.array([0.0, 0.0, 0.26, 0.5])  # just under 15 degrees
    state = BaseState(features=env.normalize(raw), raw=raw)
    result = env.step(state, 1, np.random.default_rng(0))
    assert result.terminal


def test_normalize_examples():
    pothole = PotholeWorld()
    assert pothole.normalize([25.0])[0] == pytest.approx(0.5)
    cart = CartPole()
    assert cart.normalize([0.0, 3.0, 0.0, 0.0])[1] == pytest.approx(1.0)
    prereq = PrereqWorld(m=4)
    assert prereq.normalize([0, 1, 0, 1])[1] == 1.0


def test_normalize_monotone_and_bounds():
    env = CartPole()
    lo = env.spec.feature_lower_bounds
    hi = env.spec.feature_upper_bounds
    assert np.all(env.normalize(lo) == 0.0)
    assert np.all(env.normalize(hi) == 1.0)
    rng = np.random.default_rng(0)
    for _ in range(100):
        a = rng.uniform(-3, 3, 4)
        b = a + rng.uniform(0, 1, 4)
        na, nb = env.normalize(a), env.normalize(b)
        assert np.all(nb >= na)


def test_denormalize_inverse_with_clamping():
    env = CartPole()
    raw = np.array([1.0, 3.0, -0.2, 0.3])
    back = env.denormalize(env.normalize(raw))
    clamped = np.clip(raw, env.spec.feature_lower_bounds,
                      env.spec.feature_upper_bounds)
    assert np.allclose(back, clamped)


def test_make_env_registry():
    assert isinstance(make_env("prereqworld", m=5), PrereqWorld)
    assert isinstance(make_env("PotholeWorld"), PotholeWorld)
    assert isinstance(make_env("cartpole"), CartPole)
    with pytest.raises(ValueError):
        make_env("gridworld")


def test_make_env_custom_pothole_lists():
    env = make_env("potholeworld", lane2_potholes=[5.0], lane3_potholes=[])
    assert env.lane2.tolist() == [5.0]
    assert env.lane3.tolist() == []
