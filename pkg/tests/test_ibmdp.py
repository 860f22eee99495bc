import numpy as np
import pytest

from ibtree import (
    ActionSpace,
    IbmdpConfig,
    PotholeWorld,
    PrereqWorld,
    legal_actions,
    mask,
    project_value,
    wrap_reset,
    wrap_step,
)


def test_project_value_examples():
    assert project_value(0.5, 0.0, 1.0) == pytest.approx(0.5)
    assert project_value(0.25, 0.2, 0.6) == pytest.approx(0.3)
    assert project_value(2 / 3, 0.5, 0.8) == pytest.approx(0.7)


def test_project_value_strictly_interior():
    rng = np.random.default_rng(0)
    for _ in range(200):
        lo = rng.uniform(0, 0.9)
        hi = lo + rng.uniform(1e-6, 1 - lo)
        v = rng.uniform(1e-9, 1 - 1e-9)
        vp = project_value(v, lo, hi)
        assert lo < vp < hi


def test_project_value_degenerate_interval_rejected():
    with pytest.raises(ValueError):
        project_value(0.5, 0.4, 0.4)
    with pytest.raises(ValueError):
        project_value(0.0, 0.0, 1.0)


def test_action_space_count_and_roundtrip():
    space = ActionSpace(n_features=4, n_base_actions=2, p=10)
    assert space.n_actions == 2 + 40
    seen = set()
    for c in range(4):
        for j in range(1, 11):
            a = space.split_action(c, j)
            assert not space.is_base(a)
            feat, v = space.split_params(a)
            assert feat == c
            assert v == pytest.approx(j / 11)
            seen.add(a)
    assert len(seen) == 40
    with pytest.raises(ValueError):
        space.split_params(0)
    with pytest.raises(ValueError):
        space.split_action(4, 1)


def test_wrap_reset_is_root():
    env = PrereqWorld(m=4)
    state = wrap_reset(env, np.random.default_rng(0))
    assert state.is_root()
    assert np.all(state.lower == 0.0)
    assert np.all(state.upper == 1.0)
    assert state.base.features.shape == (4,)


def test_wrap_step_split_tightens_upper():
    env = PotholeWorld()
    config = IbmdpConfig(p=1, zeta=-0.01)
    rng = np.random.default_rng(0)
    state = wrap_reset(env, rng)
    # base position 0.3 normalized: build state manually
    state = state.__class__(
        base=state.base.__class__(features=np.array([0.3]),
                                  raw=np.array([15.0])),
        lower=np.zeros(1), upper=np.ones(1))
    space = ActionSpace(1, 3, 1)
    nxt, reward, terminal = wrap_step(env, state, space.split_action(0, 1),
                                      config, rng)
    assert nxt.lower[0] == 0.0
    assert nxt.upper[0] == 0.5
    assert reward == config.zeta
    assert not terminal
    # second split projects into [0, 0.5]: v_p = 0.25, base 0.3 > 0.25
    nxt2, _, _ = wrap_step(env, nxt, space.split_action(0, 1), config, rng)
    assert nxt2.lower[0] == pytest.approx(0.25)
    assert nxt2.upper[0] == 0.5
    assert np.array_equal(nxt2.base.features, state.base.features)


def test_wrap_step_base_action_resets_bounds():
    env = PrereqWorld(m=10)
    config = IbmdpConfig(p=1, zeta=-0.01)
    rng = np.random.default_rng(0)
    state = wrap_reset(env, rng)
    space = ActionSpace(10, 10, 1)
    state, _, _ = wrap_step(env, state, space.split_action(2, 1), config, rng)
    assert state.upper[2] == 0.5
    nxt, reward, terminal = wrap_step(env, state, 4, config, rng)
    assert nxt.base.features[4] == 1.0
    assert reward == -1.0
    assert not terminal
    assert np.all(nxt.lower == 0.0) and np.all(nxt.upper == 1.0)
    assert nxt.splits_since_base == 0


def test_wrap_step_invalid_action():
    env = PrereqWorld(m=3)
    config = IbmdpConfig(p=1)
    rng = np.random.default_rng(0)
    state = wrap_reset(env, rng)
    with pytest.raises(ValueError):
        wrap_step(env, state, 6, config, rng)


def test_legal_actions_masking():
    space = ActionSpace(3, 3, 2)
    limited = IbmdpConfig(p=2, depth_limit=2)
    assert legal_actions(2, limited, space) == list(range(3))
    assert legal_actions(1, limited, space) == list(range(9))
    unlimited = IbmdpConfig(p=2)
    assert legal_actions(50, unlimited, space) == list(range(9))
    zero = IbmdpConfig(p=2, depth_limit=0)
    assert legal_actions(0, zero, space) == list(range(3))
    with pytest.raises(ValueError):
        legal_actions(-1, limited, space)


def test_mask_projects_bounds_only():
    env = PrereqWorld(m=3)
    rng = np.random.default_rng(0)
    root = wrap_reset(env, rng)
    obs = mask(root)
    assert np.all(obs.lower == 0.0) and np.all(obs.upper == 1.0)
    # equal bounds, different base states -> equal observations
    other = root.__class__(
        base=root.base.__class__(features=np.array([1.0, 0.0, 1.0]),
                                 raw=np.array([1.0, 0.0, 1.0])),
        lower=root.lower.copy(), upper=root.upper.copy())
    obs2 = mask(other)
    assert np.array_equal(obs.key(), obs2.key())


def test_config_validation():
    with pytest.raises(ValueError):
        IbmdpConfig(p=0)
    with pytest.raises(ValueError):
        IbmdpConfig(zeta=0.1)
    with pytest.raises(ValueError):
        IbmdpConfig(gamma_b=0.0)
    with pytest.raises(ValueError):
        IbmdpConfig(depth_limit=-1)


@pytest.mark.parametrize("env_factory,p", [
    (lambda: PrereqWorld(m=4), 1),
    (lambda: PotholeWorld(), 10),
])
def test_random_walk_invariants(env_factory, p):
    """Bounds always bracket the base features; splits never move the base;
    zeta accounting holds between base actions; depth limits bind."""
    env = env_factory()
    config = IbmdpConfig(p=p, zeta=-0.01, depth_limit=4)
    space = ActionSpace(env.spec.n_features, env.spec.n_base_actions, p)
    rng = np.random.default_rng(11)
    transitions = 0
    for _ in range(60):
        state = wrap_reset(env, rng)
        split_run = 0
        zeta_sum = 0.0
        while transitions < 5000:
            legal = legal_actions(state.splits_since_base, config, space)
            action = int(legal[rng.integers(len(legal))])
            nxt, reward, terminal = wrap_step(env, state, action, config, rng)
            transitions += 1
            assert np.all(nxt.lower <= nxt.base.features + 1e-12)
            assert np.all(nxt.base.features <= nxt.upper + 1e-12)
            assert np.all(nxt.lower < nxt.upper)
            if space.is_base(action):
                assert np.all(nxt.lower == 0.0) and np.all(nxt.upper == 1.0)
                assert zeta_sum == pytest.approx(config.zeta * split_run)
                split_run = 0
                zeta_sum = 0.0
            else:
                assert reward == config.zeta
                assert not terminal
                assert np.array_equal(nxt.base.features, state.base.features)
                split_run += 1
                zeta_sum += reward
                assert split_run <= config.depth_limit
            state = nxt
            if terminal:
                break
        if transitions >= 5000:
            break
