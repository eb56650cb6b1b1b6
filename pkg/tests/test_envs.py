import math

import numpy as np
import pytest

from hgarl.envs import CartPole, EnvSpec, GridWorld, ProtocolError, make_env


def test_gridworld_reset_is_fixed_start():
    env = GridWorld()
    for seed in (0, 1, 99):
        obs = env.reset(seed)
        assert obs[0] == 1.0 and obs.sum() == 1.0


def test_cartpole_reset_determinism():
    a, b = CartPole(), CartPole()
    assert np.array_equal(a.reset(7), b.reset(7))
    assert not np.array_equal(a.reset(7), b.reset(8))


def test_gridworld_right_move():
    env = GridWorld(size=4)
    env.reset(0)
    res = env.step(1)
    assert env.position == (0, 1)
    assert res.reward == pytest.approx(-0.01)
    assert not res.terminal


def test_gridworld_walls_and_goal():
    env = GridWorld.from_map("S#\n.G\n")
    env.reset()
    assert env.step(1).observation[0] == 1.0  # wall blocks
    env.step(2)
    res = env.step(1)
    assert res.terminal and res.reward == 1.0


def test_gridworld_map_errors(tmp_path):
    with pytest.raises(ValueError):
        GridWorld.from_map("S.\n.X\n")
    with pytest.raises(ValueError):
        GridWorld.from_map("S..\n.G\n")
    p = tmp_path / "m.txt"
    p.write_text("S..\n.#.\n..G\n")
    env = make_env("gridworld", map_file=str(p))
    assert env.spec.observation_dim == 9


def _cartpole_step_oracle(state, action):
    # published Euler-integrated dynamics, written out independently
    x, xd, th, thd = state
    g, mc, mp, l, f, tau = 9.8, 1.0, 0.1, 0.5, 10.0, 0.02
    force = f if action == 1 else -f
    tmp = (force + mp * l * thd * thd * math.sin(th)) / (mc + mp)
    thacc = (g * math.sin(th) - math.cos(th) * tmp) / (l * (4 / 3 - mp * math.cos(th) ** 2 / (mc + mp)))
    xacc = tmp - mp * l * thacc * math.cos(th) / (mc + mp)
    return [x + tau * xd, xd + tau * xacc, th + tau * thd, thd + tau * thacc]


def test_cartpole_terminal_hand_example():
    env = CartPole()
    env.reset(0)
    start = [0.0, 0.0, 0.205, 0.5]
    env.state = np.array(start)
    expected = _cartpole_step_oracle(start, 1)
    res = env.step(1)
    assert expected[2] > 12 * math.pi / 180
    assert res.observation == pytest.approx(expected, abs=1e-12)
    assert res.terminal and res.reward == 1.0


def test_cartpole_non_terminal_step_matches_oracle():
    env = CartPole()
    obs = env.reset(3)
    res = env.step(0)
    assert res.observation == pytest.approx(_cartpole_step_oracle(list(obs), 0), abs=1e-12)
    assert not res.terminal


def test_step_limit_terminates():
    env = CartPole(max_episode_steps=3)
    env.reset(0)
    results = [env.step(i % 2) for i in range(3)]
    assert results[-1].terminal


def test_protocol_errors():
    env = GridWorld.from_map("SG\n")
    with pytest.raises(ProtocolError):
        env.step(0)  # never reset
    env.reset()
    with pytest.raises(ProtocolError):
        env.step(4)
    assert env.step(1).terminal
    with pytest.raises(ProtocolError):
        env.step(0)


def test_envspec_validation():
    with pytest.raises(ValueError):
        EnvSpec(4, 1, 10, (0.0, 1.0))
    with pytest.raises(ValueError):
        EnvSpec(0, 2, 10, (0.0, 1.0))
    with pytest.raises(ValueError):
        make_env("pong")


def test_snapshot_restore_then_different_moves():
    env = GridWorld()
    env.reset()
    snap = env.snapshot()
    o1 = env.step(1).observation
    env.restore(snap)
    o2 = env.step(2).observation
    assert not np.array_equal(o1, o2)


def test_lookahead_leaves_env_untouched():
    env = CartPole()
    env.reset(5)
    before = env.snapshot()
    env.lookahead(1)
    assert env.real_steps == 0
    assert np.array_equal(env.state, before.data) and env.steps == before.steps


def test_clone_traces_identical():
    rng = np.random.default_rng(0)
    for trial in range(1000):
        env = CartPole() if trial % 2 else GridWorld()
        env.reset(trial)
        for _ in range(int(rng.integers(0, 5))):
            if env.step(int(rng.integers(env.spec.action_count))).terminal:
                env.reset()
        snap = env.snapshot()
        actions = rng.integers(env.spec.action_count, size=12)

        def trace():
            out = []
            for a in actions:
                r = env.step(int(a))
                out.append((r.observation.tobytes(), r.reward, r.terminal))
                if r.terminal:
                    break
            return out
        first = trace()
        env.restore(snap)
        assert trace() == first
