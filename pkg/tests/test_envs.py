from functools import lru_cache

import numpy as np
import pytest

from adventurer.envs import (
    EnvSpec, EpisodeDone, GridMaze, PointGoal, SnapshotError, SparseChain, StateSnapshot, make_env,
)


def reach_probability(length: int, horizon: int) -> float:
    """Exact P(uniform-random actions reach the chain's end within ``horizon`` steps)."""

    @lru_cache(maxsize=None)
    def f(pos, t):
        if pos == length - 1:
            return 1.0
        if t == horizon:
            return 0.0
        return 0.5 * f(pos + 1, t + 1) + 0.5 * f(0, t + 1)

    return f(0, 0)


class TestSparseChain:
    def test_reset_is_one_hot_at_zero(self):
        env = SparseChain(10)
        for seed in (0, 1, 99):
            obs = env.reset(seed)
            assert obs[0] == 1.0 and obs.sum() == 1.0

    def test_nine_rights_reach_goal(self):
        env = SparseChain(10)
        env.reset(0)
        for i in range(9):
            tr = env.step(SparseChain.RIGHT)
            assert tr.reward == (1.0 if i == 8 else 0.0)
        assert tr.done and not tr.truncated

    def test_left_returns_to_start(self):
        env = SparseChain(10)
        env.reset(0)
        for _ in range(5):
            env.step(1)
        tr = env.step(0)
        assert tr.observation[0] == 1.0 and tr.reward == 0.0

    def test_horizon_truncates(self):
        env = SparseChain(10, horizon=4)
        env.reset(0)
        trs = [env.step(0) for _ in range(4)]
        assert trs[-1].done and trs[-1].truncated
        assert not any(t.done for t in trs[:-1])
        with pytest.raises(EpisodeDone):
            env.step(0)

    def test_bad_action(self):
        env = SparseChain(5)
        env.reset(0)
        with pytest.raises(ValueError):
            env.step(2)
        with pytest.raises(ValueError):
            env.step(0.5)

    @pytest.mark.parametrize("length", [4, 6, 10])
    def test_sparse_reward_hardness(self, length):
        horizon = 2 * length
        exact = reach_probability(length, horizon)
        k = length - 1
        # a successful run of k rights starts at t=0 or right after a "left"
        union_bound = 0.5 ** k * (1 + (horizon - k) / 2)
        assert 0.5 ** k <= exact <= union_bound
        assert reach_probability(length, k) == pytest.approx(0.5 ** k, rel=1e-12)

    def test_hardness_matches_simulation(self):
        length, horizon, n = 6, 12, 20_000
        rng = np.random.default_rng(0)
        env = SparseChain(length, horizon)
        hits = 0
        for _ in range(n):
            env.reset(0)
            while True:
                tr = env.step(int(rng.integers(2)))
                if tr.done:
                    hits += tr.reward > 0
                    break
        p = reach_probability(length, horizon)
        assert abs(hits / n - p) < 4 * np.sqrt(p * (1 - p) / n)


class TestGridMaze:
    def test_determinism(self):
        a, b = GridMaze(3), GridMaze(3)
        np.testing.assert_array_equal(a.reset(11), b.reset(11))

    def test_observation_layout(self):
        env = GridMaze(0)
        obs = env.reset(5)
        assert obs.shape == (144,)
        assert set(np.unique(obs)) <= {0.0, 1.0}
        assert obs.sum() == env.walls.sum() + 1
        assert env.room_of(env.pos) == 1

    def test_walls_block(self):
        env = GridMaze(0)
        env.reset(0)
        env.pos = (1, 1)
        env.step(0)  # up into the border
        assert env.pos == (1, 1)

    def test_path_through_door_reaches_goal(self):
        env = GridMaze(2, horizon=200)
        env.reset(0)
        env.pos = (env.door[0], env.door[1] - 1)
        env.step(3)
        assert env.pos == env.door
        env.step(3)
        gr, gc = env.goal
        tr = None
        while env.pos[0] != gr:
            tr = env.step(1 if gr > env.pos[0] else 0)
        while env.pos != env.goal:
            tr = env.step(3)
        assert tr.reward == 1.0 and tr.done


class TestPointGoal:
    def test_bounds(self):
        env = PointGoal()
        for seed in range(20):
            obs = env.reset(seed)
            assert np.all(np.abs(obs) <= 1.0)
            assert env.distance() > env.goal_radius

    def test_step_toward_goal(self):
        env = PointGoal(goal_radius=0.05, step_size=0.1)
        env.reset(0)
        env.pos = np.array([0.0, 0.0])
        env.goal = np.array([0.6, 0.8])
        d = env.distance()
        u = (env.goal - env.pos) / d
        tr = env.step(u)
        assert env.distance() == pytest.approx(d - 0.1, abs=1e-12)
        assert tr.reward == 0.0

    def test_reward_inside_radius(self):
        env = PointGoal(goal_radius=0.1, step_size=0.1)
        env.reset(0)
        env.pos = np.array([0.0, 0.0])
        env.goal = np.array([0.15, 0.0])
        tr = env.step(np.array([1.0, 0.0]))
        assert tr.reward == 1.0 and tr.done and not tr.truncated

    def test_position_clipped_to_bounds(self):
        env = PointGoal()
        env.reset(0)
        env.pos = np.array([0.98, 0.0])
        env.goal = np.array([-0.9, -0.9])
        env.step(np.array([1.0, 0.0]))
        assert env.pos[0] == 1.0

    def test_out_of_bounds_action(self):
        env = PointGoal()
        env.reset(0)
        with pytest.raises(ValueError):
            env.step(np.array([1.5, 0.0]))
        with pytest.raises(ValueError):
            env.step(np.array([1.0]))

    def test_dense_reward(self):
        env = PointGoal(dense=True)
        env.reset(3)
        tr = env.step(np.zeros(2))
        assert tr.reward == pytest.approx(-env.distance())


ENVS = [
    lambda: SparseChain(8),
    lambda: GridMaze(1),
    lambda: PointGoal(),
]


def _actions(env, rng, n):
    if env.spec.action_kind == "discrete":
        return [int(a) for a in rng.integers(env.spec.n_actions, size=n)]
    return list(rng.uniform(-1, 1, size=(n, 2)))


@pytest.mark.parametrize("factory", ENVS)
def test_snapshot_replay_is_exact(factory):
    env = factory()
    rng = np.random.default_rng(0)
    env.reset(4)
    for a in _actions(env, rng, 3):
        if env.step(a).done:
            env.reset(4)
    snap = env.snapshot()
    actions = _actions(env, rng, 6)

    def replay():
        out = []
        for a in actions:
            tr = env.step(a)
            out.append((tr.observation.tobytes(), tr.reward, tr.done))
            if tr.done:
                break
        return out

    first = replay()
    env.restore(snap)
    assert replay() == first


@pytest.mark.parametrize("factory", ENVS)
def test_markov_determinism_under_seed(factory):
    def run():
        env = factory()
        rng = np.random.default_rng(1)
        obs = [env.reset(9).tobytes()]
        for a in _actions(env, rng, 10):
            tr = env.step(a)
            obs.append((tr.observation.tobytes(), tr.reward))
            if tr.done:
                break
        return obs

    assert run() == run()


@pytest.mark.parametrize("factory", ENVS)
def test_horizon_never_exceeded(factory):
    env = factory()
    rng = np.random.default_rng(2)
    env.reset(0)
    n = 0
    while True:
        n += 1
        if env.step(_actions(env, rng, 1)[0]).done:
            break
    assert n <= env.spec.horizon


def test_restore_then_reset_returns_to_start():
    env = SparseChain(6)
    env.reset(0)
    env.step(1)
    env.step(1)
    env.restore(env.snapshot())
    assert env.reset(0)[0] == 1.0


def test_cross_env_snapshot_rejected():
    a, b = SparseChain(6), SparseChain(7)
    a.reset(0)
    with pytest.raises(SnapshotError):
        b.restore(a.snapshot())
    with pytest.raises(SnapshotError):
        GridMaze(0).restore(a.snapshot())


def test_corrupted_snapshot_rejected():
    env = GridMaze(0)
    env.reset(0)
    snap = env.snapshot()
    bad = StateSnapshot(snap.tag, bytes([snap.data[0] ^ 1]) + snap.data[1:])
    with pytest.raises(SnapshotError):
        env.restore(bad)
    with pytest.raises(SnapshotError):
        env.restore(StateSnapshot(snap.tag, snap.data[:3]))


def test_restore_restores_clock_unless_rewound():
    env = SparseChain(10, horizon=5)
    env.reset(0)
    env.step(1)
    env.step(1)
    snap = env.snapshot()
    env.restore(snap)
    assert env.t == 2
    env.restore(snap, rewind_clock=True)
    assert env.t == 0 and env.pos == 2


def test_snapshot_without_clock_dedups_visits():
    env = SparseChain(10)
    env.reset(0)
    env.step(1)
    s1 = env.snapshot(include_clock=False)
    env.step(0)
    env.step(1)
    assert env.snapshot(include_clock=False) == s1
    assert env.snapshot() != s1


def test_spec_validation():
    with pytest.raises(ValueError):
        EnvSpec(obs_dim=2, action_kind="continuous", horizon=5, action_dim=1,
                action_low=(1.0,), action_high=(0.0,))
    with pytest.raises(ValueError):
        EnvSpec(obs_dim=2, action_kind="discrete", horizon=0, n_actions=2)


def test_make_env():
    assert make_env("sparse_chain", length=5).spec.obs_dim == 5
    assert make_env("grid_maze").spec.obs_dim == 144
    assert make_env("point_goal").spec.action_kind == "continuous"
    with pytest.raises(ValueError):
        make_env("atari")


def test_truncated_state_restores_live_without_clock():
    env = SparseChain(10, horizon=3)
    env.reset(0)
    for _ in range(3):
        tr = env.step(1)
    assert tr.done and tr.truncated
    snap = env.snapshot(include_clock=False)
    env.restore(snap, rewind_clock=True)
    assert not env.done and env.pos == 3
    env.step(1)
    env.restore(snap)
    assert not env.done  # a clock-free snapshot carries t=0


def test_terminal_state_stays_finished():
    env = SparseChain(3)
    env.reset(0)
    env.step(1)
    env.step(1)
    snap = env.snapshot(include_clock=False)
    env.restore(snap, rewind_clock=True)
    with pytest.raises(EpisodeDone):
        env.step(1)
