import json

import numpy as np
import pytest

from oops.envs import (
    DOWN,
    LEFT,
    RIGHT,
    UP,
    ExpertPolicySpec,
    GridWorldEnv,
    ObservationOnlyEnv,
    PointMassEnv,
    expert_rollout,
    generate_experts,
    make_env,
    read_trajectories,
    write_trajectories,
)
from oops.exceptions import DataError, EpisodeFinishedError, InputError
from oops.ot_core import Trajectory

# Frozen regression value: clean PD expert from the seed-0 start.
PD_EXPERT_STEPS_SEED0 = 20


class TestPointMass:
    def test_reset_deterministic_with_zero_velocity(self):
        env = PointMassEnv()
        s1, s2 = env.reset(3), env.reset(3)
        np.testing.assert_array_equal(s1, s2)
        assert np.all(s1[2:] == 0.0)
        assert np.all(np.abs(s1[:2] - (-4.0)) <= 0.5)

    def test_dynamics_formula(self):
        env = PointMassEnv(goal=(3.0, 3.0))
        env.reset(0)
        env._state = np.zeros(4)
        s, r, done = env.step([1.0, 0.0])
        np.testing.assert_allclose(s, [0.01, 0.0, 0.1, 0.0], atol=1e-15)
        assert r == pytest.approx(-np.hypot(3.0 - 0.01, 3.0))
        assert not done

    def test_clipping(self):
        env = PointMassEnv()
        env.reset(0)
        env._state = np.array([4.99, -4.99, 1.99, -1.99])
        s, _, _ = env.step([5.0, -5.0])
        assert s[0] == 5.0 and s[1] == -5.0
        assert s[2] == 2.0 and s[3] == -2.0

    def test_horizon_and_step_after_done(self):
        env = PointMassEnv(horizon=3)
        env.reset(0)
        for _ in range(3):
            _, _, done = env.step([0.0, 0.0])
        assert done and not env.is_terminal
        with pytest.raises(EpisodeFinishedError):
            env.step([0.0, 0.0])

    def test_goal_termination(self):
        env = PointMassEnv(goal=(0.0, 0.0))
        env.reset(0)
        env._state = np.array([0.05, 0.0, 0.0, 0.0])
        _, _, done = env.step([0.0, 0.0])
        assert done and env.is_terminal

    def test_clean_expert_reaches_goal(self):
        tau = expert_rollout(PointMassEnv(), ExpertPolicySpec(), seed=0)
        assert np.linalg.norm(tau.states[-1, :2] - PointMassEnv().goal) < 0.1
        assert tau.horizon == PD_EXPERT_STEPS_SEED0
        assert tau.actions.shape == (tau.horizon, 2)

    def test_noise_monotonicity(self):
        env = PointMassEnv()
        means = []
        for noise in (0.0, 0.5, 1.0, 1.5):
            rets = [expert_rollout(env, ExpertPolicySpec(noise_std=noise), seed=s).true_return for s in range(20)]
            means.append(np.mean(rets))
        assert all(a >= b for a, b in zip(means, means[1:]))


class TestGridWorld:
    def test_fixed_start_and_moves(self):
        env = GridWorldEnv()
        for seed in (0, 7, None):
            assert env.cell_index(env.reset(seed)) == 0
        s, r, done = env.step(RIGHT)
        assert env.cell_index(s) == 1 and r == -1.0 and not done

    def test_borders_and_walls_are_noops(self):
        env = GridWorldEnv(walls=[(1, 0)])
        env.reset()
        s, r, _ = env.step(UP)
        assert env.cell_index(s) == 0 and r == -1.0
        s, r, _ = env.step(LEFT)
        assert env.cell_index(s) == 0
        s, r, _ = env.step(DOWN)
        assert env.cell_index(s) == 0 and r == -1.0

    def test_invalid_cells_and_actions(self):
        with pytest.raises(InputError):
            GridWorldEnv(walls=[(7, 7)])
        env = GridWorldEnv()
        env.reset()
        with pytest.raises(InputError):
            env.step(4)

    def test_embedding_round_trip(self):
        env = GridWorldEnv()
        cells = [(r, c) for r in range(8) for c in range(8)]
        states = np.array([env.embed(c) for c in cells])
        assert np.all((states >= 0) & (states <= 1))
        np.testing.assert_array_equal(env.cell_indices(states), np.arange(64))

    def test_clean_expert_return(self):
        tau = expert_rollout(GridWorldEnv(), ExpertPolicySpec(), seed=0)
        assert tau.true_return == -13.0
        assert tau.horizon == 14
        assert np.all(tau.actions.sum(axis=1) == 1.0)

    def test_expert_routes_around_walls(self):
        walls = [(r, 3) for r in range(7)]
        env = GridWorldEnv(walls=walls)
        tau = expert_rollout(env, ExpertPolicySpec(), seed=0)
        assert env.is_terminal
        assert tau.true_return == -(tau.horizon - 1)

    def test_noisy_expert_is_random_with_full_noise(self):
        env = GridWorldEnv()
        tau = expert_rollout(env, ExpertPolicySpec(noise_std=1.0), seed=0)
        assert tau.true_return < -13.0


def test_expert_rollout_deterministic():
    for env in (PointMassEnv(), GridWorldEnv()):
        a = expert_rollout(env, ExpertPolicySpec(noise_std=0.3), seed=5)
        b = expert_rollout(env, ExpertPolicySpec(noise_std=0.3), seed=5)
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.actions, b.actions)


def test_horizon_bounds_trajectory_length():
    env = GridWorldEnv(horizon=10)
    tau = expert_rollout(env, ExpertPolicySpec(noise_std=1.0), seed=1)
    assert len(tau.states) <= 11


def test_observation_only_env_hides_reward():
    env = ObservationOnlyEnv(PointMassEnv())
    env.reset(0)
    out = env.step([0.5, 0.5])
    assert len(out) == 2
    assert env.hidden_true_return() < 0
    assert env.state_dim == 4


def test_expert_spec_validation_and_make_env():
    with pytest.raises(InputError):
        ExpertPolicySpec(noise_std=-0.1)
    with pytest.raises(InputError):
        ExpertPolicySpec(kind="other")
    with pytest.raises(InputError):
        make_env("cartpole")
    assert isinstance(make_env("gridworld", size=5), GridWorldEnv)


class TestJsonl:
    def test_round_trip_bit_exact(self, tmp_path):
        trajs = generate_experts(PointMassEnv(), ExpertPolicySpec(noise_std=0.2), 3, seed=11)
        path = tmp_path / "ex.jsonl"
        write_trajectories(path, trajs)
        back = read_trajectories(path)
        assert len(back) == 3
        for a, b in zip(trajs, back):
            np.testing.assert_array_equal(a.states, b.states)
            np.testing.assert_array_equal(a.actions, b.actions)
            assert a.true_return == b.true_return and a.id == b.id

    def test_line_format(self, tmp_path):
        path = tmp_path / "ex.jsonl"
        write_trajectories(path, generate_experts(GridWorldEnv(), ExpertPolicySpec(), 2))
        lines = path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 2
        rec = json.loads(lines[0])
        assert {"id", "states", "actions", "true_return"} <= set(rec)

    def test_state_only_record(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text('{"id": 4, "states": [[0.0, 1.0], [1.0, 1.0]]}\n', encoding="utf-8")
        (tau,) = read_trajectories(path)
        assert tau.actions is None and tau.true_return is None and tau.id == 4

    def test_limit_and_errors(self, tmp_path):
        path = tmp_path / "ex.jsonl"
        write_trajectories(path, generate_experts(GridWorldEnv(), ExpertPolicySpec(), 4))
        assert len(read_trajectories(path, limit=2)) == 2
        with pytest.raises(DataError):
            read_trajectories(tmp_path / "missing.jsonl")
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{not json}\n", encoding="utf-8")
        with pytest.raises(DataError):
            read_trajectories(bad)
        empty = tmp_path / "empty.jsonl"
        empty.write_text("", encoding="utf-8")
        with pytest.raises(DataError):
            read_trajectories(empty)

    def test_byte_identical_files(self, tmp_path):
        for name in ("a", "b"):
            write_trajectories(tmp_path / f"{name}.jsonl",
                               generate_experts(PointMassEnv(), ExpertPolicySpec(noise_std=0.5), 3, seed=2))
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_trajectory_type_returned():
    assert isinstance(expert_rollout(GridWorldEnv()), Trajectory)
