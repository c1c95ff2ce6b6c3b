import csv
import io
import math

import numpy as np
import pytest

from oops.config import RunConfig
from oops.envs import ExpertPolicySpec, GridWorldEnv, PointMassEnv, generate_experts
from oops.harness import (
    CALIBRATION_HEADER,
    METRICS_HEADER,
    SWEEP_HEADER,
    OOPSImitator,
    ablation_grid,
    ablation_variant,
    calibrate,
    csv_text,
    expert_policy,
    normalized_score,
    occupancy_eval,
    random_policy,
    reference_returns,
    rollout,
    rollout_pairs,
    solver_sweep,
    train,
    transition_rewards,
)
from oops.ot_core import Trajectory
from oops.rewards import IDENTITY_TOL, ExpertDataset, RewardTable

TINY_GRID = RunConfig(env="gridworld", total_steps=600, eval_interval=300, eval_episodes=2)
TINY_PM = RunConfig(env="pointmass", total_steps=300, eval_interval=150, eval_episodes=2).replace(
    **{"actor_critic.batch_size": 32, "actor_critic.start_steps": 50}
)


def test_normalized_score_affine():
    assert normalized_score(-13.0, -13.0, -64.0) == 1.0
    assert normalized_score(-64.0, -13.0, -64.0) == 0.0
    assert normalized_score(-38.5, -13.0, -64.0) == pytest.approx(0.5)
    assert math.isnan(normalized_score(1.0, 2.0, 2.0))


def test_transition_rewards_state_mode_folds_first_reward():
    table = RewardTable(np.array([-1.0, -2.0, -3.0]), 0, 6.0, 0.0)
    np.testing.assert_array_equal(transition_rewards(table, "s", 2), [-3.0, -3.0])
    assert transition_rewards(table, "s", 2).sum() == table.proxy_return
    with pytest.raises(Exception):
        transition_rewards(table, "ss", 2)


def test_reference_returns_gridworld():
    exp, rnd = reference_returns(GridWorldEnv(), [0, 1, 2])
    assert exp == -13.0
    assert rnd < exp


def test_rollout_policies():
    env = PointMassEnv()
    tau, ret, terminal = rollout(env, expert_policy(env), seed=0)
    assert terminal and ret == pytest.approx(tau.true_return)
    tau, ret, terminal = rollout(env, random_policy(env), seed=0)
    assert tau.horizon <= env.horizon


def test_train_gridworld_tiny_and_identity_audit():
    res = train(TINY_GRID)
    assert [m["step"] for m in res.metrics] == [0, 300, 600]
    assert res.identity_violations == 0
    assert all(e["identity_gap"] <= IDENTITY_TOL for e in res.episodes)
    assert res.status == "ok"
    header = res.metrics_csv().splitlines()[0]
    assert header == ",".join(METRICS_HEADER)


def test_train_deterministic_csv():
    a = train(TINY_PM.replace(seed=3)).metrics_csv()
    b = train(TINY_PM.replace(seed=3)).metrics_csv()
    c = train(TINY_PM.replace(seed=4)).metrics_csv()
    assert a == b
    assert a != c


def test_run_directory_layout(tmp_path):
    res = train(TINY_GRID, out_dir=tmp_path)
    d = res.run_dir
    assert d.parent == tmp_path and d.name.endswith("_seed0")
    for name in ("config.snapshot", "metrics.csv", "episodes.csv", "timing.csv", "status"):
        assert (d / name).is_file(), name
    assert (d / "checkpoints" / "final.npz").is_file()
    assert (d / "trajectories" / "experts.jsonl").is_file()
    assert (d / "metrics.csv").read_text() == res.metrics_csv()
    assert (d / "status").read_text().startswith("ok")


def test_wall_clock_column_opt_in():
    rows = list(csv.DictReader(io.StringIO(train(TINY_GRID).metrics_csv())))
    assert all(r["wall_clock_s"] == "" for r in rows)
    rows = list(csv.DictReader(io.StringIO(train(TINY_GRID.replace(log_wall_clock=True)).metrics_csv())))
    assert all(float(r["wall_clock_s"]) >= 0 for r in rows)


def test_true_reward_source_trains():
    res = train(TINY_GRID.replace(reward_source="true"))
    assert res.status == "ok"


def test_calibration_small_grid():
    res = calibrate("pointmass", (0.0, 0.5, 1.0), episodes_per_level=2)
    assert len(res.rows) == 3
    assert list(res.rows[0]) == CALIBRATION_HEADER
    proxies = [r["proxy_return_mean"] for r in res.rows]
    assert all(p <= 0 for p in proxies)
    assert proxies[0] == max(proxies)


def test_solver_sweep_small():
    pairs = rollout_pairs("pointmass", n_pairs=4, seed=1)
    res = solver_sweep(pairs, (0.001, 0.1, 1.0))
    assert res.csv().splitlines()[0] == ",".join(SWEEP_HEADER)
    solvers = [r["solver"] for r in res.rows]
    assert solvers == ["sinkhorn"] * 3 + ["greedy", "exact"]
    exact = res.per_pair["exact"]
    for key, vals in res.per_pair.items():
        assert np.all(exact <= vals + 1e-12), key


def test_occupancy_eval_three_spaces():
    env = PointMassEnv()
    experts = ExpertDataset(generate_experts(env, ExpertPolicySpec(), 2, seed=100))
    out = occupancy_eval(env, expert_policy(env, 0.5, 0), experts, episodes=2)
    assert set(out) == {"s", "ss", "sa"}
    assert all(v > 0 for v in out.values())


def test_occupancy_eval_without_actions_warns():
    env = GridWorldEnv()
    clean = generate_experts(env, ExpertPolicySpec(), 1)[0]
    experts = ExpertDataset([Trajectory(clean.states)])
    with pytest.warns(UserWarning):
        out = occupancy_eval(env, expert_policy(env), experts, episodes=1)
    assert "sa" not in out
    assert out["ss"] == 0.0


def test_ablation_variants():
    base = RunConfig()
    assert ablation_variant(base, "lambda", "0.5").reward.lam == 0.5
    assert ablation_variant(base, "solver", "greedy").reward.solver == "greedy"
    v = ablation_variant(base, "metric", "W2-euclidean")
    assert (v.reward.metric, v.reward.p) == ("euclidean", 2)
    with pytest.raises(Exception):
        ablation_variant(base, "color", "red")


def test_ablation_grid_percent_difference():
    res = ablation_grid(TINY_GRID, "solver", ["sinkhorn", "greedy"], seeds=[0])
    assert res.rows[0]["percent_difference"] == 0.0
    assert res.csv().splitlines()[0].startswith("axis,value,")


def test_csv_float_repr_round_trips():
    text = csv_text(["x"], [{"x": 0.1 + 0.2}])
    assert float(text.splitlines()[1]) == 0.1 + 0.2


class TestImitator:
    def test_fit_score_predict(self):
        env = GridWorldEnv()
        experts = generate_experts(env, ExpertPolicySpec(), 1)
        est = OOPSImitator(env="gridworld", total_steps=400, eval_interval=200, eval_episodes=1)
        est.fit(experts)
        assert np.isfinite(est.score())
        actions = est.predict(np.array([env.embed((0, 0)), env.embed((3, 4))]))
        assert actions.shape == (2,)
        assert est.get_params()["total_steps"] == 400

    def test_dimension_check(self):
        with pytest.raises(Exception):
            OOPSImitator(env="gridworld", total_steps=10).fit([np.zeros((3, 4))])
