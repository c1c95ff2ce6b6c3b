import json

import pytest

from oops.cli import main, parse_grid, parse_lambda_grid
from oops.exceptions import ConfigError

TINY = ["--steps", "400", "--set", "eval_interval=200", "--set", "eval_episodes=2"]


def run_dirs(root):
    return sorted(p for p in root.iterdir() if p.is_dir())


def test_generate_expert_count_and_bytes(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for path in (a, b):
        assert main(["generate-expert", "--env", "gridworld", "--n-experts", "10", "--out", str(path)]) == 0
    lines = a.read_text().splitlines()
    assert len(lines) == 10
    assert all(json.loads(line)["true_return"] == -13.0 for line in lines)
    assert a.read_bytes() == b.read_bytes()


def test_train_success_and_files(tmp_path):
    assert main(["train", "--env", "gridworld", "--out", str(tmp_path), *TINY]) == 0
    (run,) = run_dirs(tmp_path)
    assert (run / "metrics.csv").is_file()
    snap = json.loads((run / "config.snapshot").read_text())
    assert snap["total_steps"] == 400 and snap["env"] == "gridworld"


def test_exit_codes(tmp_path, capsys):
    assert main(["train", "--set", "bogus=1", "--out", str(tmp_path)]) == 2
    assert "unknown config key" in capsys.readouterr().err
    assert main(["train", "--experts", str(tmp_path / "none.jsonl"), "--out", str(tmp_path)]) == 3
    assert main(["train", "--config", str(tmp_path / "none.json")]) == 3
    assert main(["no-such-command"]) == 2
    assert main(["ablate", "--axis", "color"]) == 2


def test_divergence_exit_code(tmp_path):
    args = ["train", "--env", "pointmass", "--out", str(tmp_path), "--steps", "120",
            "--set", "actor_critic.batch_size=8", "--set", "actor_critic.start_steps=10",
            "--set", "actor_critic.critic_lr=1e300", "--set", "eval_interval=60"]
    assert main(args) == 4
    (run,) = run_dirs(tmp_path)
    assert (run / "status").read_text().startswith("failed")


def test_precedence_file_then_flags(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 3, "eval_episodes": 2, "eval_interval": 200, "total_steps": 200}))
    assert main(["train", "--config", str(cfg), "--seed", "8", "--out", str(tmp_path / "r")]) == 0
    (run,) = run_dirs(tmp_path / "r")
    snap = json.loads((run / "config.snapshot").read_text())
    assert snap["seed"] == 8 and snap["eval_episodes"] == 2
    assert run.name.endswith("_seed8")


def test_train_with_expert_file(tmp_path):
    ex = tmp_path / "ex.jsonl"
    assert main(["generate-expert", "--env", "gridworld", "--n-experts", "2", "--out", str(ex)]) == 0
    assert main(["train", "--env", "gridworld", "--experts", str(ex), "--n-experts", "2",
                 "--out", str(tmp_path / "r"), *TINY]) == 0
    assert main(["train", "--env", "gridworld", "--experts", str(ex), "--n-experts", "5",
                 "--out", str(tmp_path / "r"), *TINY]) == 3


def test_calibrate_sweep_occupancy_plot(tmp_path):
    assert main(["calibrate", "--noise-grid", "0:1:0.5", "--episodes", "2", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "calibration.csv").read_text().startswith("noise_std,true_return_mean,proxy_return_mean\n")
    assert main(["solver-sweep", "--pairs", "3", "--lambda-grid", "0.01,0.1", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "sweep.csv").read_text().startswith("solver,lambda,mean_distance\n")
    assert main(["train", "--env", "gridworld", "--out", str(tmp_path / "runs"), *TINY]) == 0
    (run,) = run_dirs(tmp_path / "runs")
    assert main(["occupancy-eval", "--run", str(run), "--episodes", "2"]) == 0
    assert (run / "occupancy.csv").is_file()
    out = tmp_path / "plots"
    assert main(["plot", str(run / "metrics.csv"), str(tmp_path / "calibration.csv"),
                 str(tmp_path / "sweep.csv"), "--out", str(out)]) == 0
    svgs = sorted(p.name for p in out.glob("*.svg"))
    assert len(svgs) == 3
    for p in out.glob("*.svg"):
        assert p.read_text().startswith("<svg")


def test_cli_outputs_reproducible(tmp_path):
    for name in ("a", "b"):
        assert main(["solver-sweep", "--pairs", "3", "--lambda-grid", "0.05,0.5", "--out", str(tmp_path / name)]) == 0
        assert main(["calibrate", "--noise-grid", "0:1:0.5", "--episodes", "2", "--out", str(tmp_path / name)]) == 0
    for f in ("sweep.csv", "calibration.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_ablate_writes_csv(tmp_path):
    assert main(["ablate", "--env", "gridworld", "--axis", "solver", "--values", "sinkhorn,greedy",
                 "--out", str(tmp_path), *TINY]) == 0
    text = (tmp_path / "ablation.csv").read_text().splitlines()
    assert text[0] == "axis,value,normalized_return_mean,normalized_return_std,percent_difference"
    assert len(text) == 3


def test_occupancy_eval_missing_run(tmp_path):
    assert main(["occupancy-eval", "--run", str(tmp_path)]) == 3


def test_grid_parsing():
    assert parse_grid("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert parse_grid("0.1,0.2") == [0.1, 0.2]
    assert parse_lambda_grid("0.001:1:4") == pytest.approx([0.001, 0.01, 0.1, 1.0])
    with pytest.raises(ConfigError):
        parse_grid("1:0:0.1")
    with pytest.raises(ConfigError):
        parse_lambda_grid("0,1")
    with pytest.raises(ConfigError):
        parse_grid("a:b")
