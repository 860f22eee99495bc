import csv
import json
import os

import numpy as np
import pytest

from ibtree import PrereqWorld, TreeNode
from ibtree.cli import main as cli_main
from ibtree.harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    evaluate_policy,
    final_rows,
    run_experiment,
    summary_row,
    sweep,
)
from ibtree.tree import tree_serialize


def tiny_config(tmp_path, **overrides):
    data = {
        "method": "custard-mfec",
        "env": {"name": "prereqworld", "m": 2},
        "ibmdp": {"p": 1, "zeta": -0.01, "gamma_b": 1.0, "gamma_w": 1.0},
        "learner": {"k": 3, "alpha_b": 0.1, "alpha_o": 0.7, "episodes": 300,
                    "eval_episodes": 10, "capacity": 5000, "eval_every": 150},
        "trials": 2,
        "base_seed": 0,
        "output_path": str(tmp_path / "run"),
    }
    data.update(overrides)
    return data


def test_config_from_dict_and_errors(tmp_path):
    config = ExperimentConfig.from_dict(tiny_config(tmp_path))
    assert config.env_name == "prereqworld"
    assert config.ibmdp.p == 1
    with pytest.raises(ValueError, match="env.name"):
        ExperimentConfig.from_dict({"method": "custard-mfec"})
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(tiny_config(tmp_path, method="dqn"))
    with pytest.raises(ValueError, match="bad config key"):
        ExperimentConfig.from_dict(
            tiny_config(tmp_path, learner={"learning_rate": 1.0}))


def test_config_missing_file_names_path():
    with pytest.raises(FileNotFoundError, match="no/such/config.json"):
        ExperimentConfig.from_file("no/such/config.json")


def test_run_experiment_writes_run_dir(tmp_path):
    config = ExperimentConfig.from_dict(tiny_config(tmp_path))
    rows = run_experiment(config, quiet=True)
    out = tmp_path / "run"
    assert (out / "results.csv").exists()
    assert (out / "tree_trial0.json").exists()
    assert (out / "tree_trial1.json").exists()
    assert (out / "best_tree.json").exists()
    with open(out / "results.csv") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        assert header == CSV_COLUMNS
        body = list(reader)
    assert len(body) == len(rows)
    s = summary_row(rows)
    finals = final_rows(rows)
    assert s is not None and len(finals) == 2
    means = [r.mean_reward for r in finals]
    assert s.mean_reward == pytest.approx(np.mean(means))
    assert s.reward_std == pytest.approx(np.std(means))
    for r in finals:
        assert np.isfinite(r.mean_reward)
        if r.tree_depth > 0:
            assert r.tree_nodes >= 2 * r.tree_depth + 1


def test_run_experiment_deterministic_modulo_wall_time(tmp_path):
    cfg_a = ExperimentConfig.from_dict(
        tiny_config(tmp_path, output_path=str(tmp_path / "a")))
    cfg_b = ExperimentConfig.from_dict(
        tiny_config(tmp_path, output_path=str(tmp_path / "b")))
    run_experiment(cfg_a, quiet=True)
    run_experiment(cfg_b, quiet=True)

    def strip(path):
        with open(path) as fh:
            rows = list(csv.reader(fh))
        return [row[:-1] for row in rows]

    assert strip(tmp_path / "a" / "results.csv") == \
        strip(tmp_path / "b" / "results.csv")


def test_evaluate_policy_optimal_micro_tree():
    env = PrereqWorld(m=2)
    # goal 0 requires item 1 only (derived variant): make 1 then make 0
    tree = TreeNode.internal(1, 0.5, TreeNode.leaf(1), TreeNode.leaf(0))
    mean, std = evaluate_policy(tree, env, 30, np.random.default_rng(0))
    assert mean == pytest.approx(-1.0)
    assert std == 0.0


def test_evaluate_policy_always_lane1():
    from ibtree import PotholeWorld

    env = PotholeWorld()
    tree = TreeNode.leaf(0)
    mean, std = evaluate_policy(tree, env, 40, np.random.default_rng(0))
    assert mean == pytest.approx(45.0, abs=1e-9)
    assert std == pytest.approx(0.0, abs=1e-9)


def test_sweep_writes_one_csv_per_value(tmp_path):
    config = ExperimentConfig.from_dict(
        tiny_config(tmp_path, trials=1,
                    learner={"k": 3, "alpha_b": 0.1, "alpha_o": 0.7,
                             "episodes": 150, "eval_episodes": 5,
                             "capacity": 5000}))
    paths = sweep(config, "m", [2, 3], quiet=True)
    assert len(paths) == 2
    for path in paths:
        assert os.path.exists(path)
    with pytest.raises(ValueError, match="unknown sweep parameter"):
        sweep(config, "frobnicate", [1], quiet=True)


def test_baseline_method_runs(tmp_path):
    config = ExperimentConfig.from_dict(tiny_config(
        tmp_path, method="viper-bi", trials=1,
        baseline={"dagger_iters": 2, "rollouts_per_iter": 5,
                  "eval_episodes": 5}))
    rows = run_experiment(config, quiet=True)
    finals = final_rows(rows)
    assert finals[0].method == "viper-bi"
    assert finals[0].mean_reward == pytest.approx(-1.0)


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def test_cli_eval_roundtrip(tmp_path, capsys):
    tree_path = tmp_path / "leaf0.json"
    tree_path.write_text(tree_serialize(TreeNode.leaf(0)))
    code = cli_main(["eval", "--tree", str(tree_path), "--env", "prereqworld",
                     "--m", "7", "--episodes", "10"])
    assert code == 0
    out = capsys.readouterr().out
    assert "reward" in out


def test_cli_eval_missing_tree(tmp_path, capsys):
    code = cli_main(["eval", "--tree", str(tmp_path / "nope.json"),
                     "--env", "cartpole"])
    assert code == 1
    assert "nope.json" in capsys.readouterr().err


def test_cli_missing_config(capsys):
    code = cli_main(["train", "does/not/exist.json"])
    assert code == 1
    assert "does/not/exist.json" in capsys.readouterr().err


def test_cli_unknown_subcommand():
    assert cli_main(["frobnicate"]) == 2


def test_cli_train_extract_sweep(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(tiny_config(tmp_path, trials=1)))
    assert cli_main(["train", str(cfg_path)]) == 0
    out_tree = tmp_path / "best.json"
    assert cli_main(["extract", str(tmp_path / "run"), "-o",
                     str(out_tree)]) == 0
    assert out_tree.exists()
    capsys.readouterr()
    assert cli_main(["sweep", str(cfg_path), "--param", "m",
                     "--values", "2,3"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 2
    assert cli_main(["extract", str(tmp_path / "empty"), "-o",
                     str(out_tree)]) == 1
