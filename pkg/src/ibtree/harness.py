"""Experiment orchestration: JSON configs, seeded multi-trial runs, CSV output.

A run directory receives ``results.csv`` (one row per learning-curve point
plus a final row per trial and one summary row with trial = -1), a
``tree_trial{i}.json`` per trial and ``best_tree.json`` for the
highest-reward trial. Identical configs and seeds reproduce identical CSVs
except for the wall_time_s column.
"""
from __future__ import annotations

import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .baseline import fit_tree_imitation, make_expert
from .envs import make_env
from .ibmdp import IbmdpConfig
from .learner import LearnerConfig, evaluate_tree, train
from .tree import tree_deserialize, tree_metrics, tree_serialize

CSV_COLUMNS = ["method", "env", "trial", "episode", "mean_reward",
               "reward_std", "tree_depth", "tree_nodes", "depth_limit",
               "wall_time_s"]

METHODS = ("custard-mfec", "viper-bi")


@dataclass(frozen=True)
class BaselineConfig:
    """Imitation-baseline knobs (depth cap comes from the wrapper config)."""

    dagger_iters: int = 10
    rollouts_per_iter: int = 20
    gamma: float = 1.0
    resolution: float = 0.01
    eval_episodes: int = 30

    def __post_init__(self):
        if self.dagger_iters < 1 or self.rollouts_per_iter < 1:
            raise ValueError("dagger_iters and rollouts_per_iter must be >= 1")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    env_name: str
    env_params: dict = field(default_factory=dict)
    method: str = "custard-mfec"
    ibmdp: IbmdpConfig = field(default_factory=IbmdpConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    trials: int = 10
    base_seed: int = 0
    output_path: str = "runs/experiment"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    @staticmethod
    def from_dict(d):
        d = dict(d)
        env = dict(d.pop("env", {}))
        if "name" not in env:
            raise ValueError("config is missing env.name")
        name = env.pop("name")
        try:
            ib = IbmdpConfig(**d.pop("ibmdp", {}))
            lc = LearnerConfig(**d.pop("learner", {}))
            bc = BaselineConfig(**d.pop("baseline", {}))
        except TypeError as exc:
            raise ValueError(f"bad config key: {exc}") from exc
        return ExperimentConfig(env_name=name, env_params=env,
                                ibmdp=ib, learner=lc, baseline=bc, **d)

    @staticmethod
    def from_file(path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise FileNotFoundError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ValueError(f"config file {path} is not valid JSON: {exc}")
        return ExperimentConfig.from_dict(data)

    def build_env(self):
        return make_env(self.env_name, **self.env_params)


@dataclass
class ResultRow:
    method: str
    env: str
    trial: int
    episode: int
    mean_reward: float
    reward_std: float
    tree_depth: int
    tree_nodes: int
    depth_limit: int | None
    wall_time_s: float

    def as_list(self):
        dl = "" if self.depth_limit is None else self.depth_limit
        return [self.method, self.env, self.trial, self.episode,
                f"{self.mean_reward:.10g}", f"{self.reward_std:.10g}",
                self.tree_depth, self.tree_nodes, dl,
                f"{self.wall_time_s:.3f}"]


def evaluate_policy(tree, env, episodes, rng):
    """Mean/std of per-episode return for a tree on the base environment."""
    return evaluate_tree(tree, env, episodes, rng)


def _run_trial(config, trial):
    """One seeded trial; returns (rows, final_tree_json)."""
    env = config.build_env()
    seed = config.base_seed + trial
    t0 = time.perf_counter()
    rows = []
    if config.method == "custard-mfec":
        result = train(env, config.ibmdp, config.learner, seed=seed)
        wall = time.perf_counter() - t0
        for point in result.curve:
            rows.append(ResultRow(
                method=config.method, env=env.name, trial=trial,
                episode=point.episode, mean_reward=point.mean_reward,
                reward_std=point.reward_std, tree_depth=point.tree_depth,
                tree_nodes=point.tree_nodes,
                depth_limit=config.ibmdp.depth_limit, wall_time_s=wall))
        tree = result.tree
    else:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB1]))
        _, policy, index_fn = make_expert(env, gamma=config.baseline.gamma,
                                          resolution=config.baseline.resolution)
        tree = fit_tree_imitation(
            policy, env, index_fn, max_depth=config.ibmdp.depth_limit,
            dagger_iters=config.baseline.dagger_iters,
            rollouts_per_iter=config.baseline.rollouts_per_iter, rng=rng,
            eval_episodes=config.baseline.eval_episodes)
        eval_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE7]))
        mean, std = evaluate_tree(tree, env, config.learner.eval_episodes,
                                  eval_rng)
        metrics = tree_metrics(tree)
        wall = time.perf_counter() - t0
        rows.append(ResultRow(
            method=config.method, env=env.name, trial=trial, episode=0,
            mean_reward=mean, reward_std=std, tree_depth=metrics.depth,
            tree_nodes=metrics.node_count,
            depth_limit=config.ibmdp.depth_limit, wall_time_s=wall))
    return rows, tree_serialize(tree)


def _pool_width():
    cap = os.environ.get("IBTREE_THREADS")
    width = os.cpu_count() or 1
    if cap:
        width = min(width, max(int(cap), 1))
    return width


def run_experiment(config, quiet=False):
    """Run all trials, write the run directory, return the result rows."""
    os.makedirs(config.output_path, exist_ok=True)
    all_rows = []
    finals = {}
    width = min(_pool_width(), config.trials)
    results = {}
    if width > 1:
        with ProcessPoolExecutor(max_workers=width) as pool:
            futures = {t: pool.submit(_run_trial, config, t)
                       for t in range(config.trials)}
            for t, fut in futures.items():
                try:
                    results[t] = fut.result()
                except Exception as exc:  # noqa: BLE001 - trial isolation
                    print(f"trial {t} failed: {exc}", file=sys.stderr)
    else:
        for t in range(config.trials):
            try:
                results[t] = _run_trial(config, t)
            except Exception as exc:  # noqa: BLE001 - trial isolation
                print(f"trial {t} failed: {exc}", file=sys.stderr)

    for t in sorted(results):
        rows, tree_json = results[t]
        all_rows.extend(rows)
        finals[t] = rows[-1]
        with open(os.path.join(config.output_path,
                               f"tree_trial{t}.json"), "w") as fh:
            fh.write(tree_json)
        if not quiet:
            last = rows[-1]
            print(f"trial {t}: reward {last.mean_reward:.3f} "
                  f"depth {last.tree_depth} nodes {last.tree_nodes}")

    if finals:
        best_trial = max(finals, key=lambda t: finals[t].mean_reward)
        src = os.path.join(config.output_path, f"tree_trial{best_trial}.json")
        with open(src) as fh:
            best = fh.read()
        with open(os.path.join(config.output_path, "best_tree.json"),
                  "w") as fh:
            fh.write(best)
        final_rows = [finals[t] for t in sorted(finals)]
        means = np.array([r.mean_reward for r in final_rows])
        all_rows.append(ResultRow(
            method=config.method, env=final_rows[0].env, trial=-1,
            episode=max(r.episode for r in final_rows),
            mean_reward=float(means.mean()), reward_std=float(means.std()),
            tree_depth=int(round(np.mean([r.tree_depth for r in final_rows]))),
            tree_nodes=int(round(np.mean([r.tree_nodes for r in final_rows]))),
            depth_limit=config.ibmdp.depth_limit,
            wall_time_s=sum(r.wall_time_s for r in final_rows)))
    write_csv(all_rows, os.path.join(config.output_path, "results.csv"))
    return all_rows


def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(row.as_list())


def summary_row(rows):
    """The trial = -1 aggregate row of a result list."""
    for row in rows:
        if row.trial == -1:
            return row
    return None


def final_rows(rows):
    """Last row of each real trial (the final-tree evaluation)."""
    out = {}
    for row in rows:
        if row.trial >= 0:
            out[row.trial] = row
    return [out[t] for t in sorted(out)]


def sweep(config, param, values, quiet=False):
    """Run one experiment per parameter value; one CSV/run-dir per value.

    The parameter is looked up first among environment parameters, then on
    the wrapper config (e.g. depth_limit), then on the learner config.
    """
    out_paths = []
    for value in values:
        cfg = _override(config, param, value)
        cfg = replace(cfg, output_path=os.path.join(
            config.output_path, f"{param}_{value}"))
        if not quiet:
            print(f"[sweep] {param} = {value}")
        run_experiment(cfg, quiet=quiet)
        out_paths.append(os.path.join(cfg.output_path, "results.csv"))
    return out_paths


def _override(config, param, value):
    if param in ("m", "goal_item", "max_episode_steps") or \
            param in config.env_params:
        env_params = dict(config.env_params)
        env_params[param] = value
        return replace(config, env_params=env_params)
    if hasattr(config.ibmdp, param):
        return replace(config, ibmdp=replace(config.ibmdp, **{param: value}))
    if hasattr(config.learner, param):
        return replace(config,
                       learner=replace(config.learner, **{param: value}))
    raise ValueError(f"unknown sweep parameter '{param}'")


def load_tree(path):
    try:
        with open(path) as fh:
            return tree_deserialize(fh.read())
    except FileNotFoundError:
        raise FileNotFoundError(f"tree file not found: {path}")
