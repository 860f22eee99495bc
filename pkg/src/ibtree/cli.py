"""Command-line entry points.

Subcommands: train (run a config), baseline (same config, imitation method),
extract (pull the best tree out of a run directory), eval (roll a tree file
on a base environment), sweep (one run per parameter value).
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .envs import make_env
from .harness import (
    ExperimentConfig,
    final_rows,
    load_tree,
    run_experiment,
    summary_row,
    sweep,
)
from .learner import evaluate_tree
from .tree import tree_metrics


def _add_env_args(parser):
    parser.add_argument("--env", required=True,
                        help="prereqworld | potholeworld | cartpole")
    parser.add_argument("--m", type=int, default=None,
                        help="PrereqWorld item count")
    parser.add_argument("--env-param", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="extra environment parameter (repeatable)")


def _build_env(args):
    params = {}
    if args.m is not None:
        params["m"] = args.m
    for item in args.env_param:
        if "=" not in item:
            raise ValueError(f"bad --env-param '{item}', expected KEY=VALUE")
        key, value = item.split("=", 1)
        params[key] = json.loads(value)
    return make_env(args.env, **params)


def cmd_train(args):
    config = ExperimentConfig.from_file(args.config)
    rows = run_experiment(config)
    _print_summary(rows)
    return 0


def cmd_baseline(args):
    config = ExperimentConfig.from_file(args.config)
    if config.method != "viper-bi":
        from dataclasses import replace
        config = replace(config, method="viper-bi")
    rows = run_experiment(config)
    _print_summary(rows)
    return 0


def _print_summary(rows):
    s = summary_row(rows)
    if s is not None:
        print(f"summary: reward {s.mean_reward:.3f} ({s.reward_std:.3f}) "
              f"depth {s.tree_depth} nodes {s.tree_nodes}")


def cmd_extract(args):
    results = os.path.join(args.run_dir, "results.csv")
    if not os.path.exists(results):
        raise FileNotFoundError(f"no results.csv in run dir: {args.run_dir}")
    import csv

    best_trial, best_reward = None, -np.inf
    with open(results) as fh:
        for row in csv.DictReader(fh):
            trial = int(row["trial"])
            if trial < 0:
                continue
            reward = float(row["mean_reward"])
            if reward >= best_reward:
                best_reward = reward
                best_trial = trial
    if best_trial is None:
        raise ValueError(f"no trial rows found in {results}")
    src = os.path.join(args.run_dir, f"tree_trial{best_trial}.json")
    with open(src) as fh:
        text = fh.read()
    with open(args.output, "w") as fh:
        fh.write(text)
    print(f"extracted trial {best_trial} (reward {best_reward:.3f}) "
          f"-> {args.output}")
    return 0


def cmd_eval(args):
    tree = load_tree(args.tree)
    env = _build_env(args)
    rng = np.random.default_rng(args.seed)
    mean, std = evaluate_tree(tree, env, args.episodes, rng)
    metrics = tree_metrics(tree)
    print(f"reward {mean:.4f} ({std:.4f}) over {args.episodes} episodes; "
          f"depth {metrics.depth} nodes {metrics.node_count}")
    return 0


def cmd_sweep(args):
    config = ExperimentConfig.from_file(args.config)
    values = []
    for raw in args.values.split(","):
        raw = raw.strip()
        try:
            values.append(json.loads(raw))
        except json.JSONDecodeError:
            values.append(raw)
    paths = sweep(config, args.param, values)
    for path in paths:
        print(path)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ibtree",
        description="Train, extract and evaluate decision-tree policies")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a training experiment config")
    p.add_argument("config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("baseline",
                       help="run a config with the imitation baseline")
    p.add_argument("config")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("extract",
                       help="copy the best trial's tree out of a run dir")
    p.add_argument("run_dir")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", help="evaluate a tree JSON on a base env")
    p.add_argument("--tree", required=True)
    _add_env_args(p)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run a config across parameter values")
    p.add_argument("config")
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True,
                   help="comma-separated values, e.g. 4,5,6,7,8")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
