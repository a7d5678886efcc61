"""Command-line entry points: train, eval, replay, inspect, selftest."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .configfile import AppConfig, ConfigError, config_to_dict, load_config
from .evaluation import EvalConfig, evaluate_models
from .nn import CheckpointError, load_checkpoint
from .simulation import SimConfig
from .training import TrainConfig, run_training


def _cmd_train(args: argparse.Namespace) -> int:
    if args.config is not None:
        cfg = load_config(args.config)
    else:
        cfg = AppConfig(sim=SimConfig(), train=TrainConfig())
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "config.json"), "w", encoding="utf-8") as fh:
        json.dump({"seed": args.seed, **config_to_dict(cfg)}, fh, indent=2)
        fh.write("\n")

    def progress(record: dict) -> None:
        if not args.quiet and (record["episode"] + 1) % 10 == 0:
            print(
                f"episode {record['episode'] + 1}/{cfg.train.episodes}  "
                f"return {record['mean_base_return']:+.2f}  "
                f"crashes {record['crashes']}  conflicts {record['conflicts']}",
                flush=True,
            )

    result = run_training(
        cfg.sim, cfg.train, cfg.kind, seed=args.seed, out_dir=args.out, progress=progress
    )
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"training log: {result.log_path}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    sim_cfg = load_config(args.config).sim if args.config else SimConfig()
    eval_cfg = EvalConfig(
        duration_s=args.hours * 3600.0,
        density=args.density,
        runs_per_model=args.runs,
        action_mode=args.mode,
    )
    result = evaluate_models(
        args.model,
        sim_cfg,
        eval_cfg,
        seed=args.seed,
        jobs=args.jobs,
        events_dir=args.events_dir,
    )
    payload = json.dumps(result, indent=2, sort_keys=False)
    if args.out is not None:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
        print(f"report: {args.out}")
    for name, stats in result["metrics"].items():
        print(f"{name}: median {stats['median']:.3f}  iqr {stats['iqr']:.3f}")
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    with open(args.events, "r", encoding="utf-8") as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    previous_t = None
    for rec in records:
        t = float(rec["time_s"])
        if args.speed > 0 and previous_t is not None and t > previous_t:
            time.sleep((t - previous_t) / args.speed)
        previous_t = t
        ids = ",".join(str(a) for a in rec["aircraft"])
        print(f"t={t:10.1f}s  {rec['kind']:<16} aircraft {ids}")
    print(f"{len(records)} events replayed")
    return 0


def _cmd_inspect(args: argparse.Namespace) -> int:
    arrays, meta = load_checkpoint(args.model)
    print(json.dumps(meta, indent=2, sort_keys=True))
    total = 0
    for name in sorted(arrays):
        arr = arrays[name]
        total += arr.size
        print(
            f"{name:<24} shape {str(arr.shape):<12} "
            f"mean {arr.mean():+.4f}  std {arr.std():.4f}  "
            f"min {arr.min():+.4f}  max {arr.max():+.4f}"
        )
    print(f"total parameters: {total}")
    return 0


def _cmd_selftest(args: argparse.Namespace) -> int:
    from .checks import run_selftest

    return 0 if run_selftest() else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skygraph",
        description="Graph-policy en-route airspace control: training, "
        "evaluation, replay and diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a policy")
    p_train.add_argument("--config", help="JSON config file (sim/train/policy sections)")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--quiet", action="store_true")
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="run the day-scale experiment")
    p_eval.add_argument(
        "--model", action="append", required=True, help="checkpoint path (repeatable)"
    )
    p_eval.add_argument("--density", type=float, default=1.0)
    p_eval.add_argument("--hours", type=float, default=24.0)
    p_eval.add_argument("--runs", type=int, default=5, help="runs per model")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", help="write the aggregate report JSON here")
    p_eval.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p_eval.add_argument("--mode", choices=("greedy", "sample"), default="greedy")
    p_eval.add_argument("--events-dir", help="write per-run event logs here")
    p_eval.add_argument("--config", help="JSON config file for sim overrides")
    p_eval.set_defaults(func=_cmd_eval)

    p_replay = sub.add_parser("replay", help="render an event log as a timeline")
    p_replay.add_argument("--events", required=True)
    p_replay.add_argument(
        "--speed", type=float, default=0.0, help="playback rate; 0 renders instantly"
    )
    p_replay.set_defaults(func=_cmd_replay)

    p_inspect = sub.add_parser("inspect", help="show checkpoint architecture and stats")
    p_inspect.add_argument("--model", required=True)
    p_inspect.set_defaults(func=_cmd_inspect)

    p_selftest = sub.add_parser("selftest", help="run the property oracles")
    p_selftest.set_defaults(func=_cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
