"""Command-line front end: train, eval, and replay subcommands.

Exit codes: 0 success, 1 configuration problem (bad flags, bad config file,
invalid values), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from .checkpoint import load_checkpoint, restore_trainer
from .config import PRESETS, build_config, load_config_file
from .errors import AuvTrackError, ConfigError
from .harness import replay_episode, run_eval_suite, run_training


class _Parser(argparse.ArgumentParser):
    # usage mistakes are configuration errors (exit 1), not argparse's exit 2
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="auvtrack",
                     description="Multi-AUV target-tracking training harness")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    train = sub.add_parser("train", help="run a training session")
    train.add_argument("--preset", choices=sorted(PRESETS),
                       help="scenario preset (AUV count vs target count)")
    train.add_argument("--config", help="flat key = value config file")
    train.add_argument("--seed", type=int, help="master seed override")
    train.add_argument("--interference", action="store_true",
                       help="enable current disturbance, sensor noise, and beacon loss")
    train.add_argument("--out", default="auvtrack_run",
                       help="output directory (logs, checkpoints)")

    evaluate = sub.add_parser("eval", help="evaluate a checkpoint (or a random policy)")
    evaluate.add_argument("--checkpoint", help="checkpoint file to evaluate")
    evaluate.add_argument("--episodes", type=int, help="number of eval episodes")
    evaluate.add_argument("--random", action="store_true",
                          help="evaluate the uniform random baseline instead of a policy")
    evaluate.add_argument("--config", help="config file (required with --random, "
                                           "otherwise overrides checkpoint values)")
    evaluate.add_argument("--seed", type=int, help="master seed override")

    replay = sub.add_parser("replay", help="roll out one greedy episode to a trajectory CSV")
    replay.add_argument("--checkpoint", required=True)
    replay.add_argument("--out", default="trajectory.csv")
    replay.add_argument("--episode", type=int, default=0,
                        help="replay episode index (varies the world draw)")

    return parser


def _cmd_train(args) -> int:
    file_overrides = load_config_file(args.config) if args.config else None
    flag_overrides = {"seed": args.seed} if args.seed is not None else None
    cfg = build_config(preset=args.preset, interference=args.interference,
                       file_overrides=file_overrides, flag_overrides=flag_overrides)
    outcome = run_training(cfg, args.out, progress=print)
    print(f"trained {outcome.episodes} episodes -> {outcome.out_dir}")
    print(f"final checkpoint: {outcome.final_checkpoint}")
    print(f"final eval return: {outcome.final_eval_return!r}")
    print(f"final eval accuracy: {outcome.final_eval_accuracy!r}")
    return 0


def _cmd_eval(args) -> int:
    trainer = None
    if args.checkpoint:
        data = load_checkpoint(args.checkpoint)
        cfg = data.config
        if args.config:
            from .config import apply_overrides
            apply_overrides(cfg, load_config_file(args.config))
        if not args.random:
            trainer = restore_trainer(data)
    elif args.random:
        if not args.config:
            raise ConfigError("--random without --checkpoint needs --config")
        cfg = build_config(file_overrides=load_config_file(args.config))
    else:
        raise ConfigError("eval needs --checkpoint or --random with --config")

    if args.seed is not None:
        cfg.scenario.seed = args.seed
    cfg.validate()
    episodes = args.episodes if args.episodes is not None else cfg.eval_episodes
    if episodes < 1:
        raise ConfigError("--episodes must be >= 1")

    returns, accuracies = run_eval_suite(cfg, trainer, episodes,
                                         random_policy=args.random)
    import numpy as np
    print(f"episodes: {episodes}")
    print(f"policy: {'random' if args.random else 'checkpoint'}")
    print(f"return_mean: {float(np.mean(returns))!r}")
    print(f"return_std: {float(np.std(returns))!r}")
    print(f"accuracy_mean: {float(np.mean(accuracies))!r}")
    print(f"accuracy_std: {float(np.std(accuracies))!r}")
    return 0


def _cmd_replay(args) -> int:
    data = load_checkpoint(args.checkpoint)
    trainer = restore_trainer(data)
    trace = replay_episode(trainer, data.config, args.out, args.episode)
    entities = trace.auv_pos.shape[1] + trace.target_pos.shape[1]
    print(f"wrote {args.out}: {trace.ticks * entities} rows "
          f"({trace.ticks} ticks, {entities} entities)")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "replay":
            return _cmd_replay(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except AuvTrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
