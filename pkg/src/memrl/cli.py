"""Command-line interface: generate / train / eval / inspect."""

import argparse
import csv
import os
import sys

import numpy as np

from . import tasks
from .config import load_config
from .evaluation import CSV_HEADER, evaluate, format_trace, inspection_stats
from .models import load_checkpoint


def _cmd_generate(args):
    if args.noise_level is not None:
        rng = np.random.default_rng(args.seed)
        episodes = [tasks.generate_episode(rng.integers(2**63), args.noise_level)
                    for _ in range(args.episodes)]
    else:
        episodes = tasks.generate_split(args.seed, args.episodes, original=args.original)
    tasks.write_episodes(args.out, episodes)
    tasks.write_vocabulary(args.out + ".vocab")
    print(f"wrote {len(episodes)} episodes to {args.out}")


def _cmd_train(args):
    from .training import train

    cfg = load_config(args.config)
    summary = train(cfg)
    print(f"curves: {summary['curves']}")


def _eval_episodes(args):
    if args.data:
        return tasks.read_episodes(args.data)
    return tasks.generate_split(args.seed, args.episodes, original=args.original)


def _cmd_eval(args):
    models = load_checkpoint(args.checkpoint)
    episodes = _eval_episodes(args)
    report = evaluate(models, episodes, args.memory_slots, seed=args.seed)
    print(report.to_json())
    if args.csv:
        exists = os.path.exists(args.csv)
        with open(args.csv, "a", newline="") as f:
            w = csv.writer(f)
            if not exists:
                w.writerow(CSV_HEADER)
            w.writerow(report.csv_row(models.meta.get("policy", "?")))
    if args.json:
        with open(args.json, "w") as f:
            f.write(report.to_json() + "\n")


def _cmd_inspect(args):
    models = load_checkpoint(args.checkpoint)
    slots = args.memory_slots or models.meta.get("memory_slots", 5)
    episode = tasks.generate_episode(args.episode_seed, args.noise_level)
    _, traces = evaluate(models, [episode], slots, seed=args.episode_seed,
                         collect_inspection=True)
    print(f"episode seed={args.episode_seed} noise={args.noise_level} slots={slots}")
    print(format_trace(traces[0], tasks.VOCAB))
    stats = inspection_stats(traces)
    if stats["questions"]:
        print(f"solvable questions with noise evicted: "
              f"{stats['retained_and_evicted_noise']}/{stats['questions']}")


def main(argv=None):
    p = argparse.ArgumentParser(prog="memrl",
                                description="RL-scheduled memory for streaming QA")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("generate", help="write a synthetic episode file")
    g.add_argument("--episodes", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--noise-level", type=float, default=None,
                   help="fix all episodes at one noise level instead of the standard mix")
    g.add_argument("--original", action="store_true", help="zero-noise split")
    g.set_defaults(fn=_cmd_generate)

    t = sub.add_parser("train", help="train from a key=value config file")
    t.add_argument("--config", required=True)
    t.set_defaults(fn=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--memory-slots", type=int, required=True)
    e.add_argument("--data", default="", help="episode file (generated when omitted)")
    e.add_argument("--episodes", type=int, default=200)
    e.add_argument("--seed", type=int, default=7)
    e.add_argument("--original", action="store_true")
    e.add_argument("--csv", default="", help="append a result row here")
    e.add_argument("--json", default="", help="write the report here")
    e.set_defaults(fn=_cmd_eval)

    i = sub.add_parser("inspect", help="dump retained memory at each question")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--episode-seed", type=int, required=True)
    i.add_argument("--noise-level", type=float, default=0.45)
    i.add_argument("--memory-slots", type=int, default=None)
    i.set_defaults(fn=_cmd_inspect)

    args = p.parse_args(argv)
    args.fn(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
