#!/usr/bin/env python3
"""Instruction-following study: per task, evaluate the same checkpoint under
four conditions (act, think, think+oracle, follow+oracle) and write the
comparison table.

Oracle thoughts replace the model's own thoughts only during moving subtasks
in think mode; follow mode consumes the scripted thought at every step.
"""

import argparse
import sys
from pathlib import Path

from gridvla.evaluation import oracle_follow_eval


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--checkpoint", required=True)
    ap.add_argument("--out", default="artifacts/oracle_follow.csv")
    ap.add_argument("--episodes", type=int, default=100)
    ap.add_argument("--seed-base", type=int, default=600_000)
    ap.add_argument("--families", nargs="+", default=["place_at"])
    ap.add_argument("--objects", type=int, nargs="+", default=[2])
    args = ap.parse_args(argv)

    tasks = tuple((f, n) for f in args.families for n in args.objects)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    rows = oracle_follow_eval(
        args.checkpoint,
        tasks=tasks,
        n_episodes=args.episodes,
        seed_base=args.seed_base,
        out_csv=args.out,
    )
    for r in rows:
        print(
            f"{r['task_family']}/{r['n_objects']} {r['condition']:>14}: "
            f"{r['success_rate']:.1%} +/- {r['stderr']:.1%} "
            f"({r['tokens_per_step']:.1f} tokens/step)"
        )
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
