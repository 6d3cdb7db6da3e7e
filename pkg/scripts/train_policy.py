#!/usr/bin/env python3
"""Generate a dataset (if missing) and train one policy with the default
mixed-modality recipe. Convenience wrapper over `gridvla gen-data` + `train`.

    python3 scripts/train_policy.py --out artifacts/policy --demos 400
"""

import argparse
import sys
from pathlib import Path

from gridvla.cli import generate_demos
from gridvla.dataset import save_dataset
from gridvla.experiments import mixture_config
from gridvla.train import TrainConfig, train


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="artifacts/policy")
    ap.add_argument("--family", default="place_at")
    ap.add_argument("--n-objects", default="2")
    ap.add_argument("--demos", type=int, default=400)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--paradigm", default="mixed",
                    choices=["mixed", "act_only", "think_only", "follow_only"])
    args = ap.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = out / f"demos_{args.family}_{args.n_objects}_{args.demos}.jsonl"
    if not data.exists():
        n = args.n_objects if args.n_objects == "mix" else int(args.n_objects)
        demos = generate_demos(args.family, n, args.demos)
        save_dataset(data, demos, grid_size=8)
        print(f"wrote {data}")

    cfg = TrainConfig(
        dataset_path=str(data),
        out_dir=str(out / f"{args.paradigm}_seed{args.seed}"),
        modality=mixture_config(args.paradigm),
        epochs=args.epochs,
        checkpoint_epochs=tuple(sorted({max(1, args.epochs // 2), args.epochs})),
        seed=args.seed,
    )
    for p in train(cfg):
        print(f"checkpoint: {p}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
