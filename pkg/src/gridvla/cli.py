"""Command line entry points: gen-data, train, eval, report, serve, vocab."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from . import oracle, service
from .dataset import save_dataset
from .train import TrainConfig, train
from .vocab import VocabConfig, Vocabulary

# per-family composition over object counts, mirroring the 250/500/250 recipe
OBJECT_MIX = ((2, 0.25), (3, 0.5), (4, 0.25))
FAMILIES = ("place_at", "place_on_top", "stack_tower")


def mixed_counts(total: int) -> list[tuple[int, int]]:
    """(n_objects, demos) pairs in the 1:2:1 ratio, summing to total."""
    counts = [int(total * frac) for _, frac in OBJECT_MIX]
    counts[1] += total - sum(counts)
    return [(n, c) for (n, _), c in zip(OBJECT_MIX, counts)]


def generate_demos(
    family: str,
    n_objects,
    num: int,
    seed_start: int = 0,
    grid_size: int = 8,
    annotated_fraction: float = 1.0,
):
    """Seeded demos for one family; n_objects may be an int or "mix".

    Annotation is spread evenly: with fraction 0.5, every other demo carries
    thoughts, exercising the partially-labelled training path.
    """
    import math

    if n_objects == "mix":
        plan = mixed_counts(num)
    else:
        plan = [(int(n_objects), num)]
    demos = []
    seed = seed_start
    idx = 0
    for n, count in plan:
        for _ in range(count):
            annotate = (
                math.floor((idx + 1) * annotated_fraction)
                - math.floor(idx * annotated_fraction)
            ) == 1
            demos.append(
                oracle.demo(family, n, seed, annotate_thoughts=annotate, grid_size=grid_size)
            )
            seed += 1
            idx += 1
    return demos


def cmd_gen_data(args) -> int:
    families = FAMILIES if args.family == "mix" else (args.family,)
    per_family = args.num // len(families)
    demos = []
    seed = args.seed_start
    for fam in families:
        demos.extend(
            generate_demos(
                fam,
                args.n_objects,
                per_family,
                seed_start=seed,
                grid_size=args.grid_size,
                annotated_fraction=args.annotated_fraction,
            )
        )
        seed += per_family
    save_dataset(args.out, demos, grid_size=args.grid_size, thought_format=args.thought_format)
    n_annotated = sum(1 for d in demos if d.steps and d.steps[0].thought is not None)
    print(f"wrote {len(demos)} demos ({n_annotated} annotated) to {args.out}")
    return 0


def load_config_file(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json"):
        return json.loads(text)
    return yaml.safe_load(text)


def cmd_train(args) -> int:
    cfg = TrainConfig.from_dict(load_config_file(args.config))
    written = train(cfg, resume_from=args.resume)
    for p in written:
        print(f"checkpoint: {p}")
    return 0


def cmd_eval(args) -> int:
    from .evaluation import EvalConfig, evaluate

    raw = load_config_file(args.config)
    raw["checkpoints"] = tuple(raw.get("checkpoints", ()))
    raw["tasks"] = tuple((t[0], int(t[1])) for t in raw.get("tasks", [["place_at", 2]]))
    cfg = EvalConfig(**raw)
    rows = evaluate(cfg)
    for r in rows:
        print(
            f"{r['task_family']}/{r['n_objects']} {r['mode']}: "
            f"{r['success_rate']:.1%} +/- {r['stderr']:.1%} over {r['n']} episodes, "
            f"{r['tokens_per_step']:.1f} tokens/step"
        )
    return 0


def cmd_report(args) -> int:
    """Summarize training metrics files under a directory into one CSV."""
    import csv

    rows = []
    for path in sorted(Path(args.metrics).rglob("metrics.jsonl")):
        run = str(path.parent.relative_to(args.metrics))
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                rows.append({"run": run, **json.loads(line)})
    if not rows:
        print(f"no metrics.jsonl files under {args.metrics}", file=sys.stderr)
        return 1
    keys: list[str] = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    out = args.out or str(Path(args.metrics) / "training_report.csv")
    with open(out, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {len(rows)} epoch records to {out}")
    return 0


def cmd_serve(args) -> int:
    service.main(
        [
            *(["--checkpoint", args.checkpoint] if args.checkpoint else []),
            "--host",
            args.host,
            "--port",
            str(args.port),
            "--ttl-seconds",
            str(args.ttl_seconds),
        ]
    )
    return 0


def cmd_vocab(args) -> int:
    vocab = Vocabulary(VocabConfig(args.grid_size, args.action_bins))
    text = vocab.manifest_json() + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote vocabulary manifest ({len(vocab)} tokens) to {args.out}")
    else:
        print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gridvla")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a demonstration dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--family", default="place_at", choices=FAMILIES + ("mix",))
    g.add_argument("--n-objects", default="2", help="2|3|4|mix (mix uses the 1:2:1 ratio)")
    g.add_argument("--num", type=int, default=400)
    g.add_argument("--seed-start", type=int, default=0)
    g.add_argument("--grid-size", type=int, default=8)
    g.add_argument("--annotated-fraction", type=float, default=1.0)
    g.add_argument("--thought-format", default="short", choices=("short", "extended"))
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--resume", default=None, help="trainer checkpoint to resume from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint from a config file")
    e.add_argument("--config", required=True)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="aggregate training metrics files")
    r.add_argument("--metrics", required=True, help="directory containing runs")
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_report)

    s = sub.add_parser("serve", help="run the steering service")
    s.add_argument("--checkpoint", default=None)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    s.add_argument("--ttl-seconds", type=float, default=service.DEFAULT_TTL_SECONDS)
    s.set_defaults(func=cmd_serve)

    v = sub.add_parser("vocab", help="write the vocabulary manifest")
    v.add_argument("--grid-size", type=int, default=8)
    v.add_argument("--action-bins", type=int, default=256)
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_vocab)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    n = args.n_objects if hasattr(args, "n_objects") else None
    if n is not None and n != "mix":
        args.n_objects = int(n)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
