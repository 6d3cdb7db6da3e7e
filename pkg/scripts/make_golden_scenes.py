#!/usr/bin/env python3
"""Regenerate the frontend's golden scene set: 20 deterministic states
covering fresh resets, mid-episode stacks, and held objects."""

import json
import sys
from pathlib import Path

from gridvla import oracle, world

OUT = Path(__file__).resolve().parent.parent / "frontend" / "test" / "golden_scenes.json"


def main() -> int:
    scenes = []
    for family, n, seed in [
        ("place_at", 2, 0), ("place_at", 3, 1), ("place_at", 4, 2),
        ("place_on_top", 2, 3), ("place_on_top", 3, 4),
        ("stack_tower", 2, 5), ("stack_tower", 3, 6), ("stack_tower", 4, 7),
    ]:
        scenes.append(world.scene_to_dict(world.reset(family, n, seed)))

    # mid-episode states: one per quartile of a few demos, capturing held
    # objects and growing stacks
    for family, n, seed in [
        ("place_at", 2, 10), ("place_on_top", 3, 11), ("stack_tower", 4, 12),
        ("stack_tower", 3, 13),
    ]:
        demo = oracle.demo(family, n, seed)
        idxs = {len(demo.steps) // 4, len(demo.steps) // 2, 3 * len(demo.steps) // 4}
        for t in sorted(idxs):
            scenes.append(world.scene_to_dict(demo.steps[t].observation))

    scenes = scenes[:20]
    assert len(scenes) == 20, len(scenes)
    assert any(s["gripper"]["held"] is not None for s in scenes)
    assert any(len(st["ids"]) > 1 for s in scenes for st in s["stacks"])
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(scenes, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(scenes)} scenes to {OUT}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
