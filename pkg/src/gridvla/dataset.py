"""Demonstration files: one JSON record per line, versioned header first.

Serialization is canonical (sorted keys, compact separators) so that
load -> dump reproduces the input bytes exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from . import world
from .oracle import Demonstration, DemoStep, Thought

FORMAT_NAME = "gridvla-demos"
FORMAT_VERSION = 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class DatasetHeader:
    format: str
    version: int
    grid_size: int
    thought_format: str

    def to_dict(self) -> dict:
        return {
            "format": self.format,
            "version": self.version,
            "grid_size": self.grid_size,
            "thought_format": self.thought_format,
        }


def thought_to_dict(t: Optional[Thought]) -> Optional[dict]:
    if t is None:
        return None
    return {"subtask": t.subtask_text, "move": t.move_label, "plan": t.plan_text}


def thought_from_dict(d: Optional[dict]) -> Optional[Thought]:
    if d is None:
        return None
    return Thought(subtask_text=d["subtask"], move_label=d["move"], plan_text=d["plan"])


def demo_to_dict(demo: Demonstration) -> dict:
    return {
        "task": world.task_to_dict(demo.task),
        "seed": demo.seed,
        "success": demo.success,
        "steps": [
            {
                "obs": world.scene_to_dict(s.observation),
                "action": {"dx": s.action.dx, "dy": s.action.dy, "grip": s.action.grip},
                "thought": thought_to_dict(s.thought),
                "subtask_index": s.subtask_index,
            }
            for s in demo.steps
        ],
    }


def demo_from_dict(d: dict) -> Demonstration:
    return Demonstration(
        task=world.task_from_dict(d["task"]),
        seed=d["seed"],
        success=d["success"],
        steps=tuple(
            DemoStep(
                observation=world.scene_from_dict(s["obs"]),
                action=world.Action(s["action"]["dx"], s["action"]["dy"], s["action"]["grip"]),
                thought=thought_from_dict(s["thought"]),
                subtask_index=s["subtask_index"],
            )
            for s in d["steps"]
        ),
    )


def save_dataset(
    path: str | Path,
    demos: Iterable[Demonstration],
    grid_size: int,
    thought_format: str = "short",
) -> None:
    header = DatasetHeader(FORMAT_NAME, FORMAT_VERSION, grid_size, thought_format)
    with open(path, "w", encoding="utf-8") as f:
        f.write(canonical_json(header.to_dict()) + "\n")
        for demo in demos:
            f.write(canonical_json(demo_to_dict(demo)) + "\n")


def load_dataset(path: str | Path) -> tuple[DatasetHeader, list[Demonstration]]:
    with open(path, "r", encoding="utf-8") as f:
        header_line = f.readline()
        h = json.loads(header_line)
        if h.get("format") != FORMAT_NAME or h.get("version") != FORMAT_VERSION:
            raise ValueError(
                f"unsupported dataset header: {h.get('format')!r} v{h.get('version')!r}"
            )
        header = DatasetHeader(h["format"], h["version"], h["grid_size"], h["thought_format"])
        demos = [demo_from_dict(json.loads(line)) for line in f if line.strip()]
    return header, demos
