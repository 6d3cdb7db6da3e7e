"""Deterministic gridworld tabletop: objects on a square grid, one gripper.

States are immutable values; `step` returns a fresh state, so any number of
episodes can run concurrently on independent RNGs.

Camera convention: y grows away from the viewer, so "in front of" a cell is
the cell at y-1 and "behind" is y+1. Both axes clamp at the grid edge rather
than erroring, matching a controller saturating at workspace limits.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigError, IntegrityError

SHAPES = ("cube", "sphere", "triangle", "star")
COLORS = ("red", "blue", "green", "yellow", "purple")

FAMILIES = ("place_at", "place_on_top", "stack_tower")
RELATIONS = ("left_of", "right_of", "behind", "in_front_of")

GRIP_OPEN = "open"
GRIP_CLOSED = "closed"

# Offset from the reference cell to the goal cell, per relation.
RELATION_OFFSET = {
    "left_of": (-1, 0),
    "right_of": (1, 0),
    "behind": (0, 1),
    "in_front_of": (0, -1),
}

RELATION_TEXT = {
    "left_of": "left of",
    "right_of": "right of",
    "behind": "behind",
    "in_front_of": "in front of",
}

MIN_GRID, MAX_GRID = 5, 16
VALID_N_OBJECTS = (2, 3, 4)


class GridPos(NamedTuple):
    x: int
    y: int


class Action(NamedTuple):
    dx: int
    dy: int
    grip: str


@dataclass(frozen=True)
class ObjectDef:
    id: int
    shape: str
    color: str

    @property
    def name(self) -> str:
        return f"the {self.color} {self.shape}"


@dataclass(frozen=True)
class TaskSpec:
    family: str
    relation: Optional[str]
    object_order: tuple[int, ...]
    subject: int
    reference: Optional[int]
    n_objects: int
    text: str


@dataclass(frozen=True)
class WorldState:
    grid_size: int
    # only non-empty stacks are stored; each stack is bottom -> top
    grid: dict[GridPos, tuple[int, ...]]
    gripper_pos: GridPos
    gripper_state: str
    held: Optional[int]
    objects: tuple[ObjectDef, ...]
    task: TaskSpec
    step_count: int

    def object_by_id(self, oid: int) -> ObjectDef:
        for obj in self.objects:
            if obj.id == oid:
                return obj
        raise IntegrityError(f"object id {oid} not in scene")

    def object_pos(self, oid: int) -> Optional[GridPos]:
        """Cell of the stack containing the object, or None while held."""
        if self.held == oid:
            return None
        for pos, stack in self.grid.items():
            if oid in stack:
                return pos
        raise IntegrityError(f"object id {oid} neither on grid nor held")

    def stack_at(self, pos: GridPos) -> tuple[int, ...]:
        return self.grid.get(pos, ())


def task_text(family, relation, subject, reference, object_order, objects_by_id) -> str:
    if family == "place_at":
        subj = objects_by_id[subject]
        ref = objects_by_id[reference]
        return f"place {subj.name} {RELATION_TEXT[relation]} {ref.name}"
    if family == "place_on_top":
        subj = objects_by_id[subject]
        ref = objects_by_id[reference]
        return f"place {subj.name} on top of {ref.name}"
    if family == "stack_tower":
        parts = [objects_by_id[oid].name for oid in object_order]
        return "stack " + " then ".join(parts)
    raise ConfigError(f"unknown task family: {family}")


def reset(task_family: str, n_objects: int, seed: int, grid_size: int = 8) -> WorldState:
    """Seeded scene: n_objects at distinct cells, gripper open on a free cell.

    Identical (family, n_objects, seed, grid_size) yields a bit-identical state.
    """
    if task_family not in FAMILIES:
        raise ConfigError(f"unknown task family: {task_family}")
    if n_objects not in VALID_N_OBJECTS:
        raise ConfigError(f"n_objects must be one of {VALID_N_OBJECTS}, got {n_objects}")
    if not (MIN_GRID <= grid_size <= MAX_GRID):
        raise ConfigError(f"grid_size must be in [{MIN_GRID}, {MAX_GRID}], got {grid_size}")

    family_code = FAMILIES.index(task_family)
    rng = np.random.default_rng(np.random.SeedSequence((family_code, n_objects, grid_size, seed)))

    n_cells = grid_size * grid_size
    cell_ids = rng.choice(n_cells, size=n_objects + 1, replace=False)
    cells = [GridPos(int(c) % grid_size, int(c) // grid_size) for c in cell_ids]
    gripper_pos = cells[-1]

    combo_ids = rng.choice(len(SHAPES) * len(COLORS), size=n_objects, replace=False)
    objects = tuple(
        ObjectDef(id=i, shape=SHAPES[int(c) % len(SHAPES)], color=COLORS[int(c) // len(SHAPES)])
        for i, c in enumerate(combo_ids)
    )
    grid = {cells[i]: (i,) for i in range(n_objects)}
    by_id = {obj.id: obj for obj in objects}

    relation = None
    object_order: tuple[int, ...] = ()
    reference: Optional[int] = None
    if task_family == "stack_tower":
        order = rng.permutation(n_objects)
        object_order = tuple(int(i) for i in order)
        subject = object_order[0]
    else:
        pick = rng.choice(n_objects, size=2, replace=False)
        subject, reference = int(pick[0]), int(pick[1])
        if task_family == "place_at":
            relation = _pick_relation(rng, cells[subject], cells[reference], grid_size)

    task = TaskSpec(
        family=task_family,
        relation=relation,
        object_order=object_order,
        subject=int(subject),
        reference=reference,
        n_objects=n_objects,
        text=task_text(task_family, relation, subject, reference, object_order, by_id),
    )
    return WorldState(
        grid_size=grid_size,
        grid=grid,
        gripper_pos=gripper_pos,
        gripper_state=GRIP_OPEN,
        held=None,
        objects=objects,
        task=task,
        step_count=0,
    )


def _pick_relation(rng, subject_pos: GridPos, ref_pos: GridPos, grid_size: int) -> str:
    """A relation whose goal cell is in bounds and not the subject's start cell.

    At least one of the four always qualifies: a corner reference leaves two
    in-bounds goals and the subject occupies at most one of them.
    """
    for idx in rng.permutation(len(RELATIONS)):
        rel = RELATIONS[int(idx)]
        ox, oy = RELATION_OFFSET[rel]
        goal = GridPos(ref_pos.x + ox, ref_pos.y + oy)
        if 0 <= goal.x < grid_size and 0 <= goal.y < grid_size and goal != subject_pos:
            return rel
    raise IntegrityError("no admissible relation for sampled positions")


def step(state: WorldState, action: Action) -> WorldState:
    """Move the gripper (clamped), then apply the grip transition.

    open->closed over a non-empty stack grasps the top object; closed->open
    while holding releases onto the stack under the gripper. Every other grip
    combination leaves the inventory untouched.
    """
    if action.dx not in (-1, 0, 1) or action.dy not in (-1, 0, 1):
        raise ValueError(f"action deltas must be in -1..1, got {action!r}")
    if action.grip not in (GRIP_OPEN, GRIP_CLOSED):
        raise ValueError(f"action grip must be open/closed, got {action.grip!r}")

    g = state.grid_size
    new_pos = GridPos(
        min(max(state.gripper_pos.x + action.dx, 0), g - 1),
        min(max(state.gripper_pos.y + action.dy, 0), g - 1),
    )

    grid = state.grid
    held = state.held
    stack = grid.get(new_pos, ())
    if state.gripper_state == GRIP_OPEN and action.grip == GRIP_CLOSED and stack and held is None:
        held = stack[-1]
        grid = dict(grid)
        if len(stack) > 1:
            grid[new_pos] = stack[:-1]
        else:
            del grid[new_pos]
    elif state.gripper_state == GRIP_CLOSED and action.grip == GRIP_OPEN and held is not None:
        grid = dict(grid)
        grid[new_pos] = stack + (held,)
        held = None

    return replace(
        state,
        grid=grid,
        gripper_pos=new_pos,
        gripper_state=action.grip,
        held=held,
        step_count=state.step_count + 1,
    )


def check_success(state: WorldState) -> bool:
    task = state.task
    if task.family == "place_at":
        if state.held in (task.subject, task.reference):
            return False
        ref_pos = state.object_pos(task.reference)
        subj_pos = state.object_pos(task.subject)
        ox, oy = RELATION_OFFSET[task.relation]
        return subj_pos == GridPos(ref_pos.x + ox, ref_pos.y + oy)
    if task.family == "place_on_top":
        if state.held in (task.subject, task.reference):
            return False
        ref_pos = state.object_pos(task.reference)
        stack = state.stack_at(ref_pos)
        i = stack.index(task.reference)
        return i + 1 < len(stack) and stack[i + 1] == task.subject
    if task.family == "stack_tower":
        if state.held is not None:
            return False
        return any(stack == task.object_order for stack in state.grid.values())
    raise ConfigError(f"unknown task family: {task.family}")


def goal_cell(state: WorldState, reference: int, relation: Optional[str]) -> GridPos:
    """Placement cell: the reference's cell, offset by the relation if any."""
    ref_pos = state.object_pos(reference)
    if ref_pos is None:
        raise IntegrityError(f"reference object {reference} is held; no goal cell")
    if relation is None:
        return ref_pos
    ox, oy = RELATION_OFFSET[relation]
    return GridPos(ref_pos.x + ox, ref_pos.y + oy)


def remaining_target(state: WorldState, subtask) -> Optional[GridPos]:
    """Goal cell of a moving subtask; None for grasp/release subtasks."""
    if subtask.kind == "move_to":
        pos = state.object_pos(subtask.subject)
        # a held object travels with the gripper
        return state.gripper_pos if pos is None else pos
    if subtask.kind == "carry_to":
        return goal_cell(state, subtask.reference, subtask.relation)
    return None


# --- scene JSON schema (shared by the dataset format and the HTTP service) ---

def scene_to_dict(state: WorldState) -> dict:
    return {
        "grid_size": state.grid_size,
        "objects": [
            {"id": o.id, "shape": o.shape, "color": o.color} for o in state.objects
        ],
        "stacks": [
            {"x": pos.x, "y": pos.y, "ids": list(stack)}
            for pos, stack in sorted(state.grid.items())
        ],
        "gripper": {
            "x": state.gripper_pos.x,
            "y": state.gripper_pos.y,
            "state": state.gripper_state,
            "held": state.held,
        },
        "task": task_to_dict(state.task),
        "step_count": state.step_count,
    }


def scene_from_dict(d: dict) -> WorldState:
    return WorldState(
        grid_size=d["grid_size"],
        grid={
            GridPos(s["x"], s["y"]): tuple(s["ids"]) for s in d["stacks"]
        },
        gripper_pos=GridPos(d["gripper"]["x"], d["gripper"]["y"]),
        gripper_state=d["gripper"]["state"],
        held=d["gripper"]["held"],
        objects=tuple(
            ObjectDef(id=o["id"], shape=o["shape"], color=o["color"]) for o in d["objects"]
        ),
        task=task_from_dict(d["task"]),
        step_count=d["step_count"],
    )


def task_to_dict(task: TaskSpec) -> dict:
    return {
        "family": task.family,
        "relation": task.relation,
        "object_order": list(task.object_order),
        "subject": task.subject,
        "reference": task.reference,
        "n_objects": task.n_objects,
        "text": task.text,
    }


def task_from_dict(d: dict) -> TaskSpec:
    return TaskSpec(
        family=d["family"],
        relation=d["relation"],
        object_order=tuple(d["object_order"]),
        subject=d["subject"],
        reference=d["reference"],
        n_objects=d["n_objects"],
        text=d["text"],
    )
