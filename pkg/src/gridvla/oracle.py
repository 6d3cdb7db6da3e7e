"""Scripted solver: plans, demonstrations, thought annotation, keyframe segmentation.

The solver moves diagonally (both axes step at once), grasps with a one-step
close and releases with a one-step open, so every task finishes well inside
the 4 * grid_size * n_objects step budget.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import world
from .errors import IntegrityError, PlanningError, SegmentationError
from .world import Action, GridPos, TaskSpec, WorldState

MOVING_KINDS = ("move_to", "carry_to")

# Chebyshev thresholds, in cells: when a moving thought collapses to "close",
# and how near the gripper must get to a grasp/release point to count as
# "reaching" it during keyframe extraction.
D_CLOSE_DEFAULT = 1
D_KEY_DEFAULT = 1


@dataclass(frozen=True)
class Subtask:
    kind: str
    subject: int
    reference: Optional[int] = None
    relation: Optional[str] = None
    text: str = ""


@dataclass(frozen=True)
class Thought:
    subtask_text: str
    move_label: Optional[str] = None
    plan_text: Optional[str] = None


@dataclass(frozen=True)
class DemoStep:
    observation: WorldState
    action: Action
    thought: Optional[Thought]
    subtask_index: int


@dataclass(frozen=True)
class Demonstration:
    task: TaskSpec
    steps: tuple[DemoStep, ...]
    success: bool
    seed: int


def _place_phrase(relation: Optional[str]) -> str:
    return world.RELATION_TEXT[relation] if relation is not None else "on top of"


def _subtask_text(kind, subject, reference, relation, by_id) -> str:
    subj = by_id[subject].name
    if kind == "move_to":
        return f"move to {subj}"
    if kind == "pick_up":
        return f"pick up {subj}"
    ref = by_id[reference].name
    if kind == "carry_to":
        return f"carry {subj} to {_place_phrase(relation)} {ref}"
    if kind == "place":
        return f"place {subj} {_place_phrase(relation)} {ref}"
    raise ValueError(f"unknown subtask kind: {kind}")


def _pick_block(subject, reference, relation, by_id) -> list[Subtask]:
    def mk(kind, ref=None, rel=None):
        return Subtask(
            kind=kind,
            subject=subject,
            reference=ref,
            relation=rel,
            text=_subtask_text(kind, subject, ref, rel, by_id),
        )

    return [
        mk("move_to"),
        mk("pick_up"),
        mk("carry_to", reference, relation),
        mk("place", reference, relation),
    ]


def plan(task: TaskSpec, state: WorldState) -> list[Subtask]:
    """Subtask list solving the task from a fresh reset."""
    by_id = {o.id: o for o in state.objects}
    if task.family in ("place_at", "place_on_top"):
        goal = world.goal_cell(state, task.reference, task.relation)
        if not (0 <= goal.x < state.grid_size and 0 <= goal.y < state.grid_size):
            raise PlanningError(f"goal cell {goal} out of bounds")
        return _pick_block(task.subject, task.reference, task.relation, by_id)
    if task.family == "stack_tower":
        subtasks: list[Subtask] = []
        for below, oid in zip(task.object_order, task.object_order[1:]):
            subtasks.extend(_pick_block(oid, below, None, by_id))
        return subtasks
    raise PlanningError(f"unknown task family: {task.family}")


def _sign(v: int) -> int:
    return (v > 0) - (v < 0)


def act(state: WorldState, subtask: Subtask) -> Action:
    """Greedy one-step controller for the current subtask."""
    if subtask.kind in MOVING_KINDS:
        target = world.remaining_target(state, subtask)
        g = state.gripper_pos
        return Action(_sign(target.x - g.x), _sign(target.y - g.y), state.gripper_state)
    if subtask.kind == "pick_up":
        return Action(0, 0, world.GRIP_CLOSED)
    if subtask.kind == "place":
        return Action(0, 0, world.GRIP_OPEN)
    raise ValueError(f"unknown subtask kind: {subtask.kind}")


def subtask_done(state: WorldState, subtask: Subtask) -> bool:
    if subtask.kind == "move_to":
        return state.gripper_pos == world.remaining_target(state, subtask)
    if subtask.kind == "pick_up":
        return state.held == subtask.subject
    if subtask.kind == "carry_to":
        return (
            state.held == subtask.subject
            and state.gripper_pos == world.remaining_target(state, subtask)
        )
    if subtask.kind == "place":
        return state.held is None and state.gripper_state == world.GRIP_OPEN
    raise ValueError(f"unknown subtask kind: {subtask.kind}")


def move_label(displacement: tuple[int, int], d_close: int = D_CLOSE_DEFAULT) -> str:
    """Direction words for a remaining displacement, x word before y word.

    Within d_close (Chebyshev) the words are replaced by "close". The grid has
    no vertical axis, so up/down words never occur.
    """
    dx, dy = displacement
    if max(abs(dx), abs(dy)) <= d_close:
        return "close"
    words = []
    if dx > 0:
        words.append("right")
    elif dx < 0:
        words.append("left")
    if dy > 0:
        words.append("backward")
    elif dy < 0:
        words.append("forward")
    return " ".join(words)


def annotate(
    trajectory: list[tuple[WorldState, Action]],
    subtasks: list[Subtask],
    boundaries: list[int],
    d_close: int = D_CLOSE_DEFAULT,
    plan_text: Optional[str] = None,
) -> list[Thought]:
    """One Thought per step; moving subtasks get a live direction label.

    boundaries[j] is the first step index of subtask j (zero-length subtasks
    share their boundary with the next one).
    """
    if not boundaries or boundaries[0] != 0:
        raise IntegrityError(f"boundaries must start at 0, got {boundaries[:1]}")
    if any(b > a for b, a in zip(boundaries, boundaries[1:])):
        raise IntegrityError(f"boundaries must be non-decreasing: {boundaries}")
    if len(boundaries) != len(subtasks):
        raise IntegrityError(
            f"{len(subtasks)} subtasks but {len(boundaries)} boundaries"
        )

    thoughts = []
    for t, (state, _action) in enumerate(trajectory):
        # the last subtask whose boundary has been reached owns this step
        j = max(i for i, b in enumerate(boundaries) if b <= t)
        sub = subtasks[j]
        label = None
        if sub.kind in MOVING_KINDS:
            target = world.remaining_target(state, sub)
            g = state.gripper_pos
            label = move_label((target.x - g.x, target.y - g.y), d_close)
        thoughts.append(Thought(subtask_text=sub.text, move_label=label, plan_text=plan_text))
    return thoughts


def demo(
    task_family: str,
    n_objects: int,
    seed: int,
    annotate_thoughts: bool = True,
    grid_size: int = 8,
    d_close: int = D_CLOSE_DEFAULT,
) -> Demonstration:
    """Roll the solver to success; always succeeds or raises."""
    state = world.reset(task_family, n_objects, seed, grid_size)
    subtasks = plan(state.task, state)
    budget = 4 * grid_size * n_objects

    raw: list[tuple[WorldState, Action, int]] = []
    k = 0
    while True:
        while k < len(subtasks) and subtask_done(state, subtasks[k]):
            k += 1
        if k == len(subtasks):
            break
        if len(raw) >= budget:
            raise RuntimeError(
                f"solver exceeded {budget} steps on {task_family}/{n_objects}/seed={seed}"
            )
        action = act(state, subtasks[k])
        raw.append((state, action, k))
        state = world.step(state, action)

    if not world.check_success(state):
        raise RuntimeError(
            f"solver finished its plan without success on {task_family}/{n_objects}/seed={seed}"
        )

    boundaries = plan_boundaries([k for (_, _, k) in raw], len(subtasks))
    thoughts: list[Optional[Thought]]
    if annotate_thoughts:
        traj = [(s, a) for (s, a, _) in raw]
        thoughts = list(
            annotate(traj, subtasks, boundaries, d_close, plan_text=state.task.text)
        )
    else:
        thoughts = [None] * len(raw)

    steps = tuple(
        DemoStep(observation=s, action=a, thought=th, subtask_index=k)
        for (s, a, k), th in zip(raw, thoughts)
    )
    return Demonstration(task=state.task, steps=steps, success=True, seed=seed)


def plan_boundaries(step_subtasks: list[int], n_subtasks: int) -> list[int]:
    """First step index per subtask; zero-length subtasks inherit the next boundary."""
    boundaries = [len(step_subtasks)] * n_subtasks
    for t, k in enumerate(step_subtasks):
        if t < boundaries[k]:
            boundaries[k] = t
    for j in range(n_subtasks - 2, -1, -1):
        boundaries[j] = min(boundaries[j], boundaries[j + 1])
    return boundaries


def extract_keyframes(
    trajectory: list[tuple[WorldState, Action]],
    d_key: int = D_KEY_DEFAULT,
) -> list[int]:
    """Boundaries [0, i, ii, iii] of the 4-subtask segmentation of a single pick.

    (i) first step within d_key of the grasp point, (ii) the grasp step,
    (iii) first post-grasp step within d_key of the release point. Requires
    exactly one grasp and one release event.
    """
    grasp_steps = []
    release_steps = []
    grasp_pos = release_pos = None
    for t, (state, action) in enumerate(trajectory):
        nxt = world.step(state, action)
        if state.held is None and nxt.held is not None:
            grasp_steps.append(t)
            grasp_pos = nxt.gripper_pos
        elif state.held is not None and nxt.held is None:
            release_steps.append(t)
            release_pos = nxt.gripper_pos
    if len(grasp_steps) != 1 or len(release_steps) != 1:
        raise SegmentationError(
            f"expected exactly one grasp and one release, found "
            f"{len(grasp_steps)} grasp and {len(release_steps)} release events"
        )

    def cheb(a: GridPos, b: GridPos) -> int:
        return max(abs(a.x - b.x), abs(a.y - b.y))

    ii = grasp_steps[0]
    i = next(
        (t for t, (s, _) in enumerate(trajectory) if cheb(s.gripper_pos, grasp_pos) <= d_key),
        ii,
    )
    iii = next(
        (
            t
            for t, (s, _) in enumerate(trajectory)
            if t > ii and cheb(s.gripper_pos, release_pos) <= d_key
        ),
        release_steps[0],
    )
    return [0, i, ii, iii]
