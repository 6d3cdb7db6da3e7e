"""Token assembly: scene serialization, prompts, thoughts, per-modality samples.

A sample is (input, target, loss mask): the loss mask spans target positions
only, so input tokens never contribute to the loss. The modality token is
always the last input token.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import AnnotationMissingError, ConfigError, ThoughtParseError
from .oracle import Demonstration, Thought
from .vocab import Vocabulary
from .world import TaskSpec, WorldState

MODALITIES = ("act", "think", "follow")


@dataclass(frozen=True)
class ModalityConfig:
    """Sampling weights and sample-shape options for the mixed objective."""

    w_act: float = 0.25
    w_think: float = 0.5
    w_follow: float = 0.25
    thought_format: str = "short"  # short | extended
    chunk_size: int = 1
    action_bins: int = 256

    def __post_init__(self):
        weights = (self.w_act, self.w_think, self.w_follow)
        if any(w < 0 for w in weights):
            raise ConfigError(f"modality weights must be nonnegative: {weights}")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ConfigError(f"modality weights must sum to 1: {weights}")
        if self.thought_format not in ("short", "extended"):
            raise ConfigError(f"unknown thought_format: {self.thought_format}")
        if self.chunk_size < 1:
            raise ConfigError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if self.action_bins < 2:
            raise ConfigError(f"action_bins must be >= 2, got {self.action_bins}")

    @property
    def weights(self) -> tuple[float, float, float]:
        return (self.w_act, self.w_think, self.w_follow)


@dataclass(frozen=True)
class TokenSample:
    input: tuple[int, ...]
    target: tuple[int, ...]
    loss_mask: tuple[bool, ...]
    modality: str

    def __post_init__(self):
        assert len(self.loss_mask) == len(self.target)


def bin_action(v: float, k: int) -> int:
    """Index of the uniform bin over [-1, 1] containing v (upper edge clamps)."""
    if k < 2:
        raise ConfigError(f"need at least 2 bins, got {k}")
    if not math.isfinite(v) or not -1.0 <= v <= 1.0:
        raise ValueError(f"value out of range [-1, 1]: {v}")
    return min(int(math.floor((v + 1.0) / 2.0 * k)), k - 1)


def unbin_action(b: int, k: int) -> float:
    """Center of bin b; inverts bin_action to within half a bin width (1/k)."""
    if k < 2:
        raise ConfigError(f"need at least 2 bins, got {k}")
    if not 0 <= b < k:
        raise ValueError(f"bin index out of range [0, {k}): {b}")
    return -1.0 + (2 * b + 1) / k


def observe(state: WorldState, vocab: Vocabulary) -> list[int]:
    """Scene tokens: per object (shape, color, x, y, level) in id order, then
    gripper (x, y, open/closed, held identity or none).

    A held object reports the gripper's cell and the level it would land on.
    """
    ids: list[int] = []
    for obj in sorted(state.objects, key=lambda o: o.id):
        if state.held == obj.id:
            pos = state.gripper_pos
            level = len(state.stack_at(pos))
        else:
            pos = state.object_pos(obj.id)
            level = state.stack_at(pos).index(obj.id)
        ids += vocab.encode([obj.shape, obj.color, f"x{pos.x}", f"y{pos.y}", f"l{level}"])
    g = state.gripper_pos
    held_word = "none"
    if state.held is not None:
        ho = state.object_by_id(state.held)
        held_word = f"{ho.color}_{ho.shape}"
    ids += vocab.encode([f"x{g.x}", f"y{g.y}", state.gripper_state, held_word])
    return ids


def render_prompt(task: TaskSpec, vocab: Vocabulary) -> list[int]:
    words = "What should the robot do to".split() + task.text.split() + ["?"]
    return vocab.encode(words)


def render_thought(thought: Thought, fmt: str, vocab: Vocabulary) -> list[int]:
    words: list[str] = []
    if fmt == "extended":
        if thought.plan_text is None:
            raise AnnotationMissingError("extended format needs plan_text")
        words += ["plan", ":"] + thought.plan_text.split() + [";"]
    elif fmt != "short":
        raise ConfigError(f"unknown thought format: {fmt}")
    words += ["subtask", ":"] + thought.subtask_text.split()
    if thought.move_label is not None:
        words += [";", "move", ":"] + thought.move_label.split()
    return vocab.encode(words)


def parse_thought(token_ids: list[int], vocab: Vocabulary) -> Thought:
    """Exact inverse of render_thought on well-formed token sequences."""
    words = vocab.decode(token_ids)
    pos = 0

    def expect(word: str):
        nonlocal pos
        if pos >= len(words) or words[pos] != word:
            found = words[pos] if pos < len(words) else "<end>"
            raise ThoughtParseError(f"expected {word!r}, found {found!r}", pos)
        pos += 1

    def read_until_semicolon_or_end() -> list[str]:
        nonlocal pos
        out = []
        while pos < len(words) and words[pos] != ";":
            out.append(words[pos])
            pos += 1
        if not out:
            raise ThoughtParseError("empty clause", pos)
        return out

    plan_text = None
    if words and words[0] == "plan":
        expect("plan")
        expect(":")
        plan_text = " ".join(read_until_semicolon_or_end())
        expect(";")
    expect("subtask")
    expect(":")
    subtask_text = " ".join(read_until_semicolon_or_end())
    move_text = None
    if pos < len(words):
        expect(";")
        expect("move")
        expect(":")
        move_text = " ".join(read_until_semicolon_or_end())
        if pos != len(words):
            raise ThoughtParseError("trailing tokens after move clause", pos)
    return Thought(subtask_text=subtask_text, move_label=move_text, plan_text=plan_text)


def chunk_actions(demo: Demonstration, step_index: int, chunk_size: int) -> list:
    """chunk_size consecutive actions from step_index, repeating the last
    episode action past the end."""
    actions = []
    for j in range(chunk_size):
        t = min(step_index + j, len(demo.steps) - 1)
        actions.append(demo.steps[t].action)
    return actions


def assemble(
    demo: Demonstration,
    step_index: int,
    modality: str,
    cfg: ModalityConfig,
    vocab: Vocabulary,
) -> TokenSample:
    if modality not in MODALITIES:
        raise ConfigError(f"unknown modality: {modality}")
    step = demo.steps[step_index]
    if modality in ("think", "follow") and step.thought is None:
        raise AnnotationMissingError(
            f"{modality} sample requested for step {step_index} without a thought"
        )

    obs = observe(step.observation, vocab)
    action_ids: list[int] = []
    for a in chunk_actions(demo, step_index, cfg.chunk_size):
        action_ids += vocab.action_tokens(a)

    if modality == "act":
        inp = [vocab.bos_id] + obs + render_prompt(demo.task, vocab) + [vocab.modality_ids["act"]]
        target = action_ids + [vocab.eos_id]
    elif modality == "think":
        thought_ids = render_thought(step.thought, cfg.thought_format, vocab)
        inp = [vocab.bos_id] + obs + render_prompt(demo.task, vocab) + [vocab.modality_ids["think"]]
        target = thought_ids + [vocab.sep_id] + action_ids + [vocab.eos_id]
    else:  # follow: thought conditions the actions, the task prompt is withheld
        thought_ids = render_thought(step.thought, cfg.thought_format, vocab)
        inp = [vocab.bos_id] + obs + thought_ids + [vocab.modality_ids["follow"]]
        target = action_ids + [vocab.eos_id]

    return TokenSample(
        input=tuple(inp),
        target=tuple(target),
        loss_mask=(True,) * len(target),
        modality=modality,
    )
